use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use bundle_negotiation::engine::{run_session, SessionContext};
use bundle_negotiation::experiment::{self, draw_customer, session_config, ExperimentConfig, Preset, ShopPricing};
use bundle_negotiation::{validate, ConditionalCache, Result, Variant};

#[derive(Parser)]
#[command(name = "bundle-negotiation", version, about = "Bundle negotiation with a shop-side recommender")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one negotiation of the experiment design and print its transcript.
    Run(RunArgs),
    /// Run the factorial sweep and write summary.csv.
    Sweep(SweepArgs),
    /// Quick numerical self-checks.
    Validate {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    distributions: Option<usize>,
    #[arg(long)]
    customers: Option<usize>,
    /// Comma-separated threshold list.
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    /// tdf, tftmf-random or tftmf-1.
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Also write one JSONL transcript per session.
    #[arg(long)]
    transcripts: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0)]
    distribution: usize,
    #[arg(long, default_value_t = 0)]
    customer: usize,
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
    #[arg(long, default_value = "system", value_parser = parse_variant)]
    variant: Variant,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    match s {
        "system" => Ok(Variant::System),
        "benchmark" => Ok(Variant::Benchmark),
        _ => Err(format!("unknown variant {s:?}")),
    }
}

fn load(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::from_json_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.master_seed = s;
    }
    if let Some(d) = c.distributions {
        cfg.num_distributions = d;
    }
    if let Some(k) = c.customers {
        cfg.customers_per_distribution = k;
    }
    if let Some(t) = &c.thresholds {
        cfg.thresholds = t.clone();
    }
    if let Some(p) = c.preset {
        cfg.preset = p;
    }
    if c.out.is_some() {
        cfg.out = c.out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sweep(args: SweepArgs) -> Result<()> {
    let mut cfg = load(&args.common)?;
    cfg.write_transcripts |= args.transcripts;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    cfg.out = Some(out.clone());
    fs::create_dir_all(&out)?;
    serde_json::to_writer_pretty(BufWriter::new(File::create(out.join("config.json"))?), &cfg)?;
    let res = experiment::run_sweep(&cfg)?;
    let path = experiment::write_summary_file(&res.rows, &out)?;
    experiment::write_summary(&res.rows, std::io::stdout())?;
    eprintln!(
        "{} sessions, {} breakdowns, {} hit the round cap; wrote {}",
        res.stats.sessions,
        res.stats.breakdowns,
        res.stats.round_caps,
        path.display()
    );
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = load(&args.common)?;
    let (d, c) = (args.distribution, args.customer);
    if d >= cfg.num_distributions || c >= cfg.customers_per_distribution {
        return Err(bundle_negotiation::Error::Config("distribution or customer index out of range".into()));
    }
    let k = cfg.thresholds.iter().position(|&t| (t - args.threshold).abs() < 1e-9).unwrap_or(0);
    let dist = cfg.distribution(d)?;
    let pricing = ShopPricing::new(cfg.pricing, &dist)?;
    let cache = ConditionalCache::new();
    let cust = draw_customer(&cfg, &dist, d, c)?;
    let sc = session_config(&cfg, &cust, args.variant, args.threshold, cfg.session_seed(d, c, k));
    let ctx = SessionContext {
        dist: &dist,
        cache: &cache,
        shop: &pricing,
    };
    let outcome = run_session(&sc, &ctx, &cust.valuations)?;
    match &cfg.out {
        Some(p) => {
            if let Some(parent) = p.parent() {
                fs::create_dir_all(parent)?;
            }
            outcome.write_jsonl(BufWriter::new(File::create(p)?))?;
        }
        None => outcome.write_jsonl(std::io::stdout().lock())?,
    }
    let m = experiment::compute_metrics(&outcome, &cust.valuations, &pricing)?;
    eprintln!(
        "deal: {}, rounds: {}, perc: {}, relP: {}",
        m.deal,
        m.rounds,
        m.perc.map_or("-".into(), |v| format!("{v:.4}")),
        m.rel_p.map_or("-".into(), |v| format!("{v:.4}"))
    );
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Validate { seed } => validate::run_checks(seed).map(|checks| {
            let mut ok = true;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            if !ok {
                std::process::exit(1);
            }
        }),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
