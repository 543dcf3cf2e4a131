//! Shop pricing, per-session metrics and the factorial experiment sweep.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::bundle::{gains_from_trade, gft_extrema, Bundle, GftExtrema, Role, ShopValuation, ValuationTable};
use crate::engine::{run_session, NegotiationOutcome, SessionConfig, SessionContext, Termination};
use crate::error::{Error, Result};
use crate::preference::{ConditionalCache, CorrelationSpec, PreferenceDistribution};
use crate::recommender::{RecommenderConfig, Variant, DEFAULT_RATE};
use crate::seed;
use crate::strategy::{StrategyKind, StrategyParams, SHOP_DELTA};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricingParams {
    pub beta: f64,
    pub gamma: f64,
}

impl Default for PricingParams {
    fn default() -> Self {
        Self { beta: 0.7, gamma: 0.3 }
    }
}

/// Nonlinear shop valuation
/// `v_s(b) = beta * E + gamma * (E - mean_k) * E / mean_k` with
/// `E = E[v_c(b)]` and `mean_k` the average of `E[v_c(.)]` over bundles of
/// size `k = |b|`. Bundles worth more than their size class are relatively
/// expensive, bundles worth less relatively cheap.
///
/// The deviation is scaled by `E / mean_k`: since `mean_k` is linear in `k`,
/// an unscaled deviation would leave `v_s` additive over goods.
#[derive(Debug, Clone, PartialEq)]
pub struct ShopPricing {
    params: PricingParams,
    mu: Vec<f64>,
    /// `size_means[k - 1]` is the mean of `E[v_c(b)]` over all `|b| = k`.
    size_means: Vec<f64>,
}

impl ShopPricing {
    pub fn new(params: PricingParams, dist: &PreferenceDistribution) -> Result<Self> {
        if !(params.beta > 0.0 && params.beta < 1.0) {
            return Err(Error::Config(format!("pricing beta {} outside (0, 1)", params.beta)));
        }
        if params.gamma < 0.0 {
            return Err(Error::Config(format!("pricing gamma {} negative", params.gamma)));
        }
        let mu = dist.means().to_vec();
        let n = mu.len();
        // every good appears in the same share of size-k bundles
        let avg = mu.iter().sum::<f64>() / n as f64;
        if avg.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::Config("shop pricing needs a positive average mean valuation".into()));
        }
        let size_means = (1..=n).map(|k| k as f64 * avg).collect();
        Ok(Self { params, mu, size_means })
    }

    pub fn params(&self) -> PricingParams {
        self.params
    }

    pub fn size_mean(&self, k: usize) -> f64 {
        self.size_means[k - 1]
    }

    pub fn expected_customer_value(&self, b: Bundle) -> f64 {
        b.goods().map(|i| self.mu[i]).sum()
    }
}

impl ShopValuation for ShopPricing {
    fn value(&self, b: Bundle) -> f64 {
        let e = self.expected_customer_value(b);
        let m = self.size_mean(b.len());
        self.params.beta * e + self.params.gamma * (e - m) * e / m
    }
}

/// Metrics of one negotiated session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub deal: bool,
    pub rounds: u32,
    /// `(GFT(final) - min) / (max - min)`; `None` without a deal or when
    /// `max == min`.
    pub perc: Option<f64>,
    /// `(GFT(final) - GFT(initial)) / (max - GFT(initial))`; `None` without a
    /// deal or when the initial bundle is already optimal.
    pub rel_p: Option<f64>,
    pub round_cap: bool,
}

pub fn compute_metrics_with(
    outcome: &NegotiationOutcome,
    vc: &ValuationTable,
    shop: &dyn ShopValuation,
    extrema: &GftExtrema,
) -> SessionMetrics {
    let (perc, rel_p) = match outcome.final_bundle.filter(|_| outcome.deal_reached) {
        Some(fin) => {
            let g = gains_from_trade(fin, vc, shop);
            let g0 = gains_from_trade(outcome.initial_bundle, vc, shop);
            let range = extrema.max - extrema.min;
            let head = extrema.max - g0;
            let scale = extrema.max.abs().max(1.0) * 1e-12;
            (
                (range > scale).then(|| (g - extrema.min) / range),
                (head > scale).then(|| (g - g0) / head),
            )
        }
        None => (None, None),
    };
    SessionMetrics {
        deal: outcome.deal_reached,
        rounds: outcome.rounds,
        perc,
        rel_p,
        round_cap: outcome.termination == Termination::RoundCap,
    }
}

pub fn compute_metrics(
    outcome: &NegotiationOutcome,
    vc: &ValuationTable,
    shop: &dyn ShopValuation,
) -> Result<SessionMetrics> {
    let ext = gft_extrema(vc, shop)?;
    Ok(compute_metrics_with(outcome, vc, shop, &ext))
}

/// Customer strategy presets matching the three experiment panels. The shop
/// always plays TDF with `delta = 0.1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Preset {
    #[default]
    #[serde(rename = "tdf")]
    Tdf,
    #[serde(rename = "tftmf-random")]
    TftmfRandom,
    #[serde(rename = "tftmf-1")]
    Tftmf1,
}

impl Preset {
    pub fn customer_strategy(self) -> StrategySpec {
        let kind = match self {
            Preset::Tdf => StrategyKind::Tdf,
            _ => StrategyKind::Tftmf,
        };
        let delta = match self {
            Preset::Tftmf1 => DeltaSpec::Fixed(1.0),
            _ => DeltaSpec::Range([0.1, 0.4]),
        };
        StrategySpec {
            kind,
            gap_init: [0.0, 0.5],
            delta,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Tdf => "tdf",
            Preset::TftmfRandom => "tftmf-random",
            Preset::Tftmf1 => "tftmf-1",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tdf" => Ok(Preset::Tdf),
            "tftmf-random" => Ok(Preset::TftmfRandom),
            "tftmf-1" => Ok(Preset::Tftmf1),
            _ => Err(Error::Config(format!("unknown preset {s:?}"))),
        }
    }
}

/// Either a fixed rate or a uniform range `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeltaSpec {
    Fixed(f64),
    Range([f64; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    pub gap_init: [f64; 2],
    pub delta: DeltaSpec,
}

impl StrategySpec {
    pub fn shop_default() -> Self {
        Self {
            kind: StrategyKind::Tdf,
            gap_init: [0.0, 0.5],
            delta: DeltaSpec::Fixed(SHOP_DELTA),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, role: Role, rng: &mut R) -> Result<StrategyParams> {
        let draw = |rng: &mut R, [lo, hi]: [f64; 2]| if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let gap_init = draw(rng, self.gap_init);
        let delta = match self.delta {
            DeltaSpec::Fixed(d) => d,
            DeltaSpec::Range(r) => draw(rng, r),
        };
        StrategyParams::new(self.kind, role, gap_init, delta)
    }
}

/// `count` thresholds from 0 in steps of `step`.
pub fn threshold_grid(count: usize, step: f64) -> Vec<f64> {
    (0..count).map(|k| (k as f64 * step * 1e6).round() / 1e6).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub num_distributions: usize,
    pub customers_per_distribution: usize,
    pub thresholds: Vec<f64>,
    pub preset: Preset,
    pub master_seed: u64,
    pub out: Option<PathBuf>,
    pub n: usize,
    pub correlation: CorrelationSpec,
    /// Explicit distributions used in place of generated ones.
    pub distributions: Option<Vec<PreferenceDistribution>>,
    pub pricing: PricingParams,
    /// Overrides the preset's customer strategy when set.
    pub customer_strategy: Option<StrategySpec>,
    pub shop_strategy: StrategySpec,
    pub breakdown_probability: f64,
    pub max_rounds: u32,
    pub recommendation_rate: f64,
    pub write_transcripts: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            num_distributions: 100,
            customers_per_distribution: 100,
            thresholds: threshold_grid(11, 0.05),
            preset: Preset::Tdf,
            master_seed: 1,
            out: None,
            n: 10,
            correlation: CorrelationSpec::default(),
            distributions: None,
            pricing: PricingParams::default(),
            customer_strategy: None,
            shop_strategy: StrategySpec::shop_default(),
            breakdown_probability: crate::engine::DEFAULT_BREAKDOWN,
            max_rounds: crate::engine::DEFAULT_MAX_ROUNDS,
            recommendation_rate: DEFAULT_RATE,
            write_transcripts: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn customer_spec(&self) -> StrategySpec {
        self.customer_strategy.unwrap_or_else(|| self.preset.customer_strategy())
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_distributions == 0 || self.customers_per_distribution == 0 {
            return Err(Error::Config("need at least one distribution and one customer".into()));
        }
        if self.thresholds.is_empty() {
            return Err(Error::Config("no thresholds".into()));
        }
        if self.thresholds.iter().any(|t| t.is_nan() || *t < 0.0) || self.thresholds.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config("thresholds must be nonnegative and ascending".into()));
        }
        if let Some(d) = &self.distributions {
            if d.len() < self.num_distributions {
                return Err(Error::Config(format!(
                    "{} explicit distributions for {} requested",
                    d.len(),
                    self.num_distributions
                )));
            }
            if d.iter().any(|x| x.n() != self.n) {
                return Err(Error::Config("explicit distribution size differs from n".into()));
            }
        }
        if !(0.0..1.0).contains(&self.breakdown_probability) {
            return Err(Error::Config("breakdown probability must lie in [0, 1)".into()));
        }
        if self.max_rounds == 0 {
            return Err(Error::Config("max_rounds must be at least 1".into()));
        }
        Ok(())
    }

    pub fn distribution_seed(&self, d: usize) -> u64 {
        seed::mix(&[self.master_seed, 0xD157, d as u64])
    }

    pub fn customer_seed(&self, d: usize, c: usize) -> u64 {
        seed::mix(&[self.master_seed, 0xC057, d as u64, c as u64])
    }

    pub fn session_seed(&self, d: usize, c: usize, k: usize) -> u64 {
        seed::mix(&[self.master_seed, 0x5E55, d as u64, c as u64, k as u64])
    }

    pub fn distribution(&self, d: usize) -> Result<PreferenceDistribution> {
        match &self.distributions {
            Some(list) => Ok(list[d].clone()),
            None => PreferenceDistribution::generate(self.distribution_seed(d), self.n, &self.correlation),
        }
    }
}

/// Everything that stays fixed for one (distribution, customer) pair.
#[derive(Debug, Clone)]
pub struct Customer {
    pub valuations: ValuationTable,
    pub customer: StrategyParams,
    pub shop: StrategyParams,
    pub rejections: usize,
}

pub fn draw_customer(cfg: &ExperimentConfig, dist: &PreferenceDistribution, d: usize, c: usize) -> Result<Customer> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.customer_seed(d, c));
    let draw = dist.sample_customer(&mut rng)?;
    let customer = cfg.customer_spec().sample(Role::Customer, &mut rng)?;
    let shop = cfg.shop_strategy.sample(Role::Shop, &mut rng)?;
    Ok(Customer {
        valuations: draw.valuations,
        customer,
        shop,
        rejections: draw.rejections,
    })
}

pub fn session_config(cfg: &ExperimentConfig, cust: &Customer, variant: Variant, threshold: f64, session_seed: u64) -> SessionConfig {
    SessionConfig {
        breakdown_probability: cfg.breakdown_probability,
        max_rounds: cfg.max_rounds,
        customer: cust.customer,
        shop: cust.shop,
        recommender: Some(RecommenderConfig {
            variant,
            threshold,
            rate: cfg.recommendation_rate,
        }),
        seed: session_seed,
    }
}

/// One aggregate row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub threshold: f64,
    pub variant: Variant,
    pub deals: usize,
    pub mean_rounds: Option<f64>,
    pub perc: Option<f64>,
    pub rel_p: Option<f64>,
    pub diff_deals: f64,
    pub diff_rounds: Option<f64>,
    pub diff_perc: Option<f64>,
    pub diff_rel_p: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SweepStats {
    pub sessions: usize,
    pub breakdowns: usize,
    pub round_caps: usize,
    pub vacuous_fallbacks: usize,
    pub rejected_draws: usize,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<MetricsRow>,
    /// `cells[d][c][k]` holds `(system, benchmark)` metrics.
    pub cells: Vec<Vec<Vec<(SessionMetrics, SessionMetrics)>>>,
    pub stats: SweepStats,
}

impl SweepResult {
    pub fn row(&self, threshold: f64, variant: Variant) -> Option<&MetricsRow> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && (r.threshold - threshold).abs() < 1e-9)
    }
}

fn mean<I: Iterator<Item = f64>>(it: I) -> Option<f64> {
    let (s, k) = it.fold((0.0, 0usize), |(s, k), x| (s + x, k + 1));
    (k > 0).then(|| s / k as f64)
}

#[derive(Debug, Clone, Copy, Default)]
struct Aggregate {
    deals: usize,
    mean_rounds: Option<f64>,
    perc: Option<f64>,
    rel_p: Option<f64>,
}

fn aggregate<'a, I: Iterator<Item = &'a SessionMetrics> + Clone>(it: I) -> Aggregate {
    Aggregate {
        deals: it.clone().filter(|m| m.deal).count(),
        mean_rounds: mean(it.clone().filter(|m| m.deal).map(|m| m.rounds as f64)),
        perc: mean(it.clone().filter_map(|m| m.perc)),
        rel_p: mean(it.filter_map(|m| m.rel_p)),
    }
}

fn diff(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

/// Aggregates per-cell metrics into rows, two per threshold (system first).
/// Reduction runs in fixed `(d, c)` order.
pub fn aggregate_rows(thresholds: &[f64], cells: &[Vec<Vec<(SessionMetrics, SessionMetrics)>>]) -> Vec<MetricsRow> {
    let mut rows = Vec::with_capacity(2 * thresholds.len());
    for (k, &threshold) in thresholds.iter().enumerate() {
        let at_k = || cells.iter().flat_map(|d| d.iter().map(move |c| &c[k]));
        let sys = aggregate(at_k().map(|p| &p.0));
        let bench = aggregate(at_k().map(|p| &p.1));
        let diff_deals = sys.deals as f64 - bench.deals as f64;
        let diff_rounds = diff(sys.mean_rounds, bench.mean_rounds);
        let diff_perc = diff(sys.perc, bench.perc);
        let diff_rel_p = diff(sys.rel_p, bench.rel_p);
        for (variant, a) in [(Variant::System, sys), (Variant::Benchmark, bench)] {
            rows.push(MetricsRow {
                threshold,
                variant,
                deals: a.deals,
                mean_rounds: a.mean_rounds,
                perc: a.perc,
                rel_p: a.rel_p,
                diff_deals,
                diff_rounds,
                diff_perc,
                diff_rel_p,
            });
        }
    }
    rows
}

fn transcript_path(out: &Path, d: usize, c: usize, k: usize, v: Variant) -> PathBuf {
    let tag = match v {
        Variant::System => "system",
        Variant::Benchmark => "benchmark",
    };
    out.join("transcripts").join(format!("d{d:03}_c{c:03}_t{k:02}_{tag}.jsonl"))
}

fn write_transcript(path: &Path, outcome: &NegotiationOutcome) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    outcome.write_jsonl(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Instance data needed to recompute metrics from transcripts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub distribution: PreferenceDistribution,
    pub pricing: PricingParams,
    pub customers: Vec<Vec<f64>>,
}

struct CellOutput {
    metrics: Vec<(SessionMetrics, SessionMetrics)>,
    breakdowns: usize,
    round_caps: usize,
    vacuous: usize,
    rejections: usize,
}

/// Runs the full factorial sweep: every distribution, customer and
/// threshold, once with the system recommender and once with the benchmark
/// on the same customer, strategy parameters and session seed.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let transcripts_dir = match (&cfg.out, cfg.write_transcripts) {
        (Some(out), true) => {
            fs::create_dir_all(out.join("transcripts"))?;
            fs::create_dir_all(out.join("instances"))?;
            Some(out.clone())
        }
        _ => None,
    };

    let markets: Vec<(PreferenceDistribution, ShopPricing, ConditionalCache)> = (0..cfg.num_distributions)
        .map(|d| {
            let dist = cfg.distribution(d)?;
            let pricing = ShopPricing::new(cfg.pricing, &dist)?;
            Ok((dist, pricing, ConditionalCache::new()))
        })
        .collect::<Result<_>>()?;

    let ncust = cfg.customers_per_distribution;
    let outputs: Vec<CellOutput> = (0..cfg.num_distributions * ncust)
        .into_par_iter()
        .map(|idx| {
            let (d, c) = (idx / ncust, idx % ncust);
            let (dist, pricing, cache) = &markets[d];
            let cust = draw_customer(cfg, dist, d, c)?;
            let extrema = gft_extrema(&cust.valuations, pricing)?;
            let ctx = SessionContext { dist, cache, shop: pricing };
            let mut out = CellOutput {
                metrics: Vec::with_capacity(cfg.thresholds.len()),
                breakdowns: 0,
                round_caps: 0,
                vacuous: 0,
                rejections: cust.rejections,
            };
            for (k, &threshold) in cfg.thresholds.iter().enumerate() {
                let seed = cfg.session_seed(d, c, k);
                let mut pair = [None, None];
                for (slot, variant) in [Variant::System, Variant::Benchmark].into_iter().enumerate() {
                    let sc = session_config(cfg, &cust, variant, threshold, seed);
                    let outcome = run_session(&sc, &ctx, &cust.valuations)?;
                    match outcome.termination {
                        Termination::Breakdown => out.breakdowns += 1,
                        Termination::RoundCap => out.round_caps += 1,
                        Termination::Deal(_) => {}
                    }
                    out.vacuous += outcome.vacuous_fallbacks as usize;
                    if let Some(dir) = &transcripts_dir {
                        let path = transcript_path(dir, d, c, k, variant);
                        if let Err(e) = write_transcript(&path, &outcome) {
                            warn!(path = %path.display(), error = %e, "could not write transcript");
                        }
                    }
                    pair[slot] = Some(compute_metrics_with(&outcome, &cust.valuations, pricing, &extrema));
                }
                out.metrics.push((pair[0].expect("system run"), pair[1].expect("benchmark run")));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut stats = SweepStats::default();
    let mut cells: Vec<Vec<Vec<(SessionMetrics, SessionMetrics)>>> = Vec::with_capacity(cfg.num_distributions);
    for (idx, o) in outputs.into_iter().enumerate() {
        if idx % ncust == 0 {
            cells.push(Vec::with_capacity(ncust));
        }
        stats.sessions += 2 * o.metrics.len();
        stats.breakdowns += o.breakdowns;
        stats.round_caps += o.round_caps;
        stats.vacuous_fallbacks += o.vacuous;
        stats.rejected_draws += o.rejections;
        cells.last_mut().expect("pushed").push(o.metrics);
    }
    if stats.round_caps > 0 {
        warn!(count = stats.round_caps, "sessions hit the round cap");
    }
    if stats.vacuous_fallbacks > 0 {
        warn!(count = stats.vacuous_fallbacks, "recommendations scored with the vacuous-condition fallback");
    }
    info!(?stats, "sweep finished");

    if let Some(dir) = &transcripts_dir {
        for (d, (dist, _, _)) in markets.iter().enumerate() {
            let customers = (0..ncust)
                .map(|c| draw_customer(cfg, dist, d, c).map(|x| x.valuations.values().to_vec()))
                .collect::<Result<_>>()?;
            let rec = InstanceRecord {
                distribution: dist.clone(),
                pricing: cfg.pricing,
                customers,
            };
            let f = File::create(dir.join("instances").join(format!("d{d:03}.json")))?;
            serde_json::to_writer(BufWriter::new(f), &rec)?;
        }
    }

    Ok(SweepResult {
        rows: aggregate_rows(&cfg.thresholds, &cells),
        cells,
        stats,
    })
}

pub const SUMMARY_HEADER: [&str; 10] = [
    "threshold",
    "variant",
    "deals",
    "mean_rounds",
    "perc",
    "relP",
    "diff_deals",
    "diff_rounds",
    "diff_perc",
    "diff_relP",
];

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

pub fn write_summary<W: Write>(rows: &[MetricsRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(SUMMARY_HEADER)?;
    for r in rows {
        let variant = match r.variant {
            Variant::System => "system",
            Variant::Benchmark => "benchmark",
        };
        wtr.write_record([
            format!("{:.4}", r.threshold),
            variant.to_string(),
            r.deals.to_string(),
            fmt_opt(r.mean_rounds),
            fmt_opt(r.perc),
            fmt_opt(r.rel_p),
            format!("{:.6}", r.diff_deals),
            fmt_opt(r.diff_rounds),
            fmt_opt(r.diff_perc),
            fmt_opt(r.diff_rel_p),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_summary_file(rows: &[MetricsRow], out_dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join("summary.csv");
    write_summary(rows, BufWriter::new(File::create(&path)?))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::all_bundles;
    use crate::preference::geometric_correlation;

    fn dist(mu: Vec<f64>) -> PreferenceDistribution {
        let sd: Vec<f64> = mu.iter().map(|m| m / 6.0).collect();
        let n = mu.len();
        PreferenceDistribution::from_sd(mu, &sd, geometric_correlation(n, 0.5), None).unwrap()
    }

    #[test]
    fn size_means_match_enumeration() {
        let d = PreferenceDistribution::generate(4, 7, &CorrelationSpec::default()).unwrap();
        let p = ShopPricing::new(PricingParams::default(), &d).unwrap();
        for k in 1..=7 {
            let (s, cnt) = all_bundles(7)
                .unwrap()
                .filter(|b| b.len() == k)
                .fold((0.0, 0), |(s, c), b| (s + d.bundle_mean(b), c + 1));
            assert!((p.size_mean(k) - s / cnt as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn average_bundle_gets_base_price() {
        // mean of size-1 bundles is 100 and good 1 sits exactly on it
        let d = dist(vec![50.0, 100.0, 150.0]);
        let p = ShopPricing::new(PricingParams::default(), &d).unwrap();
        let b = Bundle::singleton(1, 3).unwrap();
        assert!((p.value(b) - 0.7 * 100.0).abs() < 1e-12);
    }

    #[test]
    fn richer_bundles_are_relatively_expensive() {
        let d = dist(vec![50.0, 100.0, 150.0]);
        let p = ShopPricing::new(PricingParams::default(), &d).unwrap();
        let lo = Bundle::from_goods([0, 1], 3).unwrap();
        let hi = Bundle::from_goods([1, 2], 3).unwrap();
        assert!(p.value(hi) > p.value(lo));
        assert!(p.value(hi) / d.bundle_mean(hi) > p.value(lo) / d.bundle_mean(lo));
    }

    #[test]
    fn pricing_is_not_additive() {
        let d = PreferenceDistribution::generate(21, 3, &CorrelationSpec::default()).unwrap();
        let p = ShopPricing::new(PricingParams::default(), &d).unwrap();
        let ab = Bundle::from_goods([0, 1], 3).unwrap();
        let c = Bundle::singleton(2, 3).unwrap();
        let all = Bundle::full(3).unwrap();
        assert!((p.value(ab) + p.value(c) - p.value(all)).abs() > 1e-6);
        let additive = ShopPricing::new(PricingParams { beta: 0.7, gamma: 0.0 }, &d).unwrap();
        assert!((additive.value(ab) + additive.value(c) - additive.value(all)).abs() < 1e-9);
    }

    #[test]
    fn pricing_params_are_checked() {
        let d = dist(vec![50.0, 100.0]);
        assert!(ShopPricing::new(PricingParams { beta: 1.0, gamma: 0.3 }, &d).is_err());
        assert!(ShopPricing::new(PricingParams { beta: 0.7, gamma: -0.1 }, &d).is_err());
    }

    #[test]
    fn thresholds_grid() {
        let g = threshold_grid(11, 0.05);
        assert_eq!(g.len(), 11);
        assert_eq!(g[3], 0.15);
        assert_eq!(g[10], 0.5);
    }

    #[test]
    fn config_json_defaults_and_overrides() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"num_distributions": 2, "preset": "tftmf-1", "pricing": {"beta": 0.8, "gamma": 0.2},
                "shop_strategy": {"kind": "tdf", "gap_init": [0.0, 0.5], "delta": 0.1}}"#,
        )
        .unwrap();
        assert_eq!(cfg.num_distributions, 2);
        assert_eq!(cfg.customers_per_distribution, 100);
        assert_eq!(cfg.thresholds.len(), 11);
        assert_eq!(cfg.customer_spec().delta, DeltaSpec::Fixed(1.0));
        assert_eq!(cfg.customer_spec().kind, StrategyKind::Tftmf);
        assert_eq!(cfg.pricing.beta, 0.8);
        let bad = ExperimentConfig {
            thresholds: vec![0.2, 0.1],
            ..ExperimentConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn summary_header() {
        let mut buf = Vec::new();
        write_summary(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "threshold,variant,deals,mean_rounds,perc,relP,diff_deals,diff_rounds,diff_perc,diff_relP\n"
        );
    }
}
