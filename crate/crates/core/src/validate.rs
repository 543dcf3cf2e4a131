//! Quick self-checks run by the `validate` command.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bundle::{all_bundles, gft_extrema, net_values, pareto_dominates, Bundle, ShopValuation, ValuationTable};
use crate::engine::{run_session, SessionConfig, SessionContext};
use crate::error::Result;
use crate::experiment::{PricingParams, ShopPricing};
use crate::preference::{ConditionalCache, CorrelationSpec, PreferenceDistribution};
use crate::recommender::{recommendation_probability, should_recommend};
use crate::strategy::{StrategyKind, StrategyParams};
use crate::Role;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn pareto(seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    for _ in 0..20 {
        let dist = PreferenceDistribution::generate(rng.random(), 5, &CorrelationSpec::default())?;
        let shop = ShopPricing::new(PricingParams::default(), &dist)?;
        let vc = dist.sample_customer(&mut rng)?.valuations;
        let ext = gft_extrema(&vc, &shop)?;
        let (lo, hi) = (ext.min.min(0.0) - 50.0, 50.0 + vc.bundle_value(Bundle::full(5)?));
        'bundles: for b in all_bundles(5)? {
            let efficient = ext.is_efficient(b);
            for i in 0..200 {
                let p = lo + (hi - lo) * i as f64 / 199.0;
                let dominated = all_bundles(5)?.any(|b2| {
                    // midpoint of the acceptable price interval for b2
                    let q = p + (vc.bundle_value(b2) - vc.bundle_value(b) + shop.value(b2) - shop.value(b)) / 2.0;
                    pareto_dominates((b2, q), (b, p), &vc, &shop)
                });
                if dominated == efficient {
                    failures += 1;
                    break 'bundles;
                }
            }
        }
    }
    Ok(check("pareto-efficiency", failures == 0, format!("{failures} instances disagreed")))
}

fn conditional(seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = PreferenceDistribution::generate(rng.random(), 4, &CorrelationSpec::default())?;
    let given = Bundle::from_goods([0, 1], 4)?;
    let price = dist.bundle_mean(given) + 0.5 * dist.bundle_variance(given).sqrt();
    let exact = dist.conditional_good_expectation(2, given, price)?;
    let (mut sum, mut k) = (0.0, 0usize);
    for _ in 0..200_000 {
        let z = dist.draw(&mut rng);
        if z[0] + z[1] >= price {
            sum += z[2];
            k += 1;
        }
    }
    let mc = sum / k as f64;
    let rel = (mc - exact).abs() / exact.abs();
    Ok(check("conditional-expectation", rel < 0.02, format!("closed form {exact:.3}, sampled {mc:.3}")))
}

fn trigger(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for dt in [1.0, 4.0, 10.0] {
        let hits = (0..100_000).filter(|_| should_recommend(dt, 0.25, &mut rng)).count();
        worst = worst.max((hits as f64 / 1e5 - recommendation_probability(dt, 0.25)).abs());
    }
    check("trigger-frequency", worst < 0.01, format!("max deviation {worst:.4}"))
}

fn sessions(seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = PreferenceDistribution::generate(rng.random(), 6, &CorrelationSpec::default())?;
    let shop = ShopPricing::new(PricingParams::default(), &dist)?;
    let cache = ConditionalCache::new();
    let ctx = SessionContext { dist: &dist, cache: &cache, shop: &shop };
    let mut bad = 0;
    for s in 0..500u64 {
        let vc: ValuationTable = dist.sample_customer(&mut rng)?.valuations;
        let customer = StrategyParams::new(StrategyKind::Tftmf, Role::Customer, rng.random_range(0.0..0.5), 0.3)?;
        let shop_p = StrategyParams::new(StrategyKind::Tdf, Role::Shop, rng.random_range(0.0..0.5), 0.1)?;
        let mut cfg = SessionConfig::new(customer, shop_p, s);
        cfg.recommender = Some(crate::RecommenderConfig::new(crate::Variant::System, 0.25));
        let out = run_session(&cfg, &ctx, &vc)?;
        if let (Some(b), Some(p)) = (out.final_bundle, out.final_price) {
            let (uc, us) = net_values((b, p), &vc, &shop);
            if out.deal_reached && (uc < -1e-9 || us < -1e-9) {
                bad += 1;
            }
        }
    }
    Ok(check("session-rationality", bad == 0, format!("{bad} deals below a reservation value")))
}

/// Runs all checks with a fixed seed.
pub fn run_checks(seed: u64) -> Result<Vec<Check>> {
    let t = Instant::now();
    let out = vec![pareto(seed)?, conditional(seed)?, trigger(seed), sessions(seed)?];
    tracing::debug!(elapsed = ?t.elapsed(), "checks finished");
    Ok(out)
}
