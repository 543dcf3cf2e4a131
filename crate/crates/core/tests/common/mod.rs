#![allow(dead_code)]

use bundle_negotiation::bundle::{Bundle, ShopValuation, ValuationTable};
use bundle_negotiation::experiment::{PricingParams, ShopPricing};
use bundle_negotiation::preference::{CorrelationSpec, PreferenceDistribution};
use rand::Rng;
use rand_distr::StandardNormal;

/// Lower-triangular Cholesky factor, written out by hand.
pub fn cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][i] = (a[i][i] - s).sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    l
}

pub fn covariance(dist: &PreferenceDistribution) -> Vec<Vec<f64>> {
    let n = dist.n();
    (0..n).map(|i| (0..n).map(|j| dist.cov(i, j)).collect()).collect()
}

pub fn mvn_draw<R: Rng>(mu: &[f64], l: &[Vec<f64>], rng: &mut R, out: &mut [f64]) {
    let n = mu.len();
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    for i in 0..n {
        out[i] = mu[i] + (0..=i).map(|k| l[i][k] * z[k]).sum::<f64>();
    }
}

pub fn bundle_sum(values: &[f64], bits: u32) -> f64 {
    (0..values.len()).filter(|i| bits & (1 << i) != 0).map(|i| values[i]).sum()
}

/// `(max, min, argmax bits)` by a second, independent enumeration.
pub fn brute_force_gft(vc: &[f64], vs: &dyn Fn(u32) -> f64) -> (f64, f64, Vec<u32>) {
    let n = vc.len();
    let gft: Vec<(u32, f64)> = (1..(1u32 << n)).map(|b| (b, bundle_sum(vc, b) - vs(b))).collect();
    let max = gft.iter().map(|g| g.1).fold(f64::MIN, f64::max);
    let min = gft.iter().map(|g| g.1).fold(f64::MAX, f64::min);
    let tol = 1e-9 * max.abs().max(1.0);
    let arg = gft.iter().filter(|g| g.1 >= max - tol).map(|g| g.0).collect();
    (max, min, arg)
}

pub struct Instance {
    pub dist: PreferenceDistribution,
    pub pricing: ShopPricing,
    pub vc: ValuationTable,
}

impl Instance {
    pub fn shop_fn(&self) -> impl Fn(u32) -> f64 + '_ {
        let n = self.vc.n();
        move |bits| self.pricing.value(Bundle::new(bits, n).unwrap())
    }
}

pub fn instance<R: Rng>(rng: &mut R, n: usize) -> Instance {
    let dist = PreferenceDistribution::generate(rng.random(), n, &CorrelationSpec::default()).unwrap();
    let pricing = ShopPricing::new(PricingParams::default(), &dist).unwrap();
    let vc = dist.sample_customer(rng).unwrap().valuations;
    Instance { dist, pricing, vc }
}
