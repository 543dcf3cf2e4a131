//! Customer valuation model.
//!
//! Per-good customer valuations follow an n-variate normal `N(mu, Sigma)`.
//! Because bundle valuations are sums of per-good valuations, the vector of
//! all bundle valuations is the linear image `N(T mu, T Sigma T')` where row
//! `k` of `T` is the bit pattern of the k-th canonical bundle. Moments are
//! computed per bundle pair on demand; `T Sigma T'` is only materialized for
//! small `n`.
//!
//! The shop ranks alternatives by `E[v_c(b') | v_c(b) >= p]`. For jointly
//! normal valuations each good's conditional mean has the closed form
//!
//! ```text
//! E[z_i | S >= p] = mu_i + Cov(z_i, S) / sd(S) * lambda((p - E[S]) / sd(S))
//! ```
//!
//! with `S = v_c(b)` and `lambda` the inverse Mills ratio, and the bundle
//! expectation is the sum over its goods.

use std::collections::HashMap;
use std::sync::RwLock;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bundle::{all_bundles, Bundle, ValuationTable, MAX_GOODS};
use crate::error::{Error, Result};
use crate::stats;

/// Lower and upper bound for sampled per-good means.
pub const MEAN_RANGE: (f64, f64) = (40.0, 250.0);
/// Minimum `mu_i / sigma_i`, so that `P(z_i < 0) <= 0.0003`.
pub const MIN_MEAN_TO_SD: f64 = 3.432;
/// Smallest sampled standard deviation as a fraction of the mean.
pub const MIN_SD_FRACTION: f64 = 0.05;
/// Standardized thresholds above this make the conditioning event vacuous.
pub const VACUOUS_ALPHA: f64 = 8.0;
/// Consecutive negative draws tolerated before `sample_customer` gives up.
pub const MAX_REJECTIONS: usize = 1000;
/// Width of the price buckets used as cache keys.
pub const PRICE_BUCKET: f64 = 0.1;

/// `corr_ij = rho^|i-j|`; positive definite for `|rho| < 1`.
pub fn geometric_correlation(n: usize, rho: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| rho.powi((i as i32 - j as i32).abs()))
                .collect()
        })
        .collect()
}

/// How the fixed correlation matrix is chosen when generating distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorrelationSpec {
    /// `rho^|i-j|`.
    Geometric { rho: f64 },
    Identity,
    Explicit { matrix: Vec<Vec<f64>> },
}

impl Default for CorrelationSpec {
    fn default() -> Self {
        CorrelationSpec::Geometric { rho: 0.5 }
    }
}

impl CorrelationSpec {
    pub fn matrix(&self, n: usize) -> Result<Vec<Vec<f64>>> {
        match self {
            CorrelationSpec::Geometric { rho } => Ok(geometric_correlation(n, *rho)),
            CorrelationSpec::Identity => Ok(geometric_correlation(n, 0.0)),
            CorrelationSpec::Explicit { matrix } => {
                if matrix.len() != n {
                    return Err(Error::Dimension {
                        expected: n,
                        got: matrix.len(),
                    });
                }
                Ok(matrix.clone())
            }
        }
    }
}

/// On-disk form: `{n, mu[], sigma[][], corr[][], seed}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct DistributionDoc {
    n: usize,
    mu: Vec<f64>,
    sigma: Vec<Vec<f64>>,
    corr: Vec<Vec<f64>>,
    #[serde(default)]
    seed: Option<u64>,
}

/// Multivariate normal over per-good customer valuations.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "DistributionDoc", into = "DistributionDoc")]
pub struct PreferenceDistribution {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    corr: DMatrix<f64>,
    chol: DMatrix<f64>,
    seed: Option<u64>,
}

impl TryFrom<DistributionDoc> for PreferenceDistribution {
    type Error = Error;

    fn try_from(doc: DistributionDoc) -> Result<Self> {
        if doc.mu.len() != doc.n {
            return Err(Error::Dimension {
                expected: doc.n,
                got: doc.mu.len(),
            });
        }
        Self::new(doc.mu, doc.sigma, doc.corr, doc.seed)
    }
}

impl From<PreferenceDistribution> for DistributionDoc {
    fn from(d: PreferenceDistribution) -> Self {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows())
                .map(|i| m.row(i).iter().copied().collect())
                .collect()
        };
        DistributionDoc {
            n: d.n(),
            mu: d.mu.iter().copied().collect(),
            sigma: rows(&d.sigma),
            corr: rows(&d.corr),
            seed: d.seed,
        }
    }
}

fn to_matrix(rows: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>> {
    if rows.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: rows.len(),
        });
    }
    for r in rows {
        if r.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: r.len(),
            });
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(1.0);
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= 1e-9 * scale))
}

impl PreferenceDistribution {
    /// Validates and assembles a distribution from a mean vector, covariance
    /// matrix and the correlation matrix it was built from.
    pub fn new(
        mu: Vec<f64>,
        sigma: Vec<Vec<f64>>,
        corr: Vec<Vec<f64>>,
        seed: Option<u64>,
    ) -> Result<Self> {
        let n = mu.len();
        if n == 0 || n > MAX_GOODS {
            return Err(Error::TooManyGoods { n, max: MAX_GOODS });
        }
        let sigma = to_matrix(&sigma, n)?;
        let corr = to_matrix(&corr, n)?;
        if !is_symmetric(&sigma) || !is_symmetric(&corr) {
            return Err(Error::NotPositiveDefinite);
        }
        for i in 0..n {
            if (corr[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidDistribution(format!(
                    "correlation diagonal entry {i} is {}",
                    corr[(i, i)]
                )));
            }
            for j in 0..n {
                if !(-1.0..=1.0).contains(&corr[(i, j)]) {
                    return Err(Error::InvalidDistribution(format!(
                        "correlation entry ({i}, {j}) = {} outside [-1, 1]",
                        corr[(i, j)]
                    )));
                }
            }
        }
        if corr.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite)?
            .unpack();
        Ok(Self {
            mu: DVector::from_vec(mu),
            sigma,
            corr,
            chol,
            seed,
        })
    }

    /// `Sigma = D corr D` with `D = diag(sd)`.
    pub fn from_sd(mu: Vec<f64>, sd: &[f64], corr: Vec<Vec<f64>>, seed: Option<u64>) -> Result<Self> {
        let n = mu.len();
        if sd.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: sd.len(),
            });
        }
        if corr.len() != n || corr.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension {
                expected: n,
                got: corr.len(),
            });
        }
        let sigma = (0..n)
            .map(|i| (0..n).map(|j| sd[i] * corr[i][j] * sd[j]).collect())
            .collect();
        Self::new(mu, sigma, corr, seed)
    }

    /// Samples a distribution: `n` distinct means uniform on `[40, 250]` and
    /// per-good standard deviations uniform on `[0.05 mu_i, mu_i / 3.432]`.
    pub fn generate(seed: u64, n: usize, corr: &CorrelationSpec) -> Result<Self> {
        if n == 0 || n > MAX_GOODS {
            return Err(Error::TooManyGoods { n, max: MAX_GOODS });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mu: Vec<f64> = Vec::with_capacity(n);
        while mu.len() < n {
            let m = rng.random_range(MEAN_RANGE.0..=MEAN_RANGE.1);
            if !mu.contains(&m) {
                mu.push(m);
            }
        }
        let sd: Vec<f64> = mu
            .iter()
            .map(|&m| rng.random_range(MIN_SD_FRACTION * m..=m / MIN_MEAN_TO_SD))
            .collect();
        Self::from_sd(mu, &sd, corr.matrix(n)?, Some(seed))
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.mu[i]
    }

    pub fn means(&self) -> &[f64] {
        self.mu.as_slice()
    }

    pub fn sd(&self, i: usize) -> f64 {
        self.sigma[(i, i)].sqrt()
    }

    pub fn cov(&self, i: usize, j: usize) -> f64 {
        self.sigma[(i, j)]
    }

    pub fn corr(&self, i: usize, j: usize) -> f64 {
        self.corr[(i, j)]
    }

    /// `P(z_i < 0)` for each good.
    pub fn negative_probabilities(&self) -> Vec<f64> {
        (0..self.n())
            .map(|i| stats::cdf(-self.mu[i] / self.sd(i)))
            .collect()
    }

    /// One unrestricted draw from `N(mu, Sigma)`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_fn(self.n(), |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.mu + &self.chol * z).iter().copied().collect()
    }

    /// Draws a customer, redrawing any vector with a negative component.
    pub fn sample_customer<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<CustomerDraw> {
        for rejections in 0..=MAX_REJECTIONS {
            let v = self.draw(rng);
            if v.iter().all(|&x| x >= 0.0) {
                return Ok(CustomerDraw {
                    valuations: ValuationTable::new(v)?,
                    rejections,
                });
            }
        }
        Err(Error::RejectionLimit(MAX_REJECTIONS))
    }

    /// `E[v_c(b)] = sum_{i in b} mu_i`.
    pub fn bundle_mean(&self, b: Bundle) -> f64 {
        b.goods().map(|i| self.mu[i]).sum()
    }

    /// `Cov(z_i, v_c(b))`.
    pub fn good_bundle_cov(&self, i: usize, b: Bundle) -> f64 {
        b.goods().map(|j| self.sigma[(i, j)]).sum()
    }

    /// `Cov(v_c(a), v_c(b)) = sum_{i in a} sum_{j in b} Sigma_ij`.
    pub fn bundle_cov(&self, a: Bundle, b: Bundle) -> f64 {
        a.goods().map(|i| self.good_bundle_cov(i, b)).sum()
    }

    pub fn bundle_variance(&self, b: Bundle) -> f64 {
        self.bundle_cov(b, b)
    }

    /// Materializes `(T mu, T Sigma T')` over all bundles in canonical order.
    pub fn bundle_moments(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let t = BundleTransform::new(self.n())?;
        let tm = t.matrix();
        Ok((&tm * &self.mu, &tm * &self.sigma * tm.transpose()))
    }

    /// `E[z_i | v_c(given) >= price]`.
    pub fn conditional_good_expectation(&self, good: usize, given: Bundle, price: f64) -> Result<f64> {
        let sd = self.bundle_variance(given).sqrt();
        if price == f64::NEG_INFINITY {
            return Ok(self.mu[good]);
        }
        let alpha = (price - self.bundle_mean(given)) / sd;
        if alpha > VACUOUS_ALPHA {
            return Err(Error::VacuousCondition {
                alpha,
                limit: VACUOUS_ALPHA,
            });
        }
        Ok(self.mu[good] + self.good_bundle_cov(good, given) / sd * stats::inverse_mills(alpha))
    }

    /// `E[v_c(target) | v_c(given) >= price]`, summed good by good.
    pub fn conditional_expectation(&self, target: Bundle, given: Bundle, price: f64) -> Result<f64> {
        target
            .goods()
            .map(|i| self.conditional_good_expectation(i, given, price))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CustomerDraw {
    pub valuations: ValuationTable,
    /// Draws discarded for containing a negative valuation.
    pub rejections: usize,
}

/// The `(2^n - 1) x n` 0/1 matrix mapping good valuations to bundle
/// valuations.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleTransform {
    n: usize,
}

impl BundleTransform {
    /// Largest `n` for which the dense transform (and `T Sigma T'`) is built.
    pub const MAX_DENSE_GOODS: usize = 12;

    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > Self::MAX_DENSE_GOODS {
            return Err(Error::TooManyGoods {
                n,
                max: Self::MAX_DENSE_GOODS,
            });
        }
        Ok(Self { n })
    }

    pub fn rows(&self) -> usize {
        (1 << self.n) - 1
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let mut t = DMatrix::zeros(self.rows(), self.n);
        for (k, b) in all_bundles(self.n).expect("n checked").enumerate() {
            for i in b.goods() {
                t[(k, i)] = 1.0;
            }
        }
        t
    }
}

/// Memo of per-good conditional expectations keyed by
/// `(good, given bundle, price bucket)`. Values are computed at the bucket's
/// representative price, so an entry depends only on its key and concurrent
/// sessions see the same numbers regardless of which one filled it.
#[derive(Debug, Default)]
pub struct ConditionalCache {
    map: RwLock<HashMap<(u8, u32, i64), Option<f64>>>,
}

/// Conditional expectation plus whether the vacuous-condition fallback was
/// taken for any good.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expectation {
    pub value: f64,
    pub fallback: bool,
}

impl ConditionalCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn bucket(price: f64) -> i64 {
        if price == f64::NEG_INFINITY {
            i64::MIN
        } else {
            (price / PRICE_BUCKET).round() as i64
        }
    }

    fn good(&self, dist: &PreferenceDistribution, good: usize, given: Bundle, price: f64) -> Option<f64> {
        let bucket = Self::bucket(price);
        let key = (good as u8, given.bits(), bucket);
        if let Some(v) = self.map.read().expect("cache lock").get(&key) {
            return *v;
        }
        let p = if bucket == i64::MIN {
            f64::NEG_INFINITY
        } else {
            bucket as f64 * PRICE_BUCKET
        };
        let v = dist.conditional_good_expectation(good, given, p).ok();
        self.map.write().expect("cache lock").insert(key, v);
        v
    }

    /// `E[v_c(target) | v_c(given) >= price]`, falling back to the
    /// unconditional mean of a good when its condition is vacuous.
    pub fn expectation(
        &self,
        dist: &PreferenceDistribution,
        target: Bundle,
        given: Bundle,
        price: f64,
    ) -> Expectation {
        let mut fallback = false;
        let value = target
            .goods()
            .map(|i| {
                self.good(dist, i, given, price).unwrap_or_else(|| {
                    fallback = true;
                    dist.mean(i)
                })
            })
            .sum();
        Expectation { value, fallback }
    }
}
