//! The shop's recommendation mechanism.
//!
//! *When* to recommend: from the customer's last two bids `p'` and `p` on the
//! current bundle the shop extrapolates the rounds still needed to reach its
//! own valuation, `dt = (v_s(b) - p') / (p - p')`, and recommends with
//! probability `1 - exp(-rate * dt)`.
//!
//! *What* to recommend: the Hamming-1 neighborhood of the customer's interest
//! bundle, ranked by expected gains from trade given that the customer is
//! willing to pay her current bid for the interest bundle. Bundles are popped
//! from that queue one at a time and never proposed twice. The customer's
//! first counter-offer on a recommended bundle is classified by how much it
//! narrows the bid-ask gap relative to the best gap seen so far:
//!
//! * 2: the bundle becomes the new interest bundle and its ranked
//!   neighborhood is put in front of the queue.
//! * 1: negotiation continues on the recommended bundle.
//! * 0: the next bundle is recommended immediately.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bundle::{Bundle, ShopValuation};
use crate::preference::{ConditionalCache, PreferenceDistribution};

/// Default coefficient on `dt` in the recommendation probability.
pub const DEFAULT_RATE: f64 = 0.25;

/// Customer bids on the current bundle plus the shop's valuation of it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProgressSnapshot {
    pub current_bid: f64,
    pub previous_bid: f64,
    pub shop_valuation: f64,
}

/// Predicted remaining rounds until the customer's bids reach the shop's
/// valuation. Zero once the bid is at or above it, infinite on a stall.
pub fn predict_remaining_rounds(s: &ProgressSnapshot) -> f64 {
    if s.current_bid >= s.shop_valuation {
        return 0.0;
    }
    let step = s.current_bid - s.previous_bid;
    if step <= 0.0 {
        return f64::INFINITY;
    }
    (s.shop_valuation - s.previous_bid) / step
}

pub fn recommendation_probability(delta_t: f64, rate: f64) -> f64 {
    if delta_t == f64::INFINITY {
        return 1.0;
    }
    1.0 - (-rate * delta_t).exp()
}

/// Draws exactly one uniform from `rng` so that trigger streams stay aligned
/// between runs that make different recommendations.
pub fn should_recommend<R: Rng + ?Sized>(delta_t: f64, rate: f64, rng: &mut R) -> bool {
    let u: f64 = rng.random();
    u < recommendation_probability(delta_t, rate)
}

/// Everything the shop knows when scoring bundles.
#[derive(Clone, Copy)]
pub struct MarketView<'a> {
    pub dist: &'a PreferenceDistribution,
    pub cache: &'a ConditionalCache,
    pub shop: &'a dyn ShopValuation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub value: f64,
    /// The conditioning event was vacuous for some good and its unconditional
    /// mean was used instead.
    pub fallback: bool,
}

/// Expected gains from trade of `candidate` given that the customer is
/// willing to pay `price` for `interest`.
pub fn score_bundle(candidate: Bundle, interest: Bundle, price: f64, view: &MarketView<'_>) -> Score {
    let e = view.cache.expectation(view.dist, candidate, interest, price);
    Score {
        value: e.value - view.shop.value(candidate),
        fallback: e.fallback,
    }
}

/// `Ng(interest)` minus `exclude`, ranked by descending score with ties in
/// canonical bundle order.
pub fn build_recommendation_set(
    interest: Bundle,
    price: f64,
    exclude: &BTreeSet<Bundle>,
    view: &MarketView<'_>,
) -> Vec<(Bundle, Score)> {
    let mut scored: Vec<(Bundle, Score)> = interest
        .neighborhood()
        .into_iter()
        .filter(|b| !exclude.contains(b))
        .map(|b| (b, score_bundle(b, interest, price, view)))
        .collect();
    // neighborhood() is canonical and the sort is stable
    scored.sort_by(|a, b| b.1.value.total_cmp(&a.1.value));
    scored
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ResponseClass {
    NotPromising = 0,
    Promising = 1,
    VeryPromising = 2,
}

impl ResponseClass {
    pub fn code(self) -> u8 {
        self as u8
    }
}

/// Classifies a response by the gap-closeness ratio `r = g' / g`, where `g`
/// and `g'` are the bid-ask gaps of the current pair and of the best previous
/// pair. A current bid at or above the ask counts as very promising.
pub fn classify_response(current: (f64, f64), best: (f64, f64), threshold: f64) -> ResponseClass {
    let gap = current.1 - current.0;
    let best_gap = best.1 - best.0;
    if gap <= 0.0 {
        return ResponseClass::VeryPromising;
    }
    let r = best_gap / gap;
    if r > 1.0 + threshold {
        ResponseClass::VeryPromising
    } else if r >= 1.0 {
        ResponseClass::Promising
    } else {
        ResponseClass::NotPromising
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Recommend by expected gains from trade.
    System,
    /// Recommend a uniformly random unproposed neighbor of the interest bundle.
    Benchmark,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecommenderConfig {
    pub variant: Variant,
    pub threshold: f64,
    pub rate: f64,
}

impl RecommenderConfig {
    pub fn new(variant: Variant, threshold: f64) -> Self {
        Self {
            variant,
            threshold,
            rate: DEFAULT_RATE,
        }
    }
}

/// Highest customer bid on a bundle and the shop's ask standing at that bid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfferRecord {
    pub bid: f64,
    pub ask: f64,
}

impl OfferRecord {
    pub fn gap(&self) -> f64 {
        self.ask - self.bid
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recommendation {
    pub bundle: Bundle,
    pub score: Score,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CounterAction {
    /// Keep negotiating the recommended bundle.
    ContinueCurrent,
    /// Interest moved to the recommended bundle; keep negotiating it.
    UpdateInterestAndRefill,
    /// Recommend the next bundle right away.
    NextRecommendation,
}

#[derive(Debug, Clone)]
pub struct RecommenderState {
    config: RecommenderConfig,
    interest: Bundle,
    initial: Bundle,
    queue: VecDeque<(Bundle, Score)>,
    queue_built: bool,
    proposed: BTreeSet<Bundle>,
    records: BTreeMap<Bundle, OfferRecord>,
    outstanding: Option<Bundle>,
    exhausted: bool,
}

impl RecommenderState {
    /// The opening bundle counts as proposed so it is never recommended back.
    pub fn new(config: RecommenderConfig, initial: Bundle) -> Self {
        Self {
            config,
            interest: initial,
            initial,
            queue: VecDeque::new(),
            queue_built: false,
            proposed: BTreeSet::from([initial]),
            records: BTreeMap::new(),
            outstanding: None,
            exhausted: false,
        }
    }

    pub fn config(&self) -> &RecommenderConfig {
        &self.config
    }

    pub fn interest(&self) -> Bundle {
        self.interest
    }

    pub fn initial(&self) -> Bundle {
        self.initial
    }

    pub fn queue(&self) -> Vec<Bundle> {
        self.queue.iter().map(|&(b, _)| b).collect()
    }

    pub fn proposed(&self) -> &BTreeSet<Bundle> {
        &self.proposed
    }

    /// Recommended bundle still awaiting the customer's first counter-offer.
    pub fn outstanding(&self) -> Option<Bundle> {
        self.outstanding
    }

    pub fn is_exhausted(&self) -> bool {
        self.exhausted
    }

    pub fn record(&self, b: Bundle) -> Option<OfferRecord> {
        self.records.get(&b).copied()
    }

    /// Keeps the highest bid per bundle with its standing ask.
    pub fn record_offer(&mut self, bundle: Bundle, bid: f64, ask: f64) {
        let e = self.records.entry(bundle).or_insert(OfferRecord { bid, ask });
        if bid > e.bid {
            *e = OfferRecord { bid, ask };
        }
    }

    /// The recorded pair with the smallest bid-ask gap, canonical order on
    /// ties.
    pub fn best_record(&self) -> Option<(Bundle, OfferRecord)> {
        self.records
            .iter()
            .min_by(|a, b| a.1.gap().total_cmp(&b.1.gap()))
            .map(|(&b, &r)| (b, r))
    }

    /// Handles the customer's first bid on the outstanding recommendation.
    /// Classifies against the best earlier pair, then records the new pair.
    pub fn on_customer_counter(
        &mut self,
        bid: f64,
        ask: f64,
        view: &MarketView<'_>,
    ) -> (ResponseClass, CounterAction) {
        let bundle = self
            .outstanding
            .take()
            .expect("on_customer_counter needs an outstanding recommendation");
        let class = match self.best_record() {
            Some((_, best)) => classify_response((bid, ask), (best.bid, best.ask), self.config.threshold),
            None => ResponseClass::VeryPromising,
        };
        self.record_offer(bundle, bid, ask);
        let action = match class {
            ResponseClass::VeryPromising => {
                self.update_interest(bundle, bid, view);
                CounterAction::UpdateInterestAndRefill
            }
            ResponseClass::Promising => CounterAction::ContinueCurrent,
            ResponseClass::NotPromising => CounterAction::NextRecommendation,
        };
        (class, action)
    }

    fn update_interest(&mut self, bundle: Bundle, price: f64, view: &MarketView<'_>) {
        self.interest = bundle;
        if self.config.variant == Variant::Benchmark {
            return;
        }
        let fresh = build_recommendation_set(bundle, price, &self.proposed, view);
        let head: BTreeSet<Bundle> = fresh.iter().map(|&(b, _)| b).collect();
        let rest: Vec<(Bundle, Score)> = self
            .queue
            .drain(..)
            .filter(|(b, _)| !head.contains(b) && !self.proposed.contains(b))
            .collect();
        self.queue = fresh.into_iter().chain(rest).collect();
        self.queue_built = true;
    }

    /// Picks the next bundle to propose, marking it proposed and outstanding.
    /// `price` is the customer's current bid, used when the ranked queue is
    /// first built around the interest bundle. Returns `None` once the
    /// candidates are exhausted; the recommender then stays silent.
    pub fn next_recommendation<R: Rng + ?Sized>(
        &mut self,
        price: f64,
        view: &MarketView<'_>,
        rng: &mut R,
    ) -> Option<Recommendation> {
        if self.exhausted {
            return None;
        }
        let pick = match self.config.variant {
            Variant::System => {
                if !self.queue_built {
                    self.queue = build_recommendation_set(self.interest, price, &self.proposed, view).into();
                    self.queue_built = true;
                }
                loop {
                    match self.queue.pop_front() {
                        Some((b, _)) if self.proposed.contains(&b) => continue,
                        Some((b, s)) => break Some(Recommendation { bundle: b, score: s }),
                        None => break None,
                    }
                }
            }
            Variant::Benchmark => benchmark_recommend(self.interest, &self.proposed, rng).map(|b| Recommendation {
                bundle: b,
                score: score_bundle(b, self.interest, price, view),
            }),
        };
        match pick {
            Some(r) => {
                self.proposed.insert(r.bundle);
                self.outstanding = Some(r.bundle);
            }
            None => self.exhausted = true,
        }
        pick
    }
}

/// Uniform choice from `Ng(interest)` minus `proposed`.
pub fn benchmark_recommend<R: Rng + ?Sized>(
    interest: Bundle,
    proposed: &BTreeSet<Bundle>,
    rng: &mut R,
) -> Option<Bundle> {
    let candidates: Vec<Bundle> = interest
        .neighborhood()
        .into_iter()
        .filter(|b| !proposed.contains(b))
        .collect();
    if candidates.is_empty() {
        return None;
    }
    Some(candidates[rng.random_range(0..candidates.len())])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::AdditiveShopValuation;
    use crate::preference::geometric_correlation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn remaining_rounds() {
        let s = ProgressSnapshot {
            current_bid: 50.0,
            previous_bid: 40.0,
            shop_valuation: 100.0,
        };
        assert_eq!(predict_remaining_rounds(&s), 6.0);
        let stall = ProgressSnapshot { previous_bid: 50.0, ..s };
        assert_eq!(predict_remaining_rounds(&stall), f64::INFINITY);
        let near = ProgressSnapshot {
            current_bid: 100.0,
            ..s
        };
        assert_eq!(predict_remaining_rounds(&near), 0.0);
    }

    #[test]
    fn trigger_probability_limits() {
        assert_eq!(recommendation_probability(0.0, 0.25), 0.0);
        assert_eq!(recommendation_probability(f64::INFINITY, 0.25), 1.0);
        assert!((recommendation_probability(4.0, 0.25) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| !should_recommend(0.0, 0.25, &mut rng)));
        assert!((0..1000).all(|_| should_recommend(f64::INFINITY, 0.25, &mut rng)));
    }

    #[test]
    fn classification_bands() {
        // g' = 10, g = 9
        assert_eq!(classify_response((1.0, 10.0), (0.0, 10.0), 0.1), ResponseClass::VeryPromising);
        assert_eq!(classify_response((0.0, 10.0), (5.0, 15.0), 0.1), ResponseClass::Promising);
        assert_eq!(classify_response((0.0, 12.0), (0.0, 10.0), 0.1), ResponseClass::NotPromising);
        assert_eq!(classify_response((20.0, 10.0), (0.0, 1.0), 0.1), ResponseClass::VeryPromising);
        // infinite threshold never yields class 2 for a positive gap
        assert_eq!(classify_response((9.9, 10.0), (0.0, 10.0), f64::INFINITY), ResponseClass::Promising);
    }

    fn market(n: usize, rho: f64) -> (PreferenceDistribution, ConditionalCache, AdditiveShopValuation) {
        let mu: Vec<f64> = (0..n).map(|i| 60.0 + 15.0 * i as f64).collect();
        let sd: Vec<f64> = mu.iter().map(|m| m / 5.0).collect();
        let d = PreferenceDistribution::from_sd(mu.clone(), &sd, geometric_correlation(n, rho), None).unwrap();
        let shop = AdditiveShopValuation(mu.iter().map(|m| 0.8 * m).collect());
        (d, ConditionalCache::new(), shop)
    }

    #[test]
    fn score_shifts_with_shop_valuation() {
        let (d, cache, shop) = market(4, 0.5);
        let view = MarketView { dist: &d, cache: &cache, shop: &shop };
        let interest = Bundle::new(0b0011, 4).unwrap();
        let cand = Bundle::new(0b0111, 4).unwrap();
        let base = score_bundle(cand, interest, 150.0, &view).value;
        let raised = |b: Bundle| shop.value(b) + 7.5;
        let view2 = MarketView { dist: &d, cache: &cache, shop: &raised };
        let moved = score_bundle(cand, interest, 150.0, &view2).value;
        assert!((base - moved - 7.5).abs() < 1e-9);
    }

    #[test]
    fn recommendation_set_is_sorted_and_excludes_proposed() {
        let (d, cache, shop) = market(6, 0.5);
        let view = MarketView { dist: &d, cache: &cache, shop: &shop };
        let interest = Bundle::new(0b001110, 6).unwrap();
        let set = build_recommendation_set(interest, 200.0, &BTreeSet::new(), &view);
        assert_eq!(set.len(), 6);
        assert!(set.windows(2).all(|w| w[0].1.value >= w[1].1.value));
        let all: BTreeSet<Bundle> = interest.neighborhood().into_iter().collect();
        assert!(build_recommendation_set(interest, 200.0, &all, &view).is_empty());
    }

    #[test]
    fn equal_scores_fall_back_to_canonical_order() {
        let cache = ConditionalCache::new();
        let flat = |_: Bundle| 0.0;
        let equal_mu = PreferenceDistribution::from_sd(vec![100.0; 4], &[10.0; 4], geometric_correlation(4, 0.0), None).unwrap();
        let view = MarketView { dist: &equal_mu, cache: &cache, shop: &flat };
        let interest = Bundle::new(0b0001, 4).unwrap();
        // {1,2}, {1,3}, {1,4} tie exactly: disjoint additions under independence
        let set = build_recommendation_set(interest, 90.0, &BTreeSet::new(), &view);
        let order: Vec<u32> = set.iter().map(|(b, _)| b.bits()).collect();
        assert_eq!(order, vec![0b0011, 0b0101, 0b1001]);
    }

    #[test]
    fn benchmark_picks_last_remaining_neighbor() {
        let interest = Bundle::new(0b0000011111, 10).unwrap();
        let mut ng = interest.neighborhood();
        let last = ng.pop().unwrap();
        let proposed: BTreeSet<Bundle> = ng.into_iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            assert_eq!(benchmark_recommend(interest, &proposed, &mut rng), Some(last));
        }
        let mut all = proposed.clone();
        all.insert(last);
        assert_eq!(benchmark_recommend(interest, &all, &mut rng), None);
    }

    #[test]
    fn counter_handling() {
        let (d, cache, shop) = market(5, 0.5);
        let view = MarketView { dist: &d, cache: &cache, shop: &shop };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let initial = Bundle::new(0b00011, 5).unwrap();
        let mut st = RecommenderState::new(RecommenderConfig::new(Variant::System, 0.1), initial);
        st.record_offer(initial, 100.0, 140.0);
        let first = st.next_recommendation(100.0, &view, &mut rng).unwrap();
        let ranked = build_recommendation_set(initial, 100.0, &BTreeSet::from([initial]), &view);
        assert_eq!(first.bundle, ranked[0].0);
        assert!(st.proposed().contains(&first.bundle));
        let queue_before = st.queue();

        // gap 40 -> 39: ratio 1.026, within the middle band
        let (class, action) = st.on_customer_counter(101.0, 140.0, &view);
        assert_eq!(class, ResponseClass::Promising);
        assert_eq!(action, CounterAction::ContinueCurrent);
        assert_eq!(st.queue(), queue_before);
        assert_eq!(st.interest(), initial);

        // gap 39 -> 20: very promising, interest moves and queue head is in Ng(b_k)
        let second = st.next_recommendation(105.0, &view, &mut rng).unwrap();
        let (class, action) = st.on_customer_counter(120.0, 140.0, &view);
        assert_eq!(class, ResponseClass::VeryPromising);
        assert_eq!(action, CounterAction::UpdateInterestAndRefill);
        assert_eq!(st.interest(), second.bundle);
        let q = st.queue();
        assert!(q[0].is_neighbor_of(second.bundle));
        assert!(q.iter().all(|b| !st.proposed().contains(b)));
        let uniq: BTreeSet<Bundle> = q.iter().copied().collect();
        assert_eq!(uniq.len(), q.len());

        // gap 20 -> 50: not promising
        let head = q[0];
        let third = st.next_recommendation(120.0, &view, &mut rng).unwrap();
        assert_eq!(third.bundle, head);
        let (class, action) = st.on_customer_counter(90.0, 140.0, &view);
        assert_eq!(class, ResponseClass::NotPromising);
        assert_eq!(action, CounterAction::NextRecommendation);
        assert_eq!(st.best_record().unwrap().0, second.bundle);
    }

    #[test]
    fn exhaustion_silences_recommender() {
        let (d, cache, shop) = market(2, 0.5);
        let view = MarketView { dist: &d, cache: &cache, shop: &shop };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let initial = Bundle::new(0b01, 2).unwrap();
        let mut st = RecommenderState::new(RecommenderConfig::new(Variant::System, 0.0), initial);
        assert_eq!(st.next_recommendation(50.0, &view, &mut rng).unwrap().bundle.bits(), 0b11);
        assert!(st.next_recommendation(50.0, &view, &mut rng).is_none());
        assert!(st.is_exhausted());
    }
}
