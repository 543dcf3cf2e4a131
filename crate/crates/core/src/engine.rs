//! One bilateral negotiation session.
//!
//! Each loop iteration (a round) runs:
//!
//! 1. The customer plans a bid on the current bundle. If the shop's standing
//!    ask is no worse for her than that bid, she accepts the ask.
//! 2. Otherwise she bids. If the bid is at least the shop's planned ask, the
//!    shop accepts it.
//! 3. The negotiation breaks down with the configured probability.
//! 4. The shop optionally recommends another bundle (which becomes current)
//!    and makes its ask.
//!
//! Sessions are deterministic in their seed. Breakdown draws, recommendation
//! triggers and benchmark choices use separate random streams, so two runs
//! that differ only in how they pick bundles see the same breakdown and
//! trigger draws.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bundle::{Bundle, Offer, Role, ShopValuation, ValuationTable};
use crate::error::{Error, Result};
use crate::preference::{ConditionalCache, PreferenceDistribution};
use crate::recommender::{
    predict_remaining_rounds, should_recommend, CounterAction, MarketView, ProgressSnapshot,
    RecommenderConfig, RecommenderState,
};
use crate::seed;
use crate::strategy::{net_value, Strategy, StrategyParams};

pub const DEFAULT_BREAKDOWN: f64 = 0.01;
pub const DEFAULT_MAX_ROUNDS: u32 = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub breakdown_probability: f64,
    pub max_rounds: u32,
    pub customer: StrategyParams,
    pub shop: StrategyParams,
    /// `None` disables recommendation: the opening bundle is never changed.
    pub recommender: Option<RecommenderConfig>,
    pub seed: u64,
}

impl SessionConfig {
    pub fn new(customer: StrategyParams, shop: StrategyParams, seed: u64) -> Self {
        Self {
            breakdown_probability: DEFAULT_BREAKDOWN,
            max_rounds: DEFAULT_MAX_ROUNDS,
            customer,
            shop,
            recommender: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.breakdown_probability) {
            return Err(Error::Config(format!(
                "breakdown probability {} outside [0, 1]",
                self.breakdown_probability
            )));
        }
        if self.max_rounds == 0 {
            return Err(Error::Config("max_rounds must be at least 1".into()));
        }
        if self.customer.role != Role::Customer || self.shop.role != Role::Shop {
            return Err(Error::Config("strategy roles do not match their sides".into()));
        }
        self.customer.validate()?;
        self.shop.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Offer,
    /// A bundle recommended because progress on the current one stalled.
    Recommend,
    /// A bundle recommended right after an unpromising response.
    Rerecommend,
    /// The customer's response to a recommendation, with its class.
    Classify,
    /// No candidates left; the shop returns to the best-gap bundle.
    Exhausted,
    Accept,
    Breakdown,
    RoundCap,
}

/// One transcript line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub round: u32,
    pub actor: Role,
    pub bundle: Bundle,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<f64>,
    pub event: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<u8>,
}

impl Event {
    fn new(round: u32, actor: Role, bundle: Bundle, event: EventKind) -> Self {
        Self {
            round,
            actor,
            bundle,
            price: None,
            event,
            score: None,
            class: None,
        }
    }

    fn priced(mut self, price: f64) -> Self {
        self.price = Some(price);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// The named side accepted the other's standing offer.
    Deal(Role),
    Breakdown,
    RoundCap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegotiationOutcome {
    pub deal_reached: bool,
    pub final_bundle: Option<Bundle>,
    pub final_price: Option<f64>,
    pub rounds: u32,
    pub termination: Termination,
    pub initial_bundle: Bundle,
    /// Recommendations whose scores used the vacuous-condition fallback.
    pub vacuous_fallbacks: u32,
    pub transcript: Vec<Event>,
}

impl NegotiationOutcome {
    /// Offers in the order they were made.
    pub fn offers(&self) -> Vec<Offer> {
        self.transcript
            .iter()
            .filter(|e| e.event == EventKind::Offer)
            .enumerate()
            .map(|(k, e)| Offer {
                bundle: e.bundle,
                price: e.price.expect("offers carry a price"),
                originator: e.actor,
                round: k as u32,
            })
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.transcript {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Rebuilds an outcome from a transcript. The transcript's first offer
    /// determines the initial bundle.
    pub fn from_transcript(transcript: Vec<Event>) -> Result<Self> {
        let initial_bundle = transcript
            .iter()
            .find(|e| e.event == EventKind::Offer)
            .map(|e| e.bundle)
            .ok_or_else(|| Error::Parse("transcript holds no offers".into()))?;
        let last = transcript.last().expect("nonempty");
        let rounds = last.round + 1;
        let (termination, deal) = match last.event {
            EventKind::Accept => (Termination::Deal(last.actor), Some((last.bundle, last.price))),
            EventKind::Breakdown => (Termination::Breakdown, None),
            EventKind::RoundCap => (Termination::RoundCap, None),
            other => return Err(Error::Parse(format!("transcript ends with {other:?}"))),
        };
        Ok(Self {
            deal_reached: deal.is_some(),
            final_bundle: deal.map(|d| d.0),
            final_price: deal.and_then(|d| d.1),
            rounds,
            termination,
            initial_bundle,
            vacuous_fallbacks: 0,
            transcript,
        })
    }
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<Event>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// The goods the customer values strictly below her average valuation; the
/// lowest-valued good alone if there are none.
pub fn opening_bundle(vc: &ValuationTable) -> Bundle {
    let n = vc.n();
    let mean = vc.values().iter().sum::<f64>() / n as f64;
    let below = vc.values().iter().enumerate().filter(|(_, &v)| v < mean).map(|(i, _)| i);
    match Bundle::from_goods(below, n) {
        Ok(b) => b,
        Err(_) => {
            let lowest = vc
                .values()
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .expect("n >= 1");
            Bundle::singleton(lowest, n).expect("valid good index")
        }
    }
}

/// Shared, read-only inputs of a session.
#[derive(Clone, Copy)]
pub struct SessionContext<'a> {
    pub dist: &'a PreferenceDistribution,
    pub cache: &'a ConditionalCache,
    pub shop: &'a dyn ShopValuation,
}

const STREAM_BREAKDOWN: u64 = 1;
const STREAM_TRIGGER: u64 = 2;
const STREAM_CHOICE: u64 = 3;

pub fn run_session(
    cfg: &SessionConfig,
    ctx: &SessionContext<'_>,
    vc: &ValuationTable,
) -> Result<NegotiationOutcome> {
    cfg.validate()?;
    if vc.n() != ctx.dist.n() {
        return Err(Error::Dimension {
            expected: ctx.dist.n(),
            got: vc.n(),
        });
    }
    let mut breakdown_rng = ChaCha8Rng::seed_from_u64(seed::mix(&[cfg.seed, STREAM_BREAKDOWN]));
    let mut trigger_rng = ChaCha8Rng::seed_from_u64(seed::mix(&[cfg.seed, STREAM_TRIGGER]));
    let mut choice_rng = ChaCha8Rng::seed_from_u64(seed::mix(&[cfg.seed, STREAM_CHOICE]));
    let view = MarketView {
        dist: ctx.dist,
        cache: ctx.cache,
        shop: ctx.shop,
    };

    let initial = opening_bundle(vc);
    let mut current = initial;
    let mut customer = Strategy::new(cfg.customer);
    let mut shop = Strategy::new(cfg.shop);
    let mut rec = cfg.recommender.map(|r| RecommenderState::new(r, initial));
    let mut standing_ask: Option<f64> = None;
    let mut bids_on_current: Vec<f64> = Vec::new();
    let mut transcript = Vec::new();
    let mut vacuous_fallbacks = 0u32;

    let finish = |transcript: Vec<Event>, termination, deal: Option<(Bundle, f64)>, rounds, fallbacks| NegotiationOutcome {
        deal_reached: deal.is_some(),
        final_bundle: deal.map(|d| d.0),
        final_price: deal.map(|d| d.1),
        rounds,
        termination,
        initial_bundle: initial,
        vacuous_fallbacks: fallbacks,
        transcript,
    };

    for t in 0..cfg.max_rounds {
        let vc_cur = vc.bundle_value(current);
        let vs_cur = ctx.shop.value(current);

        // customer's turn
        let customer_view = standing_ask.map(|a| net_value(Role::Customer, vc_cur, a));
        let bid = customer.plan(t, vc_cur, customer_view);
        if let Some(ask) = standing_ask {
            if net_value(Role::Customer, vc_cur, ask) >= net_value(Role::Customer, vc_cur, bid) {
                transcript.push(Event::new(t, Role::Customer, current, EventKind::Accept).priced(ask));
                return Ok(finish(transcript, Termination::Deal(Role::Customer), Some((current, ask)), t + 1, vacuous_fallbacks));
            }
        }
        customer.commit(bid, vc_cur, customer_view);
        transcript.push(Event::new(t, Role::Customer, current, EventKind::Offer).priced(bid));
        bids_on_current.push(bid);

        // shop's turn
        let shop_view = Some(net_value(Role::Shop, vs_cur, bid));
        let planned_ask = shop.plan(t, vs_cur, shop_view);
        if net_value(Role::Shop, vs_cur, bid) >= net_value(Role::Shop, vs_cur, planned_ask) {
            transcript.push(Event::new(t, Role::Shop, current, EventKind::Accept).priced(bid));
            return Ok(finish(transcript, Termination::Deal(Role::Shop), Some((current, bid)), t + 1, vacuous_fallbacks));
        }
        if breakdown_rng.random::<f64>() < cfg.breakdown_probability {
            transcript.push(Event::new(t, Role::Shop, current, EventKind::Breakdown));
            return Ok(finish(transcript, Termination::Breakdown, None, t + 1, vacuous_fallbacks));
        }

        let mut next = current;
        if let Some(rec) = rec.as_mut() {
            let ask_at_bid = standing_ask.unwrap_or(planned_ask);
            let mut recommend = None;
            if rec.outstanding() == Some(current) {
                let (class, action) = rec.on_customer_counter(bid, ask_at_bid, &view);
                let mut e = Event::new(t, Role::Shop, current, EventKind::Classify);
                e.class = Some(class.code());
                transcript.push(e);
                if action == CounterAction::NextRecommendation {
                    recommend = Some(EventKind::Rerecommend);
                }
            } else {
                rec.record_offer(current, bid, ask_at_bid);
                if !rec.is_exhausted() && bids_on_current.len() >= 2 {
                    let snap = ProgressSnapshot {
                        current_bid: bid,
                        previous_bid: bids_on_current[bids_on_current.len() - 2],
                        shop_valuation: vs_cur,
                    };
                    let dt = predict_remaining_rounds(&snap);
                    if should_recommend(dt, rec.config().rate, &mut trigger_rng) {
                        recommend = Some(EventKind::Recommend);
                    }
                }
            }
            if let Some(kind) = recommend {
                match rec.next_recommendation(bid, &view, &mut choice_rng) {
                    Some(r) => {
                        if r.score.fallback {
                            vacuous_fallbacks += 1;
                        }
                        let mut e = Event::new(t, Role::Shop, r.bundle, kind);
                        e.score = Some(r.score.value);
                        transcript.push(e);
                        next = r.bundle;
                    }
                    None => {
                        let best = rec.best_record().map_or(current, |(b, _)| b);
                        transcript.push(Event::new(t, Role::Shop, best, EventKind::Exhausted));
                        next = best;
                    }
                }
            }
        }

        let ask = if next == current {
            planned_ask
        } else {
            current = next;
            bids_on_current.clear();
            shop.plan(t, ctx.shop.value(current), shop_view)
        };
        shop.commit(ask, ctx.shop.value(current), shop_view);
        standing_ask = Some(ask);
        transcript.push(Event::new(t, Role::Shop, current, EventKind::Offer).priced(ask));
    }

    let last = cfg.max_rounds - 1;
    transcript.push(Event::new(last, Role::Shop, current, EventKind::RoundCap));
    Ok(finish(transcript, Termination::RoundCap, None, cfg.max_rounds, vacuous_fallbacks))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn opening_bundle_rule() {
        let vc = ValuationTable::new(vec![10.0, 20.0, 30.0]).unwrap();
        assert_eq!(opening_bundle(&vc).to_string(), "{1}");
        let vc = ValuationTable::new(vec![5.0, 6.0, 100.0, 101.0]).unwrap();
        assert_eq!(opening_bundle(&vc).to_string(), "{1,2}");
        let vc = ValuationTable::new(vec![7.0; 4]).unwrap();
        assert_eq!(opening_bundle(&vc).to_string(), "{1}");
    }

    #[test]
    fn event_json_shape() {
        let b = Bundle::new(0b101, 3).unwrap();
        let e = Event::new(4, Role::Customer, b, EventKind::Offer).priced(12.5);
        let s = serde_json::to_string(&e).unwrap();
        assert_eq!(s, r#"{"round":4,"actor":"customer","bundle":"101","price":12.5,"event":"offer"}"#);
        let back: Event = serde_json::from_str(&s).unwrap();
        assert_eq!(back, e);
        let mut c = Event::new(5, Role::Shop, b, EventKind::Classify);
        c.class = Some(2);
        assert_eq!(
            serde_json::to_string(&c).unwrap(),
            r#"{"round":5,"actor":"shop","bundle":"101","event":"classify","class":2}"#
        );
    }
}
