//! Price-bidding strategies for the current bundle.
//!
//! * Time-dependent fraction (TDF): the gap between a bid and the bidder's own
//!   valuation is `gap_init * exp(-delta * t)` of that valuation, with `t` the
//!   global round. The gap does not depend on which bundle is on the table.
//! * Tit-for-tat monotone fraction (TFTMF): opens like TDF, then concedes a
//!   fraction `delta` of every improvement in the opponent's offers, measured
//!   as the bidder's own net monetary value. Concessions are never negative
//!   and are tracked in net-value terms, so bundle switches carry the current
//!   position over.

use serde::{Deserialize, Serialize};

use crate::bundle::Role;
use crate::error::{Error, Result};

/// Shop concession rate under TDF.
pub const SHOP_DELTA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Tdf,
    Tftmf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyParams {
    pub kind: StrategyKind,
    pub role: Role,
    pub gap_init: f64,
    pub delta: f64,
}

impl StrategyParams {
    pub fn new(kind: StrategyKind, role: Role, gap_init: f64, delta: f64) -> Result<Self> {
        let p = Self {
            kind,
            role,
            gap_init,
            delta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.gap_init) {
            return Err(Error::Config(format!(
                "gap_init {} outside [0, 0.5]",
                self.gap_init
            )));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!("delta {} must be positive", self.delta)));
        }
        Ok(())
    }
}

/// Net monetary value of trading a bundle worth `valuation` at `price`.
#[inline]
pub fn net_value(role: Role, valuation: f64, price: f64) -> f64 {
    match role {
        Role::Customer => valuation - price,
        Role::Shop => price - valuation,
    }
}

/// Price whose net monetary value to `role` is `net`.
#[inline]
fn price_for_net(role: Role, valuation: f64, net: f64) -> f64 {
    match role {
        Role::Customer => (valuation - net).max(0.0),
        Role::Shop => valuation + net,
    }
}

/// TDF price at global round `t`.
pub fn tdf_bid(gap_init: f64, delta: f64, valuation: f64, t: u32, role: Role) -> f64 {
    let gap = gap_init * (-delta * t as f64).exp();
    match role {
        Role::Customer => valuation * (1.0 - gap),
        Role::Shop => valuation * (1.0 + gap),
    }
}

/// Per-negotiation strategy state.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    params: StrategyParams,
    /// Own net monetary value of the last committed bid.
    guard: Option<f64>,
    /// Best own net monetary value seen in the opponent's offers.
    best_opponent: Option<f64>,
    bids: u32,
}

impl Strategy {
    pub fn new(params: StrategyParams) -> Self {
        Self {
            params,
            guard: None,
            best_opponent: None,
            bids: 0,
        }
    }

    pub fn params(&self) -> &StrategyParams {
        &self.params
    }

    /// Own net monetary value of the last committed bid.
    pub fn last_net_value(&self) -> Option<f64> {
        self.guard
    }

    pub fn best_opponent_value(&self) -> Option<f64> {
        self.best_opponent
    }

    pub fn bids_made(&self) -> u32 {
        self.bids
    }

    /// Concession TFTMF would make in response to an opponent offer worth
    /// `opponent_net` to us.
    pub fn concession(&self, opponent_net: Option<f64>) -> f64 {
        match (opponent_net, self.best_opponent) {
            (Some(now), Some(best)) => self.params.delta * (now - best).max(0.0),
            _ => 0.0,
        }
    }

    /// The price this strategy would offer at round `t` for a bundle it
    /// values at `valuation`, given the opponent's standing offer worth
    /// `opponent_net` to us. Does not change state.
    pub fn plan(&self, t: u32, valuation: f64, opponent_net: Option<f64>) -> f64 {
        let p = &self.params;
        match p.kind {
            StrategyKind::Tdf => tdf_bid(p.gap_init, p.delta, valuation, t, p.role),
            StrategyKind::Tftmf => match self.guard {
                None => tdf_bid(p.gap_init, p.delta, valuation, 0, p.role),
                Some(guard) => {
                    let net = (guard - self.concession(opponent_net)).max(0.0);
                    price_for_net(p.role, valuation, net)
                }
            },
        }
    }

    /// Records `price` as the bid actually made.
    pub fn commit(&mut self, price: f64, valuation: f64, opponent_net: Option<f64>) {
        self.guard = Some(net_value(self.params.role, valuation, price));
        if let Some(v) = opponent_net {
            self.best_opponent = Some(self.best_opponent.map_or(v, |b: f64| b.max(v)));
        }
        self.bids += 1;
    }

    /// `plan` followed by `commit`.
    pub fn bid(&mut self, t: u32, valuation: f64, opponent_net: Option<f64>) -> f64 {
        let price = self.plan(t, valuation, opponent_net);
        self.commit(price, valuation, opponent_net);
        price
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tdf_opening_gaps() {
        assert_eq!(tdf_bid(0.5, 0.2, 100.0, 0, Role::Customer), 50.0);
        assert_eq!(tdf_bid(0.5, 0.1, 100.0, 0, Role::Shop), 150.0);
        assert!((tdf_bid(0.5, 0.2, 100.0, 500, Role::Customer) - 100.0).abs() < 1e-12);
        assert!((tdf_bid(0.5, 0.1, 100.0, 500, Role::Shop) - 100.0).abs() < 1e-12);
    }

    #[test]
    fn tdf_gap_ignores_bundle() {
        // same fraction at the same round for any valuation
        for t in 0..20 {
            let a = tdf_bid(0.3, 0.25, 80.0, t, Role::Customer) / 80.0;
            let b = tdf_bid(0.3, 0.25, 313.0, t, Role::Customer) / 313.0;
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn params_are_validated() {
        assert!(StrategyParams::new(StrategyKind::Tdf, Role::Customer, 0.6, 0.2).is_err());
        assert!(StrategyParams::new(StrategyKind::Tdf, Role::Customer, 0.2, 0.0).is_err());
        assert!(StrategyParams::new(StrategyKind::Tftmf, Role::Shop, 0.0, 1.0).is_ok());
    }

    fn tftmf_customer(gap: f64, delta: f64) -> Strategy {
        Strategy::new(StrategyParams::new(StrategyKind::Tftmf, Role::Customer, gap, delta).unwrap())
    }

    #[test]
    fn tftmf_repeated_offer_no_concession() {
        let mut s = tftmf_customer(0.4, 0.5);
        assert_eq!(s.bid(0, 100.0, None), 60.0);
        assert_eq!(s.bid(1, 100.0, Some(10.0)), 60.0);
        assert_eq!(s.bid(2, 100.0, Some(10.0)), 60.0);
    }

    #[test]
    fn tftmf_negative_improvement_no_concession() {
        let mut s = tftmf_customer(0.4, 0.5);
        s.bid(0, 100.0, None);
        s.bid(1, 100.0, Some(10.0));
        // the shop raised its ask: worth 5 now, worse than 10
        assert_eq!(s.bid(2, 100.0, Some(5.0)), 60.0);
    }

    #[test]
    fn tftmf_two_round_trace() {
        // valuation 100, shop asks 90 then 80 (net 10 then 20), delta 0.5
        let mut s = tftmf_customer(0.4, 0.5);
        let opening = s.bid(0, 100.0, None);
        let second = s.bid(1, 100.0, Some(100.0 - 90.0));
        let third = s.bid(2, 100.0, Some(100.0 - 80.0));
        assert_eq!(opening, 60.0);
        assert_eq!(second, 60.0);
        assert!((third - second - 5.0).abs() < 1e-12);
    }

    #[test]
    fn tftmf_carries_position_across_bundles() {
        let mut s = tftmf_customer(0.5, 0.5);
        s.bid(0, 100.0, None); // net 50
        let p = s.bid(1, 140.0, Some(0.0));
        assert_eq!(p, 90.0);
        assert_eq!(s.last_net_value(), Some(50.0));
    }

    #[test]
    fn tftmf_never_bids_above_valuation() {
        let mut s = tftmf_customer(0.1, 1.0);
        s.bid(0, 100.0, None);
        s.bid(1, 100.0, Some(-50.0));
        // huge improvement: concession capped at the whole remaining margin
        let p = s.bid(2, 100.0, Some(500.0));
        assert_eq!(p, 100.0);
        // switching to a bundle worth less than the carried margin floors at 0
        let mut s = tftmf_customer(0.5, 0.1);
        s.bid(0, 200.0, None);
        assert_eq!(s.bid(1, 60.0, None), 0.0);
        assert_eq!(s.last_net_value(), Some(60.0));
    }

    #[test]
    fn tftmf_shop_side() {
        let mut s = Strategy::new(StrategyParams::new(StrategyKind::Tftmf, Role::Shop, 0.5, 0.5).unwrap());
        assert_eq!(s.bid(0, 100.0, Some(-50.0)), 150.0);
        // customer bid rises from 50 to 70: shop's perceived value -50 -> -30
        let ask = s.bid(1, 100.0, Some(-30.0));
        assert!((ask - 140.0).abs() < 1e-12);
    }
}
