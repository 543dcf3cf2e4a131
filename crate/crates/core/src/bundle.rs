//! Bundles of goods, offers, valuations and gains-from-trade.
//!
//! A bundle is a nonempty subset of the shop's `n` goods stored as a bit
//! pattern. Bundles are ordered canonically by that integer pattern, which is
//! the tie-break used everywhere downstream.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of goods for which exhaustive enumeration is supported.
pub const MAX_GOODS: usize = 24;

/// A nonempty subset of the `n` goods. Bit `i` marks the presence of good `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bundle {
    bits: u32,
    n: u8,
}

impl Bundle {
    pub fn new(bits: u32, n: usize) -> Result<Self> {
        if n == 0 || n > MAX_GOODS {
            return Err(Error::TooManyGoods { n, max: MAX_GOODS });
        }
        if bits == 0 {
            return Err(Error::EmptyBundle);
        }
        if bits >> n != 0 {
            return Err(Error::BundleOutOfRange { bits, n });
        }
        Ok(Self { bits, n: n as u8 })
    }

    /// Builds a bundle from zero-based good indices.
    pub fn from_goods<I: IntoIterator<Item = usize>>(goods: I, n: usize) -> Result<Self> {
        let mut bits = 0u32;
        for g in goods {
            if g >= n {
                return Err(Error::BundleOutOfRange { bits: 1 << g.min(31), n });
            }
            bits |= 1 << g;
        }
        Self::new(bits, n)
    }

    /// The bundle holding every good.
    pub fn full(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_GOODS {
            return Err(Error::TooManyGoods { n, max: MAX_GOODS });
        }
        Self::new(((1u64 << n) - 1) as u32, n)
    }

    pub fn singleton(good: usize, n: usize) -> Result<Self> {
        Self::from_goods([good], n)
    }

    #[inline]
    pub fn bits(self) -> u32 {
        self.bits
    }

    #[inline]
    pub fn n(self) -> usize {
        self.n as usize
    }

    #[inline]
    pub fn len(self) -> usize {
        self.bits.count_ones() as usize
    }

    /// Always false; bundles are nonempty by construction.
    #[inline]
    pub fn is_empty(self) -> bool {
        false
    }

    #[inline]
    pub fn contains(self, good: usize) -> bool {
        good < self.n() && self.bits & (1 << good) != 0
    }

    /// Zero-based indices of the goods in the bundle, ascending.
    pub fn goods(self) -> impl Iterator<Item = usize> {
        let bits = self.bits;
        (0..self.n()).filter(move |&i| bits & (1 << i) != 0)
    }

    /// Bit string with good 0 first, e.g. `"101"` for goods {0, 2} of 3.
    pub fn to_bit_string(self) -> String {
        (0..self.n())
            .map(|i| if self.contains(i) { '1' } else { '0' })
            .collect()
    }

    pub fn from_bit_string(s: &str) -> Result<Self> {
        let n = s.len();
        let mut bits = 0u32;
        for (i, c) in s.chars().enumerate() {
            match c {
                '1' => bits |= 1 << i,
                '0' => {}
                _ => return Err(Error::Parse(format!("invalid bundle bit string {s:?}"))),
            }
        }
        Self::new(bits, n)
    }

    /// Hamming-distance-one neighbors, excluding the empty bundle, in
    /// canonical order.
    pub fn neighborhood(self) -> Vec<Bundle> {
        let mut out: Vec<Bundle> = (0..self.n())
            .map(|i| self.bits ^ (1 << i))
            .filter(|&bits| bits != 0)
            .map(|bits| Bundle { bits, n: self.n })
            .collect();
        out.sort();
        out
    }

    pub fn is_neighbor_of(self, other: Bundle) -> bool {
        self.n == other.n && (self.bits ^ other.bits).count_ones() == 1
    }
}

impl Serialize for Bundle {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_bit_string())
    }
}

impl<'de> Deserialize<'de> for Bundle {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Bundle::from_bit_string(&s).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for Bundle {
    /// One-based good labels, e.g. `{1,3}`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, g) in self.goods().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", g + 1)?;
        }
        write!(f, "}}")
    }
}

/// Every nonempty bundle over `n` goods in canonical order.
pub fn all_bundles(n: usize) -> Result<impl Iterator<Item = Bundle>> {
    if n == 0 || n > MAX_GOODS {
        return Err(Error::TooManyGoods { n, max: MAX_GOODS });
    }
    let count = (1u64 << n) - 1;
    Ok((1..=count).map(move |bits| Bundle {
        bits: bits as u32,
        n: n as u8,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Customer,
    Shop,
}

impl Role {
    pub fn opponent(self) -> Role {
        match self {
            Role::Customer => Role::Shop,
            Role::Shop => Role::Customer,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Customer => "customer",
            Role::Shop => "shop",
        })
    }
}

/// A price proposal for a bundle. `round` is the position of the offer in its
/// negotiation history and strictly increases along that history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Offer {
    pub bundle: Bundle,
    pub price: f64,
    pub originator: Role,
    pub round: u32,
}

/// Per-good monetary values of one customer. Bundle values are additive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuationTable {
    values: Vec<f64>,
}

impl ValuationTable {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() > MAX_GOODS {
            return Err(Error::TooManyGoods {
                n: values.len(),
                max: MAX_GOODS,
            });
        }
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn good(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn bundle_value(&self, b: Bundle) -> f64 {
        b.goods().map(|i| self.values[i]).sum()
    }
}

/// The shop's monetary value of a bundle (its reservation price).
pub trait ShopValuation {
    fn value(&self, b: Bundle) -> f64;
}

impl<F: Fn(Bundle) -> f64> ShopValuation for F {
    fn value(&self, b: Bundle) -> f64 {
        self(b)
    }
}

/// Additive shop valuations, mostly useful in tests and small examples.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveShopValuation(pub Vec<f64>);

impl ShopValuation for AdditiveShopValuation {
    fn value(&self, b: Bundle) -> f64 {
        b.goods().map(|i| self.0[i]).sum()
    }
}

/// Customer minus shop valuation of `b`.
pub fn gains_from_trade(b: Bundle, vc: &ValuationTable, vs: &dyn ShopValuation) -> f64 {
    vc.bundle_value(b) - vs.value(b)
}

/// Customer and shop net monetary values of a deal.
pub fn net_values(
    deal: (Bundle, f64),
    vc: &ValuationTable,
    vs: &dyn ShopValuation,
) -> (f64, f64) {
    let (b, p) = deal;
    (vc.bundle_value(b) - p, p - vs.value(b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GftExtrema {
    pub max: f64,
    pub min: f64,
    /// Bundles attaining `max`, canonical order.
    pub argmax: Vec<Bundle>,
}

impl GftExtrema {
    pub fn is_efficient(&self, b: Bundle) -> bool {
        self.argmax.binary_search(&b).is_ok()
    }
}

/// Exhaustive scan of all `2^n - 1` bundles. Ties within `1e-9` (relative to
/// the magnitude of the maximum) are all reported in `argmax`.
pub fn gft_extrema(vc: &ValuationTable, vs: &dyn ShopValuation) -> Result<GftExtrema> {
    let n = vc.n();
    let gft: Vec<(Bundle, f64)> = all_bundles(n)?
        .map(|b| (b, gains_from_trade(b, vc, vs)))
        .collect();
    let max = gft.iter().map(|&(_, g)| g).fold(f64::NEG_INFINITY, f64::max);
    let min = gft.iter().map(|&(_, g)| g).fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * max.abs().max(1.0);
    let argmax = gft
        .iter()
        .filter(|&&(_, g)| g >= max - tol)
        .map(|&(b, _)| b)
        .collect();
    Ok(GftExtrema { max, min, argmax })
}

/// True iff `deal1` weakly improves both sides' net monetary values over
/// `deal2`, strictly for at least one side.
pub fn pareto_dominates(
    deal1: (Bundle, f64),
    deal2: (Bundle, f64),
    vc: &ValuationTable,
    vs: &dyn ShopValuation,
) -> bool {
    let (c1, s1) = net_values(deal1, vc, vs);
    let (c2, s2) = net_values(deal2, vc, vs);
    c1 >= c2 && s1 >= s2 && (c1 > c2 || s1 > s2)
}
