//! Bilateral bundle-price negotiation between a customer and a shop, with a
//! shop-side recommender that steers the negotiation towards bundles with
//! higher gains from trade.
//!
//! Bundles are bitmasks over at most 24 goods. The customer's valuations are
//! drawn from a multivariate normal; the shop only knows that distribution
//! and the customer's offers.

pub mod bundle;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod preference;
pub mod recommender;
pub mod seed;
pub mod stats;
pub mod strategy;
pub mod validate;

pub use bundle::{gains_from_trade, gft_extrema, Bundle, GftExtrema, Offer, Role, ShopValuation, ValuationTable};
pub use engine::{run_session, Event, EventKind, NegotiationOutcome, SessionConfig, SessionContext, Termination};
pub use error::{Error, Result};
pub use experiment::{run_sweep, ExperimentConfig, MetricsRow, Preset, PricingParams, ShopPricing};
pub use preference::{ConditionalCache, CorrelationSpec, PreferenceDistribution};
pub use recommender::{RecommenderConfig, RecommenderState, ResponseClass, Variant};
pub use strategy::{Strategy, StrategyKind, StrategyParams};
