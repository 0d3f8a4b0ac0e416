//! Two-layer vehicle-to-grid energy market.
//!
//! The macro layer is a trade-reduction double auction between grid buyers
//! and PHEV aggregators ([`auction`]). In the micro layer each aggregator
//! passes a share `gamma_n` of the clearing price to its PHEVs, which reply
//! with utility-maximising supply offers ([`micro`]). [`mechanism`] iterates
//! the two layers until the price settles, [`equilibrium`] solves the same
//! market in closed form, and [`scenario`] / [`sweep`] generate seeded
//! experiments whose results [`report`] writes as CSV.
//!
//! All market math is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, with `*32` variants for `f32`.
//!
//! ```
//! use v2g_market::{clear, Ask64, BuyBid64, ParticipantId};
//!
//! let asks = [(10.0, 5.0), (20.0, 5.0), (30.0, 5.0)]
//!     .iter()
//!     .enumerate()
//!     .map(|(i, &(s, a))| Ask64::new(ParticipantId(i), s, a).unwrap())
//!     .collect::<Vec<_>>();
//! let bids = [(35.0, 4.0), (25.0, 4.0), (15.0, 4.0)]
//!     .iter()
//!     .enumerate()
//!     .map(|(k, &(b, x))| BuyBid64::new(ParticipantId(k), b, x).unwrap())
//!     .collect::<Vec<_>>();
//!
//! let outcome = clear(&asks, &bids);
//! assert_eq!(outcome.price, Some(22.5));
//! assert_eq!(outcome.sold_by(ParticipantId(0)), 4.0);
//! ```

pub mod auction;
pub mod equilibrium;
pub mod error;
pub mod mechanism;
pub mod micro;
pub mod report;
pub mod scalar;
pub mod scenario;
pub mod sweep;

pub use auction::{
    build_demand_curve, build_supply_curve, clear, find_intersection, order_and_merge, Ask,
    AuctionOutcome, BuyBid, Crossing, MergedParticipant, OrderedBook, ParticipantId, Side, Step,
    StepCurve,
};
pub use equilibrium::{
    check_lemma1, equilibrium_price, fit_linear_curves, iterate_price, monotonicity_report,
    solve_equilibrium, solve_price_fixed_point, solve_quantity_fixed_point, supply_coefficients,
    EquilibriumSolution, LinearFit, LinearMarketModel, MonotonicityReport,
    QuadraticSupplyCoefficients, VariedParameter,
};
pub use error::{MarketError, Result};
pub use mechanism::{
    run_greedy, run_market, InitialProposals, IterationRecord, MechanismConfig, MechanismTrace,
    StopReason, TraceDetail,
};
pub use micro::{AggregatorState, CostSpec, Phev};
pub use scalar::Scalar;
pub use scenario::{generate, miles_to_mwh, CostModel, Interval, MarketInstance, ScenarioConfig};
pub use sweep::{run_sweep, Baseline, RunResult, SweepResult, SweepRow, SweepSpec, SweepVariable};

pub type Ask64 = Ask<f64>;
pub type BuyBid64 = BuyBid<f64>;
pub type AuctionOutcome64 = AuctionOutcome<f64>;
pub type StepCurve64 = StepCurve<f64>;
pub type Phev64 = Phev<f64>;
pub type CostSpec64 = CostSpec<f64>;
pub type AggregatorState64 = AggregatorState<f64>;
pub type MechanismTrace64 = MechanismTrace<f64>;
pub type LinearMarketModel64 = LinearMarketModel<f64>;
pub type MarketInstance64 = MarketInstance<f64>;

pub type Ask32 = Ask<f32>;
pub type BuyBid32 = BuyBid<f32>;
pub type AuctionOutcome32 = AuctionOutcome<f32>;
pub type AggregatorState32 = AggregatorState<f32>;
pub type MechanismTrace32 = MechanismTrace<f32>;
