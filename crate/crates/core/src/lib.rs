//! Contract-fulfillment bidding engine for real-time second-price auctions.
//!
//! The crate covers the full pipeline a demand-side platform needs to honour
//! impression contracts at minimal expected cost:
//!
//! * [`supply`] — time-varying supply curves `W_j(x, t)`: market models,
//!   Gaussian bid-randomization smoothing, second-price cost curves,
//!   acquisition costs and time aggregation.
//! * [`targeting`] — decomposition of overlapping contract targeting sets
//!   into minimal disjoint item types.
//! * [`planner`] — the finite convex program over piecewise-constant bid
//!   plans: dual supergradient ascent, flow-based primal recovery, a
//!   brute-force oracle, penalty ("best effort") mode and a static baseline.
//! * [`horizon`] — receding-horizon controller that re-aggregates curves and
//!   re-plans as wins accumulate.
//! * [`simulator`] — seeded discrete-event auction simulation with empirical
//!   or synthetic market samplers.
//! * [`estimation`] — hourly arrival-rate and KDE win-probability estimation
//!   from auction logs, assembled into periodic supply curves.
//! * [`runs`] — sliding-window simulation campaigns and policy comparison.
//!
//! All quantities are `f64`. Time is measured in hours, bids and prices in
//! abstract currency units, supply in items (or items/hour for rates).

pub mod error;
pub mod estimation;
pub mod files;
pub mod horizon;
mod interp;
pub mod planner;
pub mod runs;
pub mod scenario;
pub mod simulator;
pub mod supply;
pub mod targeting;

pub use error::Error;
pub use planner::{BidPlan, FlowPlan, PlanningInstance, PseudoBids, SolveOptions};
pub use supply::{AggregateCurve, SteadyStateMarket, TimeVaryingSupplyCurve};
pub use targeting::{Contract, Decomposition};
