//! Market-data layer: call curves, implied measures and potentials.

pub mod black_scholes;
pub mod curve;
pub mod heston;
pub mod measure;

pub use black_scholes::{bs_call_forward, implied_vol};
pub use curve::CallCurve;
pub use heston::{heston_call_price, HestonParams};
pub use measure::{feasibility_check, FeasibilityReport, ImpliedMeasure, PotentialFn};
