//! Model-independent price bounds and robust hedging strategies for options
//! on (weighted) realised variance.
//!
//! Given co-terminal call prices, the library extracts the implied terminal
//! law, constructs the time-changed diffusion whose stopped distribution
//! must match it, solves the associated free-boundary problems numerically
//! (reversed barriers for upper bounds, plain barriers for lower bounds),
//! assembles the corresponding super/sub-hedging portfolios, and validates
//! everything by Monte Carlo.

pub mod barrier;
pub mod error;
pub mod grid;
pub mod hedge;
pub mod heston_nandi;
pub mod io;
pub mod lcp;
pub mod market;
pub mod math;
pub mod simulate;

pub use error::{Error, Result};
