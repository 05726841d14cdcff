//! Heston stochastic volatility with piecewise-constant parameters.
//!
//! * [`bs`]: Garman-Kohlhagen prices, FX delta/strike conversion, implied vol.
//! * [`charfn`]: Black-Scholes and piecewise-Heston characteristic functions.
//! * [`quadrature`]: adaptive Gauss-Kronrod on `[0, inf)`.
//! * [`pricer`]: control-variate vanilla pricing and model smiles.
//! * [`lm`]: Levenberg-Marquardt least squares.
//! * [`calibrator`]: global and bootstrapped fits to delta-quoted smiles.
//! * [`fd`]: ADI finite differences for vanillas and window barriers.
//! * [`mc`]: Monte Carlo oracle for vanillas and window barriers.

// negated comparisons in validators are deliberate: NaN must be rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bs;
pub mod calibrator;
pub mod charfn;
pub mod error;
pub mod fd;
pub mod instrument;
pub mod lm;
pub mod market;
pub mod mc;
pub mod pricer;
pub mod quadrature;

pub use error::{Error, Result};
pub use market::{DeltaQuote, MarketSlice, OptionKind, QuotedDelta};
