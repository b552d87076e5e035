//! Bootstrap random walk toolkit.
//!
//! Row 0 of a spin array is an i.i.d. biased `±1` sequence; every other row is
//! produced from it by a cellular-automaton rule (prefix products going down,
//! adjacent products going up). The columns of the array form a finite Markov
//! chain, which makes the stationary laws, lagged covariances and the limiting
//! covariance of the rescaled partial sums exactly computable.
//!
//! Modules:
//!
//! * [`bincomb`]: binomial parities (Lucas), binary weights and the derived counts.
//! * [`array`]: bit-packed spin rows and the CA array builder.
//! * [`chain`]: the column Markov chain, its transition matrix and stationary laws.
//! * [`limits`]: drift, lagged covariances and the limiting covariance matrix.
//! * [`montecarlo`]: seeded trajectory simulation, empirical covariance and visit counts.
//! * [`oracle`]: brute-force enumeration and matrix-power references.

pub mod array;
pub mod bincomb;
pub mod chain;
mod error;
pub mod export;
pub mod limits;
pub mod montecarlo;
pub mod oracle;
pub mod rng;
mod spin;

pub use error::{Error, Result};
pub use spin::{BernoulliParam, Spin};
