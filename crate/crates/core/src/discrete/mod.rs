//! Sampling on the hypercube `{±1}^n` from log-Laplace oracles.

mod hypercube;
mod laplace;
mod localization;

pub use hypercube::*;
pub use laplace::*;
pub use localization::*;
