//! Picard-parallel Langevin samplers with round accounting.
//!
//! * [`lmc`] and [`ulmc`] run overdamped and underdamped Langevin Monte
//!   Carlo, querying the score at a whole time grid per adaptive round.
//! * [`discrete`] samples distributions on `{±1}^n` by stochastic
//!   localization on top of either sampler.
//! * [`diagnostics`] holds the distances used to check the output.
//!
//! All randomness is derived from a master seed through [`rng::stream`], so
//! results do not depend on the size of the thread pool.

pub mod diagnostics;
pub mod discrete;
pub mod error;
pub mod lmc;
pub mod noise;
pub mod rng;
pub mod schedule;
pub mod score;
pub mod ulmc;

pub use error::{Error, Result};
pub use lmc::{plan_lmc_params, run_parallel_lmc, run_sequential_lmc, GridSchedule, InitialKl};
pub use schedule::{Initialization, ParallelRun, ScheduleOrigin, ScheduleOverrides};
pub use score::{LedgerCounts, QueryLedger, ScoreOracle, TargetModel};
pub use ulmc::{plan_ulmc_params, run_parallel_ulmc, run_sequential_ulmc, UlmcConstants, UlmcSchedule};
