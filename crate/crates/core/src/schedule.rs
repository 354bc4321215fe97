//! Pieces shared by the LMC and ULMC schedules: provenance, overrides and
//! initial laws.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::score::TargetModel;

/// Where a schedule came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScheduleOrigin {
    /// Produced by a planner and untouched.
    Planner,
    /// Hand-edited. Runs refuse unacknowledged overrides.
    Override { acknowledged: bool },
}

/// Explicit replacements and caps for planner output.
///
/// Explicit values win over caps. `max_*` caps only ever shrink a value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScheduleOverrides {
    pub h: Option<f64>,
    pub substeps: Option<usize>,
    pub depth: Option<usize>,
    pub outer_steps: Option<usize>,
    pub delta: Option<f64>,
    pub max_substeps: Option<usize>,
    pub max_depth: Option<usize>,
    pub max_outer_steps: Option<usize>,
}

impl ScheduleOverrides {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    pub(crate) fn apply(
        &self,
        h: &mut f64,
        substeps: &mut usize,
        depth: &mut usize,
        outer_steps: &mut usize,
        delta: &mut f64,
    ) -> Result<()> {
        fn cap(v: &mut usize, c: Option<usize>) {
            if let Some(c) = c {
                *v = (*v).min(c);
            }
        }
        cap(substeps, self.max_substeps);
        cap(depth, self.max_depth);
        cap(outer_steps, self.max_outer_steps);
        if let Some(v) = self.h {
            *h = v;
        }
        if let Some(v) = self.substeps {
            *substeps = v;
        }
        if let Some(v) = self.depth {
            *depth = v;
        }
        if let Some(v) = self.outer_steps {
            *outer_steps = v;
        }
        if let Some(v) = self.delta {
            *delta = v;
        }
        if !(*h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidSchedule(format!("h must be positive, got {h}")));
        }
        if *substeps == 0 || *depth == 0 || *outer_steps == 0 {
            return Err(Error::InvalidSchedule(
                "M, K and N must all be at least 1".into(),
            ));
        }
        if !(*delta >= 0.0) {
            return Err(Error::InvalidSchedule(format!("delta must be >= 0, got {delta}")));
        }
        Ok(())
    }
}

/// Law of the starting positions.
#[derive(Debug, Clone, PartialEq)]
pub enum Initialization {
    /// `N(x★, β⁻¹ I)`; requires a target with a known minimizer.
    TargetDefault,
    /// `N(mean, variance · I)`.
    Gaussian { mean: Vec<f64>, variance: f64 },
    /// Every replica starts at the same point.
    Point(Vec<f64>),
}

impl Initialization {
    pub(crate) fn validate(&self, target: &TargetModel) -> Result<()> {
        let d = target.dim();
        match self {
            Initialization::TargetDefault => {
                if target.minimizer().is_none() {
                    return Err(Error::InvalidInput(format!(
                        "target '{}' has no known minimizer; pass an explicit initialization",
                        target.name()
                    )));
                }
            }
            Initialization::Gaussian { mean, variance } => {
                if mean.len() != d || !(*variance >= 0.0) {
                    return Err(Error::InvalidInput(
                        "Gaussian initialization has wrong dimension or negative variance".into(),
                    ));
                }
            }
            Initialization::Point(x) => {
                if x.len() != d {
                    return Err(Error::InvalidInput("initial point has wrong dimension".into()));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn draw<R: Rng>(&self, target: &TargetModel, rng: &mut R, out: &mut [f64]) {
        let (mean, sd): (&[f64], f64) = match self {
            Initialization::TargetDefault => (
                target.minimizer().expect("validated"),
                (1.0 / target.beta()).sqrt(),
            ),
            Initialization::Gaussian { mean, variance } => (mean, variance.sqrt()),
            Initialization::Point(x) => (x, 0.0),
        };
        for (o, m) in out.iter_mut().zip(mean) {
            let z: f64 = rng.sample(StandardNormal);
            *o = m + sd * z;
        }
    }
}

/// Runs below this many replicas stay on the calling thread.
pub(crate) const PARALLEL_REPLICA_THRESHOLD: usize = 64;

/// Output of a replicated parallel run.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelRun {
    /// Final positions, one row per replica.
    pub samples: Vec<Vec<f64>>,
    /// Rounds and per-chain evaluations charged to the oracle.
    pub ledger: crate::score::LedgerCounts,
    /// Replica-averaged Picard residual curve of every outer step
    /// (`residuals[n][k-1]` for iteration `k`).
    pub residuals: Vec<Vec<f64>>,
}
