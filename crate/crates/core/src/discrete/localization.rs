//! Stochastic localization: sample `μ` on `{±1}^n` through a sequence of
//! continuous, strongly log-concave targets `τ_w μ ∗ N(0, cI)`.

use std::f64::consts::E;
use std::sync::Arc;

use rayon::prelude::*;

use super::hypercube::atom_index;
use super::laplace::{make_convolved_target, oracle_accuracy_for_score, LaplaceOracle};
use crate::error::{Error, Result};
use crate::lmc::{plan_lmc_params, run_parallel_lmc, GridSchedule, InitialKl};
use crate::rng::{derive_seed, tag};
use crate::schedule::{Initialization, ScheduleOrigin, ScheduleOverrides};
use crate::score::LedgerCounts;
use crate::ulmc::{plan_ulmc_params, run_parallel_ulmc, UlmcConstants, UlmcSchedule};

/// Which continuous sampler draws each `x_{i+1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerSampler {
    Lmc,
    Ulmc(UlmcConstants),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationConfig {
    /// Gaussian convolution scale.
    pub c: f64,
    /// Target TV accuracy of the output law.
    pub epsilon: f64,
    /// `T = ⌈t_constant · c · ln(n/ε + e)⌉`.
    pub t_constant: f64,
    /// Share of `ε` spent on the inner samplers; `η = budget_fraction · ε / T`.
    pub budget_fraction: f64,
    pub sampler: InnerSampler,
    /// Applied to the planned inner schedule.
    pub overrides: ScheduleOverrides,
    /// Overrides are refused unless this is set.
    pub acknowledge_overrides: bool,
}

impl LocalizationConfig {
    pub fn new(c: f64, epsilon: f64) -> Self {
        Self {
            c,
            epsilon,
            t_constant: 4.0,
            budget_fraction: 0.5,
            sampler: InnerSampler::Lmc,
            overrides: ScheduleOverrides::default(),
            acknowledge_overrides: false,
        }
    }

    fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.c) {
            return Err(Error::InvalidParameter(format!("c must be positive, got {}", self.c)));
        }
        if !(pos(self.epsilon) && self.epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if !pos(self.t_constant) {
            return Err(Error::InvalidParameter("t_constant must be positive".into()));
        }
        if !(pos(self.budget_fraction) && self.budget_fraction <= 1.0) {
            return Err(Error::InvalidParameter("budget_fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Number of localization steps `T`.
    pub fn steps(&self, n: usize) -> usize {
        (self.t_constant * self.c * (n as f64 / self.epsilon + E).ln()).ceil() as usize
    }

    /// Per-step inner TV accuracy `η`.
    pub fn inner_accuracy(&self, n: usize) -> f64 {
        self.budget_fraction * self.epsilon / self.steps(n) as f64
    }

    /// `T · η`, the total TV spent on the inner samplers.
    pub fn coupling_budget(&self, n: usize) -> f64 {
        self.steps(n) as f64 * self.inner_accuracy(n)
    }

    /// Plans the inner sampler for the constants `α = 1/2c`, `β = 1/c` and
    /// the start `N(0, cI)`, whose KL to the target is at most `n/2c`.
    pub fn inner_schedule(&self, n: usize) -> Result<InnerSchedule> {
        self.validate()?;
        if n == 0 {
            return Err(Error::InvalidParameter("n must be positive".into()));
        }
        let (alpha, beta) = (0.5 / self.c, 1.0 / self.c);
        let eta = self.inner_accuracy(n);
        let infeasible = |e: Error| Error::Configuration(format!("inner sampler schedule is infeasible: {e}"));
        let schedule = match self.sampler {
            InnerSampler::Lmc => {
                let kl0 = InitialKl::Bound(n as f64 / (2.0 * self.c));
                let s = plan_lmc_params(alpha, beta, n, eta, kl0)
                    .and_then(|s| s.with_overrides(&self.overrides))
                    .map_err(infeasible)?;
                InnerSchedule::Lmc(if self.acknowledge_overrides { s.acknowledge() } else { s })
            }
            InnerSampler::Ulmc(constants) => {
                let s = plan_ulmc_params(alpha, beta, n, eta, constants)
                    .and_then(|s| s.with_overrides(&self.overrides))
                    .map_err(infeasible)?;
                InnerSchedule::Ulmc(if self.acknowledge_overrides { s.acknowledge() } else { s })
            }
        };
        if let ScheduleOrigin::Override { acknowledged: false } = schedule.origin() {
            return Err(Error::Configuration(
                "inner schedule overrides must be acknowledged".into(),
            ));
        }
        Ok(schedule)
    }

    /// Largest Laplace-oracle error the inner schedule tolerates.
    pub fn oracle_accuracy(&self, n: usize) -> Result<f64> {
        Ok(oracle_accuracy_for_score(self.inner_schedule(n)?.delta(), n, self.c))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InnerSchedule {
    Lmc(GridSchedule),
    Ulmc(UlmcSchedule),
}

impl InnerSchedule {
    pub fn origin(&self) -> &ScheduleOrigin {
        match self {
            InnerSchedule::Lmc(s) => &s.origin,
            InnerSchedule::Ulmc(s) => &s.origin,
        }
    }

    pub fn delta(&self) -> f64 {
        match self {
            InnerSchedule::Lmc(s) => s.delta,
            InnerSchedule::Ulmc(s) => s.delta,
        }
    }

    pub fn rounds(&self) -> u64 {
        match self {
            InnerSchedule::Lmc(s) => s.rounds(),
            InnerSchedule::Ulmc(s) => s.rounds(),
        }
    }

    pub fn evaluations(&self) -> u64 {
        match self {
            InnerSchedule::Lmc(s) => s.evaluations(),
            InnerSchedule::Ulmc(s) => s.evaluations(),
        }
    }
}

/// Loop state: `w_0 = 0`, `w_{i+1} = w_i + x_{i+1}/c`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationState {
    pub w: Vec<f64>,
    pub i: usize,
    pub c: f64,
    pub t: usize,
}

impl LocalizationState {
    pub fn new(n: usize, c: f64, t: usize) -> Self {
        Self { w: vec![0.0; n], i: 0, c, t }
    }

    pub fn advance(&mut self, x: &[f64]) {
        for (w, x) in self.w.iter_mut().zip(x) {
            *w += x / self.c;
        }
        self.i += 1;
    }

    pub fn is_done(&self) -> bool {
        self.i >= self.t
    }

    /// `sign(w)` with `sign(0) = +1`.
    pub fn signs(&self) -> Vec<i8> {
        self.w.iter().map(|&v| if v >= 0.0 { 1 } else { -1 }).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationOutcome {
    pub signs: Vec<i8>,
    pub w: Vec<f64>,
    /// Score-oracle usage summed over the `T` inner runs.
    pub score_ledger: LedgerCounts,
    /// Log-Laplace rounds and calls behind those scores.
    pub laplace_ledger: LedgerCounts,
}

/// A planned localization sampler bound to one oracle.
pub struct LocalizationSampler {
    oracle: Arc<dyn LaplaceOracle>,
    config: LocalizationConfig,
    schedule: InnerSchedule,
    steps: usize,
}

impl LocalizationSampler {
    pub fn new(oracle: Arc<dyn LaplaceOracle>, config: LocalizationConfig) -> Result<Self> {
        let n = oracle.n();
        let schedule = config.inner_schedule(n)?;
        let allowed = oracle_accuracy_for_score(schedule.delta(), n, config.c);
        if oracle.eps() > allowed * (1.0 + 1e-12) {
            return Err(Error::Configuration(format!(
                "Laplace oracle accuracy {} exceeds the {allowed} the inner schedule tolerates",
                oracle.eps()
            )));
        }
        let steps = config.steps(n);
        Ok(Self { oracle, config, schedule, steps })
    }

    pub fn n(&self) -> usize {
        self.oracle.n()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn schedule(&self) -> &InnerSchedule {
        &self.schedule
    }

    pub fn config(&self) -> &LocalizationConfig {
        &self.config
    }

    /// One localization run.
    pub fn sample(&self, seed: u64) -> Result<LocalizationOutcome> {
        let n = self.n();
        let c = self.config.c;
        let init = Initialization::Gaussian { mean: vec![0.0; n], variance: c };
        let mut state = LocalizationState::new(n, c, self.steps);
        let mut score_ledger = LedgerCounts::default();
        let mut laplace_ledger = LedgerCounts::default();
        while !state.is_done() {
            let (target, score, laplace) = make_convolved_target(self.oracle.clone(), state.w.clone(), c)?;
            let inner_seed = derive_seed(seed, &[tag::INNER, state.i as u64]);
            let run = match &self.schedule {
                InnerSchedule::Lmc(s) => run_parallel_lmc(&target, &score, s, &init, 1, inner_seed)?,
                InnerSchedule::Ulmc(s) => run_parallel_ulmc(&target, &score, s, &init, 1, inner_seed)?,
            };
            score_ledger += run.ledger;
            laplace_ledger += laplace.counts();
            state.advance(&run.samples[0]);
        }
        Ok(LocalizationOutcome {
            signs: state.signs(),
            w: state.w,
            score_ledger,
            laplace_ledger,
        })
    }

    /// Seed of run `r` in a batch seeded by `seed`.
    pub fn run_seed(seed: u64, r: usize) -> u64 {
        derive_seed(seed, &[tag::LOCALIZATION, r as u64])
    }

    /// `runs` independent samples, computed in parallel.
    pub fn sample_many(&self, runs: usize, seed: u64) -> Result<Vec<Vec<i8>>> {
        (0..runs)
            .into_par_iter()
            .map(|r| self.sample(Self::run_seed(seed, r)).map(|o| o.signs))
            .collect()
    }

    /// Counts of each atom (indexed as in [`atom_index`]) over `runs` samples.
    pub fn histogram(&self, runs: usize, seed: u64) -> Result<Vec<u64>> {
        let mut counts = vec![0u64; 1 << self.n()];
        for s in self.sample_many(runs, seed)? {
            counts[atom_index(&s)] += 1;
        }
        Ok(counts)
    }
}

/// Plans and performs a single localization run.
pub fn run_localization_sampler(
    oracle: Arc<dyn LaplaceOracle>,
    config: &LocalizationConfig,
    seed: u64,
) -> Result<LocalizationOutcome> {
    LocalizationSampler::new(oracle, config.clone())?.sample(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::hypercube::HypercubeDistribution;
    use crate::discrete::laplace::{approximate_wrapper, make_enum_oracle};

    fn desk(c: f64, eps: f64) -> LocalizationConfig {
        LocalizationConfig {
            overrides: ScheduleOverrides {
                max_substeps: Some(2),
                max_depth: Some(2),
                max_outer_steps: Some(40),
                ..Default::default()
            },
            acknowledge_overrides: true,
            ..LocalizationConfig::new(c, eps)
        }
    }

    #[test]
    fn step_count_and_budget() {
        let cfg = LocalizationConfig::new(2.0, 0.1);
        // 8 · ln(30 + e) = 27.9..
        assert_eq!(cfg.steps(3), 28);
        assert!((cfg.inner_accuracy(3) - 0.1 / 56.0).abs() < 1e-15);
        assert!(cfg.coupling_budget(3) <= 0.05 + 1e-15);
    }

    #[test]
    fn inner_plan_uses_convolution_constants() {
        let cfg = LocalizationConfig::new(2.0, 0.1);
        let InnerSchedule::Lmc(s) = cfg.inner_schedule(3).unwrap() else { panic!() };
        assert!((s.h - 0.2).abs() < 1e-15);
        assert_eq!(s.origin, ScheduleOrigin::Planner);
        let eta = 0.1 / 56.0;
        assert!((s.delta - 2.0 * 0.25f64.sqrt() * eta).abs() < 1e-15);
    }

    #[test]
    fn unacknowledged_overrides_are_refused() {
        let cfg = LocalizationConfig { acknowledge_overrides: false, ..desk(2.0, 0.1) };
        assert!(matches!(cfg.inner_schedule(3), Err(Error::Configuration(_))));
        assert!(matches!(
            LocalizationConfig::new(2.0, 2.0).inner_schedule(3),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn oracle_too_coarse_is_a_configuration_error() {
        let cfg = desk(2.0, 0.1);
        let base = Arc::new(make_enum_oracle(HypercubeDistribution::uniform(2).unwrap()));
        let allowed = cfg.oracle_accuracy(2).unwrap();
        let ok = approximate_wrapper(base.clone(), allowed, 3).unwrap();
        assert!(LocalizationSampler::new(Arc::new(ok), cfg.clone()).is_ok());
        let bad = approximate_wrapper(base, 2.0 * allowed, 3).unwrap();
        assert!(matches!(
            LocalizationSampler::new(Arc::new(bad), cfg),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn zero_field_breaks_ties_towards_plus() {
        assert_eq!(LocalizationState::new(3, 2.0, 1).signs(), vec![1, 1, 1]);
    }

    #[test]
    fn point_mass_is_reproduced() {
        let mu = HypercubeDistribution::point_mass(&[1, 1, 1]).unwrap();
        let s = LocalizationSampler::new(Arc::new(make_enum_oracle(mu)), desk(2.0, 0.1)).unwrap();
        let out = s.sample_many(200, 5).unwrap();
        let hits = out.iter().filter(|v| **v == [1, 1, 1]).count();
        assert!(hits as f64 >= 0.9 * 200.0, "{hits}");
    }

    #[test]
    fn run_accounting() {
        let mu = HypercubeDistribution::uniform(2).unwrap();
        let cfg = desk(2.0, 0.1);
        let s = LocalizationSampler::new(Arc::new(make_enum_oracle(mu)), cfg).unwrap();
        let out = s.sample(9).unwrap();
        let t = s.steps() as u64;
        assert_eq!(out.score_ledger.rounds, t * s.schedule().rounds());
        assert_eq!(out.score_ledger.evaluations, t * s.schedule().evaluations());
        assert_eq!(out.laplace_ledger.rounds, out.score_ledger.evaluations);
        assert_eq!(out.laplace_ledger.evaluations, 3 * out.score_ledger.evaluations);
        assert_eq!(s.sample(9).unwrap(), out);
    }
}
