//! Overdamped Langevin Monte Carlo: the sequential Euler–Maruyama
//! reference and its Picard-parallel counterpart.
//!
//! One outer step of length `h` is split into `M` substeps. Starting from a
//! constant trajectory, each Picard iteration queries the score at all `M`
//! left grid points in one batch and rebuilds the whole trajectory from
//! prefix sums:
//!
//! ```text
//! X^{k+1}_m = X_0 − (h/M) Σ_{m' < m} s(X^k_{m'}) + √2 W_m
//! ```
//!
//! `X^k_m` is exact (equal to sequential LMC on the same path) once
//! `k ≥ m`, so `K ≥ M` iterations reproduce the sequential endpoint.

use std::f64::consts::{E, SQRT_2};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::noise::{sample_brownian_grid, BrownianGrid};
use crate::rng::{derive_seed, stream, tag};
use crate::schedule::{
    Initialization, ParallelRun, ScheduleOrigin, ScheduleOverrides, PARALLEL_REPLICA_THRESHOLD,
};
use crate::score::{ScoreOracle, TargetModel};

/// Bound on `βh` the planner enforces.
pub const MAX_BETA_H: f64 = 0.1;

/// Parameters of a parallel LMC run.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSchedule {
    /// Outer step length.
    pub h: f64,
    /// Substeps per outer step (`M`); also the queries per round.
    pub substeps: usize,
    /// Picard iterations per outer step (`K`).
    pub depth: usize,
    /// Outer steps (`N`).
    pub outer_steps: usize,
    /// Score accuracy the schedule tolerates.
    pub delta: f64,
    /// Target accuracy.
    pub epsilon: f64,
    pub origin: ScheduleOrigin,
}

/// Initial KL divergence to feed the planner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialKl {
    /// `KL(N(x★, β⁻¹I) ‖ π) ≤ (d/2) ln κ`, the strongly log-concave bound.
    Default,
    Bound(f64),
}

/// `⌈x⌉` that ignores round-off just above an integer.
pub(crate) fn ceil_tol(x: f64) -> usize {
    (x * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

pub(crate) fn validate_accuracy(alpha: f64, beta: f64, d: usize, epsilon: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    if !(beta >= alpha && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "beta must be finite and >= alpha, got {beta}"
        )));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    Ok(())
}

/// Plans `(h, δ, M, K, N)` for an `ε`-accurate run (KL ≤ ε², hence TV ≤ ε).
///
/// ```text
/// h = 1/(10β)   δ = 2√α ε   M = ⌈7 max{κd/ε², κ²}⌉   K = ⌈3 ln M⌉
/// N = ⌈10κ ln(max{d ln κ, e}/ε²)⌉              (default initialization)
/// N = ⌈(αh)⁻¹ ln(2 KL₀/ε²)⌉                    (explicit KL₀)
/// ```
pub fn plan_lmc_params(
    alpha: f64,
    beta: f64,
    d: usize,
    epsilon: f64,
    kl0: InitialKl,
) -> Result<GridSchedule> {
    validate_accuracy(alpha, beta, d, epsilon)?;
    let kappa = beta / alpha;
    let eps2 = epsilon * epsilon;
    let h = 1.0 / (10.0 * beta);
    let delta = 2.0 * alpha.sqrt() * epsilon;
    let substeps = ceil_tol(7.0 * (kappa * d as f64 / eps2).max(kappa * kappa));
    let depth = ceil_tol(3.0 * (substeps as f64).ln());
    let outer_steps = match kl0 {
        InitialKl::Default => {
            let inner = (d as f64 * kappa.ln()).max(E);
            ceil_tol(10.0 * kappa * (inner / eps2).ln())
        }
        InitialKl::Bound(kl) => {
            if !(kl >= 0.0 && kl.is_finite()) {
                return Err(Error::InvalidParameter(format!("initial KL must be >= 0, got {kl}")));
            }
            let log = (2.0 * kl / eps2).ln();
            if log <= 0.0 {
                1
            } else {
                ceil_tol(log / (alpha * h))
            }
        }
    };
    Ok(GridSchedule {
        h,
        substeps,
        depth,
        outer_steps,
        delta,
        epsilon,
        origin: ScheduleOrigin::Planner,
    })
}

impl GridSchedule {
    /// Applies overrides. The result is marked as an unacknowledged
    /// override unless `overrides` is empty.
    pub fn with_overrides(&self, overrides: &ScheduleOverrides) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut s = self.clone();
        overrides.apply(&mut s.h, &mut s.substeps, &mut s.depth, &mut s.outer_steps, &mut s.delta)?;
        s.origin = ScheduleOrigin::Override { acknowledged: false };
        Ok(s)
    }

    /// Marks an override as deliberate so that runs accept it.
    pub fn acknowledge(mut self) -> Self {
        if let ScheduleOrigin::Override { .. } = self.origin {
            self.origin = ScheduleOrigin::Override { acknowledged: true };
        }
        self
    }

    /// Adaptive rounds a run with this schedule performs (`N·K`).
    pub fn rounds(&self) -> u64 {
        (self.outer_steps * self.depth) as u64
    }

    /// Per-chain score evaluations (`N·K·M`).
    pub fn evaluations(&self) -> u64 {
        self.rounds() * self.substeps as u64
    }
}

/// Driving noise for [`run_sequential_lmc`].
#[derive(Debug, Clone, Copy)]
pub enum LmcNoise<'a> {
    /// Draw a fresh path from this seed.
    Fresh { seed: u64 },
    /// No noise: plain gradient descent.
    Zero,
    Grid(&'a BrownianGrid),
}

/// Sequential LMC, `X_{n+1} = X_n − step·s(X_n) + √2 ΔB_n`.
///
/// Returns all `steps + 1` iterates. Each step is one round of one
/// evaluation.
pub fn run_sequential_lmc(
    x0: &[f64],
    oracle: &ScoreOracle,
    step: f64,
    steps: usize,
    noise: LmcNoise<'_>,
) -> Result<Vec<Vec<f64>>> {
    let d = oracle.dim();
    if x0.len() != d {
        return Err(Error::InvalidInput("x0 has wrong dimension".into()));
    }
    if !(step >= 0.0 && step.is_finite()) {
        return Err(Error::InvalidInput(format!("step must be >= 0, got {step}")));
    }
    let fresh;
    let grid = match noise {
        LmcNoise::Zero => None,
        LmcNoise::Fresh { seed } => {
            if step == 0.0 || steps == 0 {
                None
            } else {
                fresh = sample_brownian_grid(steps, step * steps as f64, d, seed)?;
                Some(&fresh)
            }
        }
        LmcNoise::Grid(g) => {
            let matches = g.dim() == d
                && g.substeps() >= steps
                && (g.step() - step).abs() <= 1e-12 * step.max(f64::MIN_POSITIVE);
            if !matches {
                return Err(Error::InvalidInput(format!(
                    "noise grid (M={}, u={}, d={}) does not match step={step}, steps={steps}, d={d}",
                    g.substeps(),
                    g.step(),
                    g.dim()
                )));
            }
            Some(g)
        }
    };
    let mut traj = Vec::with_capacity(steps + 1);
    let mut x = x0.to_vec();
    let mut s = vec![0.0; d];
    traj.push(x.clone());
    for n in 0..steps {
        oracle.evaluate(&x, &mut s)?;
        for (i, xi) in x.iter_mut().enumerate() {
            let db = grid.map_or(0.0, |g| g.value(n + 1)[i] - g.value(n)[i]);
            *xi += -step * s[i] + SQRT_2 * db;
        }
        traj.push(x.clone());
    }
    Ok(traj)
}

/// Result of Picard iteration over one outer step.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardRun {
    /// `X^K_0, …, X^K_M`.
    pub grid: Vec<Vec<f64>>,
    /// `residuals[k-1] = max_m ‖X^k_m − X^{k-1}_m‖²`, `k = 1..=K`.
    pub residuals: Vec<f64>,
}

impl PicardRun {
    pub fn endpoint(&self) -> &[f64] {
        self.grid.last().expect("grid has M+1 points")
    }
}

fn check_grid(grid: &BrownianGrid, h: f64, substeps: usize, d: usize) -> Result<()> {
    let u = h / substeps as f64;
    if grid.substeps() != substeps || grid.dim() != d || (grid.step() - u).abs() > 1e-12 * u {
        return Err(Error::InvalidInput(format!(
            "noise grid (M={}, u={}, d={}) does not match M={substeps}, h/M={u}, d={d}",
            grid.substeps(),
            grid.step(),
            grid.dim()
        )));
    }
    Ok(())
}

/// Picard iteration for one outer step of one chain.
pub fn picard_inner_lmc(
    x_start: &[f64],
    oracle: &ScoreOracle,
    h: f64,
    substeps: usize,
    depth: usize,
    noise: &BrownianGrid,
) -> Result<PicardRun> {
    let d = oracle.dim();
    if x_start.len() != d {
        return Err(Error::InvalidInput("x_start has wrong dimension".into()));
    }
    if depth == 0 || substeps == 0 || !(h > 0.0) {
        return Err(Error::InvalidInput("need h > 0, M >= 1 and K >= 1".into()));
    }
    check_grid(noise, h, substeps, d)?;
    let mut state = x_start.to_vec();
    let mut grid = vec![0.0; (substeps + 1) * d];
    let residuals = picard_chains(
        oracle,
        h,
        substeps,
        depth,
        &mut state,
        std::slice::from_ref(noise),
        Some(&mut grid),
    )?;
    Ok(PicardRun {
        grid: grid.chunks_exact(d).map(<[f64]>::to_vec).collect(),
        residuals,
    })
}

/// Advances every chain in `states` (`R × d`, row-major) by one outer step.
///
/// Returns the replica-averaged residual of each iteration. If `keep_grid`
/// is given (single chain only) it receives the final trajectory.
fn picard_chains(
    oracle: &ScoreOracle,
    h: f64,
    substeps: usize,
    depth: usize,
    states: &mut [f64],
    noise: &[BrownianGrid],
    keep_grid: Option<&mut Vec<f64>>,
) -> Result<Vec<f64>> {
    let d = oracle.dim();
    let replicas = noise.len();
    let stride = (substeps + 1) * d;
    let span = substeps * d;
    let u = h / substeps as f64;

    let mut grid = vec![0.0; replicas * stride];
    for (g, x) in grid.chunks_exact_mut(stride).zip(states.chunks_exact(d)) {
        for p in g.chunks_exact_mut(d) {
            p.copy_from_slice(x);
        }
    }
    let mut queries = vec![0.0; replicas * span];
    let mut scores = vec![0.0; replicas * span];
    let mut worst = vec![0.0; replicas];
    let mut residuals = Vec::with_capacity(depth);
    let parallel = replicas >= PARALLEL_REPLICA_THRESHOLD;

    for _ in 0..depth {
        for (q, g) in queries.chunks_exact_mut(span).zip(grid.chunks_exact(stride)) {
            q.copy_from_slice(&g[..span]);
        }
        oracle.evaluate_chains(replicas, &queries, &mut scores)?;

        let update = |(r, (g, res)): (usize, (&mut [f64], &mut f64))| {
            let x0 = &states[r * d..(r + 1) * d];
            let s = &scores[r * span..(r + 1) * span];
            let w = noise[r].values();
            let mut acc = vec![0.0; d];
            let mut max = 0.0f64;
            for m in 1..=substeps {
                for i in 0..d {
                    acc[i] += s[(m - 1) * d + i];
                }
                let mut dist = 0.0;
                for i in 0..d {
                    let new = x0[i] - u * acc[i] + SQRT_2 * w[m * d + i];
                    let diff = new - g[m * d + i];
                    dist += diff * diff;
                    g[m * d + i] = new;
                }
                max = max.max(dist);
            }
            *res = max;
        };
        if parallel {
            grid.par_chunks_exact_mut(stride)
                .zip(worst.par_iter_mut())
                .enumerate()
                .for_each(update);
        } else {
            grid.chunks_exact_mut(stride)
                .zip(worst.iter_mut())
                .enumerate()
                .for_each(update);
        }
        // fixed-order reduction
        residuals.push(worst.iter().sum::<f64>() / replicas as f64);
    }

    for (x, g) in states.chunks_exact_mut(d).zip(grid.chunks_exact(stride)) {
        x.copy_from_slice(&g[substeps * d..]);
    }
    if let Some(out) = keep_grid {
        out.copy_from_slice(&grid[..stride]);
    }
    Ok(residuals)
}

/// Seed of the Brownian grid of replica `r` in outer step `n`.
pub fn brownian_seed(seed: u64, step: usize, replica: usize) -> u64 {
    derive_seed(seed, &[tag::BROWNIAN, step as u64, replica as u64])
}

pub(crate) fn check_run_preconditions(
    target: &TargetModel,
    oracle: &ScoreOracle,
    origin: &ScheduleOrigin,
    h: f64,
    delta: f64,
    n_samples: usize,
) -> Result<()> {
    if oracle.dim() != target.dim() {
        return Err(Error::InvalidInput("oracle and target dimensions differ".into()));
    }
    if n_samples == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    match origin {
        ScheduleOrigin::Override { acknowledged: false } => {
            return Err(Error::ScheduleViolation(
                "schedule was overridden without acknowledgment".into(),
            ))
        }
        ScheduleOrigin::Planner if target.beta() * h > MAX_BETA_H * (1.0 + 1e-12) => {
            return Err(Error::ScheduleViolation(format!(
                "planner schedule has beta*h = {} > {MAX_BETA_H} for this target",
                target.beta() * h
            )))
        }
        _ => {}
    }
    if oracle.delta() > delta * (1.0 + 1e-12) + 1e-15 {
        return Err(Error::ScheduleViolation(format!(
            "oracle accuracy {} exceeds the schedule's tolerance {delta}",
            oracle.delta()
        )));
    }
    Ok(())
}

/// Parallel LMC over `n_samples` independent replicas.
///
/// All replicas advance in lockstep; each Picard iteration is one batch of
/// `replicas × M` points, charged as one round of `M` evaluations.
pub fn run_parallel_lmc(
    target: &TargetModel,
    oracle: &ScoreOracle,
    schedule: &GridSchedule,
    init: &Initialization,
    n_samples: usize,
    seed: u64,
) -> Result<ParallelRun> {
    check_run_preconditions(target, oracle, &schedule.origin, schedule.h, schedule.delta, n_samples)?;
    init.validate(target)?;
    let d = target.dim();
    let oracle = oracle.with_fresh_ledger();

    let mut states = vec![0.0; n_samples * d];
    for (r, x) in states.chunks_exact_mut(d).enumerate() {
        init.draw(target, &mut stream(seed, &[tag::INIT, r as u64]), x);
    }

    let sample_grid = |n: usize, r: usize| {
        sample_brownian_grid(schedule.substeps, schedule.h, d, brownian_seed(seed, n, r))
    };
    let mut residuals = Vec::with_capacity(schedule.outer_steps);
    for n in 0..schedule.outer_steps {
        let noise: Vec<BrownianGrid> = if n_samples >= PARALLEL_REPLICA_THRESHOLD {
            (0..n_samples)
                .into_par_iter()
                .map(|r| sample_grid(n, r))
                .collect::<Result<_>>()?
        } else {
            (0..n_samples).map(|r| sample_grid(n, r)).collect::<Result<_>>()?
        };
        residuals.push(picard_chains(
            &oracle,
            schedule.h,
            schedule.substeps,
            schedule.depth,
            &mut states,
            &noise,
            None,
        )?);
    }

    Ok(ParallelRun {
        samples: states.chunks_exact(d).map(<[f64]>::to_vec).collect(),
        ledger: oracle.ledger().counts(),
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{make_gaussian_target, LedgerCounts};
    use approx::assert_abs_diff_eq;

    fn standard_1d() -> TargetModel {
        make_gaussian_target(&[0.0], &[1.0]).unwrap()
    }

    #[test]
    fn planner_reference_schedule() {
        // κ = 4, d = 10, ε = 0.3: κd/ε² = 444.4.., 7·444.4.. = 3111.1..
        let s = plan_lmc_params(1.0, 4.0, 10, 0.3, InitialKl::Default).unwrap();
        assert_abs_diff_eq!(s.h, 0.025, epsilon = 1e-15);
        assert_abs_diff_eq!(s.delta, 0.6, epsilon = 1e-15);
        assert_eq!(s.substeps, 3112);
        assert_eq!(s.depth, 25);
        assert_eq!(s.outer_steps, 202);
        assert_eq!(s.origin, ScheduleOrigin::Planner);
        assert_eq!(s.rounds(), 5050);
        assert_eq!(s.evaluations(), 15_715_600);
    }

    #[test]
    fn planner_guards_unit_condition_number() {
        let s = plan_lmc_params(1.0, 1.0, 3, 0.5, InitialKl::Default).unwrap();
        // ln(max{0, e}/0.25) = 1 + ln 4
        assert_eq!(s.outer_steps, (10.0 * (1.0 + 4f64.ln())).ceil() as usize);
    }

    #[test]
    fn planner_scales_substeps_with_inverse_epsilon_squared() {
        let a = plan_lmc_params(1.0, 4.0, 10, 0.3, InitialKl::Default).unwrap();
        let b = plan_lmc_params(1.0, 4.0, 10, 0.15, InitialKl::Default).unwrap();
        assert!(b.substeps <= 4 * a.substeps && b.substeps + 3 >= 4 * a.substeps);
    }

    #[test]
    fn planner_explicit_initial_kl() {
        let s = plan_lmc_params(0.5, 1.0, 2, 0.1, InitialKl::Bound(3.0)).unwrap();
        let expected = (600f64).ln() / (0.5 * 0.1);
        assert_eq!(s.outer_steps, expected.ceil() as usize);
        let s = plan_lmc_params(0.5, 1.0, 2, 0.1, InitialKl::Bound(0.0)).unwrap();
        assert_eq!(s.outer_steps, 1);
    }

    #[test]
    fn planner_rejects_bad_parameters() {
        assert!(matches!(
            plan_lmc_params(1.0, 4.0, 10, 1.0, InitialKl::Default),
            Err(Error::InvalidParameter(_))
        ));
        assert!(plan_lmc_params(0.0, 4.0, 10, 0.3, InitialKl::Default).is_err());
        assert!(plan_lmc_params(2.0, 1.0, 10, 0.3, InitialKl::Default).is_err());
        assert!(plan_lmc_params(1.0, 1.0, 0, 0.3, InitialKl::Default).is_err());
    }

    #[test]
    fn sequential_two_steps_by_hand() {
        let t = standard_1d();
        let traj = run_sequential_lmc(&[1.0], &t.exact_oracle(), 0.05, 2, LmcNoise::Zero).unwrap();
        assert_abs_diff_eq!(traj[2][0], 0.9025, epsilon = 1e-15);
    }

    #[test]
    fn sequential_zero_step_is_identity() {
        let t = make_gaussian_target(&[1.0, -2.0], &[3.0, 5.0]).unwrap();
        let o = t.exact_oracle();
        let traj = run_sequential_lmc(&[0.3, 0.4], &o, 0.0, 7, LmcNoise::Fresh { seed: 1 }).unwrap();
        assert_eq!(traj.last().unwrap(), &vec![0.3, 0.4]);
        assert_eq!(o.ledger().counts(), LedgerCounts { rounds: 7, evaluations: 7 });
    }

    #[test]
    fn sequential_rejects_mismatched_grid() {
        let t = standard_1d();
        let g = sample_brownian_grid(4, 1.0, 1, 0).unwrap();
        let o = t.exact_oracle();
        assert!(matches!(
            run_sequential_lmc(&[0.0], &o, 0.5, 2, LmcNoise::Grid(&g)),
            Err(Error::InvalidInput(_))
        ));
        assert!(run_sequential_lmc(&[0.0], &o, 0.25, 5, LmcNoise::Grid(&g)).is_err());
        assert!(run_sequential_lmc(&[0.0], &o, 0.25, 4, LmcNoise::Grid(&g)).is_ok());
    }

    #[test]
    fn picard_two_iterations_by_hand() {
        let t = standard_1d();
        let zero = BrownianGrid::zero(2, 0.1, 1).unwrap();
        let o = t.exact_oracle();
        let one = picard_inner_lmc(&[1.0], &o, 0.1, 2, 1, &zero).unwrap();
        let g: Vec<f64> = one.grid.iter().map(|p| p[0]).collect();
        assert_abs_diff_eq!(g[0], 1.0);
        assert_abs_diff_eq!(g[1], 0.95, epsilon = 1e-15);
        assert_abs_diff_eq!(g[2], 0.9, epsilon = 1e-15);
        let two = picard_inner_lmc(&[1.0], &o, 0.1, 2, 2, &zero).unwrap();
        let g: Vec<f64> = two.grid.iter().map(|p| p[0]).collect();
        assert_abs_diff_eq!(g[1], 0.95, epsilon = 1e-15);
        assert_abs_diff_eq!(g[2], 0.9025, epsilon = 1e-15);
        // one round of M = 2 evaluations per iteration
        assert_eq!(o.ledger().counts(), LedgerCounts { rounds: 3, evaluations: 6 });
    }

    #[test]
    fn single_substep_is_exact_after_one_iteration() {
        let t = make_gaussian_target(&[0.0, 0.0], &[1.0, 4.0]).unwrap();
        let g = sample_brownian_grid(1, 0.025, 2, 9).unwrap();
        let run = picard_inner_lmc(&[1.0, -1.0], &t.exact_oracle(), 0.025, 1, 5, &g).unwrap();
        assert!(run.residuals[1..].iter().all(|&r| r == 0.0));
    }

    #[test]
    fn picard_reaches_sequential_fixed_point() {
        let t = make_gaussian_target(&[0.5, -0.5], &[1.0, 4.0]).unwrap();
        let (h, m) = (0.025, 16);
        for seed in 0..8 {
            let g = sample_brownian_grid(m, h, 2, seed).unwrap();
            let x0 = [1.0, 2.0];
            let par = picard_inner_lmc(&x0, &t.exact_oracle(), h, m, m, &g).unwrap();
            let seq =
                run_sequential_lmc(&x0, &t.exact_oracle(), h / m as f64, m, LmcNoise::Grid(&g))
                    .unwrap();
            for (a, b) in par.grid.iter().zip(&seq) {
                for (x, y) in a.iter().zip(b) {
                    assert_abs_diff_eq!(x, y, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn run_requires_acknowledged_override() {
        let t = make_gaussian_target(&[0.0, 0.0], &[1.0, 4.0]).unwrap();
        let plan = plan_lmc_params(1.0, 4.0, 2, 0.3, InitialKl::Default).unwrap();
        let caps = ScheduleOverrides {
            max_substeps: Some(8),
            max_outer_steps: Some(3),
            ..Default::default()
        };
        let capped = plan.with_overrides(&caps).unwrap();
        let o = t.exact_oracle();
        let err = run_parallel_lmc(&t, &o, &capped, &Initialization::TargetDefault, 4, 0);
        assert!(matches!(err, Err(Error::ScheduleViolation(_))));
        let run = run_parallel_lmc(&t, &o, &capped.acknowledge(), &Initialization::TargetDefault, 4, 0)
            .unwrap();
        assert_eq!(run.ledger.rounds, 3 * plan.depth as u64);
        assert_eq!(run.ledger.evaluations, 3 * plan.depth as u64 * 8);
        assert_eq!(run.samples.len(), 4);
        assert_eq!(run.residuals.len(), 3);
    }

    #[test]
    fn run_rejects_too_inaccurate_oracle() {
        let t = make_gaussian_target(&[0.0, 0.0], &[1.0, 4.0]).unwrap();
        let plan = plan_lmc_params(1.0, 4.0, 2, 0.3, InitialKl::Default).unwrap();
        let loose = crate::score::perturb_score(&t.exact_oracle(), 0.7, 1).unwrap();
        let r = run_parallel_lmc(&t, &loose, &plan, &Initialization::TargetDefault, 1, 0);
        assert!(matches!(r, Err(Error::ScheduleViolation(_))));
    }

    #[test]
    fn replicated_run_matches_single_chain_picard() {
        // replica r of a replicated run is the single-chain algorithm driven
        // by the same derived seeds
        let t = make_gaussian_target(&[0.0, 0.0], &[1.0, 4.0]).unwrap();
        let sched = GridSchedule {
            h: 0.025,
            substeps: 4,
            depth: 3,
            outer_steps: 5,
            delta: 0.0,
            epsilon: 0.3,
            origin: ScheduleOrigin::Planner,
        };
        let init = Initialization::Point(vec![1.0, 1.0]);
        let run = run_parallel_lmc(&t, &t.exact_oracle(), &sched, &init, 3, 77).unwrap();
        for r in 0..3 {
            let mut x = vec![1.0, 1.0];
            for n in 0..5 {
                let g = sample_brownian_grid(4, 0.025, 2, brownian_seed(77, n, r)).unwrap();
                x = picard_inner_lmc(&x, &t.exact_oracle(), 0.025, 4, 3, &g)
                    .unwrap()
                    .endpoint()
                    .to_vec();
            }
            assert_eq!(x, run.samples[r]);
        }
    }
}
