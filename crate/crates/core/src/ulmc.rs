//! Underdamped (kinetic) Langevin Monte Carlo with the exponential Euler
//! integrator, sequential and Picard-parallel.
//!
//! Over a substep of length `u` with the score frozen at the left endpoint,
//! the linear part of
//!
//! ```text
//! dX = P dt,   dP = −s(X) dt − γ P dt + √(2γ) dB
//! ```
//!
//! integrates exactly to the affine update
//!
//! ```text
//! X' = X + ((1 − e^{−γu})/γ) P − ((u − (1 − e^{−γu})/γ)/γ) s(X) + ξ^X
//! P' = e^{−γu} P − ((1 − e^{−γu})/γ) s(X) + ξ^P
//! ```
//!
//! with `(ξ^X, ξ^P)` drawn from [`crate::noise::ulmc_noise_covariance`].

use std::f64::consts::E;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lmc::{ceil_tol, check_run_preconditions, validate_accuracy};
use crate::noise::{sample_ulmc_noise_grid, UlmcNoiseGrid};
use crate::rng::{derive_seed, stream, tag};
use crate::schedule::{
    Initialization, ParallelRun, ScheduleOrigin, ScheduleOverrides, PARALLEL_REPLICA_THRESHOLD,
};
use crate::score::{ScoreOracle, TargetModel};

/// Position and momentum of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhasePoint {
    pub fn new(x: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if x.len() != p.len() || x.is_empty() {
            return Err(Error::InvalidInput(
                "position and momentum must have equal positive dimension".into(),
            ));
        }
        Ok(Self { x, p })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// Coefficients of the exponential Euler substep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpEulerCoefficients {
    /// `e^{−γu}`
    pub decay: f64,
    /// `(1 − e^{−γu})/γ`
    pub drift: f64,
    /// `(u − (1 − e^{−γu})/γ)/γ`
    pub force: f64,
}

impl ExpEulerCoefficients {
    pub fn new(gamma: f64, u: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) || !(u >= 0.0 && u.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need gamma > 0 and u >= 0, got gamma={gamma} u={u}"
            )));
        }
        let a = gamma * u;
        Ok(Self {
            decay: (-a).exp(),
            drift: -(-a).exp_m1() / gamma,
            force: a_minus_one_minus_exp(a) / (gamma * gamma),
        })
    }
}

/// `a − (1 − e^{−a})` without cancellation for small `a`.
fn a_minus_one_minus_exp(a: f64) -> f64 {
    if a < 0.5 {
        // Σ_{k≥2} (−a)^k / k!
        let mut term = -a;
        let mut sum = 0.0;
        for k in 2..60 {
            term *= -a / k as f64;
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        a + (-a).exp_m1()
    }
}

/// Tunable constants in front of the orders the analysis fixes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UlmcConstants {
    pub c_h: f64,
    pub c_delta: f64,
    pub c_m: f64,
    pub c_k: f64,
    pub c_n: f64,
}

impl Default for UlmcConstants {
    fn default() -> Self {
        Self {
            c_h: 0.1,
            c_delta: 0.5,
            c_m: 4.0,
            c_k: 4.0,
            c_n: 4.0,
        }
    }
}

/// Parameters of a parallel ULMC run.
#[derive(Debug, Clone, PartialEq)]
pub struct UlmcSchedule {
    pub h: f64,
    pub substeps: usize,
    pub depth: usize,
    pub outer_steps: usize,
    pub delta: f64,
    pub epsilon: f64,
    /// Friction `γ`.
    pub gamma: f64,
    pub constants: UlmcConstants,
    pub origin: ScheduleOrigin,
}

/// Plans an `ε`-in-TV ULMC run. Only the orders are fixed by the analysis;
/// the leading constants come from `constants`:
///
/// ```text
/// h = c_h/√β                    γ = √(8β)
/// δ = c_δ √α ε / √ln(d+2)
/// M = ⌈c_M √(κd) ln(κd/ε² + e) / ε⌉
/// K = ⌈c_K ln(κd/ε² + e)⌉
/// N = ⌈c_N κ ln(d/ε² + e) ln(d+2)⌉
/// ```
pub fn plan_ulmc_params(
    alpha: f64,
    beta: f64,
    d: usize,
    epsilon: f64,
    constants: UlmcConstants,
) -> Result<UlmcSchedule> {
    validate_accuracy(alpha, beta, d, epsilon)?;
    let c = constants;
    if [c.c_h, c.c_delta, c.c_m, c.c_k, c.c_n]
        .iter()
        .any(|v| !(*v > 0.0 && v.is_finite()))
    {
        return Err(Error::InvalidParameter(format!("planner constants must be positive: {c:?}")));
    }
    let kappa = beta / alpha;
    let df = d as f64;
    let eps2 = epsilon * epsilon;
    let log_kd = (kappa * df / eps2 + E).ln();
    Ok(UlmcSchedule {
        h: c.c_h / beta.sqrt(),
        substeps: ceil_tol(c.c_m * (kappa * df).sqrt() * log_kd / epsilon),
        depth: ceil_tol(c.c_k * log_kd),
        outer_steps: ceil_tol(c.c_n * kappa * (df / eps2 + E).ln() * (df + 2.0).ln()),
        delta: c.c_delta * alpha.sqrt() * epsilon / (df + 2.0).ln().sqrt(),
        epsilon,
        gamma: (8.0 * beta).sqrt(),
        constants,
        origin: ScheduleOrigin::Planner,
    })
}

impl UlmcSchedule {
    pub fn with_overrides(&self, overrides: &ScheduleOverrides) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut s = self.clone();
        overrides.apply(&mut s.h, &mut s.substeps, &mut s.depth, &mut s.outer_steps, &mut s.delta)?;
        s.origin = ScheduleOrigin::Override { acknowledged: false };
        Ok(s)
    }

    pub fn acknowledge(mut self) -> Self {
        if let ScheduleOrigin::Override { .. } = self.origin {
            self.origin = ScheduleOrigin::Override { acknowledged: true };
        }
        self
    }

    pub fn rounds(&self) -> u64 {
        (self.outer_steps * self.depth) as u64
    }

    pub fn evaluations(&self) -> u64 {
        self.rounds() * self.substeps as u64
    }
}

/// Driving noise for [`run_sequential_ulmc`].
#[derive(Debug, Clone, Copy)]
pub enum UlmcNoise<'a> {
    Fresh { seed: u64 },
    Zero,
    Grid(&'a UlmcNoiseGrid),
}

/// Sequential exponential Euler ULMC. Returns all `steps + 1` phase points.
pub fn run_sequential_ulmc(
    start: &PhasePoint,
    oracle: &ScoreOracle,
    gamma: f64,
    step: f64,
    steps: usize,
    noise: UlmcNoise<'_>,
) -> Result<Vec<PhasePoint>> {
    let d = oracle.dim();
    if start.dim() != d || start.p.len() != d {
        return Err(Error::InvalidInput("start has wrong dimension".into()));
    }
    let coef = ExpEulerCoefficients::new(gamma, step)?;
    let fresh;
    let grid = match noise {
        UlmcNoise::Zero => None,
        UlmcNoise::Fresh { seed } => {
            if step == 0.0 || steps == 0 {
                None
            } else {
                fresh = sample_ulmc_noise_grid(steps, gamma, step * steps as f64, d, seed)?;
                Some(&fresh)
            }
        }
        UlmcNoise::Grid(g) => {
            let matches = g.dim() == d
                && g.substeps() >= steps
                && (g.step() - step).abs() <= 1e-12 * step.max(f64::MIN_POSITIVE)
                && (g.gamma() - gamma).abs() <= 1e-12 * gamma;
            if !matches {
                return Err(Error::InvalidInput(format!(
                    "noise grid (M={}, u={}, gamma={}) does not match step={step}, steps={steps}, gamma={gamma}",
                    g.substeps(),
                    g.step(),
                    g.gamma()
                )));
            }
            Some(g)
        }
    };
    let mut traj = Vec::with_capacity(steps + 1);
    let mut x = start.x.clone();
    let mut p = start.p.clone();
    let mut s = vec![0.0; d];
    traj.push(PhasePoint { x: x.clone(), p: p.clone() });
    for n in 0..steps {
        oracle.evaluate(&x, &mut s)?;
        for i in 0..d {
            let (nx, np) = grid.map_or((0.0, 0.0), |g| (g.xi_x(n)[i], g.xi_p(n)[i]));
            x[i] = x[i] + coef.drift * p[i] - coef.force * s[i] + nx;
            p[i] = coef.decay * p[i] - coef.drift * s[i] + np;
        }
        traj.push(PhasePoint { x: x.clone(), p: p.clone() });
    }
    Ok(traj)
}

/// Result of Picard iteration over one outer step of ULMC.
#[derive(Debug, Clone, PartialEq)]
pub struct UlmcPicardRun {
    /// `(X^K_m, P^K_m)` for `m = 0..=M`.
    pub grid: Vec<PhasePoint>,
    /// `residuals[k-1] = max_m ‖X^k_m − X^{k-1}_m‖²`.
    pub residuals: Vec<f64>,
}

impl UlmcPicardRun {
    pub fn endpoint(&self) -> &PhasePoint {
        self.grid.last().expect("grid has M+1 points")
    }
}

/// Picard iteration for one outer step of one ULMC chain.
pub fn picard_inner_ulmc(
    start: &PhasePoint,
    oracle: &ScoreOracle,
    h: f64,
    substeps: usize,
    depth: usize,
    gamma: f64,
    noise: &UlmcNoiseGrid,
) -> Result<UlmcPicardRun> {
    let d = oracle.dim();
    if start.dim() != d || start.p.len() != d {
        return Err(Error::InvalidInput("start has wrong dimension".into()));
    }
    if depth == 0 || substeps == 0 || !(h > 0.0) {
        return Err(Error::InvalidInput("need h > 0, M >= 1 and K >= 1".into()));
    }
    check_noise(noise, h, substeps, gamma, d)?;
    let mut xs = start.x.clone();
    let mut ps = start.p.clone();
    let mut xg = vec![0.0; (substeps + 1) * d];
    let mut pg = vec![0.0; (substeps + 1) * d];
    let residuals = picard_chains(
        oracle,
        h,
        substeps,
        depth,
        gamma,
        &mut xs,
        &mut ps,
        std::slice::from_ref(noise),
        Some((&mut xg, &mut pg)),
    )?;
    let grid = xg
        .chunks_exact(d)
        .zip(pg.chunks_exact(d))
        .map(|(x, p)| PhasePoint { x: x.to_vec(), p: p.to_vec() })
        .collect();
    Ok(UlmcPicardRun { grid, residuals })
}

fn check_noise(noise: &UlmcNoiseGrid, h: f64, substeps: usize, gamma: f64, d: usize) -> Result<()> {
    let u = h / substeps as f64;
    if noise.substeps() != substeps
        || noise.dim() != d
        || (noise.step() - u).abs() > 1e-12 * u
        || (noise.gamma() - gamma).abs() > 1e-12 * gamma
    {
        return Err(Error::InvalidInput(format!(
            "noise grid (M={}, u={}, gamma={}) does not match M={substeps}, h/M={u}, gamma={gamma}",
            noise.substeps(),
            noise.step(),
            noise.gamma()
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn picard_chains(
    oracle: &ScoreOracle,
    h: f64,
    substeps: usize,
    depth: usize,
    gamma: f64,
    xs: &mut [f64],
    ps: &mut [f64],
    noise: &[UlmcNoiseGrid],
    keep_grid: Option<(&mut Vec<f64>, &mut Vec<f64>)>,
) -> Result<Vec<f64>> {
    let d = oracle.dim();
    let replicas = noise.len();
    let stride = (substeps + 1) * d;
    let span = substeps * d;
    let coef = ExpEulerCoefficients::new(gamma, h / substeps as f64)?;

    let mut xgrid = vec![0.0; replicas * stride];
    for (g, x) in xgrid.chunks_exact_mut(stride).zip(xs.chunks_exact(d)) {
        for q in g.chunks_exact_mut(d) {
            q.copy_from_slice(x);
        }
    }
    // momentum is only needed along the current sweep, except when the
    // caller wants the full trajectory
    let keep = keep_grid.is_some();
    let mut pgrid = vec![0.0; if keep { stride } else { 0 }];
    let mut pend = ps.to_vec();
    let mut queries = vec![0.0; replicas * span];
    let mut scores = vec![0.0; replicas * span];
    let mut worst = vec![0.0; replicas];
    let mut residuals = Vec::with_capacity(depth);
    let parallel = replicas >= PARALLEL_REPLICA_THRESHOLD;

    for _ in 0..depth {
        for (q, g) in queries.chunks_exact_mut(span).zip(xgrid.chunks_exact(stride)) {
            q.copy_from_slice(&g[..span]);
        }
        oracle.evaluate_chains(replicas, &queries, &mut scores)?;

        let sweep = |r: usize, g: &mut [f64], pe: &mut [f64], mut ptraj: Option<&mut [f64]>| -> f64 {
            let s = &scores[r * span..(r + 1) * span];
            let nz = &noise[r];
            let mut x = xs[r * d..(r + 1) * d].to_vec();
            let mut p = ps[r * d..(r + 1) * d].to_vec();
            if let Some(t) = ptraj.as_deref_mut() {
                t[..d].copy_from_slice(&p);
            }
            let mut max = 0.0f64;
            for m in 0..substeps {
                let (xi_x, xi_p) = (nz.xi_x(m), nz.xi_p(m));
                let mut dist = 0.0;
                for i in 0..d {
                    let si = s[m * d + i];
                    x[i] = x[i] + coef.drift * p[i] - coef.force * si + xi_x[i];
                    p[i] = coef.decay * p[i] - coef.drift * si + xi_p[i];
                    let slot = &mut g[(m + 1) * d + i];
                    let diff = x[i] - *slot;
                    dist += diff * diff;
                    *slot = x[i];
                }
                if let Some(t) = ptraj.as_deref_mut() {
                    t[(m + 1) * d..(m + 2) * d].copy_from_slice(&p);
                }
                max = max.max(dist);
            }
            pe.copy_from_slice(&p);
            max
        };

        if keep {
            worst[0] = sweep(0, &mut xgrid, &mut pend, Some(&mut pgrid));
        } else if parallel {
            xgrid
                .par_chunks_exact_mut(stride)
                .zip(pend.par_chunks_exact_mut(d))
                .zip(worst.par_iter_mut())
                .enumerate()
                .for_each(|(r, ((g, pe), res))| *res = sweep(r, g, pe, None));
        } else {
            xgrid
                .chunks_exact_mut(stride)
                .zip(pend.chunks_exact_mut(d))
                .zip(worst.iter_mut())
                .enumerate()
                .for_each(|(r, ((g, pe), res))| *res = sweep(r, g, pe, None));
        }
        residuals.push(worst.iter().sum::<f64>() / replicas as f64);
    }

    for (x, g) in xs.chunks_exact_mut(d).zip(xgrid.chunks_exact(stride)) {
        x.copy_from_slice(&g[substeps * d..]);
    }
    ps.copy_from_slice(&pend);
    if let Some((xo, po)) = keep_grid {
        xo.copy_from_slice(&xgrid[..stride]);
        po.copy_from_slice(&pgrid);
    }
    Ok(residuals)
}

/// Seed of the noise grid of replica `r` in outer step `n`.
pub fn ulmc_noise_seed(seed: u64, step: usize, replica: usize) -> u64 {
    derive_seed(seed, &[tag::ULMC_NOISE, step as u64, replica as u64])
}

/// Parallel ULMC over `n_samples` replicas. Positions start from `init`,
/// momenta from `N(0, I)`; only final positions are returned.
pub fn run_parallel_ulmc(
    target: &TargetModel,
    oracle: &ScoreOracle,
    schedule: &UlmcSchedule,
    init: &Initialization,
    n_samples: usize,
    seed: u64,
) -> Result<ParallelRun> {
    check_run_preconditions(target, oracle, &schedule.origin, 0.0, schedule.delta, n_samples)?;
    if let ScheduleOrigin::Planner = schedule.origin {
        let expected = (8.0 * target.beta()).sqrt();
        if (schedule.gamma - expected).abs() > 1e-12 * expected {
            return Err(Error::ScheduleViolation(format!(
                "planner friction {} does not match sqrt(8 beta) = {expected}",
                schedule.gamma
            )));
        }
    }
    init.validate(target)?;
    let d = target.dim();
    let oracle = oracle.with_fresh_ledger();

    let mut xs = vec![0.0; n_samples * d];
    let mut ps = vec![0.0; n_samples * d];
    for (r, (x, p)) in xs.chunks_exact_mut(d).zip(ps.chunks_exact_mut(d)).enumerate() {
        init.draw(target, &mut stream(seed, &[tag::INIT, r as u64]), x);
        let mut rng = stream(seed, &[tag::MOMENTUM_INIT, r as u64]);
        p.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
    }

    let sample_grid = |n: usize, r: usize| {
        sample_ulmc_noise_grid(
            schedule.substeps,
            schedule.gamma,
            schedule.h,
            d,
            ulmc_noise_seed(seed, n, r),
        )
    };
    let mut residuals = Vec::with_capacity(schedule.outer_steps);
    for n in 0..schedule.outer_steps {
        let noise: Vec<UlmcNoiseGrid> = if n_samples >= PARALLEL_REPLICA_THRESHOLD {
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
            schedule.gamma,
            &mut xs,
            &mut ps,
            &noise,
            None,
        )?);
    }

    Ok(ParallelRun {
        samples: xs.chunks_exact(d).map(<[f64]>::to_vec).collect(),
        ledger: oracle.ledger().counts(),
        residuals,
    })
}
