//! The default `verify` suite: one metrics row per invariant of each
//! library module, all at sizes that finish in seconds.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use parlang::diagnostics::*;
use parlang::discrete::*;
use parlang::lmc::{picard_inner_lmc, LmcNoise};
use parlang::noise::*;
use parlang::rng::derive_seed;
use parlang::score::{make_gaussian_mixture_target, make_gaussian_target, ScoreField};
use parlang::ulmc::{picard_inner_ulmc, ExpEulerCoefficients, PhasePoint, UlmcNoise};
use parlang::*;

use crate::report::{Bound, MetricRow};

pub fn run(seed: u64) -> anyhow::Result<Vec<MetricRow>> {
    let mut rows = Vec::new();
    score_checks(seed, &mut rows)?;
    noise_checks(seed, &mut rows)?;
    lmc_checks(seed, &mut rows)?;
    ulmc_checks(seed, &mut rows)?;
    discrete_checks(seed, &mut rows)?;
    diagnostics_checks(seed, &mut rows)?;
    Ok(rows)
}

fn rng(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x5e1f, tag]))
}

fn uniform_vec(rng: &mut ChaCha8Rng, d: usize, r: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-r..r)).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn gaussian_2d() -> TargetModel {
    make_gaussian_target(&[0.0, 0.0], &[1.0, 4.0]).expect("valid")
}

fn builtin_targets() -> parlang::Result<Vec<TargetModel>> {
    Ok(vec![
        gaussian_2d(),
        make_gaussian_target(&[1.0, -2.0, 0.5], &[0.5, 2.0, 3.0])?,
        make_gaussian_mixture_target(&[vec![-0.5, 0.0], vec![0.5, 0.3]], 0.6, 1.0)?,
    ])
}

fn score_checks(seed: u64, rows: &mut Vec<MetricRow>) -> anyhow::Result<()> {
    let mut r = rng(seed, 1);
    let mut worst_fd: f64 = 0.0;
    let mut worst_lip: f64 = 0.0;
    for t in builtin_targets()? {
        for _ in 0..100 {
            let x = uniform_vec(&mut r, t.dim(), 3.0);
            let s = t.score(&x);
            for i in 0..t.dim() {
                let h = 1e-5;
                let (mut a, mut b) = (x.clone(), x.clone());
                a[i] += h;
                b[i] -= h;
                let fd = (t.potential(&a) - t.potential(&b)) / (2.0 * h);
                worst_fd = worst_fd.max((fd - s[i]).abs());
            }
            if t.name() == "gaussian" {
                let y = uniform_vec(&mut r, t.dim(), 3.0);
                let ds: Vec<f64> = s.iter().zip(t.score(&y)).map(|(a, b)| a - b).collect();
                let dx: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
                worst_lip = worst_lip.max(norm(&ds) / (t.beta() * norm(&dx)));
            }
        }
    }
    rows.push(MetricRow::new("score", "score.gradient_consistency", "max_fd_error", worst_fd, Bound::AtMost(1e-5)));
    rows.push(MetricRow::new("score", "score.smoothness", "max_lipschitz_ratio", worst_lip, Bound::AtMost(1.0 + 1e-12)));

    let oracle = gaussian_2d().exact_oracle();
    let sizes: Vec<usize> = (0..25).map(|_| r.random_range(1..50)).collect();
    for &b in &sizes {
        oracle.evaluate(&vec![0.1; 2 * b], &mut vec![0.0; 2 * b])?;
    }
    let c = oracle.ledger().counts();
    let mismatch = (c.rounds != sizes.len() as u64) as u64 + (c.evaluations != sizes.iter().sum::<usize>() as u64) as u64;
    rows.push(MetricRow::new("score", "score.ledger_exactness", "ledger_mismatches", mismatch as f64, Bound::Equals(0.0)));
    Ok(())
}

fn noise_checks(seed: u64, rows: &mut Vec<MetricRow>) -> anyhow::Result<()> {
    let mut worst_rel: f64 = 0.0;
    let mut worst_det: f64 = f64::INFINITY;
    for i in 0..200 {
        let gamma = 0.1 + 0.1 * i as f64;
        for u in [0.1 / gamma, 0.5 / gamma, 1.0, 3.0] {
            let s = ulmc_noise_covariance(gamma, u)?;
            let n = NoiseCovariance::naive(gamma, u);
            for (a, b) in [(s.xx, n.xx), (s.xp, n.xp), (s.pp, n.pp)] {
                worst_rel = worst_rel.max((a - b).abs() / b.abs());
            }
        }
        for e in -12..0 {
            let s = ulmc_noise_covariance(gamma, 10f64.powi(e) / gamma)?;
            worst_det = worst_det.min(s.determinant() / (s.xx * s.pp));
        }
    }
    rows.push(MetricRow::new("noise", "noise.covariance_stability", "max_rel_error_vs_naive", worst_rel, Bound::AtMost(1e-10)));
    rows.push(MetricRow::new("noise", "noise.covariance_stability", "min_normalized_determinant", worst_det, Bound::AtLeast(-1e-12)));

    let (m, h, d, reps) = (8usize, 1.0, 2usize, 20_000u64);
    let mut sum = vec![0.0; m + 1];
    let mut sq = vec![0.0; m + 1];
    for k in 0..reps {
        let g = sample_brownian_grid(m, h, d, derive_seed(seed, &[0xb0, k]))?;
        for j in 1..=m {
            for v in g.value(j) {
                sum[j] += v;
                sq[j] += v * v;
            }
        }
    }
    let n = (reps * d as u64) as f64;
    let mut worst_z: f64 = 0.0;
    for j in 1..=m {
        let var = j as f64 * h / m as f64;
        worst_z = worst_z.max((sum[j] / n).abs() / (var / n).sqrt());
        worst_z = worst_z.max((sq[j] / n - var).abs() / (var * (2.0 / n).sqrt()));
    }
    rows.push(MetricRow::new("noise", "noise.brownian_moments", "max_standard_errors", worst_z, Bound::AtMost(4.0)));
    Ok(())
}

fn capped_lmc_run(threads: usize, seed: u64) -> anyhow::Result<ParallelRun> {
    let t = gaussian_2d();
    let s = plan_lmc_params(1.0, 4.0, 2, 0.3, InitialKl::Default)?
        .with_overrides(&ScheduleOverrides { max_substeps: Some(16), max_outer_steps: Some(4), ..Default::default() })?
        .acknowledge();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    Ok(pool.install(|| run_parallel_lmc(&t, &t.exact_oracle(), &s, &Initialization::TargetDefault, 256, seed))?)
}

fn lmc_checks(seed: u64, rows: &mut Vec<MetricRow>) -> anyhow::Result<()> {
    let t = gaussian_2d();
    let oracle = t.exact_oracle();
    let (h, m) = (0.025, 16);
    let mut worst_gap: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    for k in 0..32 {
        let grid = sample_brownian_grid(m, h, 2, derive_seed(seed, &[0x1c, k]))?;
        let x0 = [1.0, -0.5];
        let seq = run_sequential_lmc(&x0, &oracle, h / m as f64, m, LmcNoise::Grid(&grid))?;
        let par = picard_inner_lmc(&x0, &oracle, h, m, m + 1, &grid)?;
        worst_gap = worst_gap.max(max_gap(par.endpoint(), &seq[m]));
        if let Some(r) = residual_ratio_report(&par.residuals).max_ratio {
            worst_ratio = worst_ratio.max(r);
        }
    }
    rows.push(MetricRow::new("lmc", "lmc.fixed_point", "max_endpoint_gap", worst_gap, Bound::AtMost(1e-12)));
    rows.push(MetricRow::new("lmc", "lmc.residual_decay", "max_residual_ratio", worst_ratio, Bound::AtMost(0.1)));

    let a = capped_lmc_run(1, seed)?;
    let b = capped_lmc_run(4, seed)?;
    let differing = a.samples.iter().zip(&b.samples).filter(|(x, y)| x != y).count();
    rows.push(MetricRow::new("lmc", "lmc.determinism", "samples_differing_across_pools", differing as f64, Bound::Equals(0.0)));
    let expected = LedgerCounts { rounds: 4 * 20, evaluations: 4 * 20 * 16 };
    let one = {
        let s = plan_lmc_params(1.0, 4.0, 2, 0.3, InitialKl::Default)?
            .with_overrides(&ScheduleOverrides { max_substeps: Some(16), max_outer_steps: Some(4), ..Default::default() })?
            .acknowledge();
        run_parallel_lmc(&t, &oracle, &s, &Initialization::TargetDefault, 1, seed)?.ledger
    };
    let bad = [a.ledger, one].iter().filter(|l| **l != expected).count();
    rows.push(MetricRow::new("lmc", "lmc.round_accounting", "ledger_mismatches", bad as f64, Bound::Equals(0.0)));
    Ok(())
}

fn ulmc_checks(seed: u64, rows: &mut Vec<MetricRow>) -> anyhow::Result<()> {
    let t = gaussian_2d();
    let oracle = t.exact_oracle();
    let gamma = 32f64.sqrt();
    let (h, m) = (0.025, 16);
    let mut worst_gap: f64 = 0.0;
    for k in 0..32 {
        let grid = sample_ulmc_noise_grid(m, gamma, h, 2, derive_seed(seed, &[0x2c, k]))?;
        let start = PhasePoint::new(vec![1.0, -0.5], vec![0.3, 0.2])?;
        let seq = run_sequential_ulmc(&start, &oracle, gamma, h / m as f64, m, UlmcNoise::Grid(&grid))?;
        let par = picard_inner_ulmc(&start, &oracle, h, m, m + 1, gamma, &grid)?;
        worst_gap = worst_gap.max(max_gap(&par.endpoint().x, &seq[m].x)).max(max_gap(&par.endpoint().p, &seq[m].p));
    }
    rows.push(MetricRow::new("ulmc", "ulmc.fixed_point", "max_endpoint_gap", worst_gap, Bound::AtMost(1e-12)));

    // one free substep: (x, p) ↦ (x + (1 − e^{−γu})/γ · p, e^{−γu} p), here γu = 1
    let zero = ScoreOracle::new(Arc::new(ZeroField), 0.0);
    let start = PhasePoint::new(vec![0.7], vec![-0.4])?;
    let traj = run_sequential_ulmc(&start, &zero, 2.0, 0.5, 1, UlmcNoise::Zero)?;
    let e = (-1.0f64).exp();
    let err = (traj[1].x[0] - (0.7 - 0.4 * (1.0 - e) / 2.0)).abs().max((traj[1].p[0] + 0.4 * e).abs());
    let coef = ExpEulerCoefficients::new(2.0, 0.5)?;
    let err = err.max((coef.decay - 0.36787944117144233).abs()).max((coef.drift - 0.31606027941427883).abs());
    rows.push(MetricRow::new("ulmc", "ulmc.affine_substep", "max_abs_error", err, Bound::AtMost(1e-15)));

    let s = plan_ulmc_params(1.0, 4.0, 2, 0.3, UlmcConstants::default())?;
    let mut increases = 0;
    for k in 0..32 {
        let grid = sample_ulmc_noise_grid(s.substeps, s.gamma, s.h, 2, derive_seed(seed, &[0x2d, k]))?;
        let start = PhasePoint::new(vec![1.0, -1.0], vec![0.5, 0.5])?;
        let run = picard_inner_ulmc(&start, &oracle, s.h, s.substeps, s.depth, s.gamma, &grid)?;
        increases += run.residuals[1..].windows(2).filter(|w| w[1] > w[0] && w[1] >= 1e-24).count();
    }
    rows.push(MetricRow::new("ulmc", "ulmc.residual_monotone", "residual_increases", increases as f64, Bound::Equals(0.0)));

    let std1 = make_gaussian_target(&[0.0], &[1.0])?;
    let start = PhasePoint::new(vec![0.0], vec![0.0])?;
    let traj = run_sequential_ulmc(&start, &std1.exact_oracle(), 2.0, 0.01, 200_000, UlmcNoise::Fresh { seed: derive_seed(seed, &[0x2e]) })?;
    let tail = &traj[20_000..];
    let var = tail.iter().map(|z| z.p[0] * z.p[0]).sum::<f64>() / tail.len() as f64;
    rows.push(MetricRow::new("ulmc", "ulmc.stationarity", "momentum_variance_error", (var - 1.0).abs(), Bound::AtMost(0.08)));
    Ok(())
}

struct ZeroField;

impl ScoreField for ZeroField {
    fn dim(&self) -> usize {
        1
    }

    fn score(&self, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

fn random_distribution(r: &mut ChaCha8Rng, n: usize) -> parlang::Result<HypercubeDistribution> {
    HypercubeDistribution::from_log_weights(n, (0..1 << n).map(|_| r.random_range(-3.0..3.0)).collect())
}

fn discrete_checks(seed: u64, rows: &mut Vec<MetricRow>) -> anyhow::Result<()> {
    let mut r = rng(seed, 5);
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let n = 1 + k % 10;
        let mu = random_distribution(&mut r, n)?;
        let z = uniform_vec(&mut r, n, 5.0);
        let exact = mu.tilt(&z)?.mean();
        let got = tilted_mean_from_laplace(&make_enum_oracle(mu), &z)?;
        worst = worst.max(max_gap(&got, &exact));
    }
    rows.push(MetricRow::new("discrete", "discrete.tilted_mean_identity", "max_abs_error", worst, Bound::AtMost(1e-10)));

    let c = 2.0;
    let field = ConvolvedScore::new(Arc::new(make_enum_oracle(HypercubeDistribution::uniform(3)?)), vec![0.0; 3], c)?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..20 {
        let y = uniform_vec(&mut r, 3, 3.0);
        let eig = fd_hessian_eigenvalues(&field, &y);
        lo = lo.min(eig.0);
        hi = hi.max(eig.1);
    }
    rows.push(MetricRow::new("discrete", "discrete.conditioning", "min_hessian_eigenvalue", lo, Bound::AtLeast(0.5 / c - 1e-3)));
    rows.push(MetricRow::new("discrete", "discrete.conditioning", "max_hessian_eigenvalue", hi, Bound::AtMost(1.0 / c + 1e-3)));

    let cfg = LocalizationConfig::new(2.0, 0.1);
    rows.push(MetricRow::new("discrete", "discrete.coupling_budget", "inner_tv_budget", cfg.coupling_budget(3), Bound::AtMost(0.05 * (1.0 + 1e-12))));

    let state = LocalizationState::new(4, 2.0, 1);
    let plus = state.signs().iter().filter(|s| **s == 1).count();
    rows.push(MetricRow::new("discrete", "discrete.sign_tiebreak", "zero_field_plus_signs", plus as f64, Bound::Equals(4.0)));
    Ok(())
}

/// Extreme eigenvalues of the finite-difference Hessian of a potential
/// whose gradient is `field`.
pub fn fd_hessian_eigenvalues(field: &dyn ScoreField, y: &[f64]) -> (f64, f64) {
    let d = y.len();
    let h = 1e-4;
    let mut hess = DMatrix::zeros(d, d);
    let (mut sa, mut sb) = (vec![0.0; d], vec![0.0; d]);
    for j in 0..d {
        let (mut a, mut b) = (y.to_vec(), y.to_vec());
        a[j] += h;
        b[j] -= h;
        field.score(&a, &mut sa);
        field.score(&b, &mut sb);
        for i in 0..d {
            hess[(i, j)] = (sa[i] - sb[i]) / (2.0 * h);
        }
    }
    let eig = SymmetricEigen::new((&hess + hess.transpose()) * 0.5).eigenvalues;
    (eig.min(), eig.max())
}

/// TV between `N(m1, s1²)` and `N(m2, s2²)` by midpoint quadrature.
pub fn gaussian_tv_1d(m1: f64, s1: f64, m2: f64, s2: f64) -> f64 {
    let pdf = |x: f64, m: f64, s: f64| (-(x - m) * (x - m) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt());
    let spread = 12.0 * s1.max(s2);
    let (lo, hi) = (m1.min(m2) - spread, m1.max(m2) + spread);
    let n = 100_000;
    let dx = (hi - lo) / n as f64;
    0.5 * (0..n)
        .map(|i| {
            let x = lo + (i as f64 + 0.5) * dx;
            (pdf(x, m1, s1) - pdf(x, m2, s2)).abs() * dx
        })
        .sum::<f64>()
}

fn diagnostics_checks(seed: u64, rows: &mut Vec<MetricRow>) -> anyhow::Result<()> {
    let mut r = rng(seed, 6);
    let mut min_kl = f64::INFINITY;
    let mut max_self: f64 = 0.0;
    let mut min_slack = f64::INFINITY;
    for _ in 0..40 {
        let m = uniform_vec(&mut r, 2, 2.0);
        let s: Vec<f64> = (0..2).map(|_| r.random_range(0.3..3.0)).collect();
        let p = GaussianFit::diagonal(&[0.0], &[s[0] * s[0]])?;
        let q = GaussianFit::diagonal(&[m[0]], &[s[1] * s[1]])?;
        let kl = gaussian_kl(&p, &q)?;
        min_kl = min_kl.min(kl);
        max_self = max_self.max(gaussian_kl(&p, &p)?.abs());
        min_slack = min_slack.min(pinsker_tv_bound(kl)? - gaussian_tv_1d(0.0, s[0], m[0], s[1]));
    }
    rows.push(MetricRow::new("diagnostics", "diagnostics.kl_nonnegative", "min_kl", min_kl, Bound::AtLeast(-1e-12)));
    rows.push(MetricRow::new("diagnostics", "diagnostics.kl_nonnegative", "max_self_kl", max_self, Bound::AtMost(1e-10)));
    rows.push(MetricRow::new("diagnostics", "diagnostics.pinsker_ordering", "min_pinsker_slack", min_slack, Bound::AtLeast(-1e-9)));

    let n = 1_000_000;
    let samples: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let a: f64 = r.sample(StandardNormal);
            let b: f64 = r.sample(StandardNormal);
            vec![1.0 + a, -1.0 + 0.5 * a + b]
        })
        .collect();
    let fit = empirical_gaussian_fit(&samples)?;
    let mean_err = max_gap(fit.mean(), &[1.0, -1.0]) / (1.25f64.sqrt() * 4.0 / (n as f64).sqrt());
    let cov_err = fit
        .covariance()
        .iter()
        .zip([1.0, 0.5, 0.5, 1.25])
        .map(|(a, b)| (a - b).abs() / b)
        .fold(0.0, f64::max);
    rows.push(MetricRow::new("diagnostics", "diagnostics.fit_recovery", "mean_error_over_4se", mean_err, Bound::AtMost(1.0)));
    rows.push(MetricRow::new("diagnostics", "diagnostics.fit_recovery", "max_rel_covariance_error", cov_err, Bound::AtMost(0.01)));
    Ok(())
}
