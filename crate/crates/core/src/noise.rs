//! Driving noise for one outer step of the parallel samplers.
//!
//! Both grids are drawn once per outer step and then shared, unchanged, by
//! every Picard iteration of that step.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{stream, tag};

/// A Brownian path sampled on the uniform grid `0, u, 2u, …, Mu` with
/// `u = h/M`.
///
/// `values` holds `W_0 = 0, W_1, …, W_M` row-major (`(M+1) × d`), each
/// `W_m` the exact prefix sum of the first `m` increments.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianGrid {
    substeps: usize,
    step: f64,
    dim: usize,
    values: Vec<f64>,
}

impl BrownianGrid {
    /// Builds a grid from `M × d` increments.
    pub fn from_increments(step: f64, dim: usize, increments: &[f64]) -> Result<Self> {
        if dim == 0 || increments.is_empty() || increments.len() % dim != 0 {
            return Err(Error::InvalidSchedule(
                "increments must be a nonempty multiple of the dimension".into(),
            ));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidSchedule(format!("substep must be positive, got {step}")));
        }
        let substeps = increments.len() / dim;
        let mut values = vec![0.0; (substeps + 1) * dim];
        for m in 0..substeps {
            let (done, rest) = values.split_at_mut((m + 1) * dim);
            let prev = &done[m * dim..];
            for ((next, p), inc) in rest[..dim]
                .iter_mut()
                .zip(prev)
                .zip(&increments[m * dim..(m + 1) * dim])
            {
                *next = p + inc;
            }
        }
        Ok(Self {
            substeps,
            step,
            dim,
            values,
        })
    }

    /// The path that never moves; useful for deterministic checks.
    pub fn zero(substeps: usize, h: f64, dim: usize) -> Result<Self> {
        validate_grid(substeps, h, dim)?;
        Self::from_increments(h / substeps as f64, dim, &vec![0.0; substeps * dim])
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    /// Substep length `u = h/M`.
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `W_m`.
    pub fn value(&self, m: usize) -> &[f64] {
        &self.values[m * self.dim..(m + 1) * self.dim]
    }

    /// `W_{m+1} − W_m`.
    pub fn increment(&self, m: usize) -> Vec<f64> {
        self.value(m + 1)
            .iter()
            .zip(self.value(m))
            .map(|(b, a)| b - a)
            .collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn validate_grid(substeps: usize, h: f64, dim: usize) -> Result<()> {
    if substeps == 0 {
        return Err(Error::InvalidSchedule("M must be at least 1".into()));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidSchedule(format!("h must be positive, got {h}")));
    }
    if dim == 0 {
        return Err(Error::InvalidSchedule("dimension must be positive".into()));
    }
    Ok(())
}

/// Draws `M` iid `N(0, (h/M) I)` increments and prefix-sums them.
pub fn sample_brownian_grid(substeps: usize, h: f64, dim: usize, seed: u64) -> Result<BrownianGrid> {
    validate_grid(substeps, h, dim)?;
    let step = h / substeps as f64;
    let scale = step.sqrt();
    let mut rng = stream(seed, &[tag::BROWNIAN]);
    let increments: Vec<f64> = (0..substeps * dim)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    BrownianGrid::from_increments(step, dim, &increments)
}

/// Per-coordinate covariance of `(ξ^X, ξ^P)` over one substep of the
/// kinetic Langevin dynamics with friction `γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseCovariance {
    pub xx: f64,
    pub xp: f64,
    pub pp: f64,
}

/// Lower-triangular factor `[[l11, 0], [l21, l22]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseFactor {
    pub l11: f64,
    pub l21: f64,
    pub l22: f64,
}

/// `a − 2(1 − e^{−a}) + (1 − e^{−2a})/2` without cancellation.
///
/// Power series `Σ_{k≥3} (−1)^{k+1} (2^{k−1} − 2) a^k / k!` below 0.5,
/// `expm1` forms above.
fn position_variance_kernel(a: f64) -> f64 {
    if a < 0.5 {
        let mut term = a * a / 2.0; // a^k / k! at k = 2
        let mut pow2 = 2.0; // 2^{k-1} at k = 2
        let mut sum = 0.0;
        for k in 3..60 {
            term *= a / k as f64;
            pow2 *= 2.0;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            let t = sign * (pow2 - 2.0) * term;
            sum += t;
            if t.abs() <= 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        a + 2.0 * (-a).exp_m1() - 0.5 * (-2.0 * a).exp_m1()
    }
}

impl NoiseCovariance {
    /// Entries evaluated in the cancellation-prone textbook form; only a
    /// reference for the stable evaluation.
    pub fn naive(gamma: f64, u: f64) -> Self {
        let e1 = (-gamma * u).exp();
        let e2 = (-2.0 * gamma * u).exp();
        Self {
            xx: (2.0 / gamma) * (u - (2.0 / gamma) * (1.0 - e1) + (1.0 / (2.0 * gamma)) * (1.0 - e2)),
            xp: (1.0 / gamma) * (1.0 - 2.0 * e1 + e2),
            pp: 1.0 - e2,
        }
    }

    pub fn determinant(&self) -> f64 {
        self.xx * self.pp - self.xp * self.xp
    }

    /// Closed-form Cholesky factor of the 2×2 matrix.
    pub fn factor(&self) -> Result<NoiseFactor> {
        if !(self.xx > 0.0) || !(self.pp > 0.0) {
            return Err(Error::Precision(format!(
                "noise covariance has nonpositive diagonal: {self:?}"
            )));
        }
        let l11 = self.xx.sqrt();
        let l21 = self.xp / l11;
        let mut schur = self.pp - l21 * l21;
        if schur < 0.0 {
            if schur < -1e-12 * self.pp {
                return Err(Error::Precision(format!(
                    "noise covariance is indefinite: {self:?}"
                )));
            }
            schur = 0.0;
        }
        Ok(NoiseFactor {
            l11,
            l21,
            l22: schur.sqrt(),
        })
    }
}

/// Covariance of the correlated Gaussian pair driving one exponential
/// Euler substep of length `u` with friction `γ`:
///
/// ```text
/// Σ_XX = (2/γ) [u − (2/γ)(1 − e^{−γu}) + (1/2γ)(1 − e^{−2γu})]
/// Σ_XP = (1/γ) (1 − e^{−γu})²
/// Σ_PP = 1 − e^{−2γu}
/// ```
pub fn ulmc_noise_covariance(gamma: f64, u: f64) -> Result<NoiseCovariance> {
    if !(gamma > 0.0 && gamma.is_finite()) || !(u > 0.0 && u.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "gamma and u must be positive, got gamma={gamma} u={u}"
        )));
    }
    let a = gamma * u;
    let one_minus_e1 = -(-a).exp_m1();
    Ok(NoiseCovariance {
        xx: 2.0 / (gamma * gamma) * position_variance_kernel(a),
        xp: one_minus_e1 * one_minus_e1 / gamma,
        pp: -(-2.0 * a).exp_m1(),
    })
}

/// Stored `(ξ^X_m, ξ^P_m)` pairs for `m = 0..M`, each `d`-dimensional.
#[derive(Debug, Clone, PartialEq)]
pub struct UlmcNoiseGrid {
    substeps: usize,
    gamma: f64,
    step: f64,
    dim: usize,
    xi_x: Vec<f64>,
    xi_p: Vec<f64>,
}

impl UlmcNoiseGrid {
    pub fn from_pairs(gamma: f64, step: f64, dim: usize, xi_x: Vec<f64>, xi_p: Vec<f64>) -> Result<Self> {
        if dim == 0 || xi_x.is_empty() || xi_x.len() % dim != 0 || xi_x.len() != xi_p.len() {
            return Err(Error::InvalidSchedule("noise pairs have inconsistent shapes".into()));
        }
        Ok(Self {
            substeps: xi_x.len() / dim,
            gamma,
            step,
            dim,
            xi_x,
            xi_p,
        })
    }

    pub fn zero(substeps: usize, gamma: f64, h: f64, dim: usize) -> Result<Self> {
        validate_grid(substeps, h, dim)?;
        let n = substeps * dim;
        Self::from_pairs(gamma, h / substeps as f64, dim, vec![0.0; n], vec![0.0; n])
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn xi_x(&self, m: usize) -> &[f64] {
        &self.xi_x[m * self.dim..(m + 1) * self.dim]
    }

    pub fn xi_p(&self, m: usize) -> &[f64] {
        &self.xi_p[m * self.dim..(m + 1) * self.dim]
    }
}

/// Draws `M` independent correlated pairs with covariance
/// [`ulmc_noise_covariance`]`(γ, h/M)` per coordinate.
pub fn sample_ulmc_noise_grid(
    substeps: usize,
    gamma: f64,
    h: f64,
    dim: usize,
    seed: u64,
) -> Result<UlmcNoiseGrid> {
    validate_grid(substeps, h, dim)?;
    let step = h / substeps as f64;
    let factor = ulmc_noise_covariance(gamma, step)?.factor()?;
    let mut rng = stream(seed, &[tag::ULMC_NOISE]);
    let n = substeps * dim;
    let mut xi_x = Vec::with_capacity(n);
    let mut xi_p = Vec::with_capacity(n);
    for _ in 0..n {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        xi_x.push(factor.l11 * z1);
        xi_p.push(factor.l21 * z1 + factor.l22 * z2);
    }
    UlmcNoiseGrid::from_pairs(gamma, step, dim, xi_x, xi_p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn brownian_grid_starts_at_origin_and_prefix_sums() {
        let g = sample_brownian_grid(4, 1.0, 3, 42).unwrap();
        assert_eq!(g.value(0), &[0.0, 0.0, 0.0]);
        assert_eq!(g.step(), 0.25);
        for i in 0..3 {
            let rebuilt = (g.value(2)[i] - g.value(1)[i]) + (g.value(1)[i] - g.value(0)[i]) + g.value(0)[i];
            assert_abs_diff_eq!(rebuilt, g.value(2)[i], epsilon = 1e-15);
        }
        let inc0 = g.increment(0);
        let inc1 = g.increment(1);
        for i in 0..3 {
            assert_eq!(g.value(2)[i], g.value(0)[i] + inc0[i] + inc1[i]);
        }
    }

    #[test]
    fn brownian_grid_rejects_bad_schedule() {
        assert!(matches!(sample_brownian_grid(0, 1.0, 1, 0), Err(Error::InvalidSchedule(_))));
        assert!(matches!(sample_brownian_grid(4, 0.0, 1, 0), Err(Error::InvalidSchedule(_))));
        assert!(sample_brownian_grid(4, -1.0, 1, 0).is_err());
    }

    #[test]
    fn grids_are_deterministic() {
        assert_eq!(
            sample_brownian_grid(8, 0.3, 2, 5).unwrap(),
            sample_brownian_grid(8, 0.3, 2, 5).unwrap()
        );
        assert_ne!(
            sample_brownian_grid(8, 0.3, 2, 5).unwrap(),
            sample_brownian_grid(8, 0.3, 2, 6).unwrap()
        );
        assert_eq!(
            sample_ulmc_noise_grid(8, 2.0, 0.3, 2, 5).unwrap(),
            sample_ulmc_noise_grid(8, 2.0, 0.3, 2, 5).unwrap()
        );
    }

    #[test]
    fn covariance_reference_values() {
        // γ = 2, u = 0.5, γu = 1
        let s = ulmc_noise_covariance(2.0, 0.5).unwrap();
        let e = (-1.0f64).exp();
        assert_relative_eq!(s.xx, 0.5 - (1.0 - e) + 0.25 * (1.0 - e * e), max_relative = 1e-14);
        assert_abs_diff_eq!(s.xx, 0.0840456, epsilon = 5e-8);
        assert_abs_diff_eq!(s.xp, 0.1997882, epsilon = 5e-8);
        assert_abs_diff_eq!(s.pp, 0.8646647, epsilon = 5e-8);
        assert!(s.determinant() > 0.0);
    }

    #[test]
    fn covariance_limits() {
        let s = ulmc_noise_covariance(2.0, 1e-10).unwrap();
        assert!(s.xx <= 1e-9 && s.xp <= 1e-9 && s.pp <= 1e-9);
        assert!(s.xx > 0.0 && s.determinant() > 0.0);
        let s = ulmc_noise_covariance(5.0, 10.0).unwrap();
        assert_abs_diff_eq!(s.pp, 1.0, epsilon = 1e-12);
        assert!(ulmc_noise_covariance(0.0, 1.0).is_err());
        assert!(ulmc_noise_covariance(1.0, -1.0).is_err());
    }

    #[test]
    fn stable_matches_naive_away_from_zero() {
        for &a in &[0.1, 0.2, 0.49, 0.5, 0.51, 1.0, 3.0, 10.0] {
            for &gamma in &[0.5, 2.0, 7.0] {
                let u = a / gamma;
                let s = ulmc_noise_covariance(gamma, u).unwrap();
                let n = NoiseCovariance::naive(gamma, u);
                assert_relative_eq!(s.xx, n.xx, max_relative = 1e-10);
                assert_relative_eq!(s.xp, n.xp, max_relative = 1e-10);
                assert_relative_eq!(s.pp, n.pp, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn stays_positive_definite_for_tiny_steps() {
        let mut a = 1e-12;
        while a < 1.0 {
            let s = ulmc_noise_covariance(1.0, a).unwrap();
            // leading order: xx ≈ 2a³/3, xp ≈ a², pp ≈ 2a, det ≈ a⁴/3
            assert!(s.determinant() > 0.0, "a = {a}");
            assert!(s.factor().is_ok());
            if a < 1e-4 {
                assert_relative_eq!(s.xx, 2.0 * a * a * a / 3.0, max_relative = 1e-3);
            }
            a *= 10.0;
        }
    }

    #[test]
    fn factor_reproduces_covariance() {
        let s = ulmc_noise_covariance(2.0, 0.5).unwrap();
        let f = s.factor().unwrap();
        assert_relative_eq!(f.l11 * f.l11, s.xx, max_relative = 1e-14);
        assert_relative_eq!(f.l11 * f.l21, s.xp, max_relative = 1e-14);
        assert_relative_eq!(f.l21 * f.l21 + f.l22 * f.l22, s.pp, max_relative = 1e-14);
    }
}
