//! Distances and summaries used to judge sampler output: Gaussian fits with
//! closed-form KL and W2, Pinsker and Talagrand conversions, discrete TV,
//! and Picard residual curves.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues in `[-CLIP_TOL, 0)` are rounded up to zero.
pub const CLIP_TOL: f64 = 1e-10;

/// Residuals below this are treated as exact zeros.
pub const RESIDUAL_FLOOR: f64 = 1e-24;

/// A Gaussian summary of a law.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFit {
    mean: Vec<f64>,
    covariance: DMatrix<f64>,
    samples: usize,
}

impl GaussianFit {
    /// `covariance` is row-major `d × d`. It is symmetrized and its
    /// eigenvalues in `[-1e-10, 0)` are clipped to zero.
    pub fn new(mean: Vec<f64>, covariance: &[f64], samples: usize) -> Result<Self> {
        let d = mean.len();
        if d == 0 || covariance.len() != d * d {
            return Err(Error::Fit(format!(
                "covariance has {} entries for dimension {d}",
                covariance.len()
            )));
        }
        if mean.iter().chain(covariance).any(|v| !v.is_finite()) {
            return Err(Error::Fit("non-finite moment".into()));
        }
        let m = DMatrix::from_row_slice(d, d, covariance);
        let sym = (&m + m.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym.clone());
        let min = eig.eigenvalues.min();
        let covariance = if min >= 0.0 {
            sym
        } else if min >= -CLIP_TOL {
            let clipped = eig.eigenvalues.map(|v| v.max(0.0));
            &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()
        } else {
            return Err(Error::Fit(format!("covariance has eigenvalue {min}")));
        };
        Ok(Self { mean, covariance, samples })
    }

    /// `N(mean, diag(variances))`, e.g. a target's exact law.
    pub fn diagonal(mean: &[f64], variances: &[f64]) -> Result<Self> {
        let d = mean.len();
        if variances.len() != d {
            return Err(Error::Fit("variance vector has wrong length".into()));
        }
        let mut cov = vec![0.0; d * d];
        for (i, v) in variances.iter().enumerate() {
            cov[i * d + i] = *v;
        }
        Self::new(mean.to_vec(), &cov, 0)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Row-major covariance.
    pub fn covariance(&self) -> Vec<f64> {
        self.covariance.transpose().as_slice().to_vec()
    }

    /// Number of samples behind the fit; 0 for exact laws.
    pub fn samples(&self) -> usize {
        self.samples
    }
}

fn same_dim(a: &GaussianFit, b: &GaussianFit) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::InvalidInput("fits have different dimensions".into()));
    }
    Ok(())
}

fn cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| Error::SingularFit("covariance is singular".into()))
}

/// `KL(N₁ ‖ N₂)`.
pub fn gaussian_kl(p: &GaussianFit, q: &GaussianFit) -> Result<f64> {
    same_dim(p, q)?;
    let lp = cholesky(&p.covariance)?;
    let lq = cholesky(&q.covariance)?;
    let d = p.dim() as f64;
    let logdet = |c: &Cholesky<f64, nalgebra::Dyn>| 2.0 * c.l_dirty().diagonal().map(f64::ln).sum();
    let (ldp, ldq) = (logdet(&lp), logdet(&lq));
    if !(ldp.is_finite() && ldq.is_finite()) {
        return Err(Error::SingularFit("covariance is singular".into()));
    }
    let trace = lq.solve(&p.covariance).trace();
    let dm = DVector::from_iterator(p.dim(), q.mean.iter().zip(&p.mean).map(|(a, b)| a - b));
    let maha = dm.dot(&lq.solve(&dm));
    Ok((0.5 * (trace + maha - d + ldq - ldp)).max(0.0))
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let s = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&s) * eig.eigenvectors.transpose()
}

/// Bures–Wasserstein distance `W₂(N₁, N₂)`.
pub fn gaussian_w2(p: &GaussianFit, q: &GaussianFit) -> Result<f64> {
    same_dim(p, q)?;
    let mean2: f64 = p.mean.iter().zip(&q.mean).map(|(a, b)| (a - b) * (a - b)).sum();
    let r = psd_sqrt(&q.covariance);
    let cross = psd_sqrt(&(&r * &p.covariance * &r));
    let bures = p.covariance.trace() + q.covariance.trace() - 2.0 * cross.trace();
    Ok((mean2 + bures.max(0.0)).sqrt())
}

/// Pinsker: `TV ≤ √(KL/2)`, capped at 1.
pub fn pinsker_tv_bound(kl: f64) -> Result<f64> {
    if !(kl >= 0.0) {
        return Err(Error::InvalidParameter(format!("KL must be >= 0, got {kl}")));
    }
    Ok((kl / 2.0).sqrt().min(1.0))
}

/// Talagrand: `W₂ ≤ √(2 KL / α)`.
pub fn talagrand_w2_bound(kl: f64, alpha: f64) -> Result<f64> {
    if !(kl >= 0.0) || !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need kl >= 0 and alpha > 0, got kl={kl} alpha={alpha}"
        )));
    }
    Ok((2.0 * kl / alpha).sqrt())
}

/// Sample mean and `(n−1)`-denominator covariance.
pub fn empirical_gaussian_fit(samples: &[Vec<f64>]) -> Result<GaussianFit> {
    let n = samples.len();
    let d = samples.first().map_or(0, Vec::len);
    if d == 0 || samples.iter().any(|s| s.len() != d) {
        return Err(Error::Fit("samples must share a positive dimension".into()));
    }
    if n < d + 1 {
        return Err(Error::Fit(format!("need at least {} samples, got {n}", d + 1)));
    }
    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; d * d];
    for s in samples {
        for i in 0..d {
            let a = s[i] - mean[i];
            for j in i..d {
                cov[i * d + j] += a * (s[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / (n - 1) as f64;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    GaussianFit::new(mean, &cov, n)
}

/// `½ Σ |p_i − q_i|`.
pub fn discrete_tv(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::InvalidInput("probability vectors differ in length".into()));
    }
    for v in [p, q] {
        let total: f64 = v.iter().sum();
        if v.iter().any(|x| !(*x >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput("not a probability vector".into()));
        }
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Consecutive ratios of a Picard residual curve.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    /// `ratios[i]` is `r_{k} / r_{k−1}` for iteration `k = i + 2`; `None`
    /// once the previous residual is under [`RESIDUAL_FLOOR`].
    pub ratios: Vec<Option<f64>>,
    /// Largest ratio over iterations `k ≥ 3`, if any is defined.
    pub max_ratio: Option<f64>,
}

impl ResidualReport {
    /// Largest defined ratio over iterations `≥ k`.
    pub fn max_ratio_from(&self, k: usize) -> Option<f64> {
        self.ratios
            .iter()
            .enumerate()
            .filter(|(i, _)| i + 2 >= k)
            .filter_map(|(_, r)| *r)
            .reduce(f64::max)
    }
}

/// `residuals[k−1]` is the residual after iteration `k`.
pub fn residual_ratio_report(residuals: &[f64]) -> ResidualReport {
    let ratios: Vec<Option<f64>> = residuals
        .windows(2)
        .map(|w| (w[0] >= RESIDUAL_FLOOR).then(|| w[1] / w[0]))
        .collect();
    let mut report = ResidualReport { ratios, max_ratio: None };
    report.max_ratio = report.max_ratio_from(3);
    report
}
