//! Log-Laplace oracles and the score of `τ_w μ ∗ N(0, cI)`.
//!
//! The extended log-Laplace transform is
//!
//! ```text
//! 𝓛_μ(w) = log Σ_{x : sign(x_S) = sign(w_S)} μ(x) exp(⟨w_{−S}, x_{−S}⟩)
//! ```
//!
//! where `S` is the set of infinite coordinates of `w`. Oracles work in the
//! log domain throughout; `−∞` signals an empty restricted sum.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use super::hypercube::{dot_signs, ExtendedTiltVector, HypercubeDistribution, TILT_CAP};
use crate::error::{Error, Result};
use crate::rng::mix64;
use crate::score::{Potential, QueryLedger, ScoreField, ScoreOracle, TargetModel};

/// An `eps`-accurate oracle for `𝓛_μ`.
///
/// `w` may contain `±∞`; finite entries beyond [`TILT_CAP`] in magnitude
/// are read as infinite.
pub trait LaplaceOracle: Send + Sync {
    fn n(&self) -> usize;

    /// Uniform accuracy `sup_w |𝓛̂(w) − 𝓛_μ(w)|`.
    fn eps(&self) -> f64;

    fn log_laplace(&self, w: &[f64]) -> f64;
}

#[derive(Clone, Copy)]
enum Entry {
    Finite(f64),
    Plus,
    Minus,
}

#[inline]
fn classify(v: f64) -> Entry {
    if v > TILT_CAP {
        Entry::Plus
    } else if v < -TILT_CAP {
        Entry::Minus
    } else {
        Entry::Finite(v)
    }
}

/// Exact `𝓛_μ(w)` by enumerating the restricted support.
pub fn log_laplace_enum(mu: &HypercubeDistribution, w: &ExtendedTiltVector) -> Result<f64> {
    if w.len() != mu.n() {
        return Err(Error::InvalidInput(format!(
            "tilt has length {}, distribution has n = {}",
            w.len(),
            mu.n()
        )));
    }
    Ok(enumerate(mu, w.as_slice()))
}

fn enumerate(mu: &HypercubeDistribution, w: &[f64]) -> f64 {
    let n = mu.n();
    let mut plus = 0usize;
    let mut minus = 0usize;
    let mut finite = [0.0f64; super::hypercube::MAX_ENUM_DIM];
    for (i, &v) in w.iter().enumerate() {
        match classify(v) {
            Entry::Finite(f) => finite[i] = f,
            Entry::Plus => plus |= 1 << i,
            Entry::Minus => minus |= 1 << i,
        }
    }
    let finite = &finite[..n];
    // one-pass log-sum-exp
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for (idx, &lw) in mu.log_weights().iter().enumerate() {
        if idx & plus != plus || idx & minus != 0 || lw == f64::NEG_INFINITY {
            continue;
        }
        let e = lw + dot_signs(finite, idx);
        if e > max {
            sum = sum * (max - e).exp() + 1.0;
            max = e;
        } else {
            sum += (e - max).exp();
        }
    }
    if max == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        max + sum.ln()
    }
}

/// Exact oracle backed by enumeration (`n ≤ 20`).
#[derive(Debug, Clone)]
pub struct EnumerationOracle {
    mu: Arc<HypercubeDistribution>,
}

pub fn make_enum_oracle(mu: HypercubeDistribution) -> EnumerationOracle {
    EnumerationOracle { mu: Arc::new(mu) }
}

impl EnumerationOracle {
    pub fn distribution(&self) -> &HypercubeDistribution {
        &self.mu
    }
}

impl LaplaceOracle for EnumerationOracle {
    fn n(&self) -> usize {
        self.mu.n()
    }

    fn eps(&self) -> f64 {
        0.0
    }

    fn log_laplace(&self, w: &[f64]) -> f64 {
        enumerate(&self.mu, w)
    }
}

/// Closed-form oracle of a product measure with `P(x_i = +1) = p_i`.
#[derive(Debug, Clone)]
pub struct ProductOracle {
    p: Vec<f64>,
}

pub fn make_product_oracle(p: &[f64]) -> Result<ProductOracle> {
    if p.is_empty() {
        return Err(Error::InvalidParameter("product oracle needs n >= 1".into()));
    }
    if let Some(bad) = p.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
        return Err(Error::InvalidParameter(format!(
            "product marginals must lie in (0, 1), got {bad}; use an enumeration oracle for atoms"
        )));
    }
    Ok(ProductOracle { p: p.to_vec() })
}

impl LaplaceOracle for ProductOracle {
    fn n(&self) -> usize {
        self.p.len()
    }

    fn eps(&self) -> f64 {
        0.0
    }

    fn log_laplace(&self, w: &[f64]) -> f64 {
        self.p
            .iter()
            .zip(w)
            .map(|(&p, &v)| match classify(v) {
                Entry::Plus => p.ln(),
                Entry::Minus => (1.0 - p).ln(),
                Entry::Finite(v) => {
                    // log(p e^v + (1-p) e^{-v}) = |v| + log(p_sel) + log1p(p_other/p_sel e^{-2|v|})
                    let (sel, other) = if v >= 0.0 { (p, 1.0 - p) } else { (1.0 - p, p) };
                    v.abs() + sel.ln() + (other / sel * (-2.0 * v.abs()).exp()).ln_1p()
                }
            })
            .sum()
    }
}

/// Shifts every finite answer of `inner` by exactly `±eps`, with the sign a
/// seeded hash of the query.
pub struct ApproximateOracle {
    inner: Arc<dyn LaplaceOracle>,
    eps: f64,
    seed: u64,
}

pub fn approximate_wrapper(
    inner: Arc<dyn LaplaceOracle>,
    eps: f64,
    seed: u64,
) -> Result<ApproximateOracle> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("eps must be >= 0, got {eps}")));
    }
    Ok(ApproximateOracle { inner, eps, seed })
}

impl LaplaceOracle for ApproximateOracle {
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn eps(&self) -> f64 {
        self.inner.eps() + self.eps
    }

    fn log_laplace(&self, w: &[f64]) -> f64 {
        let base = self.inner.log_laplace(w);
        if self.eps == 0.0 || base == f64::NEG_INFINITY {
            return base;
        }
        let key = w.iter().fold(mix64(self.seed), |acc, &v| {
            let v = match classify(v) {
                Entry::Finite(f) => f,
                Entry::Plus => f64::INFINITY,
                Entry::Minus => f64::NEG_INFINITY,
            };
            mix64(acc ^ v.to_bits())
        });
        if key >> 63 == 1 {
            base + self.eps
        } else {
            base - self.eps
        }
    }
}

/// Writes the mean of `τ_z μ` into `out` from `n + 1` oracle calls:
/// `(mean τ_z μ)_j = 2 exp(z_j + 𝓛(z⁺_j) − 𝓛(z)) − 1`, where `z⁺_j` has
/// `+∞` in coordinate `j`. `scratch` must have length `n`.
///
/// Entries of `z` are clamped to `±TILT_CAP` so that the oracle reads them
/// as finite.
pub fn tilted_mean_into(oracle: &dyn LaplaceOracle, z: &[f64], scratch: &mut [f64], out: &mut [f64]) {
    for (s, &v) in scratch.iter_mut().zip(z) {
        *s = v.clamp(-TILT_CAP, TILT_CAP);
    }
    let base = oracle.log_laplace(scratch);
    for j in 0..out.len() {
        let zj = scratch[j];
        scratch[j] = f64::INFINITY;
        let plus = oracle.log_laplace(scratch);
        scratch[j] = zj;
        out[j] = if plus == f64::NEG_INFINITY {
            -1.0
        } else {
            (2.0 * (zj + plus - base).exp() - 1.0).clamp(-1.0, 1.0)
        };
    }
}

/// Mean of the tilt `τ_z μ` recovered from log-Laplace queries.
pub fn tilted_mean_from_laplace(oracle: &dyn LaplaceOracle, z: &[f64]) -> Result<Vec<f64>> {
    if z.len() != oracle.n() || z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("z must be finite with length n".into()));
    }
    let mut scratch = vec![0.0; z.len()];
    let mut out = vec![0.0; z.len()];
    tilted_mean_into(oracle, z, &mut scratch, &mut out);
    Ok(out)
}

/// Score bound implied by an `eps`-accurate Laplace oracle: each mean
/// coordinate is off by at most `2(e^{2 eps} − 1)`, so
/// `δ = 2√n (e^{2 eps} − 1) / c`.
pub fn score_accuracy_from_oracle(eps: f64, n: usize, c: f64) -> f64 {
    2.0 * (n as f64).sqrt() * (2.0 * eps).exp_m1() / c
}

/// Inverse of [`score_accuracy_from_oracle`].
pub fn oracle_accuracy_for_score(delta: f64, n: usize, c: f64) -> f64 {
    0.5 * (delta * c / (2.0 * (n as f64).sqrt())).ln_1p()
}

/// Potential and score of `ν = τ_w μ ∗ N(0, cI)`:
///
/// ```text
/// V(y)  = ‖y‖²/2c − 𝓛(y/c + w) + 𝓛(w) + n/2c + (n/2) ln(2πc)
/// ∇V(y) = (y − mean(τ_{y/c+w} μ)) / c
/// ```
///
/// Every score evaluation is one round of `n + 1` Laplace queries, recorded
/// in [`ConvolvedScore::laplace_ledger`].
pub struct ConvolvedScore {
    oracle: Arc<dyn LaplaceOracle>,
    w: Vec<f64>,
    c: f64,
    log_norm: f64,
    ledger: Arc<QueryLedger>,
}

const STACK_DIM: usize = 32;

impl ConvolvedScore {
    pub fn new(oracle: Arc<dyn LaplaceOracle>, w: Vec<f64>, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!("c must be positive, got {c}")));
        }
        if w.len() != oracle.n() || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("w must be finite with length n".into()));
        }
        let clamped: Vec<f64> = w.iter().map(|v| v.clamp(-TILT_CAP, TILT_CAP)).collect();
        let log_norm = oracle.log_laplace(&clamped);
        Ok(Self {
            oracle,
            w,
            c,
            log_norm,
            ledger: Arc::new(QueryLedger::new()),
        })
    }

    pub fn laplace_ledger(&self) -> &Arc<QueryLedger> {
        &self.ledger
    }

    fn with_buffers<R>(&self, f: impl FnOnce(&mut [f64], &mut [f64]) -> R) -> R {
        let n = self.w.len();
        if n <= STACK_DIM {
            let mut a = [0.0; STACK_DIM];
            let mut b = [0.0; STACK_DIM];
            f(&mut a[..n], &mut b[..n])
        } else {
            f(&mut vec![0.0; n], &mut vec![0.0; n])
        }
    }
}

impl ScoreField for ConvolvedScore {
    fn dim(&self) -> usize {
        self.w.len()
    }

    fn score(&self, y: &[f64], out: &mut [f64]) {
        self.ledger.record_round(self.w.len() as u64 + 1);
        self.with_buffers(|z, scratch| {
            for ((zi, yi), wi) in z.iter_mut().zip(y).zip(&self.w) {
                *zi = yi / self.c + wi;
            }
            tilted_mean_into(self.oracle.as_ref(), z, scratch, out);
        });
        for (o, yi) in out.iter_mut().zip(y) {
            *o = (yi - *o) / self.c;
        }
    }
}

impl Potential for ConvolvedScore {
    fn potential(&self, y: &[f64]) -> f64 {
        let n = self.w.len() as f64;
        let norm2: f64 = y.iter().map(|v| v * v).sum();
        let z: Vec<f64> = y
            .iter()
            .zip(&self.w)
            .map(|(yi, wi)| (yi / self.c + wi).clamp(-TILT_CAP, TILT_CAP))
            .collect();
        norm2 / (2.0 * self.c) - self.oracle.log_laplace(&z)
            + self.log_norm
            + n / (2.0 * self.c)
            + 0.5 * n * (2.0 * PI * self.c).ln()
    }
}

/// `∇V(y)` for `ν = τ_w μ ∗ N(0, cI)`.
pub fn convolved_score(oracle: Arc<dyn LaplaceOracle>, w: &[f64], c: f64, y: &[f64]) -> Result<Vec<f64>> {
    let field = ConvolvedScore::new(oracle, w.to_vec(), c)?;
    if y.len() != field.dim() {
        return Err(Error::InvalidInput("y has wrong dimension".into()));
    }
    let mut out = vec![0.0; y.len()];
    field.score(y, &mut out);
    Ok(out)
}

/// The target `τ_w μ ∗ N(0, cI)` with the constants `α = 1/2c`, `β = 1/c`
/// that hold whenever `cov(τ_y μ) ⪯ (c/2) I` for all `y`, and an oracle
/// whose accuracy reflects the Laplace oracle's.
pub fn make_convolved_target(
    oracle: Arc<dyn LaplaceOracle>,
    w: Vec<f64>,
    c: f64,
) -> Result<(TargetModel, ScoreOracle, Arc<QueryLedger>)> {
    let n = oracle.n();
    let eps = oracle.eps();
    let field = Arc::new(ConvolvedScore::new(oracle, w, c)?);
    let ledger = field.laplace_ledger().clone();
    let target = TargetModel::new("convolved-tilt", 0.5 / c, 1.0 / c, None, field.clone())?;
    let score = ScoreOracle::new(field, score_accuracy_from_oracle(eps, n, c));
    Ok((target, score, ledger))
}

/// Outcome of [`verify_tilt_covariance_bound`].
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceReport {
    /// Largest covariance eigenvalue over the grid.
    pub max_eigenvalue: f64,
    /// Grid index attaining it.
    pub argmax: usize,
    /// `c / 2`.
    pub threshold: f64,
    pub passes: bool,
}

pub(crate) fn max_eigenvalue(n: usize, row_major: &[f64]) -> f64 {
    let m = DMatrix::from_row_slice(n, n, row_major);
    SymmetricEigen::new(m).eigenvalues.max()
}

/// Checks `cov(τ_w μ) ⪯ (c/2) I` on each tilt of `tilt_grid`. This is
/// evidence on a finite grid, not a proof over all of `ℝ^n`.
pub fn verify_tilt_covariance_bound(
    mu: &HypercubeDistribution,
    c: f64,
    tilt_grid: &[Vec<f64>],
) -> Result<CovarianceReport> {
    if tilt_grid.is_empty() {
        return Err(Error::InvalidInput("tilt grid is empty".into()));
    }
    let n = mu.n();
    let mut best = (f64::NEG_INFINITY, 0);
    for (k, w) in tilt_grid.iter().enumerate() {
        let lam = max_eigenvalue(n, &mu.tilt(w)?.covariance());
        if lam > best.0 {
            best = (lam, k);
        }
    }
    let threshold = c / 2.0;
    Ok(CovarianceReport {
        max_eigenvalue: best.0,
        argmax: best.1,
        threshold,
        passes: best.0 <= threshold + 1e-12,
    })
}
