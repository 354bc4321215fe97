//! Score oracles, built-in continuous targets and query accounting.
//!
//! A target is a density `π ∝ exp(-V)` on `ℝ^d`. Samplers never touch `V`
//! directly; they query a [`ScoreOracle`], which approximates `∇V` to a
//! uniform accuracy `delta` and records every batch it answers in a
//! [`QueryLedger`]. A batch is one adaptive round no matter how many points
//! it contains.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{bits_to_symmetric_unit, mix64};

/// A vector field `ℝ^d → ℝ^d`, usually the gradient of a potential.
pub trait ScoreField: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes the field at `x` into `out`. Both slices have length `dim()`.
    fn score(&self, x: &[f64], out: &mut [f64]);
}

/// A potential `V` together with its exact gradient.
pub trait Potential: ScoreField {
    fn potential(&self, x: &[f64]) -> f64;
}

/// A continuous target `π ∝ exp(-V)` with its regularity constants.
///
/// `alpha` is the log-Sobolev (or strong convexity) constant and `beta` the
/// smoothness constant of `V`.
#[derive(Clone)]
pub struct TargetModel {
    name: String,
    alpha: f64,
    beta: f64,
    minimizer: Option<Vec<f64>>,
    potential: Arc<dyn Potential>,
}

impl fmt::Debug for TargetModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetModel")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("alpha", &self.alpha)
            .field("beta", &self.beta)
            .field("minimizer", &self.minimizer)
            .finish()
    }
}

impl TargetModel {
    pub fn new(
        name: impl Into<String>,
        alpha: f64,
        beta: f64,
        minimizer: Option<Vec<f64>>,
        potential: Arc<dyn Potential>,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidTarget(format!("alpha must be positive, got {alpha}")));
        }
        if !(beta >= alpha && beta.is_finite()) {
            return Err(Error::InvalidTarget(format!(
                "beta must satisfy beta >= alpha, got alpha={alpha} beta={beta}"
            )));
        }
        if potential.dim() == 0 {
            return Err(Error::InvalidTarget("dimension must be positive".into()));
        }
        if let Some(m) = &minimizer {
            if m.len() != potential.dim() {
                return Err(Error::InvalidTarget("minimizer has wrong dimension".into()));
            }
        }
        Ok(Self {
            name: name.into(),
            alpha,
            beta,
            minimizer,
            potential,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.potential.dim()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `κ = β / α`.
    pub fn condition_number(&self) -> f64 {
        self.beta / self.alpha
    }

    pub fn minimizer(&self) -> Option<&[f64]> {
        self.minimizer.as_deref()
    }

    pub fn potential(&self, x: &[f64]) -> f64 {
        self.potential.potential(x)
    }

    pub fn score(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.potential.score(x, &mut out);
        out
    }

    pub fn field(&self) -> Arc<dyn ScoreField> {
        self.potential.clone()
    }

    /// An oracle returning the exact score (`delta = 0`).
    pub fn exact_oracle(&self) -> ScoreOracle {
        ScoreOracle::new(self.field(), 0.0)
    }
}

/// Counts adaptive rounds and total score evaluations.
///
/// Counters are atomic so that an oracle can be shared across workers.
#[derive(Debug, Default)]
pub struct QueryLedger {
    rounds: AtomicU64,
    evaluations: AtomicU64,
}

/// A point-in-time copy of a ledger.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LedgerCounts {
    pub rounds: u64,
    pub evaluations: u64,
}

impl std::ops::Sub for LedgerCounts {
    type Output = LedgerCounts;

    fn sub(self, rhs: LedgerCounts) -> LedgerCounts {
        LedgerCounts {
            rounds: self.rounds - rhs.rounds,
            evaluations: self.evaluations - rhs.evaluations,
        }
    }
}

impl std::ops::AddAssign for LedgerCounts {
    fn add_assign(&mut self, rhs: LedgerCounts) {
        self.rounds += rhs.rounds;
        self.evaluations += rhs.evaluations;
    }
}

impl QueryLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records one round containing `evaluations` queries.
    pub fn record_round(&self, evaluations: u64) {
        self.rounds.fetch_add(1, Ordering::Relaxed);
        self.evaluations.fetch_add(evaluations, Ordering::Relaxed);
    }

    pub fn counts(&self) -> LedgerCounts {
        LedgerCounts {
            rounds: self.rounds.load(Ordering::Relaxed),
            evaluations: self.evaluations.load(Ordering::Relaxed),
        }
    }

    pub fn rounds(&self) -> u64 {
        self.rounds.load(Ordering::Relaxed)
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }
}

// Below this many points a batch is evaluated inline; rayon dispatch costs
// more than the work.
const PARALLEL_BATCH_THRESHOLD: usize = 512;

/// A `delta`-accurate score oracle with query accounting.
///
/// Every call is a batch. A single point is a batch of one.
#[derive(Clone)]
pub struct ScoreOracle {
    field: Arc<dyn ScoreField>,
    delta: f64,
    ledger: Arc<QueryLedger>,
}

impl fmt::Debug for ScoreOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScoreOracle")
            .field("dim", &self.dim())
            .field("delta", &self.delta)
            .field("ledger", &self.ledger.counts())
            .finish()
    }
}

impl ScoreOracle {
    pub fn new(field: Arc<dyn ScoreField>, delta: f64) -> Self {
        Self {
            field,
            delta,
            ledger: Arc::new(QueryLedger::new()),
        }
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    /// Uniform accuracy bound `sup_x ‖s(x) − ∇V(x)‖`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn ledger(&self) -> &QueryLedger {
        &self.ledger
    }

    pub fn field(&self) -> &Arc<dyn ScoreField> {
        &self.field
    }

    /// Same field and accuracy, new zeroed ledger.
    pub fn with_fresh_ledger(&self) -> Self {
        Self::new(self.field.clone(), self.delta)
    }

    /// Evaluates a batch of `points.len() / d` points as one round.
    pub fn evaluate(&self, points: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.dim();
        check_batch(d, points, out)?;
        self.ledger.record_round((points.len() / d) as u64);
        self.fill(points, out);
        Ok(())
    }

    /// Evaluates `chains` independent chains that each query the same
    /// number of points in lockstep.
    ///
    /// The whole batch is one round; the evaluation count is the per-chain
    /// query volume, so accounting does not depend on the replica count.
    pub fn evaluate_chains(&self, chains: usize, points: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.dim();
        check_batch(d, points, out)?;
        let total = points.len() / d;
        if chains == 0 || total % chains != 0 {
            return Err(Error::InvalidInput(format!(
                "{total} points cannot be split across {chains} chains"
            )));
        }
        self.ledger.record_round((total / chains) as u64);
        self.fill(points, out);
        Ok(())
    }

    pub fn evaluate_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.evaluate(x, &mut out)?;
        Ok(out)
    }

    fn fill(&self, points: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let field = self.field.as_ref();
        if points.len() / d < PARALLEL_BATCH_THRESHOLD {
            for (x, o) in points.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
                field.score(x, o);
            }
        } else {
            out.par_chunks_exact_mut(d)
                .zip(points.par_chunks_exact(d))
                .with_min_len(64)
                .for_each(|(o, x)| field.score(x, o));
        }
    }
}

fn check_batch(d: usize, points: &[f64], out: &[f64]) -> Result<()> {
    if points.is_empty() || points.len() % d != 0 {
        return Err(Error::InvalidInput(format!(
            "batch of {} values is not a nonempty multiple of dimension {d}",
            points.len()
        )));
    }
    if out.len() != points.len() {
        return Err(Error::InvalidInput("output buffer does not match batch".into()));
    }
    Ok(())
}

/// Exact score plus a perturbation of norm exactly `delta`.
///
/// The direction is a seeded hash of the bit pattern of the query point,
/// pushed through a cube-to-sphere normalization, so repeated queries at
/// the same point agree bit for bit.
struct PerturbedScore {
    inner: Arc<dyn ScoreField>,
    delta: f64,
    seed: u64,
}

impl ScoreField for PerturbedScore {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn score(&self, x: &[f64], out: &mut [f64]) {
        self.inner.score(x, out);
        if self.delta == 0.0 {
            return;
        }
        let key = x
            .iter()
            .fold(mix64(self.seed), |acc, v| mix64(acc ^ v.to_bits()));
        let mut norm2 = 0.0;
        let mut dir = [0.0f64; 16];
        let d = out.len();
        // small dimensions avoid the allocation
        let mut heap;
        let dir: &mut [f64] = if d <= dir.len() {
            &mut dir[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        for (i, u) in dir.iter_mut().enumerate() {
            *u = bits_to_symmetric_unit(mix64(key ^ mix64(i as u64 + 1)));
            norm2 += *u * *u;
        }
        if norm2 < 1e-300 {
            dir.iter_mut().for_each(|u| *u = 0.0);
            dir[0] = 1.0;
            norm2 = 1.0;
        }
        let scale = self.delta / norm2.sqrt();
        for (o, u) in out.iter_mut().zip(dir.iter()) {
            *o += scale * u;
        }
    }
}

/// Wraps `oracle` so that each answer is off by exactly `delta` in norm.
///
/// The returned oracle reports accuracy `oracle.delta() + delta` and starts
/// with a fresh ledger.
pub fn perturb_score(oracle: &ScoreOracle, delta: f64, seed: u64) -> Result<ScoreOracle> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!("delta must be >= 0, got {delta}")));
    }
    let field = Arc::new(PerturbedScore {
        inner: oracle.field.clone(),
        delta,
        seed,
    });
    Ok(ScoreOracle::new(field, oracle.delta + delta))
}

/// `V(x) = Σ λ_i (x_i − m_i)² / 2`.
#[derive(Debug, Clone)]
pub struct DiagonalGaussian {
    mean: Vec<f64>,
    precision: Vec<f64>,
}

impl DiagonalGaussian {
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn precision(&self) -> &[f64] {
        &self.precision
    }
}

impl ScoreField for DiagonalGaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    #[inline]
    fn score(&self, x: &[f64], out: &mut [f64]) {
        for ((o, &xi), (&m, &l)) in out
            .iter_mut()
            .zip(x)
            .zip(self.mean.iter().zip(&self.precision))
        {
            *o = l * (xi - m);
        }
    }
}

impl Potential for DiagonalGaussian {
    fn potential(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.mean.iter().zip(&self.precision))
            .map(|(&xi, (&m, &l))| 0.5 * l * (xi - m) * (xi - m))
            .sum()
    }
}

/// Gaussian target with diagonal precision.
pub fn make_gaussian_target(mean: &[f64], diag_precision: &[f64]) -> Result<TargetModel> {
    if mean.is_empty() || mean.len() != diag_precision.len() {
        return Err(Error::InvalidTarget(
            "mean and precision must be nonempty and of equal length".into(),
        ));
    }
    if let Some(bad) = diag_precision.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::InvalidTarget(format!("precision must be positive, got {bad}")));
    }
    let alpha = diag_precision.iter().copied().fold(f64::INFINITY, f64::min);
    let beta = diag_precision.iter().copied().fold(0.0, f64::max);
    let field = DiagonalGaussian {
        mean: mean.to_vec(),
        precision: diag_precision.to_vec(),
    };
    TargetModel::new("gaussian", alpha, beta, Some(mean.to_vec()), Arc::new(field))
}

/// Uniform mixture of isotropic Gaussians `N(c_j, σ² I)`.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    centers: Vec<Vec<f64>>,
    variance: f64,
}

impl GaussianMixture {
    /// Log-weights `−‖x − c_j‖² / 2σ²` and their log-sum-exp.
    fn log_terms(&self, x: &[f64], buf: &mut Vec<f64>) -> f64 {
        buf.clear();
        buf.extend(self.centers.iter().map(|c| {
            let r2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            -0.5 * r2 / self.variance
        }));
        let max = buf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        max + buf.iter().map(|e| (e - max).exp()).sum::<f64>().ln()
    }
}

impl ScoreField for GaussianMixture {
    fn dim(&self) -> usize {
        self.centers[0].len()
    }

    fn score(&self, x: &[f64], out: &mut [f64]) {
        let mut buf = Vec::with_capacity(self.centers.len());
        let lse = self.log_terms(x, &mut buf);
        out.copy_from_slice(x);
        for (c, e) in self.centers.iter().zip(&buf) {
            let w = (e - lse).exp();
            for (o, ci) in out.iter_mut().zip(c) {
                *o -= w * ci;
            }
        }
        out.iter_mut().for_each(|o| *o /= self.variance);
    }
}

impl Potential for GaussianMixture {
    fn potential(&self, x: &[f64]) -> f64 {
        let mut buf = Vec::with_capacity(self.centers.len());
        (self.centers.len() as f64).ln() - self.log_terms(x, &mut buf)
    }
}

/// Uniform mixture of Gaussians with standard deviation `noise_scale`
/// centered at `centers`, all within radius `radius`.
///
/// Smoothness is bounded by `(1 + R²/σ²)/σ²` (the Hessian is
/// `I/σ² − Cov/σ⁴` with `Cov ⪯ R² I`). The log-Sobolev constant is the
/// conservative `max{1/σ² − R²/σ⁴, exp(−4R²/σ²)/σ²}`: the first term is
/// the strong convexity bound when `R < σ`, the second the usual
/// bounded-perturbation estimate for Gaussian convolutions of measures
/// supported in a ball.
pub fn make_gaussian_mixture_target(
    centers: &[Vec<f64>],
    radius: f64,
    noise_scale: f64,
) -> Result<TargetModel> {
    if centers.len() < 2 {
        return Err(Error::InvalidTarget(format!(
            "a mixture needs at least two centers, got {}",
            centers.len()
        )));
    }
    let d = centers[0].len();
    if d == 0 || centers.iter().any(|c| c.len() != d) {
        return Err(Error::InvalidTarget("centers must share a positive dimension".into()));
    }
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::InvalidTarget(format!("radius must be >= 0, got {radius}")));
    }
    if !(noise_scale > 0.0 && noise_scale.is_finite()) {
        return Err(Error::InvalidTarget(format!(
            "noise scale must be positive, got {noise_scale}"
        )));
    }
    for c in centers {
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > radius * (1.0 + 1e-12) {
            return Err(Error::InvalidTarget(format!(
                "center norm {norm} exceeds radius {radius}"
            )));
        }
    }
    let s2 = noise_scale * noise_scale;
    let r2 = radius * radius;
    let beta = (1.0 + r2 / s2) / s2;
    let alpha = (1.0 / s2 - r2 / (s2 * s2)).max((-4.0 * r2 / s2).exp() / s2);
    let mixture = GaussianMixture {
        centers: centers.to_vec(),
        variance: s2,
    };
    let minimizer = descend_to_critical_point(&mixture, &centers[0], beta);
    TargetModel::new("gaussian-mixture", alpha, beta, Some(minimizer), Arc::new(mixture))
}

/// Gradient descent with step `1/β` until the score is below 1e-10.
fn descend_to_critical_point(field: &dyn ScoreField, start: &[f64], beta: f64) -> Vec<f64> {
    let mut x = start.to_vec();
    let mut g = vec![0.0; x.len()];
    for _ in 0..10_000_000 {
        field.score(&x, &mut g);
        if g.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-10 {
            break;
        }
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= gi / beta;
        }
    }
    x
}
