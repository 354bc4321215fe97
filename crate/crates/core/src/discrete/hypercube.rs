use crate::error::{Error, Result};

/// Enumeration-backed distributions are limited to `2^20` atoms.
pub const MAX_ENUM_DIM: usize = 20;

/// Finite tilt entries beyond this magnitude behave as `±∞`.
pub const TILT_CAP: f64 = 700.0;

/// A normalized distribution on `{±1}^n`, stored as log-weights.
///
/// Atom `idx` has `x_i = +1` iff bit `i` of `idx` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct HypercubeDistribution {
    n: usize,
    log_weights: Vec<f64>,
}

/// Maps a sign vector to its atom index.
pub fn atom_index(signs: &[i8]) -> usize {
    signs
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 0)
        .fold(0, |acc, (i, _)| acc | (1 << i))
}

/// Sign vector of atom `idx`.
pub fn atom_signs(n: usize, idx: usize) -> Vec<i8> {
    (0..n).map(|i| if idx >> i & 1 == 1 { 1 } else { -1 }).collect()
}

fn check_dim(n: usize) -> Result<()> {
    if n == 0 || n > MAX_ENUM_DIM {
        return Err(Error::InvalidParameter(format!(
            "hypercube dimension must be in 1..={MAX_ENUM_DIM}, got {n}"
        )));
    }
    Ok(())
}

fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Parses `+-+`-style sign strings.
pub fn parse_signs(text: &str) -> Result<Vec<i8>> {
    text.chars()
        .map(|ch| match ch {
            '+' => Ok(1),
            '-' => Ok(-1),
            other => Err(Error::InvalidInput(format!(
                "sign strings use '+' and '-', found {other:?}"
            ))),
        })
        .collect()
}

impl HypercubeDistribution {
    /// Normalizes `log_weights` (length `2^n`, `−∞` allowed).
    pub fn from_log_weights(n: usize, log_weights: Vec<f64>) -> Result<Self> {
        check_dim(n)?;
        if log_weights.len() != 1 << n {
            return Err(Error::InvalidParameter(format!(
                "expected {} log-weights, got {}",
                1usize << n,
                log_weights.len()
            )));
        }
        if log_weights.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::InvalidParameter("log-weights must be < +inf and not NaN".into()));
        }
        let total = log_sum_exp(log_weights.iter().copied());
        if total == f64::NEG_INFINITY {
            return Err(Error::InvalidParameter("distribution has no mass".into()));
        }
        Ok(Self {
            n,
            log_weights: log_weights.into_iter().map(|v| v - total).collect(),
        })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        check_dim(n)?;
        Self::from_log_weights(n, vec![0.0; 1 << n])
    }

    /// Independent coordinates with `P(x_i = +1) = p_i`.
    pub fn product(p: &[f64]) -> Result<Self> {
        if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter("marginals must lie in [0, 1]".into()));
        }
        let n = p.len();
        check_dim(n)?;
        let lw = (0..1usize << n)
            .map(|idx| {
                p.iter()
                    .enumerate()
                    .map(|(i, &pi)| if idx >> i & 1 == 1 { pi.ln() } else { (1.0 - pi).ln() })
                    .sum()
            })
            .collect();
        Self::from_log_weights(n, lw)
    }

    pub fn point_mass(signs: &[i8]) -> Result<Self> {
        let n = signs.len();
        check_dim(n)?;
        let mut lw = vec![f64::NEG_INFINITY; 1 << n];
        lw[atom_index(signs)] = 0.0;
        Self::from_log_weights(n, lw)
    }

    /// Reads a weight table: one `signs logweight` row per atom, e.g.
    /// `+-+ -0.5`. Blank lines and `#` comments are ignored; unlisted atoms
    /// have zero mass.
    pub fn parse_table(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(signs), Some(weight), None) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(Error::InvalidInput(format!(
                    "line {}: expected `signs logweight`",
                    lineno + 1
                )));
            };
            let signs = parse_signs(signs)
                .map_err(|e| Error::InvalidInput(format!("line {}: {e}", lineno + 1)))?;
            let weight: f64 = weight.parse().map_err(|_| {
                Error::InvalidInput(format!("line {}: bad log-weight {weight:?}", lineno + 1))
            })?;
            rows.push((lineno + 1, signs, weight));
        }
        let Some(n) = rows.first().map(|r| r.1.len()) else {
            return Err(Error::InvalidInput("weight table is empty".into()));
        };
        if n == 0 || n > MAX_ENUM_DIM {
            return Err(Error::InvalidInput(format!(
                "table dimension must be in 1..={MAX_ENUM_DIM}, got {n}"
            )));
        }
        let mut lw = vec![f64::NEG_INFINITY; 1 << n];
        let mut seen = vec![false; 1 << n];
        for (line, signs, weight) in rows {
            if signs.len() != n {
                return Err(Error::InvalidInput(format!(
                    "line {line}: expected {n} signs, got {}",
                    signs.len()
                )));
            }
            let idx = atom_index(&signs);
            if std::mem::replace(&mut seen[idx], true) {
                return Err(Error::InvalidInput(format!("line {line}: duplicate atom")));
            }
            lw[idx] = weight;
        }
        Self::from_log_weights(n, lw)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.log_weights.iter().map(|v| v.exp()).collect()
    }

    /// `τ_w μ(x) ∝ μ(x) e^{⟨w, x⟩}` for finite `w`.
    pub fn tilt(&self, w: &[f64]) -> Result<Self> {
        if w.len() != self.n || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("tilt must be finite with length n".into()));
        }
        let lw = self
            .log_weights
            .iter()
            .enumerate()
            .map(|(idx, &l)| l + dot_signs(w, idx))
            .collect();
        Self::from_log_weights(self.n, lw)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.n];
        for (idx, p) in self.probabilities().into_iter().enumerate() {
            for (i, m) in mean.iter_mut().enumerate() {
                *m += if idx >> i & 1 == 1 { p } else { -p };
            }
        }
        mean
    }

    /// Covariance matrix, row-major `n × n`.
    pub fn covariance(&self) -> Vec<f64> {
        let n = self.n;
        let mean = self.mean();
        let mut cov = vec![0.0; n * n];
        for (idx, p) in self.probabilities().into_iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for i in 0..n {
                let xi = if idx >> i & 1 == 1 { 1.0 } else { -1.0 } - mean[i];
                for j in 0..n {
                    let xj = if idx >> j & 1 == 1 { 1.0 } else { -1.0 } - mean[j];
                    cov[i * n + j] += p * xi * xj;
                }
            }
        }
        cov
    }
}

/// `⟨w, x⟩` for the atom with index `idx`.
#[inline]
pub(crate) fn dot_signs(w: &[f64], idx: usize) -> f64 {
    w.iter()
        .enumerate()
        .map(|(i, &v)| if idx >> i & 1 == 1 { v } else { -v })
        .sum()
}

/// A tilt vector in `(ℝ ∪ {±∞})^n`. Finite entries beyond [`TILT_CAP`]
/// are stored as infinities.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedTiltVector(Vec<f64>);

impl ExtendedTiltVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidInput("tilt entries must not be NaN".into()));
        }
        Ok(Self(
            entries
                .into_iter()
                .map(|v| {
                    if v > TILT_CAP {
                        f64::INFINITY
                    } else if v < -TILT_CAP {
                        f64::NEG_INFINITY
                    } else {
                        v
                    }
                })
                .collect(),
        ))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}
