//! Experiment configuration (TOML).
//!
//! ```toml
//! mode = "continuous-lmc"
//! seed = 7
//! epsilon = 0.3
//! replicas = 10000
//!
//! [target]
//! kind = "gaussian"
//! mean = [0.0, 0.0]
//! precision = [1.0, 4.0]
//!
//! [schedule]
//! max_substeps = 256
//! acknowledge = true
//!
//! [assert]
//! kl_max = 0.11
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use parlang::discrete::{
    approximate_wrapper, make_enum_oracle, make_product_oracle, HypercubeDistribution, InnerSampler,
    LaplaceOracle, LocalizationConfig,
};
use parlang::score::{make_gaussian_mixture_target, make_gaussian_target};
use parlang::{ScheduleOverrides, TargetModel, UlmcConstants};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    ContinuousLmc,
    ContinuousUlmc,
    Discrete,
    Verify,
    Bench,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    pub epsilon: Option<f64>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    pub out: Option<PathBuf>,
    /// Write the replica-averaged Picard residuals to `residuals.csv`.
    #[serde(default)]
    pub residuals: bool,
    pub target: Option<TargetSpec>,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub ulmc: UlmcSpec,
    pub distribution: Option<DistributionSpec>,
    #[serde(default)]
    pub localization: LocalizationSpec,
    #[serde(default, rename = "assert")]
    pub assertions: Assertions,
}

fn default_replicas() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetSpec {
    Gaussian { mean: Vec<f64>, precision: Vec<f64> },
    Mixture { centers: Vec<Vec<f64>>, radius: f64, noise_scale: f64 },
}

impl TargetSpec {
    pub fn build(&self) -> parlang::Result<TargetModel> {
        match self {
            TargetSpec::Gaussian { mean, precision } => make_gaussian_target(mean, precision),
            TargetSpec::Mixture { centers, radius, noise_scale } => {
                make_gaussian_mixture_target(centers, *radius, *noise_scale)
            }
        }
    }
}

/// Perturbation applied on top of the exact score.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    #[serde(default)]
    pub delta: f64,
    /// Use `2√α·ε`, the largest error the planner tolerates.
    #[serde(default)]
    pub planner_delta: bool,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub h: Option<f64>,
    pub substeps: Option<usize>,
    pub depth: Option<usize>,
    pub outer_steps: Option<usize>,
    pub delta: Option<f64>,
    pub max_substeps: Option<usize>,
    pub max_depth: Option<usize>,
    pub max_outer_steps: Option<usize>,
    /// Required whenever any other field is set.
    #[serde(default)]
    pub acknowledge: bool,
}

impl ScheduleSpec {
    pub fn overrides(&self) -> ScheduleOverrides {
        ScheduleOverrides {
            h: self.h,
            substeps: self.substeps,
            depth: self.depth,
            outer_steps: self.outer_steps,
            delta: self.delta,
            max_substeps: self.max_substeps,
            max_depth: self.max_depth,
            max_outer_steps: self.max_outer_steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UlmcSpec {
    #[serde(default = "UlmcSpec::c_h")]
    pub c_h: f64,
    #[serde(default = "UlmcSpec::c_delta")]
    pub c_delta: f64,
    #[serde(default = "UlmcSpec::c_4")]
    pub c_m: f64,
    #[serde(default = "UlmcSpec::c_4")]
    pub c_k: f64,
    #[serde(default = "UlmcSpec::c_4")]
    pub c_n: f64,
}

impl UlmcSpec {
    fn c_h() -> f64 {
        UlmcConstants::default().c_h
    }
    fn c_delta() -> f64 {
        UlmcConstants::default().c_delta
    }
    fn c_4() -> f64 {
        4.0
    }

    pub fn constants(&self) -> UlmcConstants {
        UlmcConstants {
            c_h: self.c_h,
            c_delta: self.c_delta,
            c_m: self.c_m,
            c_k: self.c_k,
            c_n: self.c_n,
        }
    }
}

impl Default for UlmcSpec {
    fn default() -> Self {
        let c = UlmcConstants::default();
        Self { c_h: c.c_h, c_delta: c.c_delta, c_m: c.c_m, c_k: c.c_k, c_n: c.c_n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DistributionSpec {
    Uniform { n: usize },
    Product { p: Vec<f64> },
    /// `signs logweight` rows; relative paths resolve against the config file.
    Table { path: PathBuf },
    Pointmass { signs: String },
}

impl DistributionSpec {
    pub fn build(&self, base: &Path) -> anyhow::Result<HypercubeDistribution> {
        Ok(match self {
            DistributionSpec::Uniform { n } => HypercubeDistribution::uniform(*n)?,
            DistributionSpec::Product { p } => HypercubeDistribution::product(p)?,
            DistributionSpec::Table { path } => {
                let path = base.join(path);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| anyhow::anyhow!("cannot read table {}: {e}", path.display()))?;
                HypercubeDistribution::parse_table(&text)?
            }
            DistributionSpec::Pointmass { signs } => {
                HypercubeDistribution::point_mass(&parlang::discrete::parse_signs(signs)?)?
            }
        })
    }

    /// Exact oracle: closed form for interior products, enumeration otherwise.
    pub fn exact_oracle(&self, mu: &HypercubeDistribution) -> std::sync::Arc<dyn LaplaceOracle> {
        match self {
            DistributionSpec::Product { p } if p.iter().all(|v| *v > 0.0 && *v < 1.0) => {
                std::sync::Arc::new(make_product_oracle(p).expect("checked"))
            }
            _ => std::sync::Arc::new(make_enum_oracle(mu.clone())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerKind {
    #[default]
    Lmc,
    Ulmc,
}

/// How the Laplace oracle errs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OracleAccuracy {
    /// `"configured"`: the largest error the inner schedule tolerates.
    Named(ConfiguredAccuracy),
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfiguredAccuracy {
    Configured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizationSpec {
    #[serde(default = "LocalizationSpec::c")]
    pub c: f64,
    #[serde(default = "LocalizationSpec::t_constant")]
    pub t_constant: f64,
    #[serde(default = "LocalizationSpec::budget_fraction")]
    pub budget_fraction: f64,
    #[serde(default)]
    pub sampler: InnerKind,
    #[serde(default = "LocalizationSpec::runs")]
    pub runs: usize,
    pub oracle_eps: Option<OracleAccuracy>,
    #[serde(default)]
    pub oracle_seed: u64,
}

impl LocalizationSpec {
    fn c() -> f64 {
        2.0
    }
    fn t_constant() -> f64 {
        4.0
    }
    fn budget_fraction() -> f64 {
        0.5
    }
    fn runs() -> usize {
        10_000
    }

    pub fn config(&self, epsilon: f64, schedule: &ScheduleSpec, ulmc: &UlmcSpec) -> LocalizationConfig {
        LocalizationConfig {
            c: self.c,
            epsilon,
            t_constant: self.t_constant,
            budget_fraction: self.budget_fraction,
            sampler: match self.sampler {
                InnerKind::Lmc => InnerSampler::Lmc,
                InnerKind::Ulmc => InnerSampler::Ulmc(ulmc.constants()),
            },
            overrides: schedule.overrides(),
            acknowledge_overrides: schedule.acknowledge,
        }
    }

    /// Wraps `exact` at the requested accuracy.
    pub fn oracle(
        &self,
        exact: std::sync::Arc<dyn LaplaceOracle>,
        config: &LocalizationConfig,
    ) -> parlang::Result<std::sync::Arc<dyn LaplaceOracle>> {
        let eps = match self.oracle_eps {
            None => return Ok(exact),
            Some(OracleAccuracy::Value(v)) => v,
            Some(OracleAccuracy::Named(ConfiguredAccuracy::Configured)) => {
                config.oracle_accuracy(exact.n())?
            }
        };
        Ok(std::sync::Arc::new(approximate_wrapper(exact, eps, self.oracle_seed)?))
    }
}

impl Default for LocalizationSpec {
    fn default() -> Self {
        Self {
            c: Self::c(),
            t_constant: Self::t_constant(),
            budget_fraction: Self::budget_fraction(),
            sampler: InnerKind::Lmc,
            runs: Self::runs(),
            oracle_eps: None,
            oracle_seed: 0,
        }
    }
}

/// Thresholds checked after a run; unset ones are reported without a bound.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assertions {
    pub kl_max: Option<f64>,
    pub tv_max: Option<f64>,
    pub w2_max: Option<f64>,
}

/// A config that failed to parse or validate.
#[derive(Debug)]
pub struct SchemaError(pub String);

impl std::fmt::Display for SchemaError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for SchemaError {}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, SchemaError> {
        let cfg: Self = toml::from_str(text).map_err(|e| SchemaError(format!("{origin}: {e}")))?;
        cfg.validate().map_err(|e| SchemaError(format!("{origin}: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SchemaError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SchemaError(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    fn validate(&self) -> Result<(), String> {
        let needs_eps = matches!(self.mode, Mode::ContinuousLmc | Mode::ContinuousUlmc | Mode::Discrete | Mode::Bench);
        match self.epsilon {
            None if needs_eps => return Err("field `epsilon` is required for this mode".into()),
            Some(e) if !(e > 0.0 && e < 1.0) => return Err(format!("field `epsilon` must lie in (0, 1), got {e}")),
            _ => {}
        }
        match self.mode {
            Mode::ContinuousLmc | Mode::ContinuousUlmc | Mode::Bench => {
                if self.target.is_none() {
                    return Err("table `[target]` is required for this mode".into());
                }
                if self.replicas == 0 {
                    return Err("field `replicas` must be at least 1".into());
                }
            }
            Mode::Discrete => {
                if self.distribution.is_none() {
                    return Err("table `[distribution]` is required for discrete mode".into());
                }
                if self.localization.runs == 0 {
                    return Err("field `localization.runs` must be at least 1".into());
                }
            }
            Mode::Verify => {}
        }
        let overridden = !self.schedule.overrides().is_empty();
        if overridden && !self.schedule.acknowledge {
            return Err("`[schedule]` overrides need `acknowledge = true`".into());
        }
        if self.oracle.delta < 0.0 {
            return Err("field `oracle.delta` must be >= 0".into());
        }
        Ok(())
    }

    /// Whether the schedule departs from the planner.
    pub fn desk_override(&self) -> bool {
        !self.schedule.overrides().is_empty()
    }
}
