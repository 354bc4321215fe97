//! Executes one experiment and collects its metrics.

use std::path::Path;
use std::sync::Arc;

use serde_json::{json, Value};

use parlang::diagnostics::{discrete_tv, empirical_gaussian_fit, gaussian_kl, gaussian_w2, pinsker_tv_bound, GaussianFit};
use parlang::discrete::{InnerSchedule, LocalizationSampler};
use parlang::score::perturb_score;
use parlang::*;

use crate::config::{ExperimentConfig, Mode, TargetSpec};
use crate::report::{residual_rows, Bound, MetricRow, ResidualRow};
use crate::suite;

pub const LMC_FORMULAS: &[&str] = &[
    "h = 1/(10 beta)",
    "delta = 2 sqrt(alpha) epsilon",
    "M = ceil(7 max{kappa d / epsilon^2, kappa^2})",
    "K = ceil(3 ln M)",
    "N = ceil(10 kappa ln(max{d ln kappa, e} / epsilon^2))  [default start]",
    "N = ceil(ln(2 KL0 / epsilon^2) / (alpha h))  [explicit KL0]",
];

pub const ULMC_FORMULAS: &[&str] = &[
    "h = c_h / sqrt(beta)",
    "gamma = sqrt(8 beta)",
    "delta = c_delta sqrt(alpha) epsilon / sqrt(ln(d + 2))",
    "M = ceil(c_M sqrt(kappa d) ln(kappa d / epsilon^2 + e) / epsilon)",
    "K = ceil(c_K ln(kappa d / epsilon^2 + e))",
    "N = ceil(c_N kappa ln(d / epsilon^2 + e) ln(d + 2))",
];

pub const LOCALIZATION_FORMULAS: &[&str] = &[
    "T = ceil(t_constant c ln(n / epsilon + e))",
    "eta = budget_fraction epsilon / T",
    "inner target: alpha = 1/(2c), beta = 1/c, start N(0, cI), KL0 <= n/(2c)",
    "oracle accuracy: eps = ln(1 + delta c / (2 sqrt n)) / 2",
];

/// Everything a run produces besides timestamps.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub rows: Vec<MetricRow>,
    pub residuals: Vec<ResidualRow>,
    /// Resolved schedules and other run facts for the manifest.
    pub details: serde_json::Map<String, Value>,
}

impl RunOutput {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

pub fn execute(cfg: &ExperimentConfig, base: &Path) -> anyhow::Result<RunOutput> {
    match cfg.mode {
        Mode::ContinuousLmc => continuous(cfg, Sampler::Lmc),
        Mode::ContinuousUlmc => continuous(cfg, Sampler::Ulmc),
        Mode::Bench => bench(cfg),
        Mode::Discrete => discrete(cfg, base),
        Mode::Verify => {
            let mut out = RunOutput { rows: suite::run(cfg.seed)?, ..Default::default() };
            out.details.insert("suite".into(), json!("default"));
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sampler {
    Lmc,
    Ulmc,
}

impl Sampler {
    fn name(self) -> &'static str {
        match self {
            Sampler::Lmc => "lmc",
            Sampler::Ulmc => "ulmc",
        }
    }
}

fn origin_json(origin: &ScheduleOrigin) -> Value {
    match origin {
        ScheduleOrigin::Planner => json!("planner"),
        ScheduleOrigin::Override { acknowledged } => json!({ "override": { "acknowledged": acknowledged } }),
    }
}

pub fn lmc_json(s: &GridSchedule) -> Value {
    json!({
        "h": s.h, "M": s.substeps, "K": s.depth, "N": s.outer_steps,
        "delta": s.delta, "epsilon": s.epsilon,
        "rounds": s.rounds(), "evaluations": s.evaluations(),
        "origin": origin_json(&s.origin),
    })
}

pub fn ulmc_json(s: &UlmcSchedule) -> Value {
    json!({
        "h": s.h, "M": s.substeps, "K": s.depth, "N": s.outer_steps,
        "delta": s.delta, "epsilon": s.epsilon, "gamma": s.gamma,
        "constants": {
            "c_h": s.constants.c_h, "c_delta": s.constants.c_delta,
            "c_M": s.constants.c_m, "c_K": s.constants.c_k, "c_N": s.constants.c_n,
        },
        "rounds": s.rounds(), "evaluations": s.evaluations(),
        "origin": origin_json(&s.origin),
    })
}

fn acknowledged<T>(cfg: &ExperimentConfig, s: T, ack: impl FnOnce(T) -> T) -> T {
    if cfg.schedule.acknowledge {
        ack(s)
    } else {
        s
    }
}

fn plan_lmc(cfg: &ExperimentConfig, t: &TargetModel, eps: f64) -> parlang::Result<GridSchedule> {
    let s = plan_lmc_params(t.alpha(), t.beta(), t.dim(), eps, InitialKl::Default)?
        .with_overrides(&cfg.schedule.overrides())?;
    Ok(acknowledged(cfg, s, GridSchedule::acknowledge))
}

fn plan_ulmc(cfg: &ExperimentConfig, t: &TargetModel, eps: f64) -> parlang::Result<UlmcSchedule> {
    let s = plan_ulmc_params(t.alpha(), t.beta(), t.dim(), eps, cfg.ulmc.constants())?
        .with_overrides(&cfg.schedule.overrides())?;
    Ok(acknowledged(cfg, s, UlmcSchedule::acknowledge))
}

fn oracle_for(cfg: &ExperimentConfig, t: &TargetModel, planner_delta: f64) -> parlang::Result<ScoreOracle> {
    let exact = t.exact_oracle();
    let delta = if cfg.oracle.planner_delta { planner_delta } else { cfg.oracle.delta };
    if delta > 0.0 {
        perturb_score(&exact, delta, cfg.oracle.seed)
    } else {
        Ok(exact)
    }
}

/// Exact law of a Gaussian target.
fn exact_law(spec: &TargetSpec) -> Option<GaussianFit> {
    match spec {
        TargetSpec::Gaussian { mean, precision } => {
            let var: Vec<f64> = precision.iter().map(|p| 1.0 / p).collect();
            GaussianFit::diagonal(mean, &var).ok()
        }
        TargetSpec::Mixture { .. } => None,
    }
}

fn accounting_rows(module: &str, ledger: LedgerCounts, rounds: u64, evaluations: u64) -> Vec<MetricRow> {
    let anchor = format!("{module}.round_accounting");
    vec![
        MetricRow::new(module, &anchor, "rounds", ledger.rounds as f64, Bound::Equals(rounds as f64)),
        MetricRow::new(module, &anchor, "evaluations", ledger.evaluations as f64, Bound::Equals(evaluations as f64)),
    ]
}

fn sample_rows(cfg: &ExperimentConfig, module: &str, samples: &[Vec<f64>]) -> anyhow::Result<Vec<MetricRow>> {
    let spec = cfg.target.as_ref().expect("validated");
    let mut rows = Vec::new();
    let anchor = format!("{module}.kl_guarantee");
    let fit = empirical_gaussian_fit(samples)?;
    if let Some(law) = exact_law(spec) {
        let kl = gaussian_kl(&fit, &law)?;
        let kl_bound = cfg.assertions.kl_max.map_or(Bound::None, Bound::AtMost);
        rows.push(MetricRow::new(module, &anchor, "gaussian_fit_kl", kl, kl_bound));
        let tv_bound = cfg.assertions.tv_max.map_or(Bound::None, Bound::AtMost);
        rows.push(MetricRow::new(module, &anchor, "pinsker_tv_bound", pinsker_tv_bound(kl)?, tv_bound));
        let w2_bound = cfg.assertions.w2_max.map_or(Bound::None, Bound::AtMost);
        rows.push(MetricRow::new(module, &anchor, "gaussian_fit_w2", gaussian_w2(&fit, &law)?, w2_bound));
    } else {
        for (i, m) in fit.mean().iter().enumerate() {
            rows.push(MetricRow::new(module, &anchor, &format!("sample_mean_{i}"), *m, Bound::None));
        }
    }
    Ok(rows)
}

fn continuous(cfg: &ExperimentConfig, sampler: Sampler) -> anyhow::Result<RunOutput> {
    let target = cfg.target.as_ref().expect("validated").build()?;
    let eps = cfg.epsilon.expect("validated");
    let module = sampler.name();
    let mut out = RunOutput::default();
    let run = match sampler {
        Sampler::Lmc => {
            let s = plan_lmc(cfg, &target, eps)?;
            let oracle = oracle_for(cfg, &target, s.delta)?;
            out.details.insert("schedule".into(), lmc_json(&s));
            out.details.insert("formulas".into(), json!(LMC_FORMULAS));
            out.details.insert("oracle_delta".into(), json!(oracle.delta()));
            let run = run_parallel_lmc(&target, &oracle, &s, &Initialization::TargetDefault, cfg.replicas, cfg.seed)?;
            out.rows.extend(accounting_rows(module, run.ledger, s.rounds(), s.evaluations()));
            run
        }
        Sampler::Ulmc => {
            let s = plan_ulmc(cfg, &target, eps)?;
            let oracle = oracle_for(cfg, &target, s.delta)?;
            out.details.insert("schedule".into(), ulmc_json(&s));
            out.details.insert("formulas".into(), json!(ULMC_FORMULAS));
            out.details.insert("oracle_delta".into(), json!(oracle.delta()));
            let run = run_parallel_ulmc(&target, &oracle, &s, &Initialization::TargetDefault, cfg.replicas, cfg.seed)?;
            out.rows.extend(accounting_rows(module, run.ledger, s.rounds(), s.evaluations()));
            run
        }
    };
    out.details.insert("target".into(), json!({
        "name": target.name(), "dim": target.dim(), "alpha": target.alpha(), "beta": target.beta(),
    }));
    out.rows.extend(sample_rows(cfg, module, &run.samples)?);
    if cfg.residuals {
        out.residuals = residual_rows(module, &run.residuals);
    }
    Ok(out)
}

fn bench(cfg: &ExperimentConfig) -> anyhow::Result<RunOutput> {
    let target = cfg.target.as_ref().expect("validated").build()?;
    let eps = cfg.epsilon.expect("validated");
    let mut out = RunOutput::default();
    let init = Initialization::TargetDefault;

    let lmc = plan_lmc(cfg, &target, eps)?;
    let run = run_parallel_lmc(&target, &target.exact_oracle(), &lmc, &init, cfg.replicas, cfg.seed)?;
    out.rows.extend(accounting_rows("lmc", run.ledger, lmc.rounds(), lmc.evaluations()));
    if cfg.residuals {
        out.residuals.extend(residual_rows("lmc", &run.residuals));
    }

    let ulmc = plan_ulmc(cfg, &target, eps)?;
    let run = run_parallel_ulmc(&target, &target.exact_oracle(), &ulmc, &init, cfg.replicas, cfg.seed)?;
    out.rows.extend(accounting_rows("ulmc", run.ledger, ulmc.rounds(), ulmc.evaluations()));
    if cfg.residuals {
        out.residuals.extend(residual_rows("ulmc", &run.residuals));
    }

    // ordering of the untouched planner schedules
    let (a, b, d) = (target.alpha(), target.beta(), target.dim());
    let p_lmc = plan_lmc_params(a, b, d, eps, InitialKl::Default)?;
    let p_ulmc = plan_ulmc_params(a, b, d, eps, cfg.ulmc.constants())?;
    let anchor = "ulmc.efficiency_ordering";
    out.rows.push(MetricRow::new("ulmc", anchor, "planner_substeps_ulmc", p_ulmc.substeps as f64, Bound::AtMost(p_lmc.substeps as f64 - 1.0)));
    out.rows.push(MetricRow::new("ulmc", anchor, "planner_evaluations_ulmc", p_ulmc.evaluations() as f64, Bound::AtMost(p_lmc.evaluations() as f64 - 1.0)));
    out.rows.push(MetricRow::new("lmc", anchor, "planner_evaluations_lmc", p_lmc.evaluations() as f64, Bound::None));

    out.details.insert("schedules".into(), json!({ "lmc": lmc_json(&lmc), "ulmc": ulmc_json(&ulmc) }));
    out.details.insert("planner_schedules".into(), json!({ "lmc": lmc_json(&p_lmc), "ulmc": ulmc_json(&p_ulmc) }));
    out.details.insert("formulas".into(), json!({ "lmc": LMC_FORMULAS, "ulmc": ULMC_FORMULAS }));
    Ok(out)
}

fn discrete(cfg: &ExperimentConfig, base: &Path) -> anyhow::Result<RunOutput> {
    let spec = cfg.distribution.as_ref().expect("validated");
    let eps = cfg.epsilon.expect("validated");
    let mu = spec.build(base)?;
    let n = mu.n();
    let loc = cfg.localization.config(eps, &cfg.schedule, &cfg.ulmc);
    let oracle = cfg.localization.oracle(spec.exact_oracle(&mu), &loc)?;
    let sampler = LocalizationSampler::new(Arc::clone(&oracle), loc.clone())?;
    let runs = cfg.localization.runs;

    let mut out = RunOutput::default();
    let schedule = match sampler.schedule() {
        InnerSchedule::Lmc(s) => lmc_json(s),
        InnerSchedule::Ulmc(s) => ulmc_json(s),
    };
    out.details.insert("inner_schedule".into(), schedule);
    out.details.insert("localization".into(), json!({
        "n": n, "c": loc.c, "epsilon": eps, "T": sampler.steps(),
        "eta": loc.inner_accuracy(n), "oracle_eps": oracle.eps(),
        "tolerated_oracle_eps": loc.oracle_accuracy(n)?, "runs": runs,
    }));
    out.details.insert("formulas".into(), json!(LOCALIZATION_FORMULAS));

    let counts = sampler.histogram(runs, cfg.seed)?;
    let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / runs as f64).collect();
    let tv = discrete_tv(&empirical, &mu.probabilities())?;
    let tv_max = cfg.assertions.tv_max.unwrap_or(eps);
    out.rows.push(MetricRow::new("discrete", "discrete.localization_tv", "empirical_tv", tv, Bound::AtMost(tv_max)));
    out.rows.push(MetricRow::new(
        "discrete",
        "discrete.coupling_budget",
        "inner_tv_budget",
        loc.coupling_budget(n),
        Bound::AtMost(eps / 2.0 * (1.0 + 1e-12)),
    ));
    let one = sampler.sample(LocalizationSampler::run_seed(cfg.seed, 0))?;
    let t = sampler.steps() as u64;
    let (rounds, evals) = (sampler.schedule().rounds(), sampler.schedule().evaluations());
    out.rows.extend(accounting_rows("discrete", one.score_ledger, t * rounds, t * evals));
    out.rows.push(MetricRow::new(
        "discrete",
        "discrete.laplace_batching",
        "laplace_calls",
        one.laplace_ledger.evaluations as f64,
        Bound::Equals(((n + 1) as u64 * t * evals) as f64),
    ));
    Ok(out)
}
