//! Seeded Monte Carlo sweeps over the market size.
//!
//! Run `r` of every sweep point uses seed `base_seed + r`, so points and
//! cost models are paired on the same random stream. Runs are executed on
//! the rayon pool and reduced in `(value, cost model, baseline, run)` order,
//! which makes the output independent of scheduling.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MarketError, Result};
use crate::mechanism::{
    run_greedy, run_market, MechanismConfig, MechanismTrace, StopReason, TraceDetail,
};
use crate::scenario::{generate, CostModel, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    NumAggregators,
    NumBuyers,
}

impl SweepVariable {
    pub fn column_name(&self) -> &'static str {
        match self {
            SweepVariable::NumAggregators => "n_aggregators",
            SweepVariable::NumBuyers => "n_buyers",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    TwoLayer,
    Greedy,
}

impl Baseline {
    pub fn as_str(&self) -> &'static str {
        match self {
            Baseline::TwoLayer => "two_layer",
            Baseline::Greedy => "greedy",
        }
    }

    pub fn parse(s: &str) -> Option<Baseline> {
        match s {
            "two_layer" | "two-layer" | "twolayer" => Some(Baseline::TwoLayer),
            "greedy" => Some(Baseline::Greedy),
            _ => None,
        }
    }

    /// Runs this baseline on a generated instance.
    pub fn run(
        &self,
        config: &ScenarioConfig,
        mechanism: &MechanismConfig,
    ) -> Result<MechanismTrace<f64>> {
        let instance = generate::<f64>(config)?;
        match self {
            Baseline::TwoLayer => run_market(&instance.buyers, &instance.aggregators, mechanism),
            Baseline::Greedy => run_greedy(&instance.buyers, &instance.aggregators),
        }
    }
}

fn default_baselines() -> Vec<Baseline> {
    vec![Baseline::TwoLayer, Baseline::Greedy]
}

/// Sweep description, loadable from TOML:
///
/// ```toml
/// variable = "num_aggregators"
/// values = [2, 3, 4]
/// runs_per_point = 100
/// baselines = ["two_layer", "greedy"]
/// cost_models = ["linear", "quadratic"]
///
/// [scenario]
/// n_buyers = 5
/// seed = 1
///
/// [mechanism]
/// t_max = 50
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<usize>,
    pub runs_per_point: usize,
    #[serde(default, rename = "scenario")]
    pub base_config: ScenarioConfig,
    #[serde(default, rename = "mechanism")]
    pub mechanism_config: MechanismConfig,
    #[serde(default = "default_baselines")]
    pub baselines: Vec<Baseline>,
    /// Cost models to sweep; empty means the scenario's own cost model.
    #[serde(default)]
    pub cost_models: Vec<CostModel>,
}

impl SweepSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: SweepSpec =
            toml::from_str(text).map_err(|e| MarketError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| MarketError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(MarketError::param(
                "values",
                "sweep needs at least one value",
            ));
        }
        if self.values.contains(&0) {
            return Err(MarketError::param(
                "values",
                "market sizes must be at least 1",
            ));
        }
        if self.runs_per_point < 1 {
            return Err(MarketError::param("runs_per_point", "must be at least 1"));
        }
        if self.baselines.is_empty() {
            return Err(MarketError::param(
                "baselines",
                "select at least one baseline",
            ));
        }
        self.base_config.validate()?;
        self.mechanism_config.validate()?;
        for &model in &self.effective_cost_models() {
            self.point_config(self.values[0], model, 0).validate()?;
        }
        Ok(())
    }

    pub fn effective_cost_models(&self) -> Vec<CostModel> {
        if self.cost_models.is_empty() {
            vec![self.base_config.cost_model]
        } else {
            self.cost_models.clone()
        }
    }

    /// Scenario for one run of one sweep point.
    pub fn point_config(&self, value: usize, cost_model: CostModel, run: usize) -> ScenarioConfig {
        let mut config = self.base_config.clone();
        match self.variable {
            SweepVariable::NumAggregators => config.n_aggregators = value,
            SweepVariable::NumBuyers => config.n_buyers = value,
        }
        config.cost_model = cost_model;
        config.seed = self.base_config.seed.wrapping_add(run as u64);
        config
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub value: usize,
    pub cost_model: CostModel,
    pub baseline: Baseline,
    pub run: usize,
    pub seed: u64,
    pub mean_utility: f64,
    pub final_price: Option<f64>,
    pub iterations: usize,
    pub stop_reason: StopReason,
}

impl RunResult {
    pub fn converged(&self) -> bool {
        self.stop_reason == StopReason::PriceConverged
    }
}

/// Aggregate statistics of one `(value, cost model, baseline)` cell.
/// Standard deviations are population deviations (zero for a single run).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: usize,
    pub cost_model: CostModel,
    pub baseline: Baseline,
    pub runs: usize,
    pub mean_utility: f64,
    pub std_utility: f64,
    /// Over runs that produced a price; `None` if none did.
    pub mean_price: Option<f64>,
    pub std_price: Option<f64>,
    pub mean_iterations: f64,
    pub std_iterations: f64,
    /// Mean final price over runs that stopped on price convergence.
    pub mean_converged_price: Option<f64>,
    pub converged_fraction: f64,
    /// Runs that stopped before hitting `t_max`, for any reason.
    pub terminated_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub variable: SweepVariable,
    pub runs: Vec<RunResult>,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn row(
        &self,
        value: usize,
        cost_model: CostModel,
        baseline: Baseline,
    ) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.value == value && r.cost_model == cost_model && r.baseline == baseline)
    }
}

fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

fn summarise(
    value: usize,
    cost_model: CostModel,
    baseline: Baseline,
    runs: &[RunResult],
) -> SweepRow {
    let utilities: Vec<f64> = runs.iter().map(|r| r.mean_utility).collect();
    let prices: Vec<f64> = runs.iter().filter_map(|r| r.final_price).collect();
    let iterations: Vec<f64> = runs.iter().map(|r| r.iterations as f64).collect();
    let converged: Vec<f64> = runs
        .iter()
        .filter(|r| r.converged())
        .filter_map(|r| r.final_price)
        .collect();
    let n = runs.len() as f64;
    let (mean_utility, std_utility) = mean_std(&utilities).unwrap_or((0.0, 0.0));
    let (mean_iterations, std_iterations) = mean_std(&iterations).unwrap_or((0.0, 0.0));
    let price_stats = mean_std(&prices);
    SweepRow {
        value,
        cost_model,
        baseline,
        runs: runs.len(),
        mean_utility,
        std_utility,
        mean_price: price_stats.map(|p| p.0),
        std_price: price_stats.map(|p| p.1),
        mean_iterations,
        std_iterations,
        mean_converged_price: mean_std(&converged).map(|p| p.0),
        converged_fraction: runs.iter().filter(|r| r.converged()).count() as f64 / n,
        terminated_fraction: runs
            .iter()
            .filter(|r| r.stop_reason != StopReason::MaxIterations)
            .count() as f64
            / n,
    }
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let mechanism = MechanismConfig {
        trace_detail: TraceDetail::FinalIteration,
        ..spec.mechanism_config
    };
    let models = spec.effective_cost_models();
    let mut jobs = Vec::new();
    for &value in &spec.values {
        for &model in &models {
            for run in 0..spec.runs_per_point {
                jobs.push((value, model, run));
            }
        }
    }

    let per_job: Vec<Vec<RunResult>> = jobs
        .par_iter()
        .map(|&(value, cost_model, run)| {
            let config = spec.point_config(value, cost_model, run);
            let instance = generate::<f64>(&config)?;
            spec.baselines
                .iter()
                .map(|&baseline| {
                    let trace = match baseline {
                        Baseline::TwoLayer => {
                            run_market(&instance.buyers, &instance.aggregators, &mechanism)?
                        }
                        Baseline::Greedy => run_greedy(&instance.buyers, &instance.aggregators)?,
                    };
                    Ok(RunResult {
                        value,
                        cost_model,
                        baseline,
                        run,
                        seed: config.seed,
                        mean_utility: trace.mean_utility_per_aggregator(),
                        final_price: trace.final_price(),
                        iterations: trace.iterations_run(),
                        stop_reason: trace.stop_reason,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut runs: Vec<RunResult> = per_job.into_iter().flatten().collect();
    let model_rank = |m: CostModel| models.iter().position(|x| *x == m).unwrap_or(usize::MAX);
    let value_rank = |v: usize| {
        spec.values
            .iter()
            .position(|x| *x == v)
            .unwrap_or(usize::MAX)
    };
    let baseline_rank = |b: Baseline| {
        spec.baselines
            .iter()
            .position(|x| *x == b)
            .unwrap_or(usize::MAX)
    };
    runs.sort_by_key(|r| {
        (
            value_rank(r.value),
            model_rank(r.cost_model),
            baseline_rank(r.baseline),
            r.run,
        )
    });

    let mut rows = Vec::new();
    for &value in &spec.values {
        for &model in &models {
            for &baseline in &spec.baselines {
                let cell: Vec<RunResult> = runs
                    .iter()
                    .filter(|r| r.value == value && r.cost_model == model && r.baseline == baseline)
                    .cloned()
                    .collect();
                rows.push(summarise(value, model, baseline, &cell));
            }
        }
    }
    Ok(SweepResult {
        variable: spec.variable,
        runs,
        rows,
    })
}
