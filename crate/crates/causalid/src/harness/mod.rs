//! The experiment runner: wires an environment, the estimator, and a
//! policy into the online identification loop, manages seeds, and emits
//! CSV results, sweep tables, correlation matrices, and plots.
//!
//! Per step and seed the loop is: fit the belief, record the loss against
//! the truth oracle, select an intervention, collect M samples, push them
//! into the (optionally FIFO) dataset, and advance time.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::envs::{make_illustrative_env, make_mesh_env, EnvError, Environment};
use crate::estimator::{
    build_grids, fit_belief, loss_by_var, EstimatorError, GridSettings, KernelMap,
};
use crate::policy::{
    rollout_policy_step, CandidateEval, CostModel, PassivePolicy, PolicyContext, PolicyError,
    RolloutConfig,
};
use crate::scm::{Dataset, Intervention, Sample, VarId};
use crate::seeds;

mod config;
pub mod corr;
pub mod plot;

pub use config::{ExperimentConfig, PolicyChoice};
pub use corr::{emit_correlation, CorrelationMatrix};
pub use plot::{curve_from_records, curves_from_csv, curves_to_csv, emit_plots, LossCurve};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown environment `{0}`")]
    UnknownEnvironment(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Gp(#[from] crate::gp::GpError),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One row of experiment output.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub seed: u64,
    pub t: u64,
    /// Dataset size at fit time (before this step's push).
    pub dataset_size: usize,
    pub loss_total: f64,
    pub surrogate_loss: f64,
    /// Σ_{k≤t} γ^{k−1}·((𝓛_k − 𝓛_{k−1}) + c(u_k)) with 𝓛_0 ≜ 𝓛_1: the
    /// realized discounted cost stream, recomputable from the row stream.
    pub cumulative_cost: f64,
    pub intervention: Intervention,
    pub wallclock_ms: f64,
}

pub const RUN_CSV_HEADER: &str =
    "seed,t,dataset_size,loss_total,surrogate_loss,cumulative_cost,intervention_kind,intervention_values,wallclock_ms";

impl RunRecord {
    pub fn intervention_kind(&self) -> String {
        if self.intervention.is_passive() {
            "passive".to_string()
        } else {
            self.intervention
                .assignments
                .keys()
                .cloned()
                .collect::<Vec<_>>()
                .join("+")
        }
    }

    pub fn intervention_values(&self) -> String {
        self.intervention
            .assignments
            .values()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.seed,
            self.t,
            self.dataset_size,
            self.loss_total,
            self.surrogate_loss,
            self.cumulative_cost,
            self.intervention_kind(),
            self.intervention_values(),
            self.wallclock_ms
        )
    }
}

pub fn records_to_csv(records: &[RunRecord]) -> String {
    let mut out = String::from(RUN_CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

/// Parses a records CSV produced by [`records_to_csv`] (losses only; the
/// intervention is reduced to its kind for plotting purposes).
pub fn records_from_csv(text: &str) -> Result<Vec<RunRecord>, HarnessError> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if ln == 0 || line.is_empty() {
            continue;
        }
        let p: Vec<&str> = line.split(',').collect();
        if p.len() != 9 {
            return Err(HarnessError::Config(format!(
                "records csv line {}: expected 9 columns, got {}",
                ln + 1,
                p.len()
            )));
        }
        let parse_f = |s: &str| -> Result<f64, HarnessError> {
            s.parse()
                .map_err(|e| HarnessError::Config(format!("line {}: {e}", ln + 1)))
        };
        out.push(RunRecord {
            seed: p[0]
                .parse()
                .map_err(|e| HarnessError::Config(format!("line {}: {e}", ln + 1)))?,
            t: p[1]
                .parse()
                .map_err(|e| HarnessError::Config(format!("line {}: {e}", ln + 1)))?,
            dataset_size: p[2]
                .parse()
                .map_err(|e| HarnessError::Config(format!("line {}: {e}", ln + 1)))?,
            loss_total: parse_f(p[3])?,
            surrogate_loss: parse_f(p[4])?,
            cumulative_cost: parse_f(p[5])?,
            intervention: Intervention::passive(),
            wallclock_ms: parse_f(p[8])?,
        });
    }
    Ok(out)
}

/// Per-variable loss breakdown row: (seed, t, variable or "total", loss,
/// surrogate, training points).
#[derive(Debug, Clone)]
pub struct LossBreakdownRow {
    pub seed: u64,
    pub t: u64,
    pub var: String,
    pub loss: f64,
    pub surrogate: f64,
    pub n_train: usize,
}

/// Everything one experiment produces.
pub struct RunOutput {
    pub records: Vec<RunRecord>,
    pub breakdown: Vec<LossBreakdownRow>,
    pub policy_log: Vec<PolicyLogRow>,
    pub trace: Vec<TraceRow>,
    /// Mean per-step selection wall-clock in milliseconds (always measured,
    /// independent of the CSV wallclock column).
    pub mean_selection_ms: f64,
}

#[derive(Debug, Clone)]
pub struct PolicyLogRow {
    pub seed: u64,
    pub t: u64,
    pub candidate: String,
    pub values: String,
    pub objective: f64,
    pub chosen: bool,
    pub wallclock_ms: f64,
}

/// One (t, intervention, sample) trace row with a column per variable.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub seed: u64,
    pub t: u64,
    pub intervention_kind: String,
    pub values: BTreeMap<VarId, f64>,
}

fn make_env(name: &str, scenario: u32, seed: u64) -> Result<Environment, HarnessError> {
    match name {
        "illustrative" => Ok(make_illustrative_env(seed)),
        "mesh" => Ok(make_mesh_env(scenario, seed)?),
        other => Err(HarnessError::UnknownEnvironment(other.to_string())),
    }
}

/// Runs the configured experiment for every seed (in parallel; outputs are
/// ordered by the seed list) and writes CSV outputs when an output
/// directory is configured.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    let rollout_cfg = cfg.rollout.to_rollout_config();
    rollout_cfg.validate();
    let per_seed: Vec<Result<RunOutput, HarnessError>> = cfg
        .experiment
        .seeds
        .par_iter()
        .map(|&seed| run_single_seed(cfg, &rollout_cfg, seed))
        .collect();
    let mut records = Vec::new();
    let mut breakdown = Vec::new();
    let mut policy_log = Vec::new();
    let mut trace = Vec::new();
    let mut ms_acc = 0.0;
    let mut ms_n = 0usize;
    for result in per_seed {
        let out = result?;
        records.extend(out.records);
        breakdown.extend(out.breakdown);
        policy_log.extend(out.policy_log);
        trace.extend(out.trace);
        if out.mean_selection_ms > 0.0 {
            ms_acc += out.mean_selection_ms;
            ms_n += 1;
        }
    }
    let output = RunOutput {
        records,
        breakdown,
        policy_log,
        trace,
        mean_selection_ms: if ms_n > 0 { ms_acc / ms_n as f64 } else { 0.0 },
    };
    if let Some(dir) = &cfg.experiment.out_dir {
        write_outputs(&output, cfg, Path::new(dir))?;
    }
    Ok(output)
}

fn run_single_seed(
    cfg: &ExperimentConfig,
    rollout_cfg: &RolloutConfig,
    seed: u64,
) -> Result<RunOutput, HarnessError> {
    let env = make_env(
        &cfg.experiment.environment,
        cfg.experiment.scenario,
        seeds::derive(seed, "env"),
    )?;
    let graph = Arc::clone(env.graph());
    let grids = Arc::new(build_grids(
        &graph,
        env.measures(),
        GridSettings {
            one_d_points: cfg.grid.one_d_points,
            multi_d_points: cfg.grid.multi_d_points,
        },
    ));
    let kernels = match cfg.kernel.noise_variance {
        Some(v) => KernelMap::uniform(crate::gp::KernelSpec::new(v)?),
        None => KernelMap::from_noise_map(0.05, env.learner_noise())?,
    };
    let costs: CostModel = match &cfg.costs {
        Some(section) => {
            let mut c = CostModel::new(section.passive).with_fallback(section.fallback);
            for (id, v) in &section.per_variable {
                c.set(id, *v);
            }
            c
        }
        None => env.default_costs().clone(),
    };
    let exo = env.exo_model().clone();
    let ctx = PolicyContext {
        cfg: rollout_cfg,
        costs: &costs,
        exo: &exo,
    };

    let mut env = env;
    let mut dataset = Dataset::new(cfg.experiment.dataset_capacity);
    let mut records = Vec::new();
    let mut breakdown = Vec::new();
    let mut policy_log = Vec::new();
    let mut trace = Vec::new();
    let mut cumulative = 0.0;
    let mut discount_pow = 1.0;
    let mut prev_loss: Option<f64> = None;
    let mut selection_ms_acc = 0.0;
    let mut selections = 0usize;

    for t in 1..=cfg.experiment.horizon {
        let belief = fit_belief(&graph, &dataset, &kernels, &grids)?;
        let estimate = belief.point_estimate();
        let oracle = env.truth_oracle();
        let losses = loss_by_var(&estimate, &oracle, &grids)?;
        let loss_total: f64 = losses.values().sum();
        let surrogates = belief.surrogate_by_var();
        let surrogate_loss: f64 = surrogates.values().sum();

        for (var, loss) in &losses {
            breakdown.push(LossBreakdownRow {
                seed,
                t,
                var: var.clone(),
                loss: *loss,
                surrogate: surrogates[var],
                n_train: belief.var(var).map(|v| v.n_train()).unwrap_or(0),
            });
        }
        breakdown.push(LossBreakdownRow {
            seed,
            t,
            var: "total".into(),
            loss: loss_total,
            surrogate: surrogate_loss,
            n_train: dataset.len(),
        });

        let started = Instant::now();
        let (intervention, evals): (Intervention, Vec<CandidateEval>) =
            match cfg.experiment.policy {
                PolicyChoice::Passive => (Intervention::passive(), Vec::new()),
                PolicyChoice::Rollout => {
                    let decision = rollout_policy_step(
                        &ctx,
                        &belief,
                        &PassivePolicy,
                        seeds::derive_path(seed, "policy", &[t]),
                    )?;
                    (decision.chosen, decision.evaluations)
                }
            };
        let elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
        if cfg.experiment.policy == PolicyChoice::Rollout {
            selection_ms_acc += elapsed_ms;
            selections += 1;
        }
        for e in evals {
            policy_log.push(PolicyLogRow {
                seed,
                t,
                candidate: e.kind.label(),
                values: e
                    .values
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(";"),
                objective: e.objective,
                chosen: e.chosen,
                wallclock_ms: if cfg.experiment.record_wallclock {
                    e.wallclock_ms
                } else {
                    0.0
                },
            });
        }

        let delta = prev_loss.map(|p| loss_total - p).unwrap_or(0.0);
        cumulative += discount_pow * (delta + costs.cost(&intervention));
        prev_loss = Some(loss_total);

        records.push(RunRecord {
            seed,
            t,
            dataset_size: dataset.len(),
            loss_total,
            surrogate_loss,
            cumulative_cost: cumulative,
            intervention: intervention.clone(),
            wallclock_ms: if cfg.experiment.record_wallclock {
                elapsed_ms
            } else {
                0.0
            },
        });

        let samples: Vec<Sample> =
            env.env_step(&intervention, rollout_cfg.samples_per_intervention)?;
        for s in samples {
            trace.push(TraceRow {
                seed,
                t,
                intervention_kind: records.last().unwrap().intervention_kind(),
                values: s.values.clone(),
            });
            dataset.push((intervention.clone(), s));
        }
        env.advance_time();
        discount_pow *= rollout_cfg.discount;
    }

    Ok(RunOutput {
        records,
        breakdown,
        policy_log,
        trace,
        mean_selection_ms: if selections > 0 {
            selection_ms_acc / selections as f64
        } else {
            0.0
        },
    })
}

fn write_outputs(
    out: &RunOutput,
    cfg: &ExperimentConfig,
    dir: &Path,
) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("records.csv"), records_to_csv(&out.records))?;

    let mut losses = String::from("seed,t,variable,loss,surrogate,n_train\n");
    for b in &out.breakdown {
        let _ = writeln!(
            losses,
            "{},{},{},{},{},{}",
            b.seed, b.t, b.var, b.loss, b.surrogate, b.n_train
        );
    }
    std::fs::write(dir.join("losses.csv"), losses)?;

    if !out.policy_log.is_empty() {
        let mut log = String::from("seed,t,candidate,values,objective,chosen,wallclock_ms\n");
        for r in &out.policy_log {
            let _ = writeln!(
                log,
                "{},{},{},{},{},{},{}",
                r.seed,
                r.t,
                r.candidate,
                r.values,
                r.objective,
                u8::from(r.chosen),
                r.wallclock_ms
            );
        }
        std::fs::write(dir.join("policy_log.csv"), log)?;
    }

    std::fs::write(dir.join("trace.csv"), trace_to_csv(&out.trace))?;

    let label = cfg.experiment.policy.to_string();
    let curve = curve_from_records(&label, &out.records);
    let switch = if cfg.experiment.environment == "mesh" && cfg.experiment.scenario == 2 {
        Some(crate::envs::MESH_SWITCH_T)
    } else {
        None
    };
    emit_plots(&[curve], switch, dir)?;
    Ok(())
}

pub fn trace_to_csv(trace: &[TraceRow]) -> String {
    let mut vars: Vec<VarId> = Vec::new();
    if let Some(first) = trace.first() {
        vars = first.values.keys().cloned().collect();
    }
    let mut out = String::from("seed,t,intervention_kind");
    for v in &vars {
        out.push(',');
        out.push_str(v);
    }
    out.push('\n');
    for row in trace {
        let _ = write!(out, "{},{},{}", row.seed, row.t, row.intervention_kind);
        for v in &vars {
            let _ = write!(out, ",{}", row.values.get(v).copied().unwrap_or(f64::NAN));
        }
        out.push('\n');
    }
    out
}

/// Parses a trace CSV into per-variable numeric columns (skipping the
/// seed/t/kind prefixes).
pub fn trace_columns_from_csv(text: &str) -> Result<BTreeMap<String, Vec<f64>>, HarnessError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| HarnessError::Config("empty trace csv".into()))?;
    let names: Vec<&str> = header.split(',').collect();
    if names.len() < 4 || names[0] != "seed" {
        return Err(HarnessError::Config("not a trace csv".into()));
    }
    let mut columns: BTreeMap<String, Vec<f64>> = names[3..]
        .iter()
        .map(|n| (n.to_string(), Vec::new()))
        .collect();
    for (ln, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != names.len() {
            return Err(HarnessError::Config(format!(
                "trace csv line {}: ragged row",
                ln + 2
            )));
        }
        for (name, value) in names[3..].iter().zip(&parts[3..]) {
            let v: f64 = value
                .parse()
                .map_err(|e| HarnessError::Config(format!("line {}: {e}", ln + 2)))?;
            columns.get_mut(*name).unwrap().push(v);
        }
    }
    Ok(columns)
}

/// One row of the (ℓ, m) sweep summary.
#[derive(Debug, Clone)]
pub struct SweepRow {
    /// None marks the base-policy row.
    pub lookahead: Option<usize>,
    pub rollout_horizon: Option<usize>,
    pub mean_final_loss: f64,
    pub mean_selection_ms: f64,
}

/// Runs the rollout policy once per (ℓ, m) pair plus one base-policy run,
/// and summarizes mean final losses and selection times.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    grid: &[(usize, usize)],
) -> Result<Vec<SweepRow>, HarnessError> {
    assert!(!grid.is_empty(), "sweep grid is empty");
    let mut rows = Vec::new();

    let mut base_cfg = cfg.clone();
    base_cfg.experiment.policy = PolicyChoice::Passive;
    base_cfg.experiment.out_dir = None;
    let base = run_experiment(&base_cfg)?;
    rows.push(SweepRow {
        lookahead: None,
        rollout_horizon: None,
        mean_final_loss: mean_final_loss(&base.records, cfg.experiment.horizon),
        mean_selection_ms: base.mean_selection_ms,
    });

    for &(lookahead, m) in grid {
        let mut run_cfg = cfg.clone();
        run_cfg.experiment.policy = PolicyChoice::Rollout;
        run_cfg.experiment.out_dir = None;
        run_cfg.rollout.lookahead = lookahead;
        run_cfg.rollout.rollout_horizon = m;
        let out = run_experiment(&run_cfg)?;
        rows.push(SweepRow {
            lookahead: Some(lookahead),
            rollout_horizon: Some(m),
            mean_final_loss: mean_final_loss(&out.records, cfg.experiment.horizon),
            mean_selection_ms: out.mean_selection_ms,
        });
    }

    if let Some(dir) = &cfg.experiment.out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(Path::new(dir).join("sweep.csv"), sweep_to_csv(&rows))?;
    }
    Ok(rows)
}

pub fn mean_final_loss(records: &[RunRecord], horizon: u64) -> f64 {
    let finals: Vec<f64> = records
        .iter()
        .filter(|r| r.t == horizon)
        .map(|r| r.loss_total)
        .collect();
    finals.iter().sum::<f64>() / finals.len() as f64
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("lookahead,rollout_horizon,mean_final_loss,mean_selection_ms\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.lookahead.map(|v| v.to_string()).unwrap_or("-".into()),
            r.rollout_horizon
                .map(|v| v.to_string())
                .unwrap_or("-".into()),
            r.mean_final_loss,
            r.mean_selection_ms
        );
    }
    out
}

#[cfg(test)]
mod tests;
