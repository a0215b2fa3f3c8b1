//! The factorized estimator over causal functions: one GP posterior per
//! endogenous variable, evaluation grids that discretize the loss integral,
//! the ground-truth loss, and the surrogate (uncertainty) loss.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::gp::{matern52, GpData, GpError, GpPosterior, KernelSpec};
use crate::scm::{CausalGraph, Dataset, Record, ScmError, VarId};
use crate::seeds;

mod grid;

pub use grid::{build_grids, EvaluationGrid, EvaluationGrids, GridSettings, Measure};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error("no evaluation grid for `{0}`")]
    MissingGrid(VarId),
    #[error("sample missing value for `{0}`")]
    MissingValue(VarId),
    #[error("truth oracle undefined for `{var}` at {point:?}")]
    TruthUndefined { var: VarId, point: Vec<f64> },
}

/// Ground-truth access used only by loss evaluation. Estimation and policy
/// code never sees this trait.
pub trait TruthFn {
    /// Noiseless ground-truth value of `var`'s causal function at a
    /// regression-parent input (noise parents excluded).
    fn truth_eval(&self, var: &str, input: &[f64]) -> Result<f64, EstimatorError>;
}

/// Per-variable observation-noise configuration for the estimator.
#[derive(Debug, Clone)]
pub struct KernelMap {
    default: KernelSpec,
    overrides: BTreeMap<VarId, KernelSpec>,
}

impl KernelMap {
    pub fn uniform(kernel: KernelSpec) -> Self {
        KernelMap {
            default: kernel,
            overrides: BTreeMap::new(),
        }
    }

    pub fn with_override(mut self, var: &str, kernel: KernelSpec) -> Self {
        self.overrides.insert(var.to_string(), kernel);
        self
    }

    pub fn from_noise_map(default: f64, per_var: &BTreeMap<VarId, f64>) -> Result<Self, GpError> {
        let mut map = KernelMap::uniform(KernelSpec::new(default)?);
        for (id, &noise) in per_var {
            map.overrides.insert(id.clone(), KernelSpec::new(noise)?);
        }
        Ok(map)
    }

    pub fn kernel_for(&self, var: &str) -> KernelSpec {
        self.overrides.get(var).copied().unwrap_or(self.default)
    }
}

/// GP posterior for one causal function plus cached grid statistics.
///
/// The caches make single-observation belief updates O(n·g) instead of a
/// full refit, which is what keeps fantasy rollouts affordable. `updated`
/// falls back to a batch rebuild whenever the rank-1 path is invalid (FIFO
/// eviction or a degenerate pivot); the equivalence is property-tested.
#[derive(Debug, Clone)]
pub struct VarBelief {
    pub parents: Vec<VarId>,
    pub posterior: GpPosterior,
    serials: Vec<u64>,
    /// k(x̂_i, g_j), kept so rebuilds after eviction need no new kernel
    /// evaluations against the grid.
    kxg: DMatrix<f64>,
    /// L⁻¹·kxg.
    w: DMatrix<f64>,
    grid_means: DVector<f64>,
    grid_vars: DVector<f64>,
}

impl VarBelief {
    fn build(
        parents: Vec<VarId>,
        kernel: KernelSpec,
        rows: Vec<(u64, Vec<f64>, f64)>,
        grid: &EvaluationGrid,
    ) -> Result<Self, EstimatorError> {
        let g = grid.points.len();
        let n = rows.len();
        let serials: Vec<u64> = rows.iter().map(|r| r.0).collect();
        let inputs: Vec<Vec<f64>> = rows.iter().map(|r| r.1.clone()).collect();
        let targets: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let mut kxg = DMatrix::zeros(n, g);
        for (i, x) in inputs.iter().enumerate() {
            for (j, p) in grid.points.iter().enumerate() {
                kxg[(i, j)] = matern52(x, p)?;
            }
        }
        let posterior = GpPosterior::fit(kernel, &GpData::new(inputs, targets)?)?;
        let mut vb = VarBelief {
            parents,
            posterior,
            serials,
            kxg,
            w: DMatrix::zeros(0, 0),
            grid_means: DVector::zeros(g),
            grid_vars: DVector::zeros(g),
        };
        vb.refresh_grid_stats();
        Ok(vb)
    }

    /// Recomputes w, grid means, and grid variances from the posterior and
    /// the cached kernel block.
    fn refresh_grid_stats(&mut self) {
        let g = self.kxg.ncols();
        let n = self.posterior.n();
        if n == 0 {
            self.w = DMatrix::zeros(0, g);
            self.grid_means = DVector::zeros(g);
            self.grid_vars = DVector::from_element(g, 1.0);
            return;
        }
        let mut w = self.kxg.clone();
        self.posterior.solve_lower_in_place(&mut w);
        self.grid_means = w.transpose() * self.posterior.z();
        self.grid_vars = DVector::from_iterator(
            g,
            (0..g).map(|j| (1.0 - w.column(j).norm_squared()).max(0.0)),
        );
        self.w = w;
    }

    /// Extends with one training row, updating grid caches in O(n·g).
    fn observe(
        &mut self,
        serial: u64,
        x: &[f64],
        y: f64,
        grid: &EvaluationGrid,
    ) -> Result<(), EstimatorError> {
        let g = grid.points.len();
        let mut kx_row = DVector::zeros(g);
        for (j, p) in grid.points.iter().enumerate() {
            kx_row[j] = matern52(x, p)?;
        }
        let upd = self.posterior.observe(x, y)?;
        let n_old = self.w.nrows();
        self.serials.push(serial);
        self.kxg = {
            let mut kxg = DMatrix::zeros(n_old + 1, g);
            kxg.view_mut((0, 0), (n_old, g)).copy_from(&self.kxg);
            kxg.row_mut(n_old).copy_from(&kx_row.transpose());
            kxg
        };
        if !upd.clean {
            self.posterior = upd.posterior;
            self.refresh_grid_stats();
            return Ok(());
        }
        // Posterior cross-covariance between the new input and each grid
        // point, then the standard rank-1 mean/variance update.
        let s = upd.gram_root * upd.gram_root;
        let mut w = DMatrix::zeros(n_old + 1, g);
        w.view_mut((0, 0), (n_old, g)).copy_from(&self.w);
        for j in 0..g {
            let cross = kx_row[j] - upd.lv.dot(&self.w.column(j));
            w[(n_old, j)] = cross / upd.gram_root;
            self.grid_means[j] += cross * (y - upd.pred_mean) / s;
            self.grid_vars[j] = (self.grid_vars[j] - cross * cross / s).max(0.0);
        }
        self.w = w;
        self.posterior = upd.posterior;
        Ok(())
    }

    /// Drops the front row (FIFO eviction) and rebuilds the factorization
    /// from cached kernel values.
    fn evict_front(&mut self, kernel: KernelSpec) -> Result<(), EstimatorError> {
        self.serials.remove(0);
        let inputs: Vec<Vec<f64>> = self.posterior.training_inputs()[1..].to_vec();
        let targets: Vec<f64> = self.posterior.training_targets()[1..].to_vec();
        self.kxg = self.kxg.clone().remove_row(0);
        self.posterior = GpPosterior::fit(kernel, &GpData::new(inputs, targets)?)?;
        self.refresh_grid_stats();
        Ok(())
    }

    pub fn n_train(&self) -> usize {
        self.posterior.n()
    }

    pub fn grid_means(&self) -> &DVector<f64> {
        &self.grid_means
    }

    pub fn grid_vars(&self) -> &DVector<f64> {
        &self.grid_vars
    }
}

/// The factorized belief over all causal functions (the dynamic-programming
/// state): independent GP posteriors per endogenous variable, plus the
/// graph, the evaluation grids, and the dataset the belief was fit from.
///
/// Immutable after fitting; `updated` returns the successor belief.
#[derive(Debug, Clone)]
pub struct Belief {
    graph: Arc<CausalGraph>,
    grids: Arc<EvaluationGrids>,
    kernels: KernelMap,
    dataset: Dataset,
    vars: BTreeMap<VarId, VarBelief>,
}

/// Fits the belief from a dataset.
///
/// For each endogenous variable the regression uses exactly the records in
/// which that variable was NOT intervened (an intervened value bypasses its
/// causal function); those records still supply parent values to descendant
/// regressions. Noise parents are excluded from inputs. Empty training sets
/// yield prior posteriors.
pub fn fit_belief(
    graph: &Arc<CausalGraph>,
    dataset: &Dataset,
    kernels: &KernelMap,
    grids: &Arc<EvaluationGrids>,
) -> Result<Belief, EstimatorError> {
    let mut vars = BTreeMap::new();
    for id in graph.endogenous_ids() {
        let parents = graph.regression_parents(&id);
        let grid = grids
            .get(&id)
            .ok_or_else(|| EstimatorError::MissingGrid(id.clone()))?;
        let rows = training_rows(dataset, &id, &parents)?;
        vars.insert(
            id.clone(),
            VarBelief::build(parents, kernels.kernel_for(&id), rows, grid)?,
        );
    }
    Ok(Belief {
        graph: Arc::clone(graph),
        grids: Arc::clone(grids),
        kernels: kernels.clone(),
        dataset: dataset.clone(),
        vars,
    })
}

fn training_rows(
    dataset: &Dataset,
    var: &str,
    parents: &[VarId],
) -> Result<Vec<(u64, Vec<f64>, f64)>, EstimatorError> {
    let mut rows = Vec::new();
    for (serial, (intervention, sample)) in dataset.iter() {
        if intervention.assignments.contains_key(var) {
            continue;
        }
        let mut x = Vec::with_capacity(parents.len());
        for p in parents {
            x.push(
                sample
                    .get(p)
                    .ok_or_else(|| EstimatorError::MissingValue(p.clone()))?,
            );
        }
        let y = sample
            .get(var)
            .ok_or_else(|| EstimatorError::MissingValue(var.to_string()))?;
        rows.push((serial, x, y));
    }
    Ok(rows)
}

impl Belief {
    pub fn graph(&self) -> &Arc<CausalGraph> {
        &self.graph
    }

    pub fn grids(&self) -> &Arc<EvaluationGrids> {
        &self.grids
    }

    pub fn kernels(&self) -> &KernelMap {
        &self.kernels
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn var(&self, id: &str) -> Option<&VarBelief> {
        self.vars.get(id)
    }

    pub fn vars(&self) -> impl Iterator<Item = (&VarId, &VarBelief)> {
        self.vars.iter()
    }

    /// The belief after incorporating new records (the one-step belief
    /// dynamics, FIFO eviction included).
    pub fn updated(&self, records: &[Record]) -> Result<Belief, EstimatorError> {
        let mut next = self.clone();
        next.apply(records)?;
        Ok(next)
    }

    /// In-place variant of [`Belief::updated`] for owned beliefs inside
    /// planning loops, where per-step clones dominate the cost.
    pub fn apply(&mut self, records: &[Record]) -> Result<(), EstimatorError> {
        for record in records {
            let evicted = self.dataset.push(record.clone());
            let serial = self
                .dataset
                .iter()
                .last()
                .map(|(s, _)| s)
                .expect("just pushed");
            for (id, vb) in self.vars.iter_mut() {
                if let Some(ev) = evicted {
                    if vb.serials.first() == Some(&ev) {
                        vb.evict_front(self.kernels.kernel_for(id))?;
                    }
                }
                if record.0.assignments.contains_key(id) {
                    continue;
                }
                let mut x = Vec::with_capacity(vb.parents.len());
                for p in &vb.parents {
                    x.push(
                        record
                            .1
                            .get(p)
                            .ok_or_else(|| EstimatorError::MissingValue(p.clone()))?,
                    );
                }
                let y = record
                    .1
                    .get(id)
                    .ok_or_else(|| EstimatorError::MissingValue(id.clone()))?;
                let grid = self
                    .grids
                    .get(id)
                    .ok_or_else(|| EstimatorError::MissingGrid(id.clone()))?;
                vb.observe(serial, &x, y, grid)?;
            }
        }
        Ok(())
    }

    /// Integrated posterior variance per variable: the per-variable
    /// contributions to the analytic surrogate loss.
    pub fn surrogate_by_var(&self) -> BTreeMap<VarId, f64> {
        self.vars
            .iter()
            .map(|(id, vb)| {
                let grid = self.grids.get(id).expect("grid checked at fit");
                let v: f64 = grid
                    .weights
                    .iter()
                    .zip(vb.grid_vars.iter())
                    .map(|(w, var)| w * var)
                    .sum();
                (id.clone(), grid.scale * v)
            })
            .collect()
    }

    /// Analytic surrogate loss: the integrated posterior variance. Under
    /// quadratic loss this equals the expected loss of the posterior mean
    /// exactly, and it is zero iff the belief is a point mass.
    pub fn analytic_surrogate(&self) -> f64 {
        self.surrogate_by_var().values().sum()
    }

    /// The Bayes point estimate: posterior means, queryable on and off grid.
    pub fn point_estimate(&self) -> EstimatedModel {
        EstimatedModel {
            vars: self
                .vars
                .iter()
                .map(|(id, vb)| {
                    (
                        id.clone(),
                        EstimatedFn {
                            parents: vb.parents.clone(),
                            posterior: vb.posterior.clone(),
                            grid_means: vb.grid_means.as_slice().to_vec(),
                        },
                    )
                })
                .collect(),
        }
    }
}

/// The posterior-mean model: the expectation of the belief.
#[derive(Debug, Clone)]
pub struct EstimatedModel {
    vars: BTreeMap<VarId, EstimatedFn>,
}

#[derive(Debug, Clone)]
pub struct EstimatedFn {
    pub parents: Vec<VarId>,
    posterior: GpPosterior,
    grid_means: Vec<f64>,
}

impl EstimatedModel {
    pub fn var_ids(&self) -> impl Iterator<Item = &VarId> {
        self.vars.keys()
    }

    pub fn grid_means(&self, var: &str) -> Option<&[f64]> {
        self.vars.get(var).map(|f| f.grid_means.as_slice())
    }

    /// Off-grid query: delegates to the GP posterior mean.
    pub fn eval(&self, var: &str, input: &[f64]) -> Result<f64, EstimatorError> {
        let f = self
            .vars
            .get(var)
            .ok_or_else(|| EstimatorError::MissingValue(var.to_string()))?;
        Ok(f.posterior.predict_one(input)?.0)
    }
}

/// The ground-truth loss: the discretized integral of the squared error
/// between the estimate and the true causal functions.
pub fn loss(
    estimate: &EstimatedModel,
    truth: &dyn TruthFn,
    grids: &EvaluationGrids,
) -> Result<f64, EstimatorError> {
    Ok(loss_by_var(estimate, truth, grids)?.values().sum())
}

/// Per-variable breakdown of [`loss`].
pub fn loss_by_var(
    estimate: &EstimatedModel,
    truth: &dyn TruthFn,
    grids: &EvaluationGrids,
) -> Result<BTreeMap<VarId, f64>, EstimatorError> {
    let mut out = BTreeMap::new();
    for (id, vb) in &estimate.vars {
        let grid = grids
            .get(id)
            .ok_or_else(|| EstimatorError::MissingGrid(id.clone()))?;
        let mut acc = 0.0;
        for ((point, &weight), &mean) in
            grid.points.iter().zip(&grid.weights).zip(&vb.grid_means)
        {
            let t = truth.truth_eval(id, point)?;
            if !t.is_finite() {
                return Err(EstimatorError::TruthUndefined {
                    var: id.clone(),
                    point: point.clone(),
                });
            }
            acc += weight * (t - mean) * (t - mean);
        }
        out.insert(id.clone(), grid.scale * acc);
    }
    Ok(out)
}

/// Evaluation mode for the surrogate loss.
pub enum SurrogateMode {
    /// Exact under quadratic loss: the integrated posterior variance.
    Analytic,
    /// Monte-Carlo average of the loss of `s` joint function draws against
    /// the posterior mean. Agrees with the analytic form as s grows.
    MonteCarlo { s: usize, seed: u64 },
}

/// Expected loss of the point estimate under the belief.
pub fn surrogate_loss(belief: &Belief, mode: SurrogateMode) -> Result<f64, EstimatorError> {
    match mode {
        SurrogateMode::Analytic => Ok(belief.analytic_surrogate()),
        SurrogateMode::MonteCarlo { s, seed } => {
            assert!(s >= 1, "monte-carlo surrogate needs s >= 1");
            let mut total = 0.0;
            for (id, vb) in &belief.vars {
                let grid = belief
                    .grids
                    .get(id)
                    .ok_or_else(|| EstimatorError::MissingGrid(id.clone()))?;
                // Draws are centered on the posterior mean, which cancels in
                // the quadratic loss against the mean itself.
                let (_, cov) = vb.posterior.predict_full(&grid.points)?;
                let chol = crate::gp::stabilized_cholesky(&cov)?;
                let mut rng = seeds::stream(seeds::derive(seed, id));
                let g = grid.points.len();
                let mut acc = 0.0;
                for _ in 0..s {
                    let noise = DVector::from_iterator(
                        g,
                        (0..g).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)),
                    );
                    let draw = &chol * noise;
                    let dev: f64 = grid
                        .weights
                        .iter()
                        .zip(draw.iter())
                        .map(|(w, d)| w * d * d)
                        .sum();
                    acc += dev;
                }
                total += grid.scale * acc / s as f64;
            }
            Ok(total)
        }
    }
}

#[cfg(test)]
mod tests;
