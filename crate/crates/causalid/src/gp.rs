//! Exact Gaussian-process regression with a Matérn-5/2 prior.
//!
//! The prior is fixed: zero mean, unit signal variance, unit lengthscale.
//! Posteriors keep a Cholesky factor of the noisy Gram matrix so repeated
//! predictions and single-point extensions are cheap. All math follows the
//! standard closed-form posterior mean/covariance for noisy observations.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GpError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("inputs ({inputs}) and targets ({targets}) differ in length")]
    LengthMismatch { inputs: usize, targets: usize },
    #[error("noise variance must be positive, got {0}")]
    BadNoise(f64),
    #[error("Gram matrix not positive definite within jitter budget (max jitter {0:e})")]
    NotPositiveDefinite(f64),
    #[error("empty query grid")]
    EmptyGrid,
}

/// Jitter escalation schedule: try a clean factorization first, then add
/// 1e-8 to the Gram diagonal, escalating tenfold up to 1e-4.
const JITTERS: [f64; 6] = [0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];
pub const MAX_JITTER: f64 = 1e-4;

/// Matérn-5/2 kernel spec with unit signal variance; only the observation
/// noise variance is configurable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub noise_variance: f64,
}

impl KernelSpec {
    pub fn new(noise_variance: f64) -> Result<Self, GpError> {
        if noise_variance <= 0.0 || noise_variance.is_nan() {
            return Err(GpError::BadNoise(noise_variance));
        }
        Ok(KernelSpec { noise_variance })
    }
}

/// Matérn-5/2 covariance: k(x,x') = (1 + √5·r + 5r²/3)·exp(−√5·r) with
/// r the Euclidean distance. Value in (0, 1], equal to 1 iff r = 0.
pub fn matern52(x: &[f64], y: &[f64]) -> Result<f64, GpError> {
    if x.len() != y.len() {
        return Err(GpError::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok(matern52_r(dist(x, y)))
}

#[inline]
fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

#[inline]
pub(crate) fn matern52_r(r: f64) -> f64 {
    let s = 5f64.sqrt() * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

/// Training data for one regression problem.
#[derive(Debug, Clone, PartialEq)]
pub struct GpData {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    dim: usize,
}

impl GpData {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self, GpError> {
        if inputs.len() != targets.len() {
            return Err(GpError::LengthMismatch {
                inputs: inputs.len(),
                targets: targets.len(),
            });
        }
        let dim = inputs.first().map(|r| r.len()).unwrap_or(0);
        for row in &inputs {
            if row.len() != dim {
                return Err(GpError::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
        }
        Ok(GpData { inputs, targets, dim })
    }

    pub fn empty(dim: usize) -> Self {
        GpData {
            inputs: Vec::new(),
            targets: Vec::new(),
            dim,
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Exact GP posterior over one function.
///
/// With empty data the posterior equals the prior: mean 0, variance 1
/// everywhere. Immutable after fitting; `observe` returns a new posterior.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    kernel: KernelSpec,
    dim: usize,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    /// Lower Cholesky factor of K(x̂,x̂) + (σ_ε² + jitter)·I.
    l: DMatrix<f64>,
    /// L⁻¹·targets.
    z: DVector<f64>,
    jitter: f64,
}

impl GpPosterior {
    /// Fits the closed-form posterior. Refitting the same data is idempotent.
    pub fn fit(kernel: KernelSpec, data: &GpData) -> Result<Self, GpError> {
        KernelSpec::new(kernel.noise_variance)?;
        let n = data.len();
        if n == 0 {
            return Ok(GpPosterior {
                kernel,
                dim: data.dim,
                inputs: Vec::new(),
                targets: Vec::new(),
                l: DMatrix::zeros(0, 0),
                z: DVector::zeros(0),
                jitter: 0.0,
            });
        }
        let mut gram = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let k = matern52_r(dist(&data.inputs[i], &data.inputs[j]));
                gram[(i, j)] = k;
                gram[(j, i)] = k;
            }
        }
        let (l, jitter) = cholesky_with_jitter(&gram, kernel.noise_variance)?;
        let y = DVector::from_vec(data.targets.clone());
        let z = solve_lower(&l, &y);
        Ok(GpPosterior {
            kernel,
            dim: data.dim,
            inputs: data.inputs.clone(),
            targets: data.targets.clone(),
            l,
            z,
            jitter,
        })
    }

    pub fn prior(kernel: KernelSpec, dim: usize) -> Self {
        GpPosterior::fit(kernel, &GpData::empty(dim)).expect("prior fit cannot fail")
    }

    pub fn n(&self) -> usize {
        self.targets.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn training_inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn training_targets(&self) -> &[f64] {
        &self.targets
    }

    /// L⁻¹·targets; posterior means at queries q are lv(q)·z.
    pub(crate) fn z(&self) -> &DVector<f64> {
        &self.z
    }

    /// Applies L⁻¹ to each column of `b` in place.
    pub(crate) fn solve_lower_in_place(&self, b: &mut DMatrix<f64>) {
        self.l.solve_lower_triangular_mut(b);
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), GpError> {
        // A data-free prior accepts any query dimension.
        if x.len() != self.dim && !(self.inputs.is_empty() && self.dim == 0) {
            return Err(GpError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// L⁻¹·k(x̂, x): the workhorse solve shared by mean, variance, and
    /// cross-covariance computations.
    pub(crate) fn lv(&self, x: &[f64]) -> DVector<f64> {
        let kstar = DVector::from_iterator(
            self.inputs.len(),
            self.inputs.iter().map(|xi| matern52_r(dist(xi, x))),
        );
        solve_lower(&self.l, &kstar)
    }

    /// Posterior mean and variance at one query point. Variance is clamped
    /// to ≥ 0 on return.
    pub fn predict_one(&self, x: &[f64]) -> Result<(f64, f64), GpError> {
        self.check_dim(x)?;
        if self.inputs.is_empty() {
            return Ok((0.0, 1.0));
        }
        let lv = self.lv(x);
        let mean = lv.dot(&self.z);
        let var = (1.0 - lv.norm_squared()).max(0.0);
        Ok((mean, var))
    }

    /// Posterior means and variances at a batch of query points.
    pub fn predict(&self, queries: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>), GpError> {
        let mut means = Vec::with_capacity(queries.len());
        let mut vars = Vec::with_capacity(queries.len());
        for q in queries {
            let (m, v) = self.predict_one(q)?;
            means.push(m);
            vars.push(v);
        }
        Ok((means, vars))
    }

    /// Posterior mean vector and full covariance matrix over `queries`.
    pub fn predict_full(&self, queries: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>), GpError> {
        if queries.is_empty() {
            return Err(GpError::EmptyGrid);
        }
        for q in queries {
            self.check_dim(q)?;
        }
        let m = queries.len();
        let mut prior = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let k = matern52_r(dist(&queries[i], &queries[j]));
                prior[(i, j)] = k;
                prior[(j, i)] = k;
            }
        }
        if self.inputs.is_empty() {
            return Ok((DVector::zeros(m), prior));
        }
        let mut w = DMatrix::zeros(self.inputs.len(), m);
        for (j, q) in queries.iter().enumerate() {
            w.set_column(j, &self.lv(q));
        }
        let mean = w.transpose() * &self.z;
        let cov = prior - w.transpose() * w;
        Ok((mean, cov))
    }

    /// One joint draw from the posterior over `grid`, jitter-stabilized.
    /// Deterministic given the RNG state.
    pub fn sample_function<R: Rng>(
        &self,
        grid: &[Vec<f64>],
        rng: &mut R,
    ) -> Result<Vec<f64>, GpError> {
        let (mean, cov) = self.predict_full(grid)?;
        let m = grid.len();
        let (l, _) = cholesky_with_jitter(&cov, 0.0)?;
        let noise = DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let draw = mean + l * noise;
        Ok(draw.as_slice().to_vec())
    }

    /// Extends the posterior with one observation via a rank-1 Cholesky
    /// append. Falls back to a full refit if the appended pivot degenerates.
    pub fn observe(&self, x: &[f64], y: f64) -> Result<ObserveUpdate, GpError> {
        self.check_dim(x)?;
        let n = self.n();
        if n == 0 {
            let data = GpData::new(vec![x.to_vec()], vec![y])?;
            let posterior = GpPosterior::fit(self.kernel, &data)?;
            return Ok(ObserveUpdate {
                pred_mean: 0.0,
                pred_var: 1.0,
                gram_root: posterior.l[(0, 0)],
                lv: DVector::zeros(0),
                posterior,
                clean: true,
            });
        }
        let lv = self.lv(x);
        let pred_mean = lv.dot(&self.z);
        let pred_var = (1.0 - lv.norm_squared()).max(0.0);
        let pivot = 1.0 + self.kernel.noise_variance + self.jitter - lv.norm_squared();
        if pivot <= 1e-12 {
            // Degenerate duplicate with near-zero noise: refit with escalation.
            let mut inputs = self.inputs.clone();
            let mut targets = self.targets.clone();
            inputs.push(x.to_vec());
            targets.push(y);
            let posterior = GpPosterior::fit(self.kernel, &GpData::new(inputs, targets)?)?;
            return Ok(ObserveUpdate {
                pred_mean,
                pred_var,
                gram_root: posterior.jitter.max(1e-12).sqrt(),
                lv,
                posterior,
                clean: false,
            });
        }
        let gram_root = pivot.sqrt();
        let mut l = DMatrix::zeros(n + 1, n + 1);
        l.view_mut((0, 0), (n, n)).copy_from(&self.l);
        for j in 0..n {
            l[(n, j)] = lv[j];
        }
        l[(n, n)] = gram_root;
        let mut z = DVector::zeros(n + 1);
        z.rows_mut(0, n).copy_from(&self.z);
        z[n] = (y - pred_mean) / gram_root;
        let mut inputs = self.inputs.clone();
        inputs.push(x.to_vec());
        let mut targets = self.targets.clone();
        targets.push(y);
        let dim = if self.dim == 0 { x.len() } else { self.dim };
        Ok(ObserveUpdate {
            posterior: GpPosterior {
                kernel: self.kernel,
                dim,
                inputs,
                targets,
                l,
                z,
                jitter: self.jitter,
            },
            lv,
            gram_root,
            pred_mean,
            pred_var,
            clean: true,
        })
    }

    /// Flat text dump of training data and grid predictions, for
    /// cross-implementation diffing.
    pub fn debug_dump(&self, grid: &[Vec<f64>]) -> String {
        let mut out = String::new();
        out.push_str(&format!("noise_variance,{}\n", self.kernel.noise_variance));
        out.push_str("section,index,values\n");
        for (i, (x, y)) in self.inputs.iter().zip(&self.targets).enumerate() {
            let coords: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
            out.push_str(&format!("train,{i},{};{y}\n", coords.join(";")));
        }
        if let Ok((means, vars)) = self.predict(grid) {
            for (i, (x, (m, v))) in grid.iter().zip(means.iter().zip(&vars)).enumerate() {
                let coords: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
                out.push_str(&format!("grid,{i},{};{m};{v}\n", coords.join(";")));
            }
        }
        out
    }
}

/// Result of extending a posterior with one observation. The auxiliary
/// fields let callers update cached grid statistics in O(n·g).
pub struct ObserveUpdate {
    pub posterior: GpPosterior,
    /// L⁻¹·k(x̂, x_new) in the pre-update factor.
    pub lv: DVector<f64>,
    /// New Cholesky pivot: √(k(x,x) + σ_ε² + jitter − ‖lv‖²).
    pub gram_root: f64,
    /// Pre-update posterior mean at the new input.
    pub pred_mean: f64,
    /// Pre-update posterior variance at the new input.
    pub pred_var: f64,
    /// True when the update was a clean rank-1 append; false when the
    /// posterior was refit from scratch and cached cross terms are stale.
    pub clean: bool,
}

/// Lower Cholesky factor of a PSD matrix, escalating jitter as needed.
pub fn stabilized_cholesky(cov: &DMatrix<f64>) -> Result<DMatrix<f64>, GpError> {
    cholesky_with_jitter(cov, 0.0).map(|(l, _)| l)
}

fn cholesky_with_jitter(gram: &DMatrix<f64>, noise: f64) -> Result<(DMatrix<f64>, f64), GpError> {
    let n = gram.nrows();
    for &jitter in &JITTERS {
        let mut a = gram.clone();
        for i in 0..n {
            a[(i, i)] += noise + jitter;
        }
        if let Some(chol) = a.cholesky() {
            return Ok((chol.unpack(), jitter));
        }
    }
    Err(GpError::NotPositiveDefinite(MAX_JITTER))
}

fn solve_lower(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut x = b.clone();
    l.solve_lower_triangular_mut(&mut x);
    x
}
