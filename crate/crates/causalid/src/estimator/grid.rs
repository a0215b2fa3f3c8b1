//! Evaluation grids: finite discretizations of each causal function's
//! parent space, with probability weights and the total measure they
//! represent.
//!
//! The loss integral for a variable is taken against the product of its
//! parents' marginal measures: a declared probability density for
//! density-measured parents (mass 1) and the plain Lebesgue/counting
//! measure over the declared range otherwise (mass = interval width or set
//! cardinality). Grid weights are normalized to sum to one; `scale` carries
//! the total mass so that weighted sums reproduce the unnormalized
//! integral.

use std::collections::BTreeMap;

use crate::scm::{CausalGraph, VarId};

/// Marginal measure of one variable when it appears as a regression parent.
#[derive(Debug, Clone, PartialEq)]
pub enum Measure {
    /// Gaussian probability density; integrates to 1. Grids cover the
    /// effective range mean ± 4σ.
    GaussianDensity { mean: f64, variance: f64 },
    /// Unit density over a finite interval; total mass hi − lo.
    Lebesgue { lo: f64, hi: f64 },
    /// Counting measure over a finite sorted set; total mass = cardinality.
    Counting(Vec<f64>),
}

impl Measure {
    fn mass(&self) -> f64 {
        match self {
            Measure::GaussianDensity { .. } => 1.0,
            Measure::Lebesgue { lo, hi } => hi - lo,
            Measure::Counting(set) => set.len() as f64,
        }
    }

    /// Interval covered by grid points along this dimension.
    fn span(&self) -> (f64, f64) {
        match self {
            Measure::GaussianDensity { mean, variance } => {
                let sd = variance.sqrt();
                (mean - 4.0 * sd, mean + 4.0 * sd)
            }
            Measure::Lebesgue { lo, hi } => (*lo, *hi),
            Measure::Counting(set) => (set[0], *set.last().unwrap()),
        }
    }

    fn density(&self, x: f64) -> f64 {
        match self {
            Measure::GaussianDensity { mean, variance } => {
                let z = (x - mean) * (x - mean) / (2.0 * variance);
                (-z).exp() / (2.0 * std::f64::consts::PI * variance).sqrt()
            }
            Measure::Lebesgue { .. } | Measure::Counting(_) => 1.0,
        }
    }
}

/// A finite set of parent-input points with probability weights summing to
/// one, plus the total measure the grid represents.
#[derive(Debug, Clone)]
pub struct EvaluationGrid {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub scale: f64,
}

impl EvaluationGrid {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>, scale: f64) -> Self {
        let grid = EvaluationGrid {
            points,
            weights,
            scale,
        };
        grid.check();
        grid
    }

    /// Equally weighted points with unit scale (a plain probability grid).
    pub fn uniform(points: Vec<Vec<f64>>) -> Self {
        let n = points.len();
        EvaluationGrid::new(points, vec![1.0 / n as f64; n], 1.0)
    }

    /// Equispaced 1-D probability grid over [lo, hi], unit scale.
    pub fn uniform_1d(lo: f64, hi: f64, n: usize) -> Self {
        let points = (0..n)
            .map(|i| vec![lo + (hi - lo) * i as f64 / (n - 1) as f64])
            .collect();
        EvaluationGrid::uniform(points)
    }

    fn check(&self) {
        assert_eq!(self.points.len(), self.weights.len());
        assert!(!self.points.is_empty(), "empty evaluation grid");
        assert!(self.weights.iter().all(|&w| w >= 0.0));
        let sum: f64 = self.weights.iter().sum();
        assert!(
            (sum - 1.0).abs() < 1e-12,
            "grid weights sum to {sum}, not 1"
        );
        assert!(self.scale >= 0.0);
    }
}

/// One evaluation grid per endogenous variable.
#[derive(Debug, Clone, Default)]
pub struct EvaluationGrids {
    per_var: BTreeMap<VarId, EvaluationGrid>,
}

impl EvaluationGrids {
    pub fn new(per_var: BTreeMap<VarId, EvaluationGrid>) -> Self {
        EvaluationGrids { per_var }
    }

    pub fn get(&self, var: &str) -> Option<&EvaluationGrid> {
        self.per_var.get(var)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&VarId, &EvaluationGrid)> {
        self.per_var.iter()
    }

    pub fn insert(&mut self, var: VarId, grid: EvaluationGrid) {
        self.per_var.insert(var, grid);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GridSettings {
    /// Points for one-dimensional parent spaces.
    pub one_d_points: usize,
    /// Low-discrepancy points for multi-dimensional parent spaces.
    pub multi_d_points: usize,
}

impl Default for GridSettings {
    fn default() -> Self {
        GridSettings {
            one_d_points: 41,
            multi_d_points: 256,
        }
    }
}

/// Builds the default grid for every endogenous variable from the declared
/// parent measures. Noise parents are excluded (they are not regression
/// inputs).
pub fn build_grids(
    graph: &CausalGraph,
    measures: &BTreeMap<VarId, Measure>,
    settings: GridSettings,
) -> EvaluationGrids {
    let mut per_var = BTreeMap::new();
    for id in graph.endogenous_ids() {
        let parents = graph.regression_parents(&id);
        let dims: Vec<&Measure> = parents
            .iter()
            .map(|p| {
                measures
                    .get(p)
                    .unwrap_or_else(|| panic!("no measure declared for parent `{p}` of `{id}`"))
            })
            .collect();
        let grid = if dims.len() == 1 {
            grid_1d(dims[0], settings.one_d_points)
        } else {
            grid_multi(&dims, settings.multi_d_points)
        };
        per_var.insert(id.clone(), grid);
    }
    EvaluationGrids::new(per_var)
}

fn grid_1d(measure: &Measure, n: usize) -> EvaluationGrid {
    match measure {
        Measure::Counting(set) => {
            let points: Vec<Vec<f64>> = set.iter().map(|&v| vec![v]).collect();
            let w = 1.0 / set.len() as f64;
            EvaluationGrid::new(points, vec![w; set.len()], measure.mass())
        }
        _ => {
            let (lo, hi) = measure.span();
            let step = (hi - lo) / (n - 1) as f64;
            let xs: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
            // Trapezoid cells: end cells carry half weight.
            let mut weights: Vec<f64> = xs
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let cell = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                    measure.density(x) * cell
                })
                .collect();
            let sum: f64 = weights.iter().sum();
            for w in &mut weights {
                *w /= sum;
            }
            EvaluationGrid::new(
                xs.into_iter().map(|x| vec![x]).collect(),
                weights,
                measure.mass(),
            )
        }
    }
}

fn grid_multi(dims: &[&Measure], n: usize) -> EvaluationGrid {
    let mut points = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let mut point = Vec::with_capacity(dims.len());
        let mut w = 1.0;
        for (d, measure) in dims.iter().enumerate() {
            let u = halton(i as u64 + 1, PRIMES[d]);
            match measure {
                Measure::Counting(set) => {
                    let k = ((u * set.len() as f64) as usize).min(set.len() - 1);
                    point.push(set[k]);
                }
                _ => {
                    let (lo, hi) = measure.span();
                    let x = lo + u * (hi - lo);
                    w *= measure.density(x);
                    point.push(x);
                }
            }
        }
        points.push(point);
        weights.push(w);
    }
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    let scale = dims.iter().map(|d| d.mass()).product();
    EvaluationGrid::new(points, weights, scale)
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Van der Corput radical inverse: the standard Halton low-discrepancy
/// coordinate for one dimension.
fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::{CausalGraph, VarRange, VariableSpec};

    #[test]
    fn halton_is_low_discrepancy_in_unit_interval() {
        let xs: Vec<f64> = (1..=256).map(|i| halton(i, 2)).collect();
        assert!(xs.iter().all(|&x| (0.0..1.0).contains(&x)));
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 0.5).abs() < 0.01);
    }

    #[test]
    fn one_d_lebesgue_grid_has_unit_weights_and_width_scale() {
        let g = grid_1d(&Measure::Lebesgue { lo: -5.0, hi: 5.0 }, 41);
        assert_eq!(g.points.len(), 41);
        assert!((g.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(g.scale, 10.0);
        assert_eq!(g.points[0][0], -5.0);
        assert_eq!(g.points[40][0], 5.0);
    }

    #[test]
    fn gaussian_grid_weights_follow_density() {
        let g = grid_1d(
            &Measure::GaussianDensity {
                mean: 0.0,
                variance: 0.1,
            },
            41,
        );
        assert_eq!(g.scale, 1.0);
        // Center point outweighs the tails.
        let center = g.weights[20];
        assert!(center > g.weights[0] * 100.0);
    }

    #[test]
    fn counting_grid_enumerates_set() {
        let g = grid_1d(&Measure::Counting(vec![1.0, 2.0, 3.0, 4.0, 5.0]), 41);
        assert_eq!(g.points.len(), 5);
        assert_eq!(g.scale, 5.0);
    }

    #[test]
    fn multi_d_grid_mixes_continuous_and_discrete() {
        let dims = [
            &Measure::Lebesgue { lo: 0.0, hi: 50.0 },
            &Measure::Counting(vec![1.0, 2.0, 3.0, 4.0, 5.0]),
        ];
        let g = grid_multi(&dims, 256);
        assert_eq!(g.points.len(), 256);
        assert!((g.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(g.scale, 250.0);
        for p in &g.points {
            assert!((0.0..=50.0).contains(&p[0]));
            assert!([1.0, 2.0, 3.0, 4.0, 5.0].contains(&p[1]));
        }
        // All five discrete members appear.
        for m in [1.0, 2.0, 3.0, 4.0, 5.0] {
            assert!(g.points.iter().any(|p| p[1] == m));
        }
    }

    #[test]
    fn build_grids_excludes_noise_parents() {
        let graph = CausalGraph::new(
            vec![
                VariableSpec::exogenous("L", VarRange::continuous(0.0, 50.0), true),
                VariableSpec::noise("eps"),
                VariableSpec::endogenous("R", VarRange::continuous(0.0, 10.0), false),
            ],
            vec![("L".into(), "R".into()), ("eps".into(), "R".into())],
        )
        .unwrap();
        let mut measures = BTreeMap::new();
        measures.insert("L".to_string(), Measure::Lebesgue { lo: 0.0, hi: 50.0 });
        let grids = build_grids(&graph, &measures, GridSettings::default());
        let g = grids.get("R").unwrap();
        assert_eq!(g.points[0].len(), 1, "noise parent must not add a dimension");
    }
}
