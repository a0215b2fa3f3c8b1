//! Shared fixtures for unit tests: the four-variable nonlinear chain and
//! small grid/measure setups.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::estimator::{
    build_grids, EstimatorError, EvaluationGrids, GridSettings, Measure, TruthFn,
};
use crate::scm::{
    CausalFn, CausalGraph, ExoDist, ExoModel, GroundTruthScm, VarId, VarRange, VariableSpec,
};

/// U → X → Z → Y with f_X(u)=u, f_Z(x)=e^{-x}, f_Y(z)=cos(z)-e^{-z/20}.
pub fn chain_graph() -> Arc<CausalGraph> {
    Arc::new(
        CausalGraph::new(
            vec![
                VariableSpec::exogenous("U", VarRange::unbounded(), true),
                VariableSpec::endogenous("X", VarRange::continuous(-5.0, 5.0), true),
                VariableSpec::endogenous("Z", VarRange::continuous(-5.0, 20.0), true),
                VariableSpec::endogenous("Y", VarRange::continuous(-5.0, 5.0), true),
            ],
            vec![
                ("U".into(), "X".into()),
                ("X".into(), "Z".into()),
                ("Z".into(), "Y".into()),
            ],
        )
        .unwrap(),
    )
}

pub fn chain_scm() -> GroundTruthScm {
    let mut functions: BTreeMap<VarId, CausalFn> = BTreeMap::new();
    functions.insert("X".into(), Arc::new(|x: &[f64]| x[0]));
    functions.insert("Z".into(), Arc::new(|x: &[f64]| (-x[0]).exp()));
    functions.insert(
        "Y".into(),
        Arc::new(|x: &[f64]| x[0].cos() - (-x[0] / 20.0).exp()),
    );
    let exo = ExoModel {
        dists: [(
            "U".to_string(),
            ExoDist::Gaussian {
                mean: 0.0,
                variance: 0.1,
            },
        )]
        .into_iter()
        .collect(),
    };
    GroundTruthScm::new(chain_graph(), functions, exo).unwrap()
}

pub fn chain_measures() -> BTreeMap<VarId, Measure> {
    let mut m = BTreeMap::new();
    m.insert(
        "U".to_string(),
        Measure::GaussianDensity {
            mean: 0.0,
            variance: 0.1,
        },
    );
    m.insert("X".to_string(), Measure::Lebesgue { lo: -5.0, hi: 5.0 });
    m.insert("Z".to_string(), Measure::Lebesgue { lo: -5.0, hi: 20.0 });
    m.insert("Y".to_string(), Measure::Lebesgue { lo: -5.0, hi: 5.0 });
    m
}

pub fn chain_grids() -> Arc<EvaluationGrids> {
    Arc::new(build_grids(
        &chain_graph(),
        &chain_measures(),
        GridSettings::default(),
    ))
}

pub fn chain_exo() -> ExoModel {
    ExoModel {
        dists: [(
            "U".to_string(),
            ExoDist::Gaussian {
                mean: 0.0,
                variance: 0.1,
            },
        )]
        .into_iter()
        .collect(),
    }
}

pub fn chain_kernels(noise: f64) -> crate::estimator::KernelMap {
    crate::estimator::KernelMap::uniform(crate::gp::KernelSpec::new(noise).unwrap())
}

/// A belief trained with tiny noise on the union of each variable's
/// evaluation grid and a dense 0.05-spaced filler over its parent domain:
/// posterior variance collapses both on-grid and at interpolated queries,
/// approximating a point mass on the chain's true functions.
pub fn chain_point_mass_belief(noise: f64) -> crate::estimator::Belief {
    use crate::scm::{Dataset, Intervention, Sample};
    let grids = chain_grids();
    let scm = chain_scm();
    let graph = chain_graph();
    let domain = |id: &str| -> (f64, f64) {
        match id {
            "X" => (-1.3, 1.3),
            "Z" => (-5.0, 5.0),
            _ => (-5.0, 20.0),
        }
    };
    let mut ds = Dataset::unbounded();
    for id in ["X", "Y", "Z"] {
        let parent = graph.regression_parents(id)[0].clone();
        let (lo, hi) = domain(id);
        let mut inputs: Vec<f64> = grids
            .get(id)
            .unwrap()
            .points
            .iter()
            .map(|p| p[0])
            .collect();
        let mut x = lo;
        while x <= hi + 1e-9 {
            inputs.push(x);
            x += 0.05;
        }
        // Near-duplicate inputs with tiny noise would force jitter
        // escalation; keep one representative per location.
        inputs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        inputs.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        for p in inputs {
            let mut values = BTreeMap::new();
            for v in ["U", "X", "Y", "Z"] {
                values.insert(v.to_string(), 0.0);
            }
            values.insert(parent.clone(), p);
            values.insert(id.to_string(), scm.eval_function(id, &[p]).unwrap());
            let mut u = Intervention::passive();
            for other in ["X", "Y", "Z"] {
                if other != id {
                    u.assignments.insert(other.to_string(), 0.0);
                }
            }
            ds.push((u, Sample::new(values)));
        }
    }
    crate::estimator::fit_belief(&graph, &ds, &chain_kernels(noise), &grids).unwrap()
}

/// Truth oracle over the chain SCM, clipped like the environment would.
pub struct ChainTruth(pub GroundTruthScm);

impl Default for ChainTruth {
    fn default() -> Self {
        ChainTruth(chain_scm())
    }
}

impl TruthFn for ChainTruth {
    fn truth_eval(&self, var: &str, input: &[f64]) -> Result<f64, EstimatorError> {
        Ok(self.0.eval_function(var, input)?)
    }
}
