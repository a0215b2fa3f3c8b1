//! Loading SCM specifications from structured text files.
//!
//! A file declares variables, edges, and (for ground-truth SCMs) a named
//! built-in function per endogenous node. Function bodies live in code; the
//! file selects them by name and parameters. Unknown keys are errors.
//!
//! ```toml
//! [[variables]]
//! id = "U"
//! kind = "exogenous"
//! controllable = true
//! range = { lo = -inf, hi = inf }
//!
//! [[edges]]
//! parent = "U"
//! child = "X"
//!
//! [functions.X]
//! name = "identity"
//! ```

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use super::{
    CausalFn, CausalGraph, ExoDist, ExoModel, GroundTruthScm, ScmError, VarId, VarKind, VarRange,
    VariableSpec,
};

#[derive(Debug, Error)]
pub enum ScmFileError {
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown function `{0}` for variable `{1}`")]
    UnknownFunction(String, VarId),
    #[error("function `{0}` for `{1}`: {2}")]
    BadParams(String, VarId, String),
    #[error(transparent)]
    Scm(#[from] ScmError),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScmFile {
    variables: Vec<VariableDecl>,
    #[serde(default)]
    edges: Vec<EdgeDecl>,
    #[serde(default)]
    functions: BTreeMap<VarId, FunctionDecl>,
    /// Exogenous distributions; variables without an entry default to a
    /// point mass at zero.
    #[serde(default)]
    exogenous: BTreeMap<VarId, ExoDecl>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
enum ExoDecl {
    #[serde(rename = "constant")]
    Constant(f64),
    #[serde(rename = "gaussian")]
    Gaussian { mean: f64, variance: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VariableDecl {
    id: VarId,
    kind: VarKind,
    #[serde(default)]
    controllable: bool,
    range: RangeDecl,
    #[serde(default)]
    noise: bool,
}

#[derive(Debug, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum RangeDecl {
    Interval { lo: f64, hi: f64 },
    Set { set: Vec<f64> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDecl {
    parent: VarId,
    child: VarId,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FunctionDecl {
    name: String,
    #[serde(default)]
    params: BTreeMap<String, f64>,
}

/// Parses a graph-only SCM specification.
pub fn load_graph(text: &str) -> Result<CausalGraph, ScmFileError> {
    let file: ScmFile = toml::from_str(text)?;
    build_graph(&file)
}

/// Parses a ground-truth SCM specification, resolving named functions
/// against the built-in registry.
pub fn load_ground_truth(text: &str) -> Result<GroundTruthScm, ScmFileError> {
    let file: ScmFile = toml::from_str(text)?;
    let graph = Arc::new(build_graph(&file)?);
    let mut functions: BTreeMap<VarId, CausalFn> = BTreeMap::new();
    for id in graph.endogenous_ids() {
        let decl = file
            .functions
            .get(&id)
            .ok_or(ScmError::MissingFunction(id.clone()))?;
        functions.insert(id.clone(), resolve_function(decl, &id)?);
    }
    let mut exo = ExoModel::default();
    for id in graph.exogenous_ids() {
        let dist = match file.exogenous.get(&id) {
            Some(ExoDecl::Constant(v)) => ExoDist::Constant(*v),
            Some(ExoDecl::Gaussian { mean, variance }) => ExoDist::Gaussian {
                mean: *mean,
                variance: *variance,
            },
            None => ExoDist::Constant(0.0),
        };
        exo.dists.insert(id, dist);
    }
    Ok(GroundTruthScm::new(graph, functions, exo)?)
}

fn build_graph(file: &ScmFile) -> Result<CausalGraph, ScmFileError> {
    let variables = file
        .variables
        .iter()
        .map(|d| VariableSpec {
            id: d.id.clone(),
            kind: d.kind,
            controllable: d.controllable,
            range: match &d.range {
                RangeDecl::Interval { lo, hi } => VarRange::Continuous { lo: *lo, hi: *hi },
                RangeDecl::Set { set } => VarRange::discrete(set.clone()),
            },
            noise: d.noise,
        })
        .collect();
    let edges = file
        .edges
        .iter()
        .map(|e| (e.parent.clone(), e.child.clone()))
        .collect();
    Ok(CausalGraph::new(variables, edges)?)
}

fn param(decl: &FunctionDecl, key: &str, default: f64) -> f64 {
    decl.params.get(key).copied().unwrap_or(default)
}

/// Built-in function registry. Inputs follow the sorted-parent convention.
fn resolve_function(decl: &FunctionDecl, id: &VarId) -> Result<CausalFn, ScmFileError> {
    let f: CausalFn = match decl.name.as_str() {
        // f(x) = x
        "identity" => Arc::new(|x: &[f64]| x[0]),
        // f(x) = c
        "constant" => {
            let c = param(decl, "value", 0.0);
            Arc::new(move |_: &[f64]| c)
        }
        // f(x) = w·x + b, one weight per input
        "linear" => {
            let w = param(decl, "weight", 1.0);
            let b = param(decl, "bias", 0.0);
            Arc::new(move |x: &[f64]| b + x.iter().map(|v| w * v).sum::<f64>())
        }
        // f(x) = exp(-x)
        "negexp" => Arc::new(|x: &[f64]| (-x[0]).exp()),
        // f(z) = cos(z) - exp(-z/scale)
        "cos_decay" => {
            let scale = param(decl, "scale", 20.0);
            Arc::new(move |x: &[f64]| x[0].cos() - (-x[0] / scale).exp())
        }
        // f(b, l) = (1 - b)·l, carried (non-blocked) load
        "carried_load" => Arc::new(|x: &[f64]| (1.0 - x[0]) * x[1]),
        other => {
            return Err(ScmFileError::UnknownFunction(other.into(), id.clone()));
        }
    };
    Ok(f)
}
