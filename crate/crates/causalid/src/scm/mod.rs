//! Structural causal models: variables, graphs, interventions, datasets,
//! and forward evaluation of ground-truth models under do-semantics.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod file;

/// Symbolic variable identifier.
pub type VarId = String;

#[derive(Debug, Error, PartialEq)]
pub enum ScmError {
    #[error("duplicate variable id `{0}`")]
    DuplicateVariable(VarId),
    #[error("edge references unknown variable `{0}`")]
    UnknownVariable(VarId),
    #[error("edge into exogenous variable `{0}`")]
    EdgeIntoExogenous(VarId),
    #[error("cycle detected involving `{0}`")]
    Cycle(VarId),
    #[error("invalid range for `{0}`: {1}")]
    InvalidRange(VarId, String),
    #[error("intervention on non-controllable variable `{0}`")]
    NotControllable(VarId),
    #[error("intervention value {1} outside range of `{0}`")]
    ValueOutOfRange(VarId, f64),
    #[error("missing exogenous value for `{0}`")]
    MissingExogenous(VarId),
    #[error("missing causal function for `{0}`")]
    MissingFunction(VarId),
    #[error("sample is not total: missing `{0}`")]
    SampleNotTotal(VarId),
    #[error("{0}")]
    Other(String),
}

/// Exogenous or endogenous role of a variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Exogenous,
    Endogenous,
}

/// Admissible values of one variable: a continuous interval (endpoints may
/// be infinite) or a finite sorted set of reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VarRange {
    Continuous { lo: f64, hi: f64 },
    Discrete(Vec<f64>),
}

impl VarRange {
    pub fn continuous(lo: f64, hi: f64) -> Self {
        VarRange::Continuous { lo, hi }
    }

    pub fn unbounded() -> Self {
        VarRange::Continuous {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn discrete(mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| a.partial_cmp(b).expect("non-finite discrete member"));
        values.dedup();
        VarRange::Discrete(values)
    }

    /// Membership test. Unbounded endpoints always pass on that side.
    pub fn contains(&self, v: f64) -> bool {
        match self {
            VarRange::Continuous { lo, hi } => v >= *lo && v <= *hi,
            VarRange::Discrete(set) => set.contains(&v),
        }
    }

    /// Clips `v` to the range: clamping for intervals, nearest member for
    /// discrete sets.
    pub fn clip(&self, v: f64) -> f64 {
        match self {
            VarRange::Continuous { lo, hi } => v.clamp(*lo, *hi),
            VarRange::Discrete(set) => {
                let mut best = set[0];
                let mut dist = (v - best).abs();
                for &m in set {
                    let d = (v - m).abs();
                    if d < dist {
                        dist = d;
                        best = m;
                    }
                }
                best
            }
        }
    }

    fn validate(&self, id: &str) -> Result<(), ScmError> {
        match self {
            VarRange::Continuous { lo, hi } => {
                if lo > hi {
                    return Err(ScmError::InvalidRange(id.into(), format!("{lo} > {hi}")));
                }
            }
            VarRange::Discrete(set) => {
                if set.is_empty() {
                    return Err(ScmError::InvalidRange(id.into(), "empty discrete set".into()));
                }
                if set.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(ScmError::InvalidRange(
                        id.into(),
                        "discrete set not strictly sorted".into(),
                    ));
                }
                if set.iter().any(|m| !m.is_finite()) {
                    return Err(ScmError::InvalidRange(
                        id.into(),
                        "non-finite discrete member".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Declaration of one SCM variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub id: VarId,
    pub kind: VarKind,
    pub controllable: bool,
    pub range: VarRange,
    /// Unobservable noise input (dashed exogenous parents like per-response
    /// jitter). Noise variables are exogenous, non-controllable, and never
    /// used as regression inputs.
    #[serde(default)]
    pub noise: bool,
}

impl VariableSpec {
    pub fn exogenous(id: &str, range: VarRange, controllable: bool) -> Self {
        VariableSpec {
            id: id.into(),
            kind: VarKind::Exogenous,
            controllable,
            range,
            noise: false,
        }
    }

    pub fn endogenous(id: &str, range: VarRange, controllable: bool) -> Self {
        VariableSpec {
            id: id.into(),
            kind: VarKind::Endogenous,
            controllable,
            range,
            noise: false,
        }
    }

    pub fn noise(id: &str) -> Self {
        VariableSpec {
            id: id.into(),
            kind: VarKind::Exogenous,
            controllable: false,
            range: VarRange::unbounded(),
            noise: true,
        }
    }
}

/// A directed acyclic causal graph over declared variables.
///
/// Construction validates every structural invariant; a `CausalGraph` value
/// is always a valid DAG with endogenous-only edge heads.
#[derive(Debug, Clone)]
pub struct CausalGraph {
    variables: Vec<VariableSpec>,
    index: BTreeMap<VarId, usize>,
    edges: Vec<(VarId, VarId)>,
    parents: BTreeMap<VarId, Vec<VarId>>,
    topo: Vec<VarId>,
}

impl CausalGraph {
    /// Validates and builds a graph. Reports the first violated invariant:
    /// duplicate ids, unknown edge endpoints, edges into exogenous nodes,
    /// bad ranges, then cycles.
    pub fn new(
        variables: Vec<VariableSpec>,
        edges: Vec<(VarId, VarId)>,
    ) -> Result<Self, ScmError> {
        let mut index = BTreeMap::new();
        for (i, v) in variables.iter().enumerate() {
            if index.insert(v.id.clone(), i).is_some() {
                return Err(ScmError::DuplicateVariable(v.id.clone()));
            }
        }
        for (p, c) in &edges {
            for end in [p, c] {
                if !index.contains_key(end) {
                    return Err(ScmError::UnknownVariable(end.clone()));
                }
            }
            if variables[index[c]].kind == VarKind::Exogenous {
                return Err(ScmError::EdgeIntoExogenous(c.clone()));
            }
        }
        for v in &variables {
            v.range.validate(&v.id)?;
            if v.noise && (v.kind != VarKind::Exogenous || v.controllable) {
                return Err(ScmError::Other(format!(
                    "noise variable `{}` must be exogenous and non-controllable",
                    v.id
                )));
            }
        }

        // Parent lists sorted by id: this order is the calling convention
        // for causal-function inputs.
        let mut parents: BTreeMap<VarId, Vec<VarId>> =
            variables.iter().map(|v| (v.id.clone(), Vec::new())).collect();
        for (p, c) in &edges {
            parents.get_mut(c).unwrap().push(p.clone());
        }
        for list in parents.values_mut() {
            list.sort();
            list.dedup();
        }

        let topo = kahn_order(&variables, &parents)?;
        Ok(CausalGraph {
            variables,
            index,
            edges,
            parents,
            topo,
        })
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn edges(&self) -> &[(VarId, VarId)] {
        &self.edges
    }

    pub fn var(&self, id: &str) -> Option<&VariableSpec> {
        self.index.get(id).map(|&i| &self.variables[i])
    }

    /// Parents of `id`, sorted by id.
    pub fn parents(&self, id: &str) -> &[VarId] {
        self.parents.get(id).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Non-noise parents of `id`, sorted by id: the regression inputs.
    pub fn regression_parents(&self, id: &str) -> Vec<VarId> {
        self.parents(id)
            .iter()
            .filter(|p| !self.var(p).map(|v| v.noise).unwrap_or(false))
            .cloned()
            .collect()
    }

    /// Deterministic topological order (Kahn with id tie-break).
    pub fn topological_order(&self) -> &[VarId] {
        &self.topo
    }

    pub fn endogenous_ids(&self) -> Vec<VarId> {
        self.topo
            .iter()
            .filter(|id| self.var(id).unwrap().kind == VarKind::Endogenous)
            .cloned()
            .collect()
    }

    pub fn exogenous_ids(&self) -> Vec<VarId> {
        self.topo
            .iter()
            .filter(|id| self.var(id).unwrap().kind == VarKind::Exogenous)
            .cloned()
            .collect()
    }

    pub fn controllable_ids(&self) -> Vec<VarId> {
        let mut ids: Vec<VarId> = self
            .variables
            .iter()
            .filter(|v| v.controllable)
            .map(|v| v.id.clone())
            .collect();
        ids.sort();
        ids
    }

    /// Descendants of `id` (excluding `id` itself).
    pub fn descendants(&self, id: &str) -> BTreeSet<VarId> {
        let mut out = BTreeSet::new();
        let mut frontier = vec![id.to_string()];
        while let Some(cur) = frontier.pop() {
            for (p, c) in &self.edges {
                if *p == cur && out.insert(c.clone()) {
                    frontier.push(c.clone());
                }
            }
        }
        out
    }

    /// The operating region: the Cartesian product of all variable ranges.
    pub fn operating_region(&self) -> OperatingRegion {
        OperatingRegion {
            ranges: self
                .variables
                .iter()
                .map(|v| (v.id.clone(), v.range.clone()))
                .collect(),
        }
    }
}

/// Standalone validation entry point; returns the first violated invariant.
pub fn validate_graph(
    variables: Vec<VariableSpec>,
    edges: Vec<(VarId, VarId)>,
) -> Result<CausalGraph, ScmError> {
    CausalGraph::new(variables, edges)
}

fn kahn_order(
    variables: &[VariableSpec],
    parents: &BTreeMap<VarId, Vec<VarId>>,
) -> Result<Vec<VarId>, ScmError> {
    let mut indegree: BTreeMap<&str, usize> = variables
        .iter()
        .map(|v| (v.id.as_str(), parents[&v.id].len()))
        .collect();
    let mut children: BTreeMap<&str, Vec<&str>> =
        variables.iter().map(|v| (v.id.as_str(), Vec::new())).collect();
    for (c, ps) in parents {
        for p in ps {
            children.get_mut(p.as_str()).unwrap().push(c.as_str());
        }
    }
    let mut ready: BTreeSet<&str> = indegree
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(&id, _)| id)
        .collect();
    let mut order = Vec::with_capacity(variables.len());
    while let Some(&next) = ready.iter().next() {
        ready.remove(next);
        order.push(next.to_string());
        for &c in &children[next] {
            let d = indegree.get_mut(c).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() != variables.len() {
        let stuck = indegree
            .iter()
            .filter(|(_, &d)| d > 0)
            .map(|(&id, _)| id)
            .min()
            .unwrap_or("?");
        return Err(ScmError::Cycle(stuck.to_string()));
    }
    Ok(order)
}

/// The full operating region R(U) x R(V).
#[derive(Debug, Clone)]
pub struct OperatingRegion {
    ranges: BTreeMap<VarId, VarRange>,
}

impl OperatingRegion {
    pub fn range(&self, id: &str) -> Option<&VarRange> {
        self.ranges.get(id)
    }

    /// Per-coordinate membership; noise variables are exempt.
    pub fn contains(&self, sample: &Sample, graph: &CausalGraph) -> bool {
        sample.values.iter().all(|(id, &v)| {
            graph.var(id).map(|spec| spec.noise).unwrap_or(false)
                || self.ranges.get(id).map(|r| r.contains(v)).unwrap_or(false)
        })
    }
}

/// A do-intervention: a possibly-empty assignment of controllable variables.
/// The empty assignment is the passive intervention do(∅).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Intervention {
    pub assignments: BTreeMap<VarId, f64>,
}

impl Intervention {
    pub fn passive() -> Self {
        Intervention::default()
    }

    pub fn single(id: &str, value: f64) -> Self {
        let mut assignments = BTreeMap::new();
        assignments.insert(id.to_string(), value);
        Intervention { assignments }
    }

    pub fn is_passive(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn targets(&self) -> impl Iterator<Item = &VarId> {
        self.assignments.keys()
    }

    /// Checks controllability and range membership of every assignment.
    pub fn validate(&self, graph: &CausalGraph) -> Result<(), ScmError> {
        for (id, &v) in &self.assignments {
            let spec = graph
                .var(id)
                .ok_or_else(|| ScmError::UnknownVariable(id.clone()))?;
            if !spec.controllable {
                return Err(ScmError::NotControllable(id.clone()));
            }
            if !spec.range.contains(v) {
                return Err(ScmError::ValueOutOfRange(id.clone(), v));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Intervention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_passive() {
            return write!(f, "do(∅)");
        }
        write!(f, "do(")?;
        for (i, (id, v)) in self.assignments.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{id}={v}")?;
        }
        write!(f, ")")
    }
}

/// One steady-state measurement: a total map over all graph variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub values: BTreeMap<VarId, f64>,
}

impl Sample {
    pub fn new(values: BTreeMap<VarId, f64>) -> Self {
        Sample { values }
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.values.get(id).copied()
    }

    pub fn ensure_total(&self, graph: &CausalGraph) -> Result<(), ScmError> {
        for v in graph.variables() {
            if !self.values.contains_key(&v.id) {
                return Err(ScmError::SampleNotTotal(v.id.clone()));
            }
        }
        Ok(())
    }
}

/// One dataset record: the intervention in force and the measured sample.
pub type Record = (Intervention, Sample);

/// Time-ordered measurement dataset, optionally bounded as a FIFO buffer.
///
/// Single-writer append; reads are safe to share. Each record carries a
/// monotone serial so downstream caches can track evictions.
#[derive(Debug, Clone)]
pub struct Dataset {
    records: VecDeque<(u64, Record)>,
    capacity: Option<usize>,
    next_serial: u64,
}

impl Dataset {
    pub fn new(capacity: Option<usize>) -> Self {
        assert!(capacity.is_none_or(|c| c > 0), "capacity must be positive");
        Dataset {
            records: VecDeque::new(),
            capacity,
            next_serial: 0,
        }
    }

    pub fn unbounded() -> Self {
        Dataset::new(None)
    }

    /// Appends a record, evicting the oldest when at capacity.
    /// Returns the serial of the evicted record, if any.
    pub fn push(&mut self, record: Record) -> Option<u64> {
        let serial = self.next_serial;
        self.next_serial += 1;
        self.records.push_back((serial, record));
        match self.capacity {
            Some(cap) if self.records.len() > cap => {
                self.records.pop_front().map(|(s, _)| s)
            }
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    /// Records oldest-first with their serials.
    pub fn iter(&self) -> impl Iterator<Item = (u64, &Record)> {
        self.records.iter().map(|(s, r)| (*s, r))
    }
}

/// Distribution of one exogenous variable under passive operation.
#[derive(Debug, Clone, PartialEq)]
pub enum ExoDist {
    Constant(f64),
    Gaussian { mean: f64, variance: f64 },
}

impl ExoDist {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            ExoDist::Constant(v) => *v,
            ExoDist::Gaussian { mean, variance } => {
                mean + variance.sqrt() * rng.sample::<f64, _>(StandardNormal)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            ExoDist::Constant(v) => *v,
            ExoDist::Gaussian { mean, .. } => *mean,
        }
    }
}

/// The known exogenous distribution ℙ[U]: one sampler per exogenous
/// variable. Planning and simulation both draw from it.
#[derive(Debug, Clone, Default)]
pub struct ExoModel {
    pub dists: BTreeMap<VarId, ExoDist>,
}

impl ExoModel {
    pub fn constant(pairs: &[(&str, f64)]) -> Self {
        ExoModel {
            dists: pairs
                .iter()
                .map(|(id, v)| (id.to_string(), ExoDist::Constant(*v)))
                .collect(),
        }
    }

    /// Draws values for all exogenous variables in sorted-id order. The
    /// draw count never depends on the intervention, so streams cannot
    /// shift across interventions.
    pub fn draw_all<R: Rng>(&self, rng: &mut R) -> BTreeMap<VarId, f64> {
        self.dists
            .iter()
            .map(|(id, d)| (id.clone(), d.sample(rng)))
            .collect()
    }
}

/// An evaluable causal function. Inputs follow the variable's parent list
/// sorted by id.
pub type CausalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A fully specified ground-truth SCM: graph, causal functions, and the
/// exogenous distribution.
#[derive(Clone)]
pub struct GroundTruthScm {
    pub graph: Arc<CausalGraph>,
    pub exo: ExoModel,
    functions: BTreeMap<VarId, CausalFn>,
}

impl GroundTruthScm {
    pub fn new(
        graph: Arc<CausalGraph>,
        functions: BTreeMap<VarId, CausalFn>,
        exo: ExoModel,
    ) -> Result<Self, ScmError> {
        for id in graph.endogenous_ids() {
            if !functions.contains_key(&id) {
                return Err(ScmError::MissingFunction(id));
            }
        }
        for id in graph.exogenous_ids() {
            if !exo.dists.contains_key(&id) {
                return Err(ScmError::MissingExogenous(id));
            }
        }
        Ok(GroundTruthScm {
            graph,
            exo,
            functions,
        })
    }

    pub fn function(&self, id: &str) -> Option<&CausalFn> {
        self.functions.get(id)
    }

    /// Noiseless evaluation of one causal function at a full parent input
    /// (noise parents included, in sorted-id order), clipped to range.
    pub fn eval_function(&self, id: &str, parent_values: &[f64]) -> Result<f64, ScmError> {
        let f = self
            .functions
            .get(id)
            .ok_or_else(|| ScmError::MissingFunction(id.to_string()))?;
        let spec = self
            .graph
            .var(id)
            .ok_or_else(|| ScmError::UnknownVariable(id.to_string()))?;
        Ok(spec.range.clip(f(parent_values)))
    }
}

impl fmt::Debug for GroundTruthScm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroundTruthScm")
            .field("functions", &self.functions.keys().collect::<Vec<_>>())
            .finish()
    }
}

/// Forward evaluation under do-semantics.
///
/// Intervened variables take their assigned values and bypass their
/// functions; every other endogenous variable is computed from already
/// resolved parent values in topological order and clipped to its range.
/// Non-intervened exogenous variables take their `exo_values` entry.
pub fn evaluate_scm(
    scm: &GroundTruthScm,
    exo_values: &BTreeMap<VarId, f64>,
    intervention: &Intervention,
) -> Result<Sample, ScmError> {
    let graph = &scm.graph;
    intervention.validate(graph)?;
    let mut resolved: BTreeMap<VarId, f64> = BTreeMap::new();
    for id in graph.topological_order() {
        let spec = graph.var(id).unwrap();
        let value = if let Some(&v) = intervention.assignments.get(id) {
            v
        } else {
            match spec.kind {
                VarKind::Exogenous => *exo_values
                    .get(id)
                    .ok_or_else(|| ScmError::MissingExogenous(id.clone()))?,
                VarKind::Endogenous => {
                    let inputs: Vec<f64> = graph
                        .parents(id)
                        .iter()
                        .map(|p| {
                            *resolved
                                .get(p)
                                .expect("topological order resolves parents first")
                        })
                        .collect();
                    scm.eval_function(id, &inputs)?
                }
            }
        };
        resolved.insert(id.clone(), value);
    }
    Ok(Sample::new(resolved))
}
