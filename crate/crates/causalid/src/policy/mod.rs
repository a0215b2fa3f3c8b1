//! Intervention selection: stage costs over belief transitions, rollout
//! estimation of the base policy's cost-to-go, and the lookahead rollout
//! policy minimized per candidate with differential evolution.
//!
//! All expectations are Monte-Carlo over *fantasy* belief transitions:
//! hypothetical measurements drawn from the current belief itself. Every
//! random stream is derived from a seed by stable labels and indices, so
//! results are bitwise identical regardless of parallel scheduling, and a
//! candidate's objective is a pure function of (candidate, values, seed).

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::estimator::{Belief, EstimatorError};
use crate::gp::GpError;
use crate::scm::{ExoModel, Intervention, Record, Sample, ScmError, VarId, VarKind, VarRange};
use crate::seeds;

mod de;

pub use de::{differential_evolution, discrete_lattice, snap_to_bounds, DeBound};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error("no candidate interventions available")]
    NoCandidates,
}

/// Operational cost of interventions: a per-variable charge plus a
/// dedicated passive entry. Multi-variable interventions cost the sum of
/// their per-variable charges.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    passive: f64,
    per_var: BTreeMap<VarId, f64>,
    fallback: f64,
}

impl CostModel {
    pub fn new(passive: f64) -> Self {
        assert!(passive >= 0.0);
        CostModel {
            passive,
            per_var: BTreeMap::new(),
            fallback: 0.0,
        }
    }

    pub fn set(&mut self, var: &str, cost: f64) {
        assert!(cost >= 0.0);
        self.per_var.insert(var.to_string(), cost);
    }

    pub fn with_fallback(mut self, cost: f64) -> Self {
        assert!(cost >= 0.0);
        self.fallback = cost;
        self
    }

    pub fn passive_cost(&self) -> f64 {
        self.passive
    }

    pub fn cost(&self, u: &Intervention) -> f64 {
        if u.is_passive() {
            return self.passive;
        }
        u.assignments
            .keys()
            .map(|id| self.per_var.get(id).copied().unwrap_or(self.fallback))
            .sum()
    }

    /// The same model with every entry shifted by a constant; used to test
    /// that information terms are cost-invariant.
    pub fn shifted(&self, delta: f64) -> Self {
        let mut out = self.clone();
        out.passive += delta;
        out.fallback += delta;
        for v in out.per_var.values_mut() {
            *v += delta;
        }
        out
    }
}

/// Knobs of the rollout policy.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutConfig {
    /// Lookahead horizon ℓ ≥ 1.
    pub lookahead: usize,
    /// Rollout horizon m ≥ 1 (base-policy simulation depth).
    pub rollout_horizon: usize,
    /// Rollout trajectories L ≥ 1.
    pub trajectories: usize,
    /// Discount γ ∈ (0, 1).
    pub discount: f64,
    /// Fantasy transitions per candidate for the stage-cost expectation.
    pub fantasy_per_candidate: usize,
    /// Measurement samples per intervention (M).
    pub samples_per_intervention: usize,
    pub de_population: usize,
    pub de_iterations: usize,
    /// Also optimize one joint assignment over all controllable variables.
    pub include_joint_candidate: bool,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            lookahead: 1,
            rollout_horizon: 5,
            trajectories: 10,
            discount: 0.9,
            fantasy_per_candidate: 10,
            samples_per_intervention: 1,
            de_population: 10,
            de_iterations: 30,
            include_joint_candidate: false,
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) {
        assert!(self.lookahead >= 1);
        assert!(self.rollout_horizon >= 1);
        assert!(self.trajectories >= 1);
        assert!(self.discount > 0.0 && self.discount < 1.0);
        assert!(self.fantasy_per_candidate >= 1);
        assert!(self.samples_per_intervention >= 1);
        assert!(self.de_population >= 4);
    }
}

/// A stationary intervention policy over beliefs.
pub trait BasePolicy: Sync {
    fn select(&self, belief: &Belief) -> Intervention;
}

/// The passive base policy: do(∅) for every belief.
#[derive(Debug, Clone, Copy, Default)]
pub struct PassivePolicy;

impl BasePolicy for PassivePolicy {
    fn select(&self, _belief: &Belief) -> Intervention {
        Intervention::passive()
    }
}

/// Everything a planning call needs besides the belief.
pub struct PolicyContext<'a> {
    pub cfg: &'a RolloutConfig,
    pub costs: &'a CostModel,
    pub exo: &'a ExoModel,
}

/// A lazily conditioned draw of one causal function from a GP posterior.
///
/// Values are sampled on demand and conditioned on every value already
/// drawn, which by GP consistency is an exact sample of the joint
/// restriction of one function realization to the queried points.
struct FunctionDraw<'p> {
    vb: &'p crate::estimator::VarBelief,
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl<'p> FunctionDraw<'p> {
    fn new(vb: &'p crate::estimator::VarBelief) -> Self {
        FunctionDraw {
            vb,
            points: Vec::new(),
            values: Vec::new(),
        }
    }

    fn draw(&mut self, x: &[f64], rng: &mut ChaCha8Rng) -> Result<f64, PolicyError> {
        let (mean, var) = if self.points.is_empty() {
            self.vb.posterior.predict_one(x)?
        } else {
            // Condition the posterior joint on previously drawn values.
            let mut queries = self.points.clone();
            queries.push(x.to_vec());
            let (means, cov) = self.vb.posterior.predict_full(&queries)?;
            let k = self.points.len();
            let mut a = cov.view((0, 0), (k, k)).into_owned();
            for i in 0..k {
                a[(i, i)] += 1e-10;
            }
            let b = cov.view((0, k), (k, 1)).into_owned();
            let chol = a.cholesky().ok_or(GpError::NotPositiveDefinite(1e-10))?;
            let w = chol.solve(&b);
            let centered = DVector::from_iterator(
                k,
                self.values.iter().zip(means.iter()).map(|(v, m)| v - m),
            );
            let mean = means[k] + w.column(0).dot(&centered);
            let var = (cov[(k, k)] - b.column(0).dot(&w.column(0))).max(0.0);
            (mean, var)
        };
        let value = mean + var.sqrt() * rng.sample::<f64, _>(StandardNormal);
        self.points.push(x.to_vec());
        self.values.push(value);
        Ok(value)
    }
}

/// Result of one fantasy transition when the belief is updated in place.
pub struct FantasyStepStats {
    pub records: Vec<Record>,
    pub surrogate_before: f64,
    pub surrogate_after: f64,
}

impl FantasyStepStats {
    pub fn information_term(&self) -> f64 {
        self.surrogate_after - self.surrogate_before
    }
}

/// Result of one fantasy transition.
pub struct FantasyOutcome {
    pub belief: Belief,
    pub records: Vec<Record>,
    pub surrogate_before: f64,
    pub surrogate_after: f64,
}

impl FantasyOutcome {
    pub fn information_term(&self) -> f64 {
        self.surrogate_after - self.surrogate_before
    }
}

/// Simulates one belief transition under do(u): draws a hypothetical model
/// realization from the belief, fresh exogenous values, and observation
/// noise; returns the Bayes-updated belief and the simulated measurements.
/// M samples come from a single realization with independent exogenous and
/// noise draws.
pub fn fantasy_step(
    ctx: &PolicyContext<'_>,
    belief: &Belief,
    u: &Intervention,
    rng: &mut ChaCha8Rng,
) -> Result<FantasyOutcome, PolicyError> {
    let mut next = belief.clone();
    let stats = fantasy_step_into(ctx, &mut next, u, rng)?;
    Ok(FantasyOutcome {
        belief: next,
        records: stats.records,
        surrogate_before: stats.surrogate_before,
        surrogate_after: stats.surrogate_after,
    })
}

/// In-place variant of [`fantasy_step`] for owned beliefs inside planning
/// loops.
pub fn fantasy_step_into(
    ctx: &PolicyContext<'_>,
    belief: &mut Belief,
    u: &Intervention,
    rng: &mut ChaCha8Rng,
) -> Result<FantasyStepStats, PolicyError> {
    let graph = Arc::clone(belief.graph());
    u.validate(&graph)?;
    let mut records = Vec::with_capacity(ctx.cfg.samples_per_intervention);
    {
        let mut draws: BTreeMap<&VarId, FunctionDraw<'_>> = belief
            .vars()
            .map(|(id, vb)| (id, FunctionDraw::new(vb)))
            .collect();
        for _ in 0..ctx.cfg.samples_per_intervention {
            let exo_values = ctx.exo.draw_all(rng);
            // Latent values feed children; recorded values carry noise.
            let mut latent: BTreeMap<VarId, f64> = BTreeMap::new();
            let mut recorded: BTreeMap<VarId, f64> = BTreeMap::new();
            for id in graph.topological_order() {
                let spec = graph.var(id).unwrap();
                if let Some(&v) = u.assignments.get(id) {
                    latent.insert(id.clone(), v);
                    recorded.insert(id.clone(), v);
                    continue;
                }
                match spec.kind {
                    VarKind::Exogenous => {
                        let v = exo_values.get(id).copied().unwrap_or(0.0);
                        latent.insert(id.clone(), v);
                        recorded.insert(id.clone(), v);
                    }
                    VarKind::Endogenous => {
                        let draw = draws.get_mut(id).expect("belief covers endogenous vars");
                        let x: Vec<f64> = draw.vb.parents.iter().map(|p| latent[p]).collect();
                        let f = draw.draw(&x, rng)?;
                        let clipped = spec.range.clip(f);
                        let sigma2 = belief.kernels().kernel_for(id).noise_variance;
                        let measured =
                            clipped + sigma2.sqrt() * rng.sample::<f64, _>(StandardNormal);
                        latent.insert(id.clone(), clipped);
                        recorded.insert(id.clone(), spec.range.clip(measured));
                    }
                }
            }
            records.push((u.clone(), Sample::new(recorded)));
        }
    }
    let surrogate_before = belief.analytic_surrogate();
    belief.apply(&records)?;
    let surrogate_after = belief.analytic_surrogate();
    Ok(FantasyStepStats {
        records,
        surrogate_before,
        surrogate_after,
    })
}

/// Expected one-step cost of do(u): the mean surrogate-loss change over
/// fantasy transitions plus the intervention cost. The information term is
/// never positive beyond Monte-Carlo noise (variance contraction).
pub fn stage_cost(
    ctx: &PolicyContext<'_>,
    belief: &Belief,
    u: &Intervention,
    seed: u64,
) -> Result<f64, PolicyError> {
    let f = ctx.cfg.fantasy_per_candidate;
    let mut info = 0.0;
    for i in 0..f as u64 {
        let mut rng = seeds::stream(seeds::derive_path(seed, "stage", &[i]));
        info += fantasy_step(ctx, belief, u, &mut rng)?.information_term();
    }
    Ok(info / f as f64 + ctx.costs.cost(u))
}

/// One simulated base-policy trajectory: discounted realized stage costs
/// over the rollout horizon plus the discounted terminal value.
fn single_trajectory(
    ctx: &PolicyContext<'_>,
    mut belief: Belief,
    base: &dyn BasePolicy,
    terminal: &(dyn Fn(&Belief) -> f64 + Sync),
    seed: u64,
) -> Result<f64, PolicyError> {
    let mut acc = 0.0;
    let mut disc = 1.0;
    for step in 0..ctx.cfg.rollout_horizon as u64 {
        let u = base.select(&belief);
        let mut rng = seeds::stream(seeds::derive_path(seed, "step", &[step]));
        let stats = fantasy_step_into(ctx, &mut belief, &u, &mut rng)?;
        acc += disc * (stats.information_term() + ctx.costs.cost(&u));
        disc *= ctx.cfg.discount;
    }
    Ok(acc + disc * terminal(&belief))
}

/// Rollout estimate of the base policy's cost-to-go: the average of L
/// independent m-step fantasy trajectories, each contributing discounted
/// stage costs plus the discounted terminal value (the analytic surrogate
/// loss by default).
pub fn rollout_value(
    ctx: &PolicyContext<'_>,
    belief: &Belief,
    base: &dyn BasePolicy,
    terminal: &(dyn Fn(&Belief) -> f64 + Sync),
    seed: u64,
) -> Result<f64, PolicyError> {
    let l = ctx.cfg.trajectories;
    let mut acc = 0.0;
    for j in 0..l as u64 {
        acc += single_trajectory(
            ctx,
            belief.clone(),
            base,
            terminal,
            seeds::derive_path(seed, "traj", &[j]),
        )?;
    }
    Ok(acc / l as f64)
}

/// The default terminal cost: the analytic surrogate loss.
pub fn surrogate_terminal(belief: &Belief) -> f64 {
    belief.analytic_surrogate()
}

/// One step of a recorded fantasy trajectory.
pub struct FantasyTrajectoryStep {
    pub belief_before: Belief,
    pub intervention: Intervention,
    pub measurements: Vec<Sample>,
    pub stage_cost: f64,
}

/// A fully recorded fantasy trajectory under the base policy; belief at
/// step j+1 is the one-step update of the belief at step j with that
/// step's simulated measurements.
pub struct FantasyTrajectory {
    pub steps: Vec<FantasyTrajectoryStep>,
    pub terminal_belief: Belief,
}

/// Like one `rollout_value` trajectory, but recording every transition.
pub fn fantasy_trajectory(
    ctx: &PolicyContext<'_>,
    belief: &Belief,
    base: &dyn BasePolicy,
    seed: u64,
) -> Result<FantasyTrajectory, PolicyError> {
    let mut current = belief.clone();
    let mut steps = Vec::with_capacity(ctx.cfg.rollout_horizon);
    for step in 0..ctx.cfg.rollout_horizon as u64 {
        let u = base.select(&current);
        let mut rng = seeds::stream(seeds::derive_path(seed, "step", &[step]));
        let out = fantasy_step(ctx, &current, &u, &mut rng)?;
        steps.push(FantasyTrajectoryStep {
            belief_before: current,
            intervention: u.clone(),
            measurements: out.records.iter().map(|r| r.1.clone()).collect(),
            stage_cost: out.information_term() + ctx.costs.cost(&u),
        });
        current = out.belief;
    }
    Ok(FantasyTrajectory {
        steps,
        terminal_belief: current,
    })
}

/// A candidate intervention subset considered by the rollout policy.
#[derive(Debug, Clone, PartialEq)]
pub enum CandidateKind {
    Passive,
    Vars(Vec<VarId>),
}

impl CandidateKind {
    pub fn label(&self) -> String {
        match self {
            CandidateKind::Passive => "passive".to_string(),
            CandidateKind::Vars(vars) => vars.join("+"),
        }
    }
}

/// Outcome of evaluating (and value-optimizing) one candidate subset.
#[derive(Debug, Clone)]
pub struct CandidateEval {
    pub kind: CandidateKind,
    pub values: Vec<f64>,
    pub objective: f64,
    pub chosen: bool,
    pub wallclock_ms: f64,
}

impl CandidateEval {
    pub fn intervention(&self) -> Intervention {
        match &self.kind {
            CandidateKind::Passive => Intervention::passive(),
            CandidateKind::Vars(vars) => Intervention {
                assignments: vars.iter().cloned().zip(self.values.iter().copied()).collect(),
            },
        }
    }
}

/// The rollout policy's decision at one step.
pub struct PolicyDecision {
    pub chosen: Intervention,
    pub evaluations: Vec<CandidateEval>,
}

/// Search bounds for intervention values on one variable. Unbounded
/// continuous ranges fall back to the exogenous distribution's effective
/// range (mean ± 4σ).
fn bound_for(range: &VarRange, exo: &ExoModel, id: &str) -> DeBound {
    match range {
        VarRange::Discrete(set) => DeBound::Discrete(set.clone()),
        VarRange::Continuous { lo, hi } => {
            if lo.is_finite() && hi.is_finite() {
                DeBound::Continuous { lo: *lo, hi: *hi }
            } else {
                match exo.dists.get(id) {
                    Some(crate::scm::ExoDist::Gaussian { mean, variance }) => {
                        let sd = variance.sqrt();
                        DeBound::Continuous {
                            lo: mean - 4.0 * sd,
                            hi: mean + 4.0 * sd,
                        }
                    }
                    Some(crate::scm::ExoDist::Constant(v)) => DeBound::Continuous {
                        lo: *v - 1.0,
                        hi: *v + 1.0,
                    },
                    None => DeBound::Continuous {
                        lo: lo.max(-1e6),
                        hi: hi.min(1e6),
                    },
                }
            }
        }
    }
}

/// Default candidate subsets: do(∅), one single-variable candidate per
/// controllable variable, and optionally the full joint assignment.
pub fn default_candidates(
    belief: &Belief,
    exo: &ExoModel,
    include_joint: bool,
) -> Vec<(CandidateKind, Vec<DeBound>)> {
    let graph = belief.graph();
    let controllable = graph.controllable_ids();
    let mut out = vec![(CandidateKind::Passive, Vec::new())];
    for id in &controllable {
        let range = &graph.var(id).unwrap().range;
        out.push((
            CandidateKind::Vars(vec![id.clone()]),
            vec![bound_for(range, exo, id)],
        ));
    }
    if include_joint && controllable.len() > 1 {
        let bounds = controllable
            .iter()
            .map(|id| bound_for(&graph.var(id).unwrap().range, exo, id))
            .collect();
        out.push((CandidateKind::Vars(controllable), bounds));
    }
    out
}

/// The lookahead objective for one candidate assignment.
///
/// For ℓ=1 this is the fantasy-averaged stage cost plus the discounted
/// mean of single-trajectory rollout values from the fantasy beliefs (the
/// trajectory budget L spread round-robin over the fantasies). For ℓ>1
/// each fantasy continues through ℓ−1 greedily selected intermediate
/// interventions before the base-policy rollout. The value is a pure
/// function of (candidate, values, seed).
pub fn candidate_objective(
    ctx: &PolicyContext<'_>,
    belief: &Belief,
    base: &dyn BasePolicy,
    kind: &CandidateKind,
    values: &[f64],
    seed: u64,
) -> Result<f64, PolicyError> {
    let u = match kind {
        CandidateKind::Passive => Intervention::passive(),
        CandidateKind::Vars(vars) => Intervention {
            assignments: vars.iter().cloned().zip(values.iter().copied()).collect(),
        },
    };
    let f = ctx.cfg.fantasy_per_candidate;
    let l = ctx.cfg.trajectories;
    let mut info = 0.0;
    let mut continuation = 0.0;
    for fx in 0..f {
        let mut rng = seeds::stream(seeds::derive_path(seed, "cand-fantasy", &[fx as u64]));
        let mut fantasy = belief.clone();
        let stats = fantasy_step_into(ctx, &mut fantasy, &u, &mut rng)?;
        info += stats.information_term();
        // Round-robin trajectory shares summing to L.
        let share = l / f + usize::from(fx < l % f);
        for j in 0..share {
            continuation += continue_lookahead(
                ctx,
                &fantasy,
                base,
                ctx.cfg.lookahead - 1,
                seeds::derive_path(seed, "cand-cont", &[fx as u64, j as u64]),
            )?;
        }
    }
    Ok(info / f as f64 + ctx.costs.cost(&u) + ctx.cfg.discount * continuation / l as f64)
}

/// Continuation value after the first lookahead level: greedy intermediate
/// selections over a coarse candidate set for the remaining ℓ−1 levels
/// (one sampled continuation per level), then a single base-policy
/// trajectory with the surrogate terminal.
fn continue_lookahead(
    ctx: &PolicyContext<'_>,
    belief: &Belief,
    base: &dyn BasePolicy,
    levels_left: usize,
    seed: u64,
) -> Result<f64, PolicyError> {
    if levels_left == 0 {
        return single_trajectory(ctx, belief.clone(), base, &surrogate_terminal, seed);
    }
    let mut best: Option<(f64, Belief)> = None;
    for (i, u) in coarse_candidates(belief, ctx.exo).into_iter().enumerate() {
        let mut rng = seeds::stream(seeds::derive_path(seed, "inner", &[i as u64]));
        let out = fantasy_step(ctx, belief, &u, &mut rng)?;
        let score = out.information_term() + ctx.costs.cost(&u);
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, out.belief));
        }
    }
    let (score, next) = best.ok_or(PolicyError::NoCandidates)?;
    let deeper = continue_lookahead(
        ctx,
        &next,
        base,
        levels_left - 1,
        seeds::derive_path(seed, "deeper", &[]),
    )?;
    Ok(score + ctx.cfg.discount * deeper)
}

/// Coarse intermediate candidates for multi-level lookahead: do(∅) plus
/// three quantile values per controllable variable.
fn coarse_candidates(belief: &Belief, exo: &ExoModel) -> Vec<Intervention> {
    let graph = belief.graph();
    let mut out = vec![Intervention::passive()];
    for id in graph.controllable_ids() {
        match bound_for(&graph.var(&id).unwrap().range, exo, &id) {
            DeBound::Continuous { lo, hi } => {
                for q in [0.25, 0.5, 0.75] {
                    out.push(Intervention::single(&id, lo + q * (hi - lo)));
                }
            }
            DeBound::Discrete(set) => {
                let picks = [0, set.len() / 2, set.len() - 1];
                let mut seen = Vec::new();
                for &ix in &picks {
                    if !seen.contains(&ix) {
                        seen.push(ix);
                        out.push(Intervention::single(&id, set[ix]));
                    }
                }
            }
        }
    }
    out
}

/// One decision of the rollout policy: optimizes every candidate subset's
/// values against the lookahead objective and returns the global minimizer
/// (do(∅) always included, ties resolved toward earlier candidates).
///
/// Candidate evaluations run in parallel; per-candidate derived seeds make
/// the result independent of scheduling.
pub fn rollout_policy_step(
    ctx: &PolicyContext<'_>,
    belief: &Belief,
    base: &dyn BasePolicy,
    seed: u64,
) -> Result<PolicyDecision, PolicyError> {
    ctx.cfg.validate();
    let candidates = default_candidates(belief, ctx.exo, ctx.cfg.include_joint_candidate);
    let evaluations: Vec<Result<CandidateEval, PolicyError>> = candidates
        .into_par_iter()
        .enumerate()
        .map(|(i, (kind, bounds))| {
            let started = std::time::Instant::now();
            let cseed = seeds::derive_path(seed, "candidate", &[i as u64]);
            let (values, objective) = match &kind {
                CandidateKind::Passive => {
                    (Vec::new(), candidate_objective(ctx, belief, base, &kind, &[], cseed)?)
                }
                CandidateKind::Vars(_) => {
                    optimize_candidate(ctx, belief, base, &kind, &bounds, cseed)?
                }
            };
            Ok(CandidateEval {
                kind,
                values,
                objective,
                chosen: false,
                wallclock_ms: started.elapsed().as_secs_f64() * 1e3,
            })
        })
        .collect();
    let mut evaluations: Vec<CandidateEval> =
        evaluations.into_iter().collect::<Result<_, _>>()?;
    let best = evaluations
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| {
            a.objective
                .partial_cmp(&b.objective)
                .expect("objective returned NaN")
                .then(ia.cmp(ib))
        })
        .map(|(i, _)| i)
        .ok_or(PolicyError::NoCandidates)?;
    evaluations[best].chosen = true;
    Ok(PolicyDecision {
        chosen: evaluations[best].intervention(),
        evaluations,
    })
}

fn optimize_candidate(
    ctx: &PolicyContext<'_>,
    belief: &Belief,
    base: &dyn BasePolicy,
    kind: &CandidateKind,
    bounds: &[DeBound],
    cseed: u64,
) -> Result<(Vec<f64>, f64), PolicyError> {
    // Objective evaluations share the candidate seed (common random
    // numbers), so the objective is deterministic in the values alone.
    let mut failure: Option<PolicyError> = None;
    let mut eval = |vals: &[f64]| -> f64 {
        match candidate_objective(ctx, belief, base, kind, vals, cseed) {
            Ok(v) => v,
            Err(e) => {
                if failure.is_none() {
                    failure = Some(e);
                }
                f64::INFINITY
            }
        }
    };
    // A fully enumerable discrete lattice is evaluated exhaustively; DE
    // cannot visit anything else after snapping.
    let result = if let Some(lattice) = discrete_lattice(bounds, ctx.cfg.de_population) {
        let mut best: Option<(Vec<f64>, f64)> = None;
        for point in lattice {
            let v = eval(&point);
            if best.as_ref().is_none_or(|(_, bv)| v < *bv) {
                best = Some((point, v));
            }
        }
        best.expect("lattice is nonempty")
    } else {
        let mut rng = seeds::stream(seeds::derive(cseed, "de"));
        differential_evolution(
            &mut eval,
            bounds,
            ctx.cfg.de_population,
            ctx.cfg.de_iterations,
            &mut rng,
        )
    };
    match failure {
        Some(e) => Err(e),
        None => Ok(result),
    }
}
