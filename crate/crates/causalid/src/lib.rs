//! Online identification of causal system models.
//!
//! The library estimates the causal functions of a structural causal model
//! (SCM) with a known graph by fitting independent Gaussian-process
//! posteriors to measurement data, and selects data-gathering interventions
//! with a rollout/lookahead policy that trades off information gain against
//! intervention cost. Simulated target systems (a small nonlinear chain and
//! a queueing-style service mesh) provide ground truth for evaluation.
//!
//! Module map:
//! - [`scm`] — causal graphs, interventions, samples, datasets, ground-truth
//!   SCM evaluation, and a text-file SCM loader.
//! - [`gp`] — exact Gaussian-process regression with a Matérn-5/2 prior.
//! - [`estimator`] — the factorized belief over causal functions, evaluation
//!   grids, the ground-truth loss, and the surrogate (uncertainty) loss.
//! - [`policy`] — stage costs, fantasy rollouts, the rollout intervention
//!   policy, and a differential-evolution minimizer.
//! - [`envs`] — simulated target environments with evaluation-only truth
//!   oracles.
//! - [`harness`] — the experiment loop, sweeps, correlation matrices, and
//!   plot/CSV emission.

pub mod envs;
pub mod estimator;
pub mod gp;
pub mod harness;
pub mod policy;
pub mod scm;
pub mod seeds;

#[cfg(test)]
pub(crate) mod testutil;
