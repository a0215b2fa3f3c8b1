//! Experiment configuration: a flat TOML document with nested sections.
//! Unknown keys are errors.

use serde::Deserialize;

use crate::policy::RolloutConfig;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub rollout: RolloutSection,
    #[serde(default)]
    pub costs: Option<CostsSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// "illustrative" or "mesh".
    pub environment: String,
    #[serde(default = "default_scenario")]
    pub scenario: u32,
    pub policy: PolicyChoice,
    /// Steps T ≥ 1.
    pub horizon: u64,
    /// Master seeds, one independent run each.
    pub seeds: Vec<u64>,
    /// FIFO capacity; absent means unbounded.
    #[serde(default)]
    pub dataset_capacity: Option<usize>,
    #[serde(default)]
    pub out_dir: Option<String>,
    /// When false (the default) the wallclock_ms column is written as 0 so
    /// repeated runs are byte-identical.
    #[serde(default)]
    pub record_wallclock: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyChoice {
    Passive,
    Rollout,
}

impl std::fmt::Display for PolicyChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PolicyChoice::Passive => write!(f, "passive"),
            PolicyChoice::Rollout => write!(f, "rollout"),
        }
    }
}

fn default_scenario() -> u32 {
    1
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    /// Uniform observation-noise override; absent means the environment's
    /// declared per-variable noise.
    #[serde(default)]
    pub noise_variance: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_one_d")]
    pub one_d_points: usize,
    #[serde(default = "default_multi_d")]
    pub multi_d_points: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            one_d_points: default_one_d(),
            multi_d_points: default_multi_d(),
        }
    }
}

fn default_one_d() -> usize {
    41
}

fn default_multi_d() -> usize {
    256
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutSection {
    #[serde(default = "d_lookahead")]
    pub lookahead: usize,
    #[serde(default = "d_rollout_horizon")]
    pub rollout_horizon: usize,
    #[serde(default = "d_trajectories")]
    pub trajectories: usize,
    #[serde(default = "d_discount")]
    pub discount: f64,
    #[serde(default = "d_fantasy")]
    pub fantasy_per_candidate: usize,
    #[serde(default = "d_samples")]
    pub samples_per_intervention: usize,
    #[serde(default = "d_de_pop")]
    pub de_population: usize,
    #[serde(default = "d_de_iters")]
    pub de_iterations: usize,
    #[serde(default)]
    pub include_joint_candidate: bool,
}

fn d_lookahead() -> usize {
    1
}
fn d_rollout_horizon() -> usize {
    5
}
fn d_trajectories() -> usize {
    10
}
fn d_discount() -> f64 {
    0.9
}
fn d_fantasy() -> usize {
    10
}
fn d_samples() -> usize {
    1
}
fn d_de_pop() -> usize {
    10
}
fn d_de_iters() -> usize {
    30
}

impl Default for RolloutSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults are valid")
    }
}

impl RolloutSection {
    pub fn to_rollout_config(&self) -> RolloutConfig {
        RolloutConfig {
            lookahead: self.lookahead,
            rollout_horizon: self.rollout_horizon,
            trajectories: self.trajectories,
            discount: self.discount,
            fantasy_per_candidate: self.fantasy_per_candidate,
            samples_per_intervention: self.samples_per_intervention,
            de_population: self.de_population,
            de_iterations: self.de_iterations,
            include_joint_candidate: self.include_joint_candidate,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostsSection {
    pub passive: f64,
    #[serde(default)]
    pub per_variable: std::collections::BTreeMap<String, f64>,
    #[serde(default)]
    pub fallback: f64,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate_strict();
        Ok(cfg)
    }

    fn validate_strict(&self) {
        assert!(self.experiment.horizon >= 1, "horizon must be >= 1");
        assert!(!self.experiment.seeds.is_empty(), "at least one seed");
        self.rollout.to_rollout_config().validate();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [experiment]
        environment = "illustrative"
        policy = "rollout"
        horizon = 30
        seeds = [1, 2, 3]
    "#;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.experiment.scenario, 1);
        assert_eq!(cfg.rollout.lookahead, 1);
        assert_eq!(cfg.rollout.rollout_horizon, 5);
        assert_eq!(cfg.rollout.trajectories, 10);
        assert_eq!(cfg.rollout.de_population, 10);
        assert_eq!(cfg.rollout.de_iterations, 30);
        assert_eq!(cfg.grid.one_d_points, 41);
        assert!(!cfg.experiment.record_wallclock);
    }

    #[test]
    fn unknown_keys_fail_fast() {
        let bad = MINIMAL.replace("horizon = 30", "horizon = 30\nbogus = 1");
        assert!(ExperimentConfig::parse(&bad).is_err());
        let bad2 = format!("{MINIMAL}\n[mystery]\nx = 1\n");
        assert!(ExperimentConfig::parse(&bad2).is_err());
    }

    #[test]
    fn policy_names_parse() {
        let passive = MINIMAL.replace("rollout", "passive");
        assert_eq!(
            ExperimentConfig::parse(&passive).unwrap().experiment.policy,
            PolicyChoice::Passive
        );
        let bad = MINIMAL.replace("rollout", "greedy");
        assert!(ExperimentConfig::parse(&bad).is_err());
    }
}
