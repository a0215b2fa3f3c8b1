use super::*;
use crate::estimator::{build_grids, GridSettings};

#[test]
fn illustrative_truth_matches_formulas() {
    let env = make_illustrative_env(0);
    let oracle = env.truth_oracle();
    assert!((oracle.eval("Z", &[0.0]).unwrap() - 1.0).abs() < 1e-15);
    assert!(oracle.eval("Y", &[0.0]).unwrap().abs() < 1e-15);
    let z = (-0.1f64).exp();
    assert!((oracle.eval("X", &[0.1]).unwrap() - 0.1).abs() < 1e-15);
    assert!((oracle.eval("Z", &[0.1]).unwrap() - z).abs() < 1e-15);
}

#[test]
fn illustrative_passive_values_before_noise() {
    let env = make_illustrative_env(0);
    let oracle = env.truth_oracle();
    // U = 0 → X = 0, Z = 1, Y = cos(1) − e^{−1/20}.
    let z = oracle.eval("Z", &[0.0]).unwrap();
    assert!((z - 1.0).abs() < 1e-15);
    let y = oracle.eval("Y", &[1.0]).unwrap();
    assert!((y - (1f64.cos() - (-0.05f64).exp())).abs() < 1e-15);
}

#[test]
fn illustrative_clips_overflowing_outputs() {
    // f_Z(−5) = e^5 ≈ 148.4 is clipped to the range top of R(Z).
    let env = make_illustrative_env(0);
    assert_eq!(env.truth_oracle().eval("Z", &[-5.0]).unwrap(), 20.0);
    let samples = env.env_step(&Intervention::single("X", -5.0), 1).unwrap();
    assert_eq!(samples[0].get("Z"), Some(20.0));
}

#[test]
fn do_z_zero_drives_y_to_zero_before_noise() {
    let env = make_illustrative_env(0);
    assert!(env.truth_oracle().eval("Y", &[0.0]).unwrap().abs() < 1e-15);
}

#[test]
fn env_step_yields_m_reproducible_samples() {
    let env = make_illustrative_env(42);
    let a = env.env_step(&Intervention::passive(), 3).unwrap();
    assert_eq!(a.len(), 3);
    let b = env.env_step(&Intervention::passive(), 3).unwrap();
    assert_eq!(a, b);
    assert_ne!(a[0], a[1], "independent samples should differ");
}

#[test]
fn env_step_single_sample() {
    let env = make_illustrative_env(42);
    assert_eq!(env.env_step(&Intervention::passive(), 1).unwrap().len(), 1);
}

#[test]
fn passive_x_mean_matches_exogenous_distribution() {
    // X = U + measurement noise, U ~ N(0, 0.1): the empirical mean over n
    // steps stays within 3σ/√n of zero.
    let mut env = make_illustrative_env(7);
    let n = 400;
    let mut acc = 0.0;
    for _ in 0..n {
        let s = env.env_step(&Intervention::passive(), 1).unwrap();
        acc += s[0].get("X").unwrap();
        env.advance_time();
    }
    let mean = acc / n as f64;
    let sigma = (0.1f64 + 0.05).sqrt();
    assert!(
        mean.abs() < 3.0 * sigma / (n as f64).sqrt(),
        "passive X mean {mean}"
    );
}

#[test]
fn interventions_leave_no_residue() {
    // Two passive steps straddling an interventional step are identical to
    // the same steps on a fresh environment with the same seed.
    let mut a = make_illustrative_env(5);
    let mut b = make_illustrative_env(5);

    let a1 = a.env_step(&Intervention::passive(), 1).unwrap();
    a.advance_time();
    let _ = a.env_step(&Intervention::single("X", 3.0), 1).unwrap();
    a.advance_time();
    let a3 = a.env_step(&Intervention::passive(), 1).unwrap();

    let b1 = b.env_step(&Intervention::passive(), 1).unwrap();
    b.advance_time();
    let _ = b.env_step(&Intervention::passive(), 1).unwrap();
    b.advance_time();
    let b3 = b.env_step(&Intervention::passive(), 1).unwrap();

    assert_eq!(a1, b1);
    assert_eq!(a3, b3);
}

#[test]
fn passive_residuals_have_declared_noise() {
    // Pin Z's parent with do(X=1) so the residual (measured − truth at the
    // exact parent) isolates Z's own measurement noise: zero mean and
    // variance 0.05 at 3-standard-error tolerance.
    let mut env = make_illustrative_env(11);
    let n = 600;
    let u = Intervention::single("X", 1.0);
    let truth = env.truth_oracle().eval("Z", &[1.0]).unwrap();
    let mut residuals = Vec::with_capacity(n);
    for _ in 0..n {
        let s = env.env_step(&u, 1).unwrap()[0].clone();
        residuals.push(s.get("Z").unwrap() - truth);
        env.advance_time();
    }
    let mean = residuals.iter().sum::<f64>() / n as f64;
    let var = residuals
        .iter()
        .map(|r| (r - mean) * (r - mean))
        .sum::<f64>()
        / n as f64;
    let sigma2 = 0.05;
    assert!(mean.abs() < 3.0 * (sigma2 / n as f64).sqrt(), "mean {mean}");
    // Var of the sample variance ≈ 2σ⁴/n for Gaussian residuals.
    let se_var = (2.0 * sigma2 * sigma2 / n as f64).sqrt();
    assert!((var - sigma2).abs() < 3.0 * se_var, "variance {var}");
}

#[test]
fn intervention_on_non_controllable_is_rejected() {
    let env = make_mesh_env(1, 0).unwrap();
    let err = env
        .env_step(&Intervention::single("R1", 1.0), 1)
        .unwrap_err();
    assert!(matches!(err, EnvError::Scm(ScmError::NotControllable(_))));
}

#[test]
fn mesh_carried_load_cases() {
    let env = make_mesh_env(1, 0).unwrap();
    let oracle = env.truth_oracle();
    // Lt1 parents sorted: [B1, L1].
    assert_eq!(oracle.eval("Lt1", &[0.0, 15.0]).unwrap(), 15.0);
    assert_eq!(oracle.eval("Lt1", &[1.0, 37.0]).unwrap(), 0.0);
    assert_eq!(oracle.eval("Lt1", &[0.5, 4.0]).unwrap(), 2.0);
}

#[test]
fn mesh_r2_does_not_increase_with_c3() {
    let env = make_mesh_env(1, 0).unwrap();
    let oracle = env.truth_oracle();
    // R2 parents sorted: [C1, C3, Lt1, Lt2, P1, P2] (noise excluded).
    let mut prev = f64::INFINITY;
    for c3 in [1.0, 2.0, 3.0, 4.0, 5.0] {
        let r = oracle.eval("R2", &[1.0, c3, 4.0, 15.0, 0.5, 0.5]).unwrap();
        assert!(r <= prev + 1e-12, "R2 rose when C3 reached {c3}");
        prev = r;
    }
}

#[test]
fn mesh_controllable_set_matches_declaration() {
    let env = make_mesh_env(1, 0).unwrap();
    assert_eq!(
        env.graph().controllable_ids(),
        vec!["B1", "B2", "C1", "C3", "L1", "L2", "P1", "P2"]
    );
    let c1 = &env.graph().var("C1").unwrap().range;
    assert!(c1.contains(3.0) && !c1.contains(3.5));
    assert!(env.graph().var("R1").unwrap().range.contains(10.0));
}

#[test]
fn invalid_scenario_is_rejected() {
    assert!(matches!(
        make_mesh_env(3, 0),
        Err(EnvError::InvalidScenario(3))
    ));
}

#[test]
fn scenario_one_is_stationary() {
    let mut env = make_mesh_env(1, 0).unwrap();
    let probe = [1.0, 1.0, 4.0, 15.0, 0.5, 0.5];
    let before = env.truth_oracle().eval("R2", &probe).unwrap();
    for _ in 0..30 {
        env.advance_time();
    }
    let after = env.truth_oracle().eval("R2", &probe).unwrap();
    assert_eq!(before, after);
}

#[test]
fn scenario_two_switches_at_step_eleven() {
    let mut env = make_mesh_env(2, 0).unwrap();
    // R2 parents sorted: [C1, C3, Lt2, P2].
    let probe = [1.0, 1.0, 0.5, 0.5];
    let mut values = Vec::new();
    for _ in 1..=12 {
        values.push(env.truth_oracle().eval("R2", &probe).unwrap());
        env.advance_time();
    }
    assert_eq!(values[9], values[0], "stationary before the switch");
    assert_ne!(values[10], values[9], "switch at t=11 changes f_R2");
    assert_eq!(values[11], values[10], "stationary after the switch");
}

#[test]
fn scenario_two_switch_is_detectable_on_grid() {
    let mut env = make_mesh_env(2, 0).unwrap();
    let grids = build_grids(env.graph(), env.measures(), GridSettings::default());
    let grid = grids.get("R2").unwrap();
    let pre: Vec<f64> = grid
        .points
        .iter()
        .map(|p| env.truth_oracle().eval("R2", p).unwrap())
        .collect();
    while env.t() < MESH_SWITCH_T {
        env.advance_time();
    }
    let mut integrated = 0.0;
    for ((p, &w), &before) in grid.points.iter().zip(&grid.weights).zip(&pre) {
        let after = env.truth_oracle().eval("R2", p).unwrap();
        integrated += w * (after - before) * (after - before);
    }
    integrated *= grid.scale;
    assert!(
        integrated > env.switch_detectability,
        "integrated squared change {integrated} below threshold {}",
        env.switch_detectability
    );
}

#[test]
fn truth_oracle_counts_calls() {
    let env = make_illustrative_env(0);
    assert_eq!(env.truth_call_count(), 0);
    let _ = env.truth_oracle().eval("Z", &[0.0]);
    assert_eq!(env.truth_call_count(), 1);
    // Stepping the environment does not consult the oracle.
    let _ = env.env_step(&Intervention::passive(), 2).unwrap();
    assert_eq!(env.truth_call_count(), 1);
}

#[test]
fn truth_oracle_rejects_out_of_range_inputs() {
    let env = make_illustrative_env(0);
    assert!(env.truth_oracle().eval("Z", &[7.0]).is_err());
    assert!(env.truth_oracle().eval("U", &[0.0]).is_err());
}
