use super::*;
use crate::scm::{evaluate_scm, Intervention, Sample};
use crate::testutil::{chain_graph, chain_grids, chain_scm, ChainTruth};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn kernels() -> KernelMap {
    KernelMap::uniform(KernelSpec::new(0.05).unwrap())
}

fn passive_record(u: f64) -> Record {
    let scm = chain_scm();
    let mut exo = BTreeMap::new();
    exo.insert("U".to_string(), u);
    (
        Intervention::passive(),
        evaluate_scm(&scm, &exo, &Intervention::passive()).unwrap(),
    )
}

fn do_record(var: &str, value: f64, u: f64) -> Record {
    let scm = chain_scm();
    let mut exo = BTreeMap::new();
    exo.insert("U".to_string(), u);
    let intervention = Intervention::single(var, value);
    (
        intervention.clone(),
        evaluate_scm(&scm, &exo, &intervention).unwrap(),
    )
}

fn fit(ds: &Dataset) -> Belief {
    fit_belief(&chain_graph(), ds, &kernels(), &chain_grids()).unwrap()
}

#[test]
fn empty_dataset_gives_priors() {
    let belief = fit(&Dataset::unbounded());
    for (_, vb) in belief.vars() {
        assert_eq!(vb.n_train(), 0);
        assert!(vb.grid_vars().iter().all(|&v| v == 1.0));
        assert!(vb.grid_means().iter().all(|&m| m == 0.0));
    }
}

#[test]
fn intervened_variable_is_excluded_from_its_own_regression() {
    let mut ds = Dataset::unbounded();
    ds.push(do_record("Z", 5.0, 0.1));
    let belief = fit(&ds);
    assert_eq!(belief.var("Z").unwrap().n_train(), 0, "f_Z stays prior");
    assert_eq!(belief.var("Y").unwrap().n_train(), 1, "f_Y gains (Z=5 → Y)");
    let y_post = &belief.var("Y").unwrap().posterior;
    assert_eq!(y_post.training_inputs()[0], vec![5.0]);
}

#[test]
fn passive_record_feeds_every_regression() {
    let mut ds = Dataset::unbounded();
    ds.push(passive_record(0.1));
    let belief = fit(&ds);
    for id in ["X", "Y", "Z"] {
        assert_eq!(belief.var(id).unwrap().n_train(), 1);
    }
}

#[test]
fn prior_point_estimate_is_zero() {
    let est = fit(&Dataset::unbounded()).point_estimate();
    assert_eq!(est.eval("Z", &[1.0]).unwrap(), 0.0);
    assert!(est.grid_means("Y").unwrap().iter().all(|&m| m == 0.0));
}

#[test]
fn near_noiseless_identity_is_recovered_at_origin() {
    // 50 near-noiseless samples of f_X(u)=u around the origin.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut ds = Dataset::unbounded();
    for _ in 0..50 {
        ds.push(passive_record(rng.gen_range(-1.0..1.0)));
    }
    let kernels = KernelMap::uniform(KernelSpec::new(1e-6).unwrap());
    let belief = fit_belief(&chain_graph(), &ds, &kernels, &chain_grids()).unwrap();
    let est = belief.point_estimate();
    assert!(est.eval("X", &[0.0]).unwrap().abs() < 0.05);
}

#[test]
fn point_estimate_is_idempotent_on_point_mass() {
    // A belief trained densely reproduces its own mean on the grid.
    let mut ds = Dataset::unbounded();
    for i in 0..30 {
        ds.push(passive_record(-1.5 + 0.1 * i as f64));
    }
    let belief = fit(&ds);
    let est = belief.point_estimate();
    for (id, vb) in belief.vars() {
        for (p, m) in belief.grids().get(id).unwrap().points.iter().zip(vb.grid_means()) {
            assert!((est.eval(id, p).unwrap() - m).abs() < 1e-9);
        }
    }
}

#[test]
fn loss_is_zero_when_estimate_matches_truth() {
    // Fit each GP on its own grid with tiny noise: the mean interpolates
    // the truth, so the discretized loss collapses.
    let scm = chain_scm();
    let grids = chain_grids();
    let mut ds = Dataset::unbounded();
    for i in 0..41 {
        let x = -5.0 + 0.25 * i as f64;
        let mut values = BTreeMap::new();
        values.insert("U".to_string(), x);
        values.insert("X".to_string(), x.clamp(-5.0, 5.0));
        values.insert("Z".to_string(), scm.eval_function("Z", &[x]).unwrap());
        values.insert("Y".to_string(), scm.eval_function("Y", &[x]).unwrap());
        // A synthetic record placing a training point at grid x for Z's
        // regression; Y's input comes from the recorded Z value.
        ds.push((Intervention::single("U", 0.0), Sample::new(values)));
    }
    let kernels = KernelMap::uniform(KernelSpec::new(1e-10).unwrap());
    let belief = fit_belief(&chain_graph(), &ds, &kernels, &grids).unwrap();
    let est = belief.point_estimate();
    let l = loss_by_var(&est, &ChainTruth::default(), &grids).unwrap();
    // Z is trained exactly on its grid; its loss term must collapse.
    assert!(l["Z"] < 1e-6, "loss_Z = {}", l["Z"]);
}

#[test]
fn constant_error_with_normalized_weights_gives_c_squared() {
    let grids = Arc::new({
        let mut g = EvaluationGrids::default();
        for id in ["X", "Y", "Z"] {
            g.insert(id.into(), EvaluationGrid::uniform_1d(-1.0, 1.0, 11));
        }
        g
    });
    let belief =
        fit_belief(&chain_graph(), &Dataset::unbounded(), &kernels(), &grids).unwrap();
    let est = belief.point_estimate();

    // Truth ≡ c while the prior estimate ≡ 0: each variable contributes c².
    struct Const(f64);
    impl TruthFn for Const {
        fn truth_eval(&self, _: &str, _: &[f64]) -> Result<f64, EstimatorError> {
            Ok(self.0)
        }
    }
    let c = 1.7;
    let l = loss_by_var(&est, &Const(c), &grids).unwrap();
    assert!((l["X"] - c * c).abs() < 1e-12);
    assert!((loss(&est, &Const(c), &grids).unwrap() - 3.0 * c * c).abs() < 1e-12);
}

#[test]
fn prior_surrogate_with_normalized_grids_counts_variables() {
    let mut g = EvaluationGrids::default();
    for id in ["X", "Y", "Z"] {
        g.insert(id.into(), EvaluationGrid::uniform_1d(-1.0, 1.0, 11));
    }
    let belief = fit_belief(&chain_graph(), &Dataset::unbounded(), &kernels(), &Arc::new(g)).unwrap();
    let s = surrogate_loss(&belief, SurrogateMode::Analytic).unwrap();
    assert!((s - 3.0).abs() < 1e-12);
}

#[test]
fn point_mass_surrogate_is_nearly_zero() {
    // Train each variable exactly on its own grid points with tiny noise.
    let grids = chain_grids();
    let scm = chain_scm();
    let mut ds = Dataset::unbounded();
    for id in ["X", "Y", "Z"] {
        let parent = chain_graph().regression_parents(id)[0].clone();
        for p in &grids.get(id).unwrap().points {
            let mut values = BTreeMap::new();
            // Fill every variable; only (parent → id) matters for this GP.
            for v in ["U", "X", "Y", "Z"] {
                values.insert(v.to_string(), 0.0);
            }
            values.insert(parent.clone(), p[0]);
            values.insert(id.to_string(), scm.eval_function(id, p).unwrap());
            // Intervene on the two other endogenous variables so this
            // record only trains `id`'s regression.
            let mut u = Intervention::passive();
            for other in ["X", "Y", "Z"] {
                if other != id {
                    u.assignments.insert(other.to_string(), 0.0);
                }
            }
            ds.push((u, Sample::new(values)));
        }
    }
    let kernels = KernelMap::uniform(KernelSpec::new(1e-10).unwrap());
    let belief = fit_belief(&chain_graph(), &ds, &kernels, &grids).unwrap();
    for (id, s) in belief.surrogate_by_var() {
        assert!(s < 1e-6, "surrogate for {id} is {s}");
    }
    assert!(belief.analytic_surrogate() < 1e-6);
}

#[test]
fn monte_carlo_surrogate_agrees_with_analytic() {
    let mut ds = Dataset::unbounded();
    for i in 0..8 {
        ds.push(passive_record(-0.8 + 0.2 * i as f64));
        ds.push(do_record("X", -4.0 + i as f64, 0.0));
    }
    let belief = fit(&ds);
    let analytic = surrogate_loss(&belief, SurrogateMode::Analytic).unwrap();
    let mc = surrogate_loss(&belief, SurrogateMode::MonteCarlo { s: 1000, seed: 13 }).unwrap();
    let rel = (mc - analytic).abs() / analytic;
    assert!(rel <= 0.05, "analytic {analytic}, mc {mc}, rel {rel}");
}

#[test]
fn monte_carlo_error_shrinks_with_draws() {
    let mut ds = Dataset::unbounded();
    for i in 0..6 {
        ds.push(passive_record(-0.5 + 0.2 * i as f64));
    }
    let belief = fit(&ds);
    let analytic = surrogate_loss(&belief, SurrogateMode::Analytic).unwrap();
    let mut errors = Vec::new();
    for s in [10usize, 100, 1000] {
        // Average the absolute deviation over several seeds.
        let mut acc = 0.0;
        for seed in 0..8u64 {
            let mc = surrogate_loss(&belief, SurrogateMode::MonteCarlo { s, seed }).unwrap();
            acc += (mc - analytic).abs();
        }
        errors.push(acc / 8.0);
    }
    assert!(errors[0] >= errors[1] && errors[1] >= errors[2], "{errors:?}");
}

#[test]
fn posteriors_factorize_across_variables() {
    // Changing a record's Y value must leave X's and Z's posteriors
    // bit-identical.
    let mut ds_a = Dataset::unbounded();
    let mut ds_b = Dataset::unbounded();
    let (u, mut sample) = passive_record(0.3);
    ds_a.push((u.clone(), sample.clone()));
    sample.values.insert("Y".to_string(), 99.0);
    ds_b.push((u, sample));
    let a = fit(&ds_a);
    let b = fit(&ds_b);
    for id in ["X", "Z"] {
        let qa = a.var(id).unwrap().posterior.predict_one(&[0.5]).unwrap();
        let qb = b.var(id).unwrap().posterior.predict_one(&[0.5]).unwrap();
        assert_eq!(qa.0.to_bits(), qb.0.to_bits());
        assert_eq!(qa.1.to_bits(), qb.1.to_bits());
    }
    let ya = a.var("Y").unwrap().posterior.predict_one(&[0.5]).unwrap();
    let yb = b.var("Y").unwrap().posterior.predict_one(&[0.5]).unwrap();
    assert_ne!(ya.0.to_bits(), yb.0.to_bits());
}

#[test]
fn one_step_updates_never_raise_analytic_surrogate() {
    // GP variance contraction: every one-step update weakly reduces the
    // integrated variance (no eviction here).
    let mut ds = Dataset::unbounded();
    for i in 0..5 {
        ds.push(passive_record(-0.4 + 0.2 * i as f64));
    }
    let belief = fit(&ds);
    let before = belief.analytic_surrogate();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut total = 0.0;
    for _ in 0..50 {
        let record = passive_record(rng.gen_range(-1.0..1.0));
        let after = belief.updated(&[record]).unwrap().analytic_surrogate();
        assert!(after <= before + 1e-6);
        total += after;
    }
    assert!(total / 50.0 <= before + 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    /// The incremental update path (rank-1 append + cached grid stats +
    /// FIFO eviction) must agree with a from-scratch refit.
    #[test]
    fn updated_matches_refit(seed in 0u64..200, cap in 2usize..6, steps in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grids = chain_grids();
        let graph = chain_graph();
        let kernels = kernels();
        let mut ds = Dataset::new(Some(cap));
        let mut belief = fit_belief(&graph, &ds, &kernels, &grids).unwrap();
        for _ in 0..steps {
            let record = match rng.gen_range(0..3) {
                0 => passive_record(rng.gen_range(-1.0..1.0)),
                1 => do_record("X", rng.gen_range(-5.0..5.0), rng.gen_range(-1.0..1.0)),
                _ => do_record("Z", rng.gen_range(-5.0..20.0), rng.gen_range(-1.0..1.0)),
            };
            belief = belief.updated(&[record.clone()]).unwrap();
            ds.push(record);
        }
        let refit = fit_belief(&graph, &ds, &kernels, &grids).unwrap();
        for (id, vb) in belief.vars() {
            let rb = refit.var(id).unwrap();
            prop_assert_eq!(vb.n_train(), rb.n_train());
            for j in 0..vb.grid_means().len() {
                prop_assert!((vb.grid_means()[j] - rb.grid_means()[j]).abs() < 1e-8,
                    "mean mismatch for {} at {}: {} vs {}", id, j, vb.grid_means()[j], rb.grid_means()[j]);
                prop_assert!((vb.grid_vars()[j] - rb.grid_vars()[j]).abs() < 1e-8,
                    "var mismatch for {} at {}", id, j);
            }
        }
        prop_assert!((belief.analytic_surrogate() - refit.analytic_surrogate()).abs() < 1e-8);
    }
}

#[test]
fn truth_oracle_failure_is_reported() {
    struct Nan;
    impl TruthFn for Nan {
        fn truth_eval(&self, _: &str, _: &[f64]) -> Result<f64, EstimatorError> {
            Ok(f64::NAN)
        }
    }
    let est = fit(&Dataset::unbounded()).point_estimate();
    let err = loss(&est, &Nan, &chain_grids()).unwrap_err();
    assert!(matches!(err, EstimatorError::TruthUndefined { .. }));
}
