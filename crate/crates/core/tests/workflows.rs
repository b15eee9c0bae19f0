use std::sync::Arc;

use approx::assert_abs_diff_eq;
use euler_cert::bounds::{distance_bound, main_bound, Comparison, SLACK_TOL};
use euler_cert::euler::{difference_matrix, solve_scheme, Discretization};
use euler_cert::grid::{Partition, StepFunction};
use euler_cert::harness::{
    cmd_bv, cmd_density, evaluate_instance, generate_instance, Config, RunOptions,
};
use euler_cert::operators::{GraphPair, LinearOperator};
use euler_cert::space::{NormKind, NormedSpace};
use euler_cert::State;

fn v1(x: f64) -> State {
    State::from_element(1, x)
}

#[test]
fn linear_decay_two_meshes() {
    let op = LinearOperator::scalar(1.0, 0.0).unwrap();
    let zero = StepFunction::constant(Partition::uniform(1.0, 1).unwrap(), v1(0.0));
    let solve = |n| {
        let d = Discretization::projected(Arc::new(Partition::uniform(1.0, n).unwrap()), &zero, v1(1.0)).unwrap();
        solve_scheme(&op, &d).unwrap()
    };
    let (coarse, fine) = (solve(2), solve(4));
    let space = NormedSpace::new(1, NormKind::L2).unwrap();
    let a = difference_matrix(&coarse, &fine, &space);
    assert_abs_diff_eq!(a[(2, 4)], (4.0f64 / 9.0 - 0.8f64.powi(4)).abs(), epsilon = 1e-15);

    let cmp = Comparison::new(&coarse, &fine, 0.0, &space).unwrap();
    let pair = GraphPair::new(v1(0.0), v1(0.0));
    let main = main_bound(&cmp, &pair, &zero).unwrap();
    assert!(main.passes(SLACK_TOL));
    let dist = distance_bound(&cmp, &pair, &zero).unwrap();
    assert_abs_diff_eq!(dist.records[0].rhs, 2.0, epsilon = 1e-15);
}

#[test]
fn generated_instances_replay_from_toml() {
    let cfg = Config::default();
    for id in [0, 7, 41] {
        let spec = generate_instance(&cfg.verify, 3, id).unwrap();
        let mut replay = cfg.clone();
        replay.verify.instance = vec![spec.clone()];
        let text = replay.to_toml_string().unwrap();
        let parsed = Config::from_toml_str(&text).unwrap();
        assert_eq!(parsed.verify.instance.len(), 1);
        let first = evaluate_instance(&spec, &cfg.verify);
        let again = evaluate_instance(&parsed.verify.instance[0], &cfg.verify);
        assert!(first.pass, "instance {id}: {:?}", first.error);
        assert_eq!(first.min_slack.to_bits(), again.min_slack.to_bits());
    }
}

#[test]
fn commands_write_their_artifacts() {
    let mut cfg = Config::default();
    cfg.bv.shift_cases = 50;
    cfg.bv.property_cases = 20;
    cfg.bv.c1_samples = 1000;
    cfg.density.cases = 4;
    cfg.density.max_steps = 8;
    cfg.density.abc_triples = 1000;
    cfg.density.heatmap_rows = 4;
    cfg.density.heatmap_cols = 6;
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions { seed: 5, out: dir.path().to_path_buf(), jobs: Some(2) };
    assert!(cmd_bv(&cfg, &opts).unwrap().pass);
    assert!(dir.path().join("bv_shift.csv").exists());
    assert!(cmd_density(&cfg, &opts).unwrap().pass);
    for name in ["report.json", "density_cases.csv", "density_heatmap.csv", "density_marginals.csv", "density_kappa.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}
