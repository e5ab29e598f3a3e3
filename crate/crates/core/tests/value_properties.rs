//! Invariants of the tabulated value function and its feedback law on the toy.

use std::path::PathBuf;
use std::sync::OnceLock;

use avfric::geometry;
use avfric::hjb::{brute_force_value, extract_feedback, solve_value, FeedbackLaw, GridParams, ValueTable};
use avfric::integrator::{integrate, integrate_until, ControlSignal};
use avfric::Scenario;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-2;
const DELTA: f64 = 1e-2;
const TOL: f64 = 10.0 * (H + DELTA);

fn toy() -> Scenario {
    Scenario::load(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/toy.scn")).unwrap()
}

fn table(delta: f64) -> ValueTable {
    let s = toy();
    solve_value(&s, &GridParams { h: delta, delta, ..GridParams::from_scenario(&s) }).unwrap()
}

fn solved() -> &'static (Scenario, ValueTable, std::sync::Arc<FeedbackLaw>) {
    static CELL: OnceLock<(Scenario, ValueTable, std::sync::Arc<FeedbackLaw>)> = OnceLock::new();
    CELL.get_or_init(|| {
        let s = toy();
        let vt = table(DELTA);
        let law = std::sync::Arc::new(extract_feedback(&s, &vt));
        (s, vt, law)
    })
}

#[test]
fn value_never_exceeds_the_obstacle() {
    let (s, vt, _) = solved();
    let g = &vt.grid;
    for k in 0..g.slices() {
        let t = g.time(k);
        for node in 0..g.nodes() {
            let x = g.node(node);
            if !s.target.contains(t, &x) {
                continue;
            }
            let w = s.w(t, &x);
            let v = vt.at(k, node).expect("target nodes are finite");
            assert!(v <= w + 1e-12, "t = {t}, x = {x:?}: {v} > {w}");
            if k == g.steps {
                assert_eq!(v, w);
            }
        }
    }
}

fn random_start(rng: &mut ChaCha8Rng, vt: &ValueTable) -> (f64, f64) {
    loop {
        let t = rng.random_range(0.0..1.5);
        let v = rng.random_range(-1.5..0.75);
        if vt.query(t, &[v]).is_ok_and(f64::is_finite) {
            return (t, v);
        }
    }
}

#[test]
fn value_is_constant_along_the_feedback() {
    let (s, vt, law) = solved();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let (t0, v0) = random_start(&mut rng, vt);
        let start = vt.query(t0, &[v0]).unwrap();
        let l = law.clone();
        let ctrl = ControlSignal::feedback(move |t, x| l.control_at(t, x));
        let l2 = law.clone();
        let traj = integrate_until(s, t0, &[v0], &ctrl, vt.grid.t_end, H, |t, x| l2.stop_at(t, x)).unwrap();
        for (t, x) in traj.times.iter().zip(&traj.states) {
            let v = vt.query(*t, x).unwrap();
            assert!((v - start).abs() <= TOL, "from ({t0}, {v0}): V({t}, {x:?}) = {v} vs {start}");
        }
    }
}

#[test]
fn value_does_not_decrease_along_other_controls() {
    let (s, vt, _) = solved();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let (t0, v0) = random_start(&mut rng, vt);
        let start = vt.query(t0, &[v0]).unwrap();
        let times: Vec<f64> = (0..10).map(|i| t0 + 0.1 * i as f64).collect();
        let values = (0..10).map(|_| s.controls.values[rng.random_range(0..s.controls.len())].clone()).collect();
        let ctrl = ControlSignal::piecewise_constant(times, values).unwrap();
        let traj = integrate(s, t0, &[v0], &ctrl, t0 + 1.0, H).unwrap();
        for (t, x) in traj.times.iter().zip(&traj.states) {
            let Ok(v) = vt.query(*t, x) else { break };
            assert!(v >= start - TOL, "from ({t0}, {v0}): V({t}, {x:?}) = {v} < {start}");
        }
    }
}

#[test]
fn oracle_bounds_the_table_from_above() {
    let (s, vt, _) = solved();
    for i in 0..12 {
        let v = -0.4 + 2.4 * i as f64 / 11.0;
        let o = brute_force_value(s, 0.0, &[v], 25, 5).unwrap();
        if o.is_finite() {
            assert!(o >= vt.query(0.0, &[v]).unwrap() - TOL, "v = {v}");
        }
    }
}

/// Largest grid difference quotient at `t = 0` away from the kink and the
/// unreachable region.
fn max_quotient(vt: &ValueTable) -> f64 {
    let g = &vt.grid;
    let d = g.spacing(0);
    let mut worst = 0.0f64;
    for node in 0..g.nodes() - 1 {
        let (a, b) = (vt.at(0, node), vt.at(0, node + 1));
        let x = g.node(node)[0];
        if let (Some(a), Some(b)) = (a, b) {
            if x > -1.5 && x.abs() > 3.0 * d {
                worst = worst.max((b - a).abs() / d);
            }
        }
    }
    worst
}

#[test]
fn lipschitz_bound_is_stable_under_refinement() {
    let q: Vec<f64> = [0.04, 0.02, 0.01].iter().map(|&d| max_quotient(&table(d))).collect();
    for w in q.windows(2) {
        assert!(w[1] <= 1.1 * w[0] + 0.05, "{q:?}");
    }
    assert!(q.iter().all(|x| *x <= 2.5), "{q:?}");
}

#[test]
fn minimum_value_grows_toward_the_horizon() {
    let (_, vt, _) = solved();
    let g = &vt.grid;
    let min_at = |k: usize| (0..g.nodes()).filter_map(|n| vt.at(k, n)).fold(f64::INFINITY, f64::min);
    let (k1, k2) = (g.steps / 2, g.steps);
    let slope = (min_at(k2) - min_at(k1)) / (g.time(k2) - g.time(k1));
    assert!(slope >= 0.5 - 1e-9, "slope {slope}");
}

#[test]
fn feedback_states_are_recorded_on_grid_points() {
    let (_, vt, law) = solved();
    assert_eq!(law.entries.len(), law.slices.len() * vt.grid.nodes());
    assert_eq!(law.control_at(0.0, &[-1.0]), geometry::point(&[2.0]));
}
