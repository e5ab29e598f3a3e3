//! Property tests for the structural invariants of constants, dynamics,
//! integrator, reachability and the verification primitives.

use std::path::PathBuf;

use avfric::dynamics::{eval_F, eval_Fbar, hamiltonians};
use avfric::geometry::{self, Point};
use avfric::integrator::{integrate, step, step_with_witness, ControlSignal};
use avfric::reachability::{attainable, reach};
use avfric::toy::ToyValue;
use avfric::verify::{
    check_T14, proximal_probe, steer_to_target, Condition, FnValue, Relation, ReportRow, T14Options, ValueFn,
};
use avfric::{estimate_constants, Scenario, StructuralConstants};
use proptest::prelude::*;

fn load(name: &str) -> Scenario {
    Scenario::load(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)).unwrap()
}

fn toy() -> Scenario {
    load("toy.scn")
}

proptest! {
    #[test]
    fn constants_chain_is_exact(
        l in 0.0..10.0f64,
        c1 in 0.0..5.0f64,
        c2 in 0.0..5.0f64,
        lphi in proptest::collection::vec(0.0..3.0f64, 1..4),
    ) {
        let weights: Vec<f64> = (0..lphi.len()).map(|i| 1.0 / (i + 1) as f64).collect();
        let c = StructuralConstants::from_parts(l, c1, c2, lphi.clone(), &weights, 0.0);
        let kappa = 1.0 + lphi.iter().zip(&weights).map(|(a, w)| a * w).sum::<f64>();
        prop_assert_eq!(c.kappa, kappa);
        prop_assert_eq!(c.l_f, l * kappa);
        prop_assert_eq!(c.l_fbar, c.l_f + l);
    }

    #[test]
    fn lambda_is_monotone(
        l in 0.0..3.0f64,
        c1 in 0.0..3.0f64,
        c2 in 0.0..3.0f64,
        t in 0.0..3.0f64,
        dt in 0.0..1.0f64,
        r in 0.0..3.0f64,
        dr in 0.0..1.0f64,
    ) {
        let c = StructuralConstants::from_parts(l, c1, c2, vec![0.5], &[1.0], 0.0);
        prop_assert!(c.lambda_r(r, t + dt) >= c.lambda_r(r, t));
        prop_assert!(c.lambda_r(r + dr, t) >= c.lambda_r(r, t));
    }
}

#[test]
fn estimates_grow_with_samples() {
    for name in ["toy.scn", "linear.scn", "planar.scn"] {
        let s = load(name);
        let mut prev: Option<StructuralConstants> = None;
        for n in [10, 50, 200, 800] {
            let c = estimate_constants(&s, n).unwrap();
            if let Some(p) = &prev {
                assert!(c.l >= p.l && c.c1 >= p.c1 && c.c2 >= p.c2, "{name} at {n}");
            }
            prev = Some(c);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn fbar_contains_every_control_set(v in -2.0..3.0f64, p in -1.5..1.5f64, q in -1.5..1.5f64) {
        for (s, x) in [(toy(), vec![v]), (load("planar.scn"), vec![p, q])] {
            let fbar = eval_Fbar(&s, 0.3, &x).set;
            for u in &s.controls.values {
                prop_assert!(fbar.includes(&eval_F(&s, 0.3, &x, u), 1e-12), "x = {:?}, u = {:?}", x, u);
            }
        }
    }

    #[test]
    fn hamiltonians_bound_and_rescale(v in -2.0..3.0f64, et in -3.0..3.0f64, ex in -3.0..3.0f64, c in 0.01..100.0f64) {
        let s = toy();
        let eta = [et, ex, 0.0];
        let hp = hamiltonians(&s, 0.0, &[v], &eta);
        for w in eval_Fbar(&s, 0.0, &[v]).set.extreme_points() {
            let pairing = et + ex * w[0];
            prop_assert!(hp.h_min <= pairing + 1e-12 && pairing <= hp.h_max + 1e-12);
        }
        let scaled = hamiltonians(&s, 0.0, &[v], &[c * et, c * ex, 0.0]);
        prop_assert_eq!(&scaled.argmin_velocity, &hp.argmin_velocity);
        prop_assert_eq!(&scaled.argmax_velocity, &hp.argmax_velocity);
        prop_assert!((scaled.h_min - c * hp.h_min).abs() <= 1e-12 * (1.0 + c * hp.h_min.abs()));
    }

    /// Away from kinks the difference quotient of one step lies in `F(t, x, u)`
    /// up to `K h`.
    #[test]
    fn step_is_first_order_consistent(v in -1.8..2.8f64, ui in 0usize..41) {
        let s = toy();
        let u = s.controls.values[ui].clone();
        for h in [1e-2, 1e-3, 1e-4] {
            prop_assume!(v.abs() > 10.0 * h * 4.0);
            let x1 = step(&s, 0.0, &[v], &u, h);
            let q = [(x1[0] - v) / h];
            prop_assert!(eval_F(&s, 0.0, &[v], &u).dist(&q) <= 10.0 * h);
        }
    }

    /// Everywhere, the quotient lies in `F(t, x⁺, u)` with the witness selection.
    #[test]
    fn witness_reconstructs_every_step(v in -1.8..2.8f64, ui in 0usize..41, h in 1e-4..5e-2f64) {
        let s = toy();
        let u = s.controls.values[ui].clone();
        let (x1, w) = step_with_witness(&s, 0.0, &[v], &u, h);
        let q = (x1[0] - v) / h;
        let rebuilt = u[0] - 0.5 * u[0] * u[0] * w.xi[0][0];
        prop_assert!((q - rebuilt).abs() <= 1e-9 * (1.0 + q.abs()));
        prop_assert!(eval_F(&s, 0.0, &x1, &u).dist(&[q]) <= 1e-9);
        prop_assert_eq!(x1, step(&s, 0.0, &[v], &u, h));
    }

    #[test]
    fn integration_is_deterministic(v in -1.8..2.8f64, a in -2.0..2.0f64, b in -2.0..2.0f64) {
        let s = toy();
        let ctrl = ControlSignal::piecewise_constant(vec![0.0, 0.4], vec![geometry::point(&[a]), geometry::point(&[b])]).unwrap();
        let p = integrate(&s, 0.0, &[v], &ctrl, 1.0, 1e-2).unwrap();
        let q = integrate(&s, 0.0, &[v], &ctrl, 1.0, 1e-2).unwrap();
        prop_assert_eq!(p, q);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn reach_table_covers_trajectories(
        v in -1.0..1.5f64,
        switches in proptest::collection::vec(0usize..41, 3),
    ) {
        let s = toy();
        let (h, delta, until) = (1e-2, 1e-3, 0.3);
        let rt = reach(&s, 0.0, &[v], until, h, delta).unwrap();
        let times = vec![0.0, 0.1, 0.2];
        let values: Vec<Point> = switches.iter().map(|&i| s.controls.values[i].clone()).collect();
        let ctrl = ControlSignal::piecewise_constant(times, values).unwrap();
        let traj = integrate(&s, 0.0, &[v], &ctrl, until, h).unwrap();
        for (k, (t, x)) in traj.times.iter().zip(&traj.states).enumerate() {
            prop_assert!((rt.times[k] - t).abs() < 1e-12);
            prop_assert!(rt.covers(k, x), "t = {}, x = {:?}", t, x);
        }
        for (t, y) in attainable(&s, &rt).points {
            prop_assert!(s.target.contains(t, &y));
        }
        let longer = reach(&s, 0.0, &[v], 2.0 * until, h, delta).unwrap();
        for k in 0..rt.times.len() {
            prop_assert_eq!(&rt.occupancy[k], &longer.occupancy[k]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Accepted proximal candidates satisfy the quadratic inequality on every sample.
    #[test]
    fn proximal_candidates_satisfy_the_inequality(
        a in -2.0..2.0f64,
        b in -2.0..2.0f64,
        kink in -1.0..1.0f64,
        x in -1.0..1.0f64,
    ) {
        let f = FnValue { dim: 1, f: move |t: f64, y: &[f64]| a * t + b * (y[0] - kink).abs() + 0.3 * y[0] * y[0] };
        let pr = proximal_probe(&f, 0.2, &[x], 1e-2, 1e3);
        let centre = [0.2, x];
        for (sub, cands) in [(true, &pr.sub), (false, &pr.sup)] {
            for c in cands {
                for (p, val) in &pr.samples {
                    let d: Vec<f64> = p.iter().zip(&centre).map(|(u, w)| u - w).collect();
                    let lin: f64 = c.covector.iter().zip(&d).map(|(q, e)| q * e).sum();
                    let quad = c.m * d.iter().map(|e| e * e).sum::<f64>();
                    let gap = val - pr.value - lin;
                    let slack = 1e-9 * (1.0 + val.abs());
                    if sub {
                        prop_assert!(gap >= -quad - slack);
                    } else {
                        prop_assert!(gap <= quad + slack);
                    }
                }
            }
        }
    }

    /// The epigraph residual with covector (λp, -λ) is λ times the Hamiltonian residual.
    #[test]
    fn epigraph_duality_gap_vanishes(v in -1.8..2.8f64, t in 0.0..2.0f64) {
        let s = toy();
        let exact = ToyValue::new(1.0, 0.8);
        prop_assume!(exact.value(t, v).is_finite());
        let r = check_T14(&s, &exact as &dyn ValueFn, &[(t, geometry::point(&[v]))], &T14Options::closed_form());
        prop_assert!(r.max_duality_gap <= 1e-12);
        prop_assert!(r.report.all_pass());
    }

    #[test]
    fn steering_distances_decay(v in 0.62..0.79f64) {
        let s = toy();
        let c = estimate_constants(&s, 200).unwrap();
        let run = steer_to_target(&s, &c, 0.0, &[v], 0.5, 1e-3, 1e-9).unwrap();
        prop_assert!(run.max_decay_excess <= 1e-9 * 1e-3);
        prop_assert!(run.ratio <= run.constants.l_k);
    }

    #[test]
    fn report_rows_apply_their_relation(res in -2.0..2.0f64, tol in 0.0..1.0f64) {
        for (rel, expect) in [
            (Relation::Le, res <= tol),
            (Relation::Ge, res >= -tol),
            (Relation::AbsLe, res.abs() <= tol),
            (Relation::Lt, res < tol),
        ] {
            prop_assert_eq!(ReportRow::new(Condition::Hj1, 0.0, &[0.0], res, rel, tol).pass, expect);
        }
    }
}
