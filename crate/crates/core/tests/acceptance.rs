//! Acceptance suite for the one-sided friction example. Every criterion prints
//! one `PASS`/`FAIL` line; any failure or panic makes the run exit nonzero.
//! Reference values are computed here, independently of the library's own
//! closed form.

use std::panic::catch_unwind;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use avfric::dynamics::{eval_Fbar, osl_check};
use avfric::geometry::{self, Point};
use avfric::hjb::{brute_force_value, extract_feedback, solve_value, FeedbackLaw, GridParams, ValueTable};
use avfric::integrator::{gronwall_check, integrate, ControlSignal};
use avfric::verify::{
    check_HJ_pointwise, check_T14, invariance_sample_test, ipc_check, p7_ratio_sweep, proximal_probe, Condition,
    Differentials, HjOptions, InvarianceOptions, SweepOptions, T14Options, ValueFn,
};
use avfric::{estimate_constants, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const C: f64 = 1.0;
const R: f64 = 0.8;
const H: f64 = 2e-3;
const DELTA: f64 = 2e-3;

const VALUE_REF_TOL: f64 = 5e-2;
const VALUE_GRID_TOL: f64 = 1e-1;
const FBAR_TOL: f64 = 1e-12;
const IPC_TOL: f64 = 1e-9;
const T14_TOL: f64 = 1e-9;
const PROX_EPS: f64 = 1e-2;
const PROX_M_MAX: f64 = 1e3;
const HJ_PROBES: usize = 200;
const HJ_TOL: f64 = 10.0 * (H + DELTA);
const GRONWALL_TRIALS: usize = 100;
const OSL_PAIRS: usize = 1000;
const OSL_TOL: f64 = 1e-9;
const ORACLE_PROBES: usize = 20;
const ORACLE_DEPTH: usize = 25;
const ORACLE_BRANCHING: usize = 5;
const ORACLE_TOL: f64 = 0.1;
const SWEEP_RUNS: usize = 50;
const L_K_SLACK: f64 = 1.05;
const INVARIANCE_TRIALS: usize = 1000;
const FEEDBACK_FRACTION: f64 = 0.99;
const LIMIT_TOL: f64 = 1e-6;

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn toy() -> Scenario {
    Scenario::load(scenario_path("toy.scn")).expect("toy scenario")
}

/// `v* = C^{-1/3}`; the optimal path stops at `max(v*, r)`.
fn level() -> f64 {
    C.powf(-1.0 / 3.0).max(R)
}

fn v_ex(t: f64, v: f64) -> f64 {
    let l = level();
    if v >= l {
        C * t + 1.0 / (v * v)
    } else if v >= 0.0 {
        C * t + 1.0 / (l * l) + 2.0 * C * (l - v)
    } else {
        C * t + 1.0 / (l * l) + 2.0 * C * l - C * v / 2.0
    }
}

/// Time the optimal path takes to stop: speed 2 up to 0, then 1/2 up to the level.
fn completion(v: f64) -> f64 {
    let l = level();
    if v >= l {
        0.0
    } else if v >= 0.0 {
        (l - v) / 0.5
    } else {
        -v / 2.0 + l / 0.5
    }
}

struct ClosedForm;

impl ValueFn for ClosedForm {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, t: f64, x: &[f64]) -> Option<f64> {
        Some(v_ex(t, x[0]))
    }

    fn differentials(&self, _t: f64, x: &[f64]) -> Option<Differentials> {
        let v = x[0];
        let l = level();
        let grad = |pv: f64| vec![geometry::point(&[C, pv])];
        Some(if v > l {
            Differentials { sub: grad(-2.0 / (v * v * v)), sup: grad(-2.0 / (v * v * v)) }
        } else if v > 0.0 && v < l {
            Differentials { sub: grad(-2.0 * C), sup: grad(-2.0 * C) }
        } else if v < 0.0 {
            Differentials { sub: grad(-C / 2.0), sup: grad(-C / 2.0) }
        } else if v == 0.0 {
            let sup = (0..20).map(|i| geometry::point(&[C, -2.0 * C + 1.5 * C * i as f64 / 19.0])).collect();
            Differentials { sub: vec![], sup }
        } else {
            // v = l with l = v* = 1 is a differentiability point.
            Differentials { sub: grad(-2.0 * C), sup: grad(-2.0 * C) }
        })
    }
}

struct Solved {
    s: Scenario,
    vt: ValueTable,
    law: Arc<FeedbackLaw>,
    solve_time: Duration,
}

fn solved() -> &'static Solved {
    static CELL: OnceLock<Solved> = OnceLock::new();
    CELL.get_or_init(|| {
        let s = toy();
        let start = Instant::now();
        let vt = solve_value(&s, &GridParams { h: H, delta: DELTA, ..GridParams::from_scenario(&s) }).expect("solve");
        let solve_time = start.elapsed();
        let law = Arc::new(extract_feedback(&s, &vt));
        Solved { s, vt, law, solve_time }
    })
}

static FAILED: AtomicBool = AtomicBool::new(false);

fn report(name: &str, pass: bool, detail: String) {
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    if !pass {
        FAILED.store(true, Ordering::SeqCst);
    }
}

fn toy_value_function() {
    let sv = solved();
    let refs = [(0.0, 2.0), (0.0, 0.5), (0.0, -1.0), (0.0, 1.0), (1.0, 0.25), (1.0, 0.1), (1.0, 0.6)];
    let ref_err = refs.iter().map(|&(t, v)| (sv.vt.query(t, &[v]).unwrap() - v_ex(t, v)).abs()).fold(0.0, f64::max);
    let g = &sv.vt.grid;
    let band = 3.0 * DELTA;
    let mut grid_err = 0.0f64;
    let mut compared = 0usize;
    for k in 0..g.slices() {
        let t = g.time(k);
        for node in 0..g.nodes() {
            let v = g.node(node)[0];
            let slack = g.t_end - t - completion(v);
            if slack < band || v.abs() <= band {
                continue;
            }
            compared += 1;
            let err = sv.vt.at(k, node).map_or(f64::INFINITY, |x| (x - v_ex(t, v)).abs());
            grid_err = grid_err.max(err);
        }
    }
    report(
        "toy value function",
        ref_err <= VALUE_REF_TOL && grid_err <= VALUE_GRID_TOL && compared > 0,
        format!(
            "reference error {ref_err:.3e} (<= {VALUE_REF_TOL}), grid error {grid_err:.3e} over {compared} nodes (<= {VALUE_GRID_TOL}), solve {:.1?}",
            sv.solve_time
        ),
    );
}

fn toy_fbar_table() {
    let s = toy();
    let table = [(0.5, -4.0, 0.5), (0.0, -4.0, 2.0), (-0.5, -2.0, 2.0)];
    let mut err = 0.0f64;
    for (v, lo, hi) in table {
        let f = eval_Fbar(&s, 0.0, &[v]).set.as_interval().expect("interval");
        err = err.max((f.lo - lo).abs()).max((f.hi - hi).abs());
    }
    let has = [-2.0, 1.0, 2.0].iter().all(|u| s.controls.values.iter().any(|c| c[0] == *u));
    report(
        "toy F-bar table",
        err <= FBAR_TOL && has,
        format!("max endpoint error {err:.1e}, controls -2, 1, 2 present: {has}"),
    );
}

fn ipc_value() {
    let s = toy();
    let ipc = ipc_check(&s, 25).unwrap();
    let err = ipc.report.rows.iter().map(|r| (r.residual + 0.5).abs()).fold(0.0, f64::max);
    report(
        "IPC value",
        !ipc.report.rows.is_empty() && err <= IPC_TOL,
        format!("{} boundary samples, max |min + 1/2| = {err:.1e}", ipc.report.rows.len()),
    );
}

fn viscosity_suite_on_closed_form() {
    let s = toy();
    let regions: [&[f64]; 3] = [&[-1.5, -0.7, -0.2], &[0.1, 0.4, 0.7], &[1.2, 1.8, 2.5]];
    let mut vii_worst = 0.0f64;
    let mut vii_rows = 0;
    for vs in regions {
        let probes: Vec<(f64, Point)> =
            vs.iter().flat_map(|&v| [0.0, 0.5].map(|t| (t, geometry::point(&[v])))).collect();
        let r = check_T14(&s, &ClosedForm, &probes, &T14Options::closed_form());
        for row in r.report.rows_for(Condition::T14vii) {
            vii_worst = vii_worst.max(row.residual.abs());
            vii_rows += 1;
        }
    }
    let zero = check_T14(&s, &ClosedForm, &[(0.0, geometry::point(&[0.0]))], &T14Options::closed_form());
    let viii: Vec<f64> = zero.report.rows_for(Condition::T14viii).map(|r| r.residual).collect();
    let viii_ok = viii.len() == 20 && viii.iter().all(|r| *r >= -T14_TOL);
    let sub_empty = proximal_probe(&ClosedForm, 0.0, &[0.0], PROX_EPS, PROX_M_MAX).sub_empty();
    report(
        "viscosity inequalities",
        vii_rows > 0 && vii_worst <= T14_TOL && viii_ok && sub_empty,
        format!(
            "vii: {vii_rows} rows, max |residual| {vii_worst:.1e}; viii at v = 0: {} rows, min {:.3e}; subdifferential at 0 empty: {sub_empty}",
            viii.len(),
            viii.iter().copied().fold(f64::INFINITY, f64::min)
        ),
    );
}

fn hj_residuals() {
    let sv = solved();
    let opts = HjOptions::tabulated(H, DELTA);
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut rows = Vec::new();
    let mut rounds = 0;
    while rows.len() < HJ_PROBES && rounds < 50 {
        rounds += 1;
        let probes: Vec<(f64, Point)> = (0..HJ_PROBES - rows.len())
            .map(|_| (rng.random_range(0.0..=2.0), geometry::point(&[rng.random_range(-1.8..=2.8)])))
            .collect();
        let need = HJ_PROBES - rows.len();
        rows.extend(check_HJ_pointwise(&sv.s, &sv.vt, &probes, &opts).rows.into_iter().take(need));
    }
    let worst = rows.iter().map(|r| r.residual.abs()).fold(0.0, f64::max);
    report(
        "HJ residuals",
        rows.len() == HJ_PROBES && worst <= HJ_TOL,
        format!("{} differentiability probes, max residual {worst:.3e} (<= {HJ_TOL:.1e})", rows.len()),
    );
}

fn gronwall_and_uniqueness() {
    let mut ok = true;
    let mut detail = Vec::new();
    for name in ["toy.scn", "linear.scn"] {
        let s = Scenario::load(scenario_path(name)).unwrap();
        let c = estimate_constants(&s, s.numerics.samples).unwrap();
        let g = gronwall_check(&s, &c, GRONWALL_TRIALS).unwrap();
        let bound = 5.0 * s.numerics.h * (1.0 + g.r);
        ok &= g.max_ratio_excess <= bound;
        detail.push(format!("{name} excess {:.3e} (<= {bound:.3e})", g.max_ratio_excess));
    }
    let s = toy();
    let ctrl = ControlSignal::piecewise_constant(
        vec![0.0, 0.5, 1.3],
        vec![geometry::point(&[2.0]), geometry::point(&[-1.0]), geometry::point(&[1.0])],
    )
    .unwrap();
    let a = integrate(&s, 0.0, &[-0.7], &ctrl, 3.0, H).unwrap();
    let b = integrate(&s, 0.0, &[-0.7], &ctrl, 3.0, H).unwrap();
    let bitwise = a.states.len() == b.states.len()
        && a.states.iter().zip(&b.states).all(|(p, q)| p.iter().zip(q).all(|(x, y)| x.to_bits() == y.to_bits()));
    report("Gronwall/uniqueness", ok && bitwise, format!("{}; bitwise repeat: {bitwise}", detail.join(", ")));
}

fn one_sided_lipschitz() {
    let s = toy();
    let c = estimate_constants(&s, s.numerics.samples).unwrap();
    let osl = osl_check(&s, &c, OSL_PAIRS);
    report(
        "OSL",
        osl.max_violation <= OSL_TOL && c.l_fbar == 0.0,
        format!("{} pairs, max violation {:.1e}, L_Fbar = {}", osl.rows.len(), osl.max_violation, c.l_fbar),
    );
}

fn oracle_agreement() {
    let sv = solved();
    let reach = 0.9 * ORACLE_DEPTH as f64 * sv.s.numerics.oracle_h;
    let feasible: Vec<f64> =
        (0..100).map(|i| -0.4 + 2.8 * i as f64 / 99.0).filter(|&v| completion(v) <= reach).collect();
    let mut worst = 0.0f64;
    for i in 0..ORACLE_PROBES {
        let v = feasible[i * (feasible.len() - 1) / (ORACLE_PROBES - 1)];
        let t = if i % 2 == 0 { 0.0 } else { 0.5 };
        let o = brute_force_value(&sv.s, t, &[v], ORACLE_DEPTH, ORACLE_BRANCHING).unwrap();
        worst = worst.max((o - sv.vt.query(t, &[v]).unwrap()).abs());
    }
    report(
        "oracle agreement",
        worst <= ORACLE_TOL,
        format!("{ORACLE_PROBES} probes, max |oracle - solver| {worst:.3e} (<= {ORACLE_TOL})"),
    );
}

fn distance_estimate_sweep() {
    let s = toy();
    let c = estimate_constants(&s, s.numerics.samples).unwrap();
    // rho = 1/2 from the IPC value, L_G = 4 from |F-bar| <= 4, L_F = L = 0.
    let l_k = (2.0 * (c.l_f + c.l)).exp() * (4.0 + 1.0) / 0.5;
    let o = SweepOptions { samples: SWEEP_RUNS, rho: 0.5, h: 1e-3, tol: 1e-9, ratio_tol: 0.05 };
    let (rep, runs) = p7_ratio_sweep(&s, &c, &o).unwrap();
    let max_ratio = runs.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let decay_ok = rep.condition_passes(Condition::P7Decay) && rep.count(Condition::P7Decay) == SWEEP_RUNS;
    report(
        "distance estimate",
        runs.len() == SWEEP_RUNS && max_ratio <= l_k * L_K_SLACK && decay_ok,
        format!(
            "{} runs, max ratio {max_ratio:.4} (<= {:.4}), decay rows pass: {decay_ok}",
            runs.len(),
            l_k * L_K_SLACK
        ),
    );
}

fn invariance() {
    let sv = solved();
    let opts = InvarianceOptions::for_table(&sv.vt, INVARIANCE_TRIALS);
    let rep = invariance_sample_test(&sv.s, &sv.vt, &sv.law, &opts).unwrap();
    let (strong, weak) = (rep.count(Condition::StrongInv), rep.count(Condition::WeakInv));
    let (sf, wf) = (rep.failures(Condition::StrongInv), rep.failures(Condition::WeakInv));
    report(
        "invariance",
        strong == INVARIANCE_TRIALS && weak == INVARIANCE_TRIALS && sf == 0 && wf == 0,
        format!("strong failures {sf}/{strong}, weak failures {wf}/{weak}, tolerance {:.1e}", opts.tol),
    );
}

fn feedback_structure() {
    let sv = solved();
    let law = &sv.law;
    let g = &law.grid;
    let band = 3.0 * DELTA;
    let l = level();
    let cut = sv.s.numerics.horizon - completion(g.lo[0]) - 0.1;
    let mut counts = [(0usize, 0usize); 3];
    for (slot, &k) in law.slices.iter().enumerate() {
        if g.time(k) > cut {
            continue;
        }
        for node in 0..g.nodes() {
            let v = g.node(node)[0];
            let e = law.entry(slot, node);
            let (i, ok) = if v <= -band {
                (0, e.u[0] == 2.0)
            } else if v >= band && v <= l - band {
                (1, e.u[0] == 1.0)
            } else if v >= l + band {
                (2, e.stop && e.w[0] == 0.0)
            } else {
                continue;
            };
            counts[i].0 += 1;
            counts[i].1 += usize::from(ok);
        }
    }
    let frac_ok = counts.iter().all(|(n, m)| *n > 0 && *m as f64 >= FEEDBACK_FRACTION * *n as f64);
    let limit = law.selected_limit(0, g.nearest_node(&[0.0])).map(|lim| lim.w[0]);
    let limit_ok = limit.is_some_and(|w| (w - 0.5).abs() <= LIMIT_TOL);
    report(
        "feedback structure",
        frac_ok && limit_ok,
        format!(
            "u = 2 on v < 0: {}/{}, u = 1 on 0 < v < v*: {}/{}, hold on v >= v*: {}/{}, limit at v = 0: {limit:?}",
            counts[0].1, counts[0].0, counts[1].1, counts[1].0, counts[2].1, counts[2].0
        ),
    );
}

fn main() -> ExitCode {
    let criteria: [(&str, fn()); 11] = [
        ("toy_value_function", toy_value_function),
        ("toy_fbar_table", toy_fbar_table),
        ("ipc_value", ipc_value),
        ("viscosity_suite_on_closed_form", viscosity_suite_on_closed_form),
        ("hj_residuals", hj_residuals),
        ("gronwall_and_uniqueness", gronwall_and_uniqueness),
        ("one_sided_lipschitz", one_sided_lipschitz),
        ("oracle_agreement", oracle_agreement),
        ("distance_estimate_sweep", distance_estimate_sweep),
        ("invariance", invariance),
        ("feedback_structure", feedback_structure),
    ];
    for (name, run) in criteria {
        if catch_unwind(run).is_err() {
            report(name, false, "panicked".into());
        }
    }
    if FAILED.load(Ordering::SeqCst) {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
