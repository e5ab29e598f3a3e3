//! End-to-end reproduction of the one-sided friction example: every check
//! of the pipeline against the closed-form solution, with pinned tolerances.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;

use crate::dynamics::{eval_Fbar, osl_check};
use crate::error::Result;
use crate::geometry::{self, Point};
use crate::hjb::{brute_force_value, extract_feedback, solve_value, FeedbackLaw, GridParams, ValueTable};
use crate::integrator::{gronwall_check, integrate, ControlSignal};
use crate::sampling;
use crate::scenario::{estimate_constants, Scenario};
use crate::sets::ConvexSet1D;
use crate::toy::ToyValue;
use crate::verify::{
    check_HJ_pointwise, check_T14, invariance_sample_test, ipc_check, p7_ratio_sweep, proximal_probe, Condition,
    HjOptions, InvarianceOptions, SweepOptions, T14Options,
};

pub const TOY_SCENARIO: &str = include_str!("../scenarios/toy.scn");
pub const LINEAR_SCENARIO: &str = include_str!("../scenarios/linear.scn");

/// The bundled toy with `C` and `r` overridden.
pub fn toy_scenario(c: f64, r: f64) -> Result<Scenario> {
    let overrides = BTreeMap::from([("C".to_string(), c), ("r".to_string(), r)]);
    Scenario::from_toml_str_with(TOY_SCENARIO, &overrides)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReproOptions {
    pub c: f64,
    pub r: f64,
    pub h: f64,
    pub delta: f64,
    pub invariance_trials: usize,
    pub hj_probes: usize,
    pub oracle_probes: usize,
    pub oracle_depth: usize,
    pub oracle_branching: usize,
    pub sweep_samples: usize,
    pub osl_pairs: usize,
    pub gronwall_trials: usize,
}

impl Default for ReproOptions {
    fn default() -> Self {
        ReproOptions {
            c: 1.0,
            r: 0.8,
            h: 2e-3,
            delta: 2e-3,
            invariance_trials: 1000,
            hj_probes: 200,
            oracle_probes: 20,
            oracle_depth: 25,
            oracle_branching: 5,
            sweep_samples: 50,
            osl_pairs: 1000,
            gronwall_trials: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionOutcome {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRow {
    pub t: f64,
    pub v: f64,
    pub solved: f64,
    pub exact: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackRegion {
    pub region: &'static str,
    pub expected: &'static str,
    pub nodes: usize,
    pub matching: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReproReport {
    pub c: f64,
    pub r: f64,
    pub v_star: f64,
    /// `C r³ > 1`: optimal trajectories stop on reaching the target edge.
    pub stops_at_boundary: bool,
    pub ipc_value: f64,
    pub references: Vec<ReferenceRow>,
    /// `(region, condition, pass)` of the closed-form viscosity checks.
    pub t14_matrix: Vec<(&'static str, Condition, bool)>,
    pub feedback: Vec<FeedbackRegion>,
    /// Selected one-sided limit of the argmin velocity at `v = 0`.
    pub limit_argmin: Option<f64>,
    pub criteria: Vec<CriterionOutcome>,
}

impl ReproReport {
    pub fn all_pass(&self) -> bool {
        self.criteria.iter().all(|c| c.pass)
    }

    pub fn render(&self) -> String {
        let mut o = String::new();
        o.push_str(&format!("C = {}, r = {}\n", self.c, self.r));
        o.push_str(&format!("v* = (1/C)^(1/3) = {:.6}\n", self.v_star));
        if self.stops_at_boundary {
            o.push_str(&format!(
                "C r^3 = {:.4} > 1: stop at target boundary, optimal trajectories stop on reaching v = r\n",
                self.c * self.r.powi(3)
            ));
        }
        o.push_str(&format!("IPC value = {:.12}\n\nvalue at reference points\n", self.ipc_value));
        o.push_str(&format!("{:>6} {:>7} {:>12} {:>12} {:>10}\n", "t", "v", "solved", "exact", "error"));
        for r in &self.references {
            o.push_str(&format!(
                "{:>6} {:>7} {:>12.6} {:>12.6} {:>10.2e}\n",
                r.t,
                r.v,
                r.solved,
                r.exact,
                (r.solved - r.exact).abs()
            ));
        }
        o.push_str("\nviscosity checks on the closed form\n");
        for (region, c, pass) in &self.t14_matrix {
            o.push_str(&format!("{region:<14} {:<9} {}\n", c.id(), if *pass { "PASS" } else { "FAIL" }));
        }
        o.push_str("\noptimal feedback by region\n");
        for f in &self.feedback {
            o.push_str(&format!("{:<14} u* = {:<5} {}/{} nodes\n", f.region, f.expected, f.matching, f.nodes));
        }
        match self.limit_argmin {
            Some(w) => o.push_str(&format!("limit argmin velocity at v = 0: {w}\n")),
            None => o.push_str("limit argmin velocity at v = 0: not selected\n"),
        }
        o.push_str("\ncriteria\n");
        for c in &self.criteria {
            o.push_str(&format!("{} {:<22} {}\n", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail));
        }
        o
    }
}

fn outcome(name: &'static str, pass: bool, detail: String) -> CriterionOutcome {
    CriterionOutcome { name, pass, detail }
}

/// Nodes compared against the closed form: feasible, off the `3δ` bands
/// around `v = 0` and around the boundary of the feasibility region.
fn value_grid_error(vt: &ValueTable, exact: &ToyValue, band: f64) -> f64 {
    let g = &vt.grid;
    let mut worst = 0.0f64;
    for k in 0..g.slices() {
        let t = g.time(k);
        for node in 0..g.nodes() {
            let v = g.node(node)[0];
            let slack = g.t_end - t - exact.completion_time(v);
            if slack < 0.0 || slack.abs() <= band * 5f64.sqrt() || v.abs() <= band {
                continue;
            }
            let err = vt.at(k, node).map_or(f64::INFINITY, |val| (val - exact.value(t, v)).abs());
            worst = worst.max(err);
        }
    }
    worst
}

fn feedback_regions(law: &FeedbackLaw, exact: &ToyValue, band: f64, horizon_cut: f64) -> Vec<FeedbackRegion> {
    let l = exact.level();
    let mut regions = vec![
        FeedbackRegion { region: "v < 0", expected: "2", nodes: 0, matching: 0 },
        FeedbackRegion { region: "0 < v < v*", expected: "1", nodes: 0, matching: 0 },
        FeedbackRegion { region: "v >= v*", expected: "hold", nodes: 0, matching: 0 },
    ];
    let g = &law.grid;
    for (slot, &k) in law.slices.iter().enumerate() {
        if g.time(k) > horizon_cut {
            continue;
        }
        for node in 0..g.nodes() {
            let v = g.node(node)[0];
            let e = law.entry(slot, node);
            let (idx, ok) = if v <= -band {
                (0, e.u[0] == 2.0)
            } else if v >= band && v <= l - band {
                (1, e.u[0] == 1.0)
            } else if v >= l + band {
                (2, e.stop && e.w[0] == 0.0)
            } else {
                continue;
            };
            regions[idx].nodes += 1;
            regions[idx].matching += usize::from(ok);
        }
    }
    regions
}

/// Runs the whole pipeline on the toy.
pub fn run_toy_repro(o: &ReproOptions) -> Result<ReproReport> {
    let s = toy_scenario(o.c, o.r)?;
    let exact = ToyValue::new(o.c, o.r);
    let mut criteria = Vec::new();
    let tol_grid = o.h + o.delta;

    // Value function.
    let vt = solve_value(&s, &GridParams { h: o.h, delta: o.delta, ..GridParams::from_scenario(&s) })?;
    let refs = [(0.0, 2.0), (0.0, 0.5), (0.0, -1.0), (0.0, 1.0), (1.0, 0.25), (1.0, 1.5)];
    let references: Vec<ReferenceRow> = refs
        .iter()
        .map(|&(t, v)| ReferenceRow { t, v, solved: vt.query(t, &[v]).unwrap_or(f64::NAN), exact: exact.value(t, v) })
        .collect();
    let ref_err = references.iter().map(|r| (r.solved - r.exact).abs()).fold(0.0, f64::max);
    let grid_err = value_grid_error(&vt, &exact, 3.0 * o.delta);
    criteria.push(outcome(
        "toy value function",
        ref_err <= 5e-2 && grid_err <= 1e-1,
        format!("reference max error {ref_err:.3e} (<= 5e-2), grid max error {grid_err:.3e} (<= 1e-1)"),
    ));

    // F̄ table.
    let expected =
        [(0.5, ConvexSet1D::new(-4.0, 0.5)), (0.0, ConvexSet1D::new(-4.0, 2.0)), (-0.5, ConvexSet1D::new(-2.0, 2.0))];
    let fbar_err = expected
        .iter()
        .map(|(v, e)| {
            let got = eval_Fbar(&s, 0.0, &[*v]).set.as_interval().expect("1D");
            (got.lo - e.lo).abs().max((got.hi - e.hi).abs())
        })
        .fold(0.0, f64::max);
    let has_controls = [-2.0, 1.0, 2.0].iter().all(|u| s.controls.values.iter().any(|c| c[0] == *u));
    criteria.push(outcome(
        "toy F-bar table",
        fbar_err <= 1e-12 && has_controls,
        format!("max endpoint error {fbar_err:.1e} (<= 1e-12)"),
    ));

    // IPC.
    let ipc = ipc_check(&s, 25)?;
    let ipc_err = ipc.report.rows.iter().map(|r| (r.residual + 0.5).abs()).fold(0.0, f64::max);
    criteria.push(outcome(
        "IPC value",
        !ipc.report.rows.is_empty() && ipc_err <= 1e-9,
        format!("worst {} over {} samples, max |value + 1/2| = {ipc_err:.1e}", ipc.worst, ipc.report.rows.len()),
    ));

    // Closed-form viscosity checks.
    let regions: [(&str, &[f64]); 4] = [
        ("v < 0", &[-1.5, -1.0, -0.5]),
        ("0 < v < v*", &[0.2, 0.5, 0.9 * exact.level()]),
        ("v > v*", &[exact.level() + 0.2, exact.level() + 0.5, 2.0]),
        ("v = 0", &[0.0]),
    ];
    let mut t14_matrix = Vec::new();
    let mut t14_ok = true;
    for (name, vs) in regions {
        let probes: Vec<(f64, Point)> =
            vs.iter().flat_map(|&v| [0.0, 1.0].map(|t| (t, geometry::point(&[v])))).collect();
        let r = check_T14(&s, &exact, &probes, &T14Options::closed_form());
        for c in [Condition::T14v, Condition::T14vi, Condition::T14vii, Condition::T14viii] {
            if r.report.count(c) > 0 {
                t14_matrix.push((name, c, r.report.condition_passes(c)));
            }
        }
        let vii_ok = r.report.rows_for(Condition::T14vii).all(|row| row.residual.abs() <= 1e-9);
        t14_ok &= r.report.all_pass() && vii_ok && r.max_duality_gap <= 1e-12;
        if name == "v = 0" {
            t14_ok &= r.report.count(Condition::T14viii) == 2 * crate::verify::SEGMENT_SAMPLES;
        }
    }
    let sub_empty = proximal_probe(&exact, 0.0, &[0.0], 1e-2, 1e3).sub_empty();
    criteria.push(outcome(
        "viscosity inequalities",
        t14_ok && sub_empty,
        format!("all rows pass: {t14_ok}, subdifferential at v = 0 empty: {sub_empty}"),
    ));

    // Pointwise HJ on the table.
    let hj_opts = HjOptions::tabulated(o.h, o.delta);
    let mut rng = sampling::stream_rng(s.numerics.seed, sampling::STREAM_PROBES);
    let mut hj = crate::verify::VerificationReport::default();
    let mut attempts = 0;
    while hj.rows.len() < o.hj_probes && attempts < 50 {
        attempts += 1;
        let need = o.hj_probes - hj.rows.len();
        let probes: Vec<(f64, Point)> = (0..need)
            .map(|_| (rng.random_range(0.0..=2.0), geometry::point(&[rng.random_range(-1.8..=2.8)])))
            .collect();
        let part = check_HJ_pointwise(&s, &vt, &probes, &hj_opts);
        hj.rows.extend(part.rows.into_iter().take(need));
    }
    let hj_worst = hj.rows.iter().map(|r| r.residual.abs()).fold(0.0, f64::max);
    criteria.push(outcome(
        "HJ residuals",
        hj.rows.len() == o.hj_probes && hj_worst <= 10.0 * tol_grid,
        format!("{} probes, max residual {hj_worst:.3e} (<= {:.1e})", hj.rows.len(), 10.0 * tol_grid),
    ));

    // Grönwall and determinism.
    let consts = estimate_constants(&s, s.numerics.samples)?;
    let linear = Scenario::from_toml_str(LINEAR_SCENARIO)?;
    let lconsts = estimate_constants(&linear, linear.numerics.samples)?;
    let mut gr_ok = true;
    let mut gr_detail = Vec::new();
    for (name, sc, c) in [("toy", &s, &consts), ("linear", &linear, &lconsts)] {
        let g = gronwall_check(sc, c, o.gronwall_trials)?;
        let bound = 5.0 * sc.numerics.h * (1.0 + g.r);
        gr_ok &= g.max_ratio_excess <= bound;
        gr_detail.push(format!("{name}: excess {:.3e} (<= {bound:.3e})", g.max_ratio_excess));
    }
    let ctrl =
        ControlSignal::piecewise_constant(vec![0.0, 0.7], vec![geometry::point(&[2.0]), geometry::point(&[1.0])])?;
    let a = integrate(&s, 0.0, &[-1.0], &ctrl, 3.0, o.h)?;
    let b = integrate(&s, 0.0, &[-1.0], &ctrl, 3.0, o.h)?;
    let bitwise = a.states.iter().zip(&b.states).all(|(p, q)| p.iter().zip(q).all(|(x, y)| x.to_bits() == y.to_bits()));
    criteria.push(outcome(
        "Gronwall/uniqueness",
        gr_ok && bitwise,
        format!("{}; repeated integration bitwise equal: {bitwise}", gr_detail.join(", ")),
    ));

    // OSL.
    let osl = osl_check(&s, &consts, o.osl_pairs);
    criteria.push(outcome(
        "OSL",
        osl.max_violation <= 1e-9,
        format!("max violation {:.1e} over {} pairs, L_Fbar = {}", osl.max_violation, o.osl_pairs, consts.l_fbar),
    ));

    // Oracle, at probes whose optimal path finishes within the oracle's reach.
    let reach_time = 0.9 * o.oracle_depth as f64 * s.numerics.oracle_h;
    let feasible: Vec<f64> =
        (0..200).map(|i| -0.4 + 2.8 * i as f64 / 199.0).filter(|&v| exact.completion_time(v) <= reach_time).collect();
    let probes: Vec<(f64, f64)> = (0..o.oracle_probes.min(feasible.len()))
        .map(|i| {
            let v = feasible[i * (feasible.len() - 1) / (o.oracle_probes.max(2) - 1)];
            (if i % 2 == 0 { 0.0 } else { 1.0 }, v)
        })
        .collect();
    let mut oracle_err = 0.0f64;
    for &(t, v) in &probes {
        let ov = brute_force_value(&s, t, &[v], o.oracle_depth, o.oracle_branching)?;
        let sv = vt.query(t, &[v])?;
        oracle_err = oracle_err.max((ov - sv).abs());
    }
    // The oracle's time step enters the cost through C t.
    let oracle_tol = 0.1 * o.c.max(1.0);
    criteria.push(outcome(
        "oracle agreement",
        probes.len() == o.oracle_probes && oracle_err <= oracle_tol,
        format!("max |oracle - solver| {oracle_err:.3e} over {} probes (<= {oracle_tol})", probes.len()),
    ));

    // Distance estimate.
    let sweep = SweepOptions { samples: o.sweep_samples, rho: ipc.rho_estimate, h: 1e-3, tol: 1e-9, ratio_tol: 0.05 };
    let p7_detail;
    let p7_ok = if ipc.rho_estimate > 0.0 {
        let (rep, runs) = p7_ratio_sweep(&s, &consts, &sweep)?;
        p7_detail = format!(
            "{} runs, max ratio {:.4} vs L_K {:.4}",
            runs.len(),
            rep.metrics.get("max_ratio").copied().unwrap_or(f64::NAN),
            rep.metrics.get("L_K").copied().unwrap_or(f64::NAN)
        );
        runs.len() == o.sweep_samples
            && rep.condition_passes(Condition::P7Ratio)
            && rep.condition_passes(Condition::P7Decay)
    } else {
        p7_detail = "IPC estimate is not positive".into();
        false
    };
    criteria.push(outcome("distance estimate", p7_ok, p7_detail));

    // Invariance.
    let law = Arc::new(extract_feedback(&s, &vt));
    let inv = invariance_sample_test(&s, &vt, &law, &InvarianceOptions::for_table(&vt, o.invariance_trials))?;
    let strong_fail = inv.failures(Condition::StrongInv);
    let weak_fail = inv.failures(Condition::WeakInv);
    criteria.push(outcome(
        "invariance",
        strong_fail == 0
            && weak_fail == 0
            && inv.count(Condition::StrongInv) == o.invariance_trials
            && inv.count(Condition::WeakInv) == o.invariance_trials,
        format!(
            "strong failures {strong_fail}/{}, weak failures {weak_fail}/{}",
            inv.count(Condition::StrongInv),
            inv.count(Condition::WeakInv)
        ),
    ));

    // Feedback structure.
    let horizon_cut = s.numerics.horizon - exact.completion_time(s.state_box.lo[0]) - 0.1;
    let feedback = feedback_regions(&law, &exact, 3.0 * o.delta, horizon_cut);
    let zero = law.grid.nearest_node(&[0.0]);
    let limit_argmin = law.selected_limit(0, zero).map(|l| l.w[0]);
    let frac_ok = feedback.iter().all(|f| f.nodes > 0 && f.matching as f64 >= 0.99 * f.nodes as f64);
    let lim_ok = limit_argmin.is_some_and(|w| (w - 0.5).abs() <= 1e-6);
    criteria.push(outcome(
        "feedback structure",
        frac_ok && lim_ok,
        format!(
            "{}; limit at v = 0: {:?}",
            feedback.iter().map(|f| format!("{} {}/{}", f.region, f.matching, f.nodes)).collect::<Vec<_>>().join(", "),
            limit_argmin
        ),
    ));

    Ok(ReproReport {
        c: o.c,
        r: o.r,
        v_star: exact.v_star(),
        stops_at_boundary: o.c * o.r.powi(3) > 1.0,
        ipc_value: ipc.worst,
        references,
        t14_matrix,
        feedback,
        limit_argmin,
        criteria,
    })
}
