//! Sampled invariance of the hypograph and epigraph of a solved value
//! function along trajectories of the dynamics.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::geometry::Point;
use crate::hjb::{FeedbackLaw, ValueTable};
use crate::integrator::{integrate_until, ControlSignal};
use crate::sampling;
use crate::scenario::Scenario;
use crate::verify::{Condition, Relation, ReportRow, VerificationReport};

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceOptions {
    pub trials: usize,
    pub tol: f64,
    /// Integration step.
    pub h: f64,
    /// Longest random-control run.
    pub max_duration: f64,
    /// Random controls switch every `switch` time units.
    pub switch: f64,
    /// Weak-invariance starts must stay feasible when delayed by this much,
    /// so discretization lag does not push them past the horizon.
    pub slack: f64,
}

impl InvarianceOptions {
    pub fn for_table(vt: &ValueTable, trials: usize) -> Self {
        let h = vt.grid.h();
        let tol = 10.0 * (h + vt.grid.min_spacing());
        InvarianceOptions { trials, tol, h, max_duration: 1.0, switch: 0.1, slack: 0.5 }
    }
}

fn value(vt: &ValueTable, t: f64, x: &[f64]) -> f64 {
    vt.query(t, x).unwrap_or(f64::INFINITY)
}

/// Uniform feasible start in the grid, `None` after 200 misses.
fn feasible_start<R: Rng>(vt: &ValueTable, rng: &mut R, slack: f64) -> Option<(f64, Point, f64)> {
    let g = &vt.grid;
    for _ in 0..200 {
        let t = rng.random_range(g.t0..=g.t_end);
        let x: Point = g.lo.iter().zip(&g.hi).map(|(a, b)| rng.random_range(*a..=*b)).collect();
        let v = value(vt, t, &x);
        if v.is_finite() && (slack == 0.0 || (t + slack <= g.t_end && value(vt, t + slack, &x).is_finite())) {
            return Some((t, x, v));
        }
    }
    None
}

/// Strong: from `β₀ = V - gap` under random piecewise-constant controls,
/// `β₀ <= V` must persist. Weak: from `β₀ = V + gap` (gap 0 on even trials)
/// along the extracted feedback, `V <= β₀` must persist until stopping.
pub fn invariance_sample_test(
    s: &Scenario,
    vt: &ValueTable,
    law: &Arc<FeedbackLaw>,
    o: &InvarianceOptions,
) -> Result<VerificationReport> {
    let rows: Vec<Result<[Option<ReportRow>; 2]>> = (0..o.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = sampling::trial_rng(s.numerics.seed, sampling::STREAM_INVARIANCE, i as u64);
            let strong = match feasible_start(vt, &mut rng, 0.0) {
                None => None,
                Some((t0, x0, v0)) => {
                    let beta = v0 - rng.random_range(0.0..=1.0);
                    let dur = if i % 10 == 9 { 0.0 } else { rng.random_range(0.0..=o.max_duration) };
                    let t_end = (t0 + dur).min(vt.grid.t_end);
                    let pieces = ((t_end - t0) / o.switch).ceil().max(1.0) as usize;
                    let times: Vec<f64> = (0..pieces).map(|k| t0 + k as f64 * o.switch).collect();
                    let values: Vec<Point> =
                        (0..pieces).map(|_| s.controls.values[rng.random_range(0..s.controls.len())].clone()).collect();
                    let ctrl = ControlSignal::piecewise_constant(times, values)?;
                    let tr = integrate_until(s, t0, &x0, &ctrl, t_end, o.h, |_, x| !s.state_box.contains(x))?;
                    let excess = tr
                        .times
                        .iter()
                        .zip(&tr.states)
                        .map(|(t, x)| beta - value(vt, *t, x))
                        .fold(f64::NEG_INFINITY, f64::max);
                    Some(
                        ReportRow::new(Condition::StrongInv, t0, &x0, excess, Relation::Le, o.tol)
                            .with_note(format!("beta = {beta}, duration = {}", t_end - t0)),
                    )
                }
            };
            let weak = match feasible_start(vt, &mut rng, o.slack) {
                None => None,
                Some((t0, x0, v0)) => {
                    let beta = if i % 2 == 0 { v0 } else { v0 + rng.random_range(0.0..=0.5) };
                    let l = Arc::clone(law);
                    let ctrl = ControlSignal::feedback(move |t, x| l.control_at(t, x));
                    let stop = |t: f64, x: &[f64]| {
                        !s.state_box.contains(x)
                            || law.stop_at(t, x)
                            || (s.target.contains(t, x) && (s.w(t, x) - value(vt, t, x)).abs() <= o.tol)
                    };
                    let tr = integrate_until(s, t0, &x0, &ctrl, vt.grid.t_end, o.h, stop)?;
                    let excess = tr
                        .times
                        .iter()
                        .zip(&tr.states)
                        .map(|(t, x)| value(vt, *t, x) - beta)
                        .fold(f64::NEG_INFINITY, f64::max);
                    Some(
                        ReportRow::new(Condition::WeakInv, t0, &x0, excess, Relation::Le, o.tol)
                            .with_note(format!("beta = {beta}, stopped at t = {}", tr.last_time())),
                    )
                }
            };
            Ok([strong, weak])
        })
        .collect();
    let mut report = VerificationReport::default();
    for r in rows {
        for row in r?.into_iter().flatten() {
            report.push(row);
        }
    }
    let missing = 2 * o.trials - report.rows.len();
    if missing > 0 {
        report.notes.push(format!("{missing} trials found no feasible start"));
    }
    Ok(report)
}
