//! Greedy steering toward the tube graph by a discrete selection of
//! distance-decreasing velocities, and the resulting distance estimate.

use rand::Rng;
use rayon::prelude::*;

use crate::dynamics::{eval_Fbar, witness_control};
use crate::error::{Error, Result};
use crate::geometry::{self, Point};
use crate::integrator::step;
use crate::sampling;
use crate::scenario::{Scenario, StructuralConstants};
use crate::verify::{Condition, Relation, ReportRow, VerificationReport};

/// Neighborhood radius used when searching the graph for a projection.
const SEARCH_CAP: f64 = 1.0;
const SAMPLES_PER_AXIS_1D: usize = 256;
const SAMPLES_PER_AXIS_2D: usize = 32;
const TIME_SAMPLES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringConstants {
    /// Bound on `|F|` within unit distance of the tube graph.
    pub l_g: f64,
    /// `0.99 · min{1/2, 1/(L_G + 1)}`.
    pub theta: f64,
    /// `exp(2 (L_F + L))`: Grönwall factor over the unit-neighborhood time span.
    pub c: f64,
    pub l_f_plus_l: f64,
    pub rho: f64,
    /// `C (L_G + 1) / ρ`.
    pub l_k: f64,
}

impl SteeringConstants {
    pub fn measure(s: &Scenario, consts: &StructuralConstants, rho: f64) -> Self {
        let (t_lo, t_hi) = (s.numerics.t_start, s.numerics.horizon);
        let bx = &s.state_box;
        let per_axis = if s.dim == 1 { SAMPLES_PER_AXIS_1D } else { SAMPLES_PER_AXIS_2D };
        let total = per_axis.pow(s.dim as u32);
        let mut l_g = 0.0f64;
        let mut any = false;
        for ti in 0..TIME_SAMPLES {
            let t = t_lo + (t_hi - t_lo) * ti as f64 / (TIME_SAMPLES - 1) as f64;
            for flat in 0..total {
                let mut rest = flat;
                let x: Point = (0..s.dim)
                    .map(|a| {
                        let i = rest % per_axis;
                        rest /= per_axis;
                        bx.lo[a] + (bx.hi[a] - bx.lo[a]) * i as f64 / (per_axis - 1) as f64
                    })
                    .collect();
                if s.target.state_distance(t, &x).0 <= 1.0 {
                    any = true;
                    l_g = l_g.max(eval_Fbar(s, t, &x).set.max_norm());
                }
            }
        }
        if !any {
            l_g = (0..total.min(64))
                .map(|i| {
                    let f = i as f64 / 63.0;
                    let x: Point = bx.lo.iter().zip(&bx.hi).map(|(a, b)| a + f * (b - a)).collect();
                    eval_Fbar(s, t_lo, &x).set.max_norm()
                })
                .fold(0.0, f64::max);
        }
        let theta = 0.99 * (0.5f64).min(1.0 / (l_g + 1.0));
        let l_f_plus_l = consts.l_f + consts.l;
        let c = (2.0 * l_f_plus_l).exp();
        SteeringConstants { l_g, theta, c, l_f_plus_l, rho, l_k: c * (l_g + 1.0) / rho }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteeringStop {
    Hit,
    LeftNeighborhood,
    Horizon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringResult {
    pub t0: f64,
    pub x0: Point,
    pub stop: SteeringStop,
    pub hit_time: f64,
    pub hit_point: Point,
    /// `ψ(t_k, x_k)` at every step.
    pub distances: Vec<f64>,
    /// `D⁻ψ quotient - ((L_F + L) ψ - ρ)` of each chosen velocity.
    pub residuals: Vec<f64>,
    /// Largest `ψ_{k+1} - max{0, ψ_k + h ((L_F + L) ψ_k - ρ)}`.
    pub max_decay_excess: f64,
    /// `|(t0, x0) - (T̄, x(T̄))| / ψ(t0, x0)`, 0 when starting on the tube.
    pub ratio: f64,
    pub constants: SteeringConstants,
}

fn psi(s: &Scenario, t: f64, x: &[f64]) -> f64 {
    s.target.graph_distance(t, x, SEARCH_CAP).distance
}

/// Steps with the extreme point of `F̄` that most decreases the distance to
/// the tube graph, integrating with its witnessing control. Errors when no
/// extreme point decreases the distance at all.
pub fn steer_to_target(
    s: &Scenario,
    consts: &StructuralConstants,
    t0: f64,
    x0: &[f64],
    rho: f64,
    h: f64,
    tol: f64,
) -> Result<SteeringResult> {
    steer_with(s, &SteeringConstants::measure(s, consts, rho), t0, x0, h, tol)
}

/// [`steer_to_target`] with precomputed constants.
pub fn steer_with(
    s: &Scenario,
    sc: &SteeringConstants,
    t0: f64,
    x0: &[f64],
    h: f64,
    tol: f64,
) -> Result<SteeringResult> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let d0 = psi(s, t0, x0);
    let mut res = SteeringResult {
        t0,
        x0: geometry::point(x0),
        stop: SteeringStop::Hit,
        hit_time: t0,
        hit_point: geometry::point(x0),
        distances: vec![d0],
        residuals: vec![],
        max_decay_excess: f64::NEG_INFINITY,
        ratio: 0.0,
        constants: sc.clone(),
    };
    if d0 == 0.0 {
        res.max_decay_excess = 0.0;
        return Ok(res);
    }
    if d0 >= sc.theta {
        return Err(Error::OutsideNeighborhood { distance: d0, theta: sc.theta });
    }
    let (mut t, mut x, mut d) = (t0, geometry::point(x0), d0);
    let max_steps = ((s.numerics.horizon - t0) / h).floor().max(0.0) as usize;
    res.stop = SteeringStop::Horizon;
    for _ in 0..max_steps {
        let bound = sc.l_f_plus_l * d - sc.rho;
        let (q, v) = eval_Fbar(s, t, &x)
            .set
            .extreme_points()
            .into_iter()
            .map(|v| ((psi(s, t + h, &geometry::axpy(&x, h, &v)) - d) / h, v))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .expect("nonempty velocity set");
        if q >= 0.0 && q > bound + tol {
            return Err(Error::NoDecreasingDirection { t, x: x.to_vec(), best: q });
        }
        res.residuals.push(q - bound);
        let (ui, _) = witness_control(s, t, &x, &v);
        x = step(s, t, &x, &s.controls.values[ui], h);
        t += h;
        let dn = psi(s, t, &x);
        res.max_decay_excess = res.max_decay_excess.max(dn - (d + h * bound).max(0.0));
        res.distances.push(dn);
        d = dn;
        if d == 0.0 {
            res.stop = SteeringStop::Hit;
            break;
        }
        if d >= sc.theta {
            res.stop = SteeringStop::LeftNeighborhood;
            break;
        }
    }
    res.hit_time = t;
    res.hit_point = x.clone();
    let mut disp: Point = geometry::point(&[t - t0]);
    disp.extend(x.iter().zip(x0).map(|(a, b)| a - b));
    res.ratio = geometry::norm(&disp) / d0;
    Ok(res)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub samples: usize,
    pub rho: f64,
    pub h: f64,
    /// Per-step tolerance of the Dini and decay checks.
    pub tol: f64,
    /// Relative slack on `L_K`.
    pub ratio_tol: f64,
}

/// Steers from `samples` starts placed outward of sampled boundary points at
/// distances in `(0, θ)` and reports the worst distance ratio against `L_K`
/// and every run's discrete decay inequality. Runs cut by the horizon before
/// `L_K ψ(t0, x0)` has elapsed are inconclusive and only noted.
pub fn p7_ratio_sweep(
    s: &Scenario,
    consts: &StructuralConstants,
    o: &SweepOptions,
) -> Result<(VerificationReport, Vec<SteeringResult>)> {
    let sc = SteeringConstants::measure(s, consts, o.rho);
    let mut rng = sampling::stream_rng(s.numerics.seed, sampling::STREAM_STEERING);
    let t_hi = (s.numerics.horizon - sc.theta).max(s.numerics.t_start);
    let boundary = s.target.boundary_samples(&s.state_box, s.numerics.t_start, t_hi, o.samples, &mut rng);
    let mut report = VerificationReport::default();
    if boundary.is_empty() {
        report.notes.push("no boundary points to start from".into());
        return Ok((report, vec![]));
    }
    let mut starts = Vec::with_capacity(o.samples);
    for i in 0..o.samples {
        let b = &boundary[i % boundary.len()];
        let d = sc.theta * rng.random_range(0.05..0.95);
        let t = b.t + d * b.normal[0];
        let x: Point = b.x.iter().zip(&b.normal[1..]).map(|(p, n)| p + d * n).collect();
        starts.push((t, x));
    }
    let runs: Vec<Result<Option<SteeringResult>>> = starts
        .par_iter()
        .map(|(t, x)| {
            if !s.state_box.contains(x) || psi(s, *t, x) >= sc.theta {
                return Ok(None);
            }
            steer_with(s, &sc, *t, x, o.h, o.tol).map(Some)
        })
        .collect();
    let mut results = Vec::new();
    let mut worst = 0.0f64;
    for (r, (t, x)) in runs.into_iter().zip(&starts) {
        let Some(r) = r? else {
            report.notes.push(format!("({t}, {x:?}): start outside the box or the neighborhood"));
            continue;
        };
        let d0 = r.distances.first().copied().unwrap_or(0.0);
        if r.stop == SteeringStop::Horizon && s.numerics.horizon - t < sc.l_k * d0 {
            report.notes.push(format!("({t}, {x:?}): horizon reached before the time bound L_K d; inconclusive"));
            continue;
        }
        worst = worst.max(r.ratio);
        let note = format!("ratio = {}, stop = {:?}", r.ratio, r.stop);
        let mut row = ReportRow::new(Condition::P7Ratio, *t, x, r.ratio - sc.l_k, Relation::Le, o.ratio_tol * sc.l_k);
        if r.stop != SteeringStop::Hit {
            row.pass = false;
        }
        report.push(row.with_note(note));
        // Includes the second-order Euler term L_G² h².
        let decay_tol = o.tol * o.h + sc.l_g * sc.l_g * o.h * o.h;
        report.push(ReportRow::new(Condition::P7Decay, *t, x, r.max_decay_excess, Relation::Le, decay_tol));
        results.push(r);
    }
    report.metrics.insert("max_ratio".into(), worst);
    report.metrics.insert("L_K".into(), sc.l_k);
    report.metrics.insert("theta".into(), sc.theta);
    report.metrics.insert("L_G".into(), sc.l_g);
    Ok((report, results))
}
