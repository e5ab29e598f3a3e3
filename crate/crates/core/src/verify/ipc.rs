//! Inward pointing condition on sampled boundary points of the tube graph.

use crate::dynamics::eval_Fbar;
use crate::error::{Error, Result};
use crate::geometry::{self, Point};
use crate::sampling;
use crate::scenario::{BoundaryPoint, Scenario, TubeShape};
use crate::verify::{Condition, Relation, ReportRow, VerificationReport};

/// Offset used to read a proximal normal off the projection of a point
/// just outside the graph.
const NORMAL_OFFSET: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct IpcResult {
    pub report: VerificationReport,
    /// Largest `min_ξ l⁰ + <l, ξ>` over the samples; `-∞` when vacuous.
    pub worst: f64,
    /// `-worst` when negative, else 0.
    pub rho_estimate: f64,
}

/// `min over extreme points ξ of F̄(t, x)` of `l⁰ + <l, ξ>`.
pub fn ipc_value(s: &Scenario, t: f64, x: &[f64], normal: &[f64]) -> f64 {
    let f = eval_Fbar(s, t, x);
    normal[0] + f.set.support_min(&normal[1..]).0
}

/// Unit normal `(z - P(z)) / |z - P(z)|` with `z` pushed slightly outward.
fn projection_normal(s: &Scenario, b: &BoundaryPoint) -> Point {
    let mut z: Point = geometry::point(&[b.t + NORMAL_OFFSET * b.normal[0]]);
    z.extend(b.x.iter().zip(&b.normal[1..]).map(|(x, n)| x + NORMAL_OFFSET * n));
    let p = s.target.graph_distance(z[0], &z[1..], 1.0);
    if !(p.distance > 0.0 && p.distance.is_finite()) {
        return b.normal.clone();
    }
    let mut diff: Point = geometry::point(&[z[0] - p.t]);
    diff.extend(z[1..].iter().zip(&p.x).map(|(a, b)| a - b));
    let n = geometry::norm(&diff);
    diff.iter().map(|v| v / n).collect()
}

/// Samples `count` boundary points of the tube graph over the scenario time
/// span. Interval tubes use analytic normals, other tubes projection normals.
/// A tube without boundary in the box is a vacuous pass; an empty one is an
/// error.
pub fn ipc_check(s: &Scenario, count: usize) -> Result<IpcResult> {
    let (t0, t1) = (s.numerics.t_start, s.numerics.horizon);
    if s.target.empty_on(&s.state_box, t0, t1, count.max(16)) {
        return Err(Error::NoBoundary);
    }
    let mut rng = sampling::stream_rng(s.numerics.seed, sampling::STREAM_BOUNDARY);
    let points = s.target.boundary_samples(&s.state_box, t0, t1, count, &mut rng);
    let mut report = VerificationReport::default();
    if points.is_empty() {
        report.notes.push("tube has no boundary inside the state box; IPC holds vacuously".into());
        return Ok(IpcResult { report, worst: f64::NEG_INFINITY, rho_estimate: 0.0 });
    }
    let analytic = matches!(s.target.shape, TubeShape::Intervals(_));
    let mut worst = f64::NEG_INFINITY;
    for b in &points {
        let normal = if analytic { b.normal.clone() } else { projection_normal(s, b) };
        let val = ipc_value(s, b.t, &b.x, &normal);
        worst = worst.max(val);
        let mut row = ReportRow::new(Condition::Ipc, b.t, &b.x, val, Relation::Lt, 0.0);
        row.note = format!("normal = {:?}", normal.as_slice());
        report.push(row);
    }
    let rho_estimate = if worst < 0.0 { -worst } else { 0.0 };
    report.metrics.insert("rho_estimate".into(), rho_estimate);
    Ok(IpcResult { report, worst, rho_estimate })
}
