//! Moving target sets `t ↦ 𝒯(t)`.

use rand::Rng;

use crate::expr::{Args, Expr};
use crate::geometry::{self, Point};
use crate::scenario::StateBox;

#[derive(Debug, Clone, PartialEq)]
pub enum TubeShape {
    /// 1D: union of closed intervals with time-dependent endpoints.
    Intervals(Vec<(Expr, Expr)>),
    /// 2D: `{x : sd(t, x) <= 0}`; `sd` should be a signed distance in `x`.
    SignedDistance(Expr),
}

/// What the tube is outside its declared time range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutsideRange {
    Empty,
    Clamp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetTube {
    pub shape: TubeShape,
    pub time_range: Option<(f64, f64)>,
    pub outside: OutsideRange,
}

/// A boundary point of the tube graph with its outward unit normal in (t, x).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPoint {
    pub t: f64,
    pub x: Point,
    pub normal: Point,
}

/// Nearest point of the tube graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphProjection {
    pub distance: f64,
    pub t: f64,
    pub x: Point,
}

const FD_STEP: f64 = 1e-6;

impl TargetTube {
    fn effective_time(&self, t: f64) -> Option<f64> {
        match self.time_range {
            Some((a, b)) if t < a || t > b => match self.outside {
                OutsideRange::Empty => None,
                OutsideRange::Clamp => Some(t.clamp(a, b)),
            },
            _ => Some(t),
        }
    }

    pub fn is_time_invariant(&self) -> bool {
        let exprs_static = match &self.shape {
            TubeShape::Intervals(iv) => iv.iter().all(|(a, b)| !a.uses_time() && !b.uses_time()),
            TubeShape::SignedDistance(e) => !e.uses_time(),
        };
        exprs_static && (self.time_range.is_none() || self.outside == OutsideRange::Clamp)
    }

    /// Nonempty intervals at time `t` (1D tubes).
    pub fn intervals_at(&self, t: f64) -> Vec<(f64, f64)> {
        let Some(te) = self.effective_time(t) else { return vec![] };
        match &self.shape {
            TubeShape::Intervals(iv) => iv
                .iter()
                .map(|(a, b)| {
                    let args = Args::new(te, &[], &[], &[]);
                    (a.eval(&args), b.eval(&args))
                })
                .filter(|(a, b)| a <= b)
                .collect(),
            TubeShape::SignedDistance(_) => vec![],
        }
    }

    fn sd(&self, te: f64, x: &[f64]) -> f64 {
        match &self.shape {
            TubeShape::SignedDistance(e) => e.eval(&Args::new(te, x, &[], &[])),
            TubeShape::Intervals(_) => f64::NAN,
        }
    }

    pub fn contains(&self, t: f64, x: &[f64]) -> bool {
        let Some(te) = self.effective_time(t) else { return false };
        match &self.shape {
            TubeShape::Intervals(_) => self.intervals_at(t).iter().any(|(a, b)| x[0] >= *a && x[0] <= *b),
            TubeShape::SignedDistance(_) => self.sd(te, x) <= 0.0,
        }
    }

    /// Distance from `x` to `𝒯(t)` and the nearest point; infinite when empty.
    pub fn state_distance(&self, t: f64, x: &[f64]) -> (f64, Point) {
        let Some(te) = self.effective_time(t) else { return (f64::INFINITY, Point::new()) };
        match &self.shape {
            TubeShape::Intervals(_) => {
                let mut best = (f64::INFINITY, Point::new());
                for (a, b) in self.intervals_at(t) {
                    let p = x[0].clamp(a, b);
                    let d = (x[0] - p).abs();
                    if d < best.0 {
                        best = (d, geometry::point(&[p]));
                    }
                }
                best
            }
            TubeShape::SignedDistance(_) => {
                let sd = self.sd(te, x);
                if sd <= 0.0 {
                    return (0.0, geometry::point(x));
                }
                let mut p: Point = geometry::point(x);
                for _ in 0..4 {
                    let val = self.sd(te, &p);
                    let grad = self.sd_gradient(te, &p);
                    let g2 = geometry::dot(&grad, &grad);
                    if g2 <= 0.0 || val.abs() < 1e-13 {
                        break;
                    }
                    p = geometry::axpy(&p, -val / g2, &grad);
                }
                (geometry::dist(x, &p), p)
            }
        }
    }

    fn sd_gradient(&self, te: f64, x: &[f64]) -> Point {
        (0..x.len())
            .map(|i| {
                let mut xp: Point = geometry::point(x);
                let mut xm: Point = geometry::point(x);
                xp[i] += FD_STEP;
                xm[i] -= FD_STEP;
                (self.sd(te, &xp) - self.sd(te, &xm)) / (2.0 * FD_STEP)
            })
            .collect()
    }

    /// Distance from `(t, x)` to the tube graph and a nearest graph point.
    /// Time-varying tubes are searched over `|s - t| <= R`, with `R` the
    /// same-time distance (capped at `search_cap` when that is infinite).
    pub fn graph_distance(&self, t: f64, x: &[f64], search_cap: f64) -> GraphProjection {
        let (d0, p0) = self.state_distance(t, x);
        if d0 == 0.0 || self.is_time_invariant() {
            return GraphProjection { distance: d0, t, x: p0 };
        }
        let radius = if d0.is_finite() { d0 } else { search_cap };
        let eval = |s: f64| -> (f64, Point) {
            let (ds, ps) = self.state_distance(s, x);
            (((s - t) * (s - t) + ds * ds).sqrt(), ps)
        };
        let n = 400;
        let mut best = GraphProjection { distance: d0, t, x: p0 };
        let mut best_s = t;
        for i in 0..=n {
            let s = t - radius + 2.0 * radius * i as f64 / n as f64;
            let (d, p) = eval(s);
            if d < best.distance {
                best = GraphProjection { distance: d, t: s, x: p };
                best_s = s;
            }
        }
        let mut step = 2.0 * radius / n as f64;
        for _ in 0..40 {
            step *= 0.5;
            for s in [best_s - step, best_s + step] {
                let (d, p) = eval(s);
                if d < best.distance {
                    best = GraphProjection { distance: d, t: s, x: p };
                    best_s = s;
                }
            }
        }
        best
    }

    fn endpoint_slope(&self, e: &Expr, t: f64) -> f64 {
        if !e.uses_time() {
            return 0.0;
        }
        let f = |s: f64| e.eval(&Args::new(s, &[], &[], &[]));
        (f(t + FD_STEP) - f(t - FD_STEP)) / (2.0 * FD_STEP)
    }

    /// Boundary points of the graph whose state lies in `bx`, at `count`
    /// times evenly spread over `[t_lo, t_hi]` (1D) or `count` projected
    /// random points (2D). Faces created by a finite time range are skipped.
    pub fn boundary_samples<R: Rng>(
        &self,
        bx: &StateBox,
        t_lo: f64,
        t_hi: f64,
        count: usize,
        rng: &mut R,
    ) -> Vec<BoundaryPoint> {
        let mut out = Vec::new();
        match &self.shape {
            TubeShape::Intervals(iv) => {
                for i in 0..count {
                    let t = t_lo + (i as f64 + 0.5) / count as f64 * (t_hi - t_lo);
                    let Some(te) = self.effective_time(t) else { continue };
                    let current = self.intervals_at(t);
                    for (lo_e, hi_e) in iv {
                        let args = Args::new(te, &[], &[], &[]);
                        let (a, b) = (lo_e.eval(&args), hi_e.eval(&args));
                        if a > b {
                            continue;
                        }
                        for (end, expr, sign) in [(a, lo_e, -1.0), (b, hi_e, 1.0)] {
                            if !end.is_finite() || end < bx.lo[0] || end > bx.hi[0] {
                                continue;
                            }
                            let covered = current.iter().any(|(c, d)| *c < end && end < *d);
                            if covered {
                                continue;
                            }
                            let slope = if self.time_range.is_some_and(|(r0, r1)| t < r0 || t > r1) {
                                0.0
                            } else {
                                self.endpoint_slope(expr, te)
                            };
                            let raw = [-sign * slope, sign];
                            let nrm = geometry::norm(&raw);
                            out.push(BoundaryPoint {
                                t,
                                x: geometry::point(&[end]),
                                normal: geometry::point(&[raw[0] / nrm, raw[1] / nrm]),
                            });
                        }
                    }
                }
            }
            TubeShape::SignedDistance(_) => {
                let mut attempts = 0;
                while out.len() < count && attempts < 50 * count.max(1) {
                    attempts += 1;
                    let t = rng.random_range(t_lo..=t_hi);
                    let Some(te) = self.effective_time(t) else { continue };
                    let x: Point = (0..bx.lo.len()).map(|i| rng.random_range(bx.lo[i]..=bx.hi[i])).collect();
                    let mut p = x.clone();
                    for _ in 0..8 {
                        let val = self.sd(te, &p);
                        let grad = self.sd_gradient(te, &p);
                        let g2 = geometry::dot(&grad, &grad);
                        if g2 <= 0.0 {
                            break;
                        }
                        p = geometry::axpy(&p, -val / g2, &grad);
                    }
                    if self.sd(te, &p).abs() > 1e-9 || !bx.contains(&p) {
                        continue;
                    }
                    let grad = self.sd_gradient(te, &p);
                    let dt = if self.is_time_invariant() {
                        0.0
                    } else {
                        (self.sd(te + FD_STEP, &p) - self.sd(te - FD_STEP, &p)) / (2.0 * FD_STEP)
                    };
                    let mut raw: Point = geometry::point(&[dt]);
                    raw.extend_from_slice(&grad);
                    let nrm = geometry::norm(&raw);
                    if nrm <= 0.0 {
                        continue;
                    }
                    out.push(BoundaryPoint { t, x: p, normal: raw.iter().map(|v| v / nrm).collect() });
                }
            }
        }
        out
    }

    /// Whether the tube is empty at every one of `count` sampled times.
    pub fn empty_on(&self, bx: &StateBox, t_lo: f64, t_hi: f64, count: usize) -> bool {
        (0..count).all(|i| {
            let t = t_lo + (i as f64 + 0.5) / count as f64 * (t_hi - t_lo);
            match &self.shape {
                TubeShape::Intervals(_) => self.intervals_at(t).iter().all(|(a, b)| *b < bx.lo[0] || *a > bx.hi[0]),
                TubeShape::SignedDistance(_) => self.effective_time(t).is_none(),
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::VarScope;
    use std::collections::BTreeMap;

    fn tube(lo: &str, hi: &str) -> TargetTube {
        let p = BTreeMap::new();
        TargetTube {
            shape: TubeShape::Intervals(vec![(
                Expr::compile(lo, VarScope::time_only(), &p).unwrap(),
                Expr::compile(hi, VarScope::time_only(), &p).unwrap(),
            )]),
            time_range: None,
            outside: OutsideRange::Empty,
        }
    }

    #[test]
    fn half_line_membership_and_distance() {
        let tb = tube("0.8", "inf");
        assert!(tb.contains(3.0, &[0.8]));
        assert!(!tb.contains(3.0, &[0.79]));
        let (d, p) = tb.state_distance(0.0, &[0.5]);
        assert!((d - 0.3).abs() < 1e-15 && p[0] == 0.8);
        assert!(tb.is_time_invariant());
        let g = tb.graph_distance(1.0, &[0.7], 10.0);
        assert!((g.distance - 0.1).abs() < 1e-15);
    }

    #[test]
    fn boundary_normals_for_moving_endpoint() {
        let tb = tube("t", "inf");
        let bx = StateBox { lo: geometry::point(&[-5.0]), hi: geometry::point(&[5.0]) };
        let mut rng = rand::rng();
        let pts = tb.boundary_samples(&bx, 0.0, 1.0, 4, &mut rng);
        assert_eq!(pts.len(), 4);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for p in pts {
            assert!((p.normal[0] - s).abs() < 1e-8 && (p.normal[1] + s).abs() < 1e-8, "{p:?}");
            assert_eq!(p.x[0], p.t);
        }
        let g = tb.graph_distance(1.0, &[0.0], 10.0);
        assert!((g.distance - s).abs() < 1e-6, "{g:?}");
    }

    #[test]
    fn time_range_empties_tube() {
        let mut tb = tube("0", "1");
        tb.time_range = Some((0.0, 1.0));
        assert!(tb.contains(0.5, &[0.5]));
        assert!(!tb.contains(1.5, &[0.5]));
        tb.outside = OutsideRange::Clamp;
        assert!(tb.contains(1.5, &[0.5]));
    }
}
