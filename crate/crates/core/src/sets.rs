//! Convex set values of the velocity fields: exact intervals in one
//! dimension, extreme-point polygons in two.

use crate::geometry::{self, dot, Point};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexSet1D {
    pub lo: f64,
    pub hi: f64,
}

impl ConvexSet1D {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi || lo.is_nan() || hi.is_nan(), "interval [{lo}, {hi}]");
        ConvexSet1D { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        ConvexSet1D { lo: v, hi: v }
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_singleton(&self) -> bool {
        self.lo == self.hi
    }

    pub fn dist(&self, v: f64) -> f64 {
        (self.lo - v).max(v - self.hi).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Exact,
    SampledHull,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexSetND {
    /// Counter-clockwise hull vertices, pairwise distinct.
    pub extreme_points: Vec<Point>,
    pub provenance: Provenance,
}

impl ConvexSetND {
    pub fn from_points(points: &[Point], provenance: Provenance) -> Self {
        ConvexSetND { extreme_points: geometry::convex_hull_2d(points, 1e-13), provenance }
    }
}

/// A value of F or F̄.
#[derive(Debug, Clone, PartialEq)]
pub enum VelocitySet {
    Interval(ConvexSet1D),
    Polytope(ConvexSetND),
}

impl VelocitySet {
    pub fn dim(&self) -> usize {
        match self {
            VelocitySet::Interval(_) => 1,
            VelocitySet::Polytope(_) => 2,
        }
    }

    pub fn as_interval(&self) -> Option<ConvexSet1D> {
        match self {
            VelocitySet::Interval(i) => Some(*i),
            VelocitySet::Polytope(_) => None,
        }
    }

    pub fn extreme_points(&self) -> Vec<Point> {
        match self {
            VelocitySet::Interval(i) if i.is_singleton() => vec![geometry::point(&[i.lo])],
            VelocitySet::Interval(i) => vec![geometry::point(&[i.lo]), geometry::point(&[i.hi])],
            VelocitySet::Polytope(p) => p.extreme_points.clone(),
        }
    }

    /// Extreme points followed by `interior` evenly spaced samples on every edge.
    pub fn candidates(&self, interior: usize) -> Vec<Point> {
        let ext = self.extreme_points();
        let mut out = ext.clone();
        let edges: Vec<(usize, usize)> = match ext.len() {
            0 | 1 => vec![],
            2 => vec![(0, 1)],
            n => (0..n).map(|i| (i, (i + 1) % n)).collect(),
        };
        for (a, b) in edges {
            for k in 1..=interior {
                let s = k as f64 / (interior + 1) as f64;
                out.push(ext[a].iter().zip(&ext[b]).map(|(p, q)| p + s * (q - p)).collect());
            }
        }
        out
    }

    /// Minimum of `<v, dir>` over the set with a minimizing extreme point.
    /// Ties keep the first extreme point in listing order.
    pub fn support_min(&self, dir: &[f64]) -> (f64, Point) {
        let mut best = f64::INFINITY;
        let mut arg = Point::new();
        for v in self.extreme_points() {
            let val = dot(&v, dir);
            if val < best || arg.is_empty() {
                best = val;
                arg = v;
            }
        }
        (best, arg)
    }

    pub fn support_max(&self, dir: &[f64]) -> (f64, Point) {
        let neg: Point = dir.iter().map(|d| -d).collect();
        let (v, arg) = self.support_min(&neg);
        (-v, arg)
    }

    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        self.dist(v) <= tol
    }

    pub fn dist(&self, v: &[f64]) -> f64 {
        match self {
            VelocitySet::Interval(i) => i.dist(v[0]),
            VelocitySet::Polytope(p) => geometry::dist_to_polygon(&p.extreme_points, v),
        }
    }

    pub fn max_norm(&self) -> f64 {
        self.extreme_points().iter().map(|p| geometry::norm(p)).fold(0.0, f64::max)
    }

    /// Whether every extreme point of `other` lies in `self` up to `tol`.
    pub fn includes(&self, other: &VelocitySet, tol: f64) -> bool {
        other.extreme_points().iter().all(|p| self.contains(p, tol))
    }
}

/// Value of F̄(t, x): the convexified union over the control list.
#[derive(Debug, Clone, PartialEq)]
pub struct FbarSet {
    pub set: VelocitySet,
    /// False when the union over the discretized control set showed a gap
    /// wider than the discretization scale and was convexified.
    pub convex: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::point;

    #[test]
    fn interval_support_and_candidates() {
        let s = VelocitySet::Interval(ConvexSet1D::new(-4.0, 0.5));
        assert_eq!(s.support_min(&[-2.0]).0, -1.0);
        assert_eq!(s.support_min(&[-2.0]).1[0], 0.5);
        assert_eq!(s.support_max(&[-2.0]).0, 8.0);
        let c = s.candidates(3);
        assert_eq!(c.len(), 5);
        assert!((c[3][0] - (-4.0 + 0.5 * 4.5)).abs() < 1e-15);
        assert_eq!(s.dist(&[1.0]), 0.5);
    }

    #[test]
    fn polytope_support_and_distance() {
        let pts = vec![point(&[0.0, 0.0]), point(&[1.0, 0.0]), point(&[0.0, 1.0]), point(&[1.0, 1.0])];
        let s = VelocitySet::Polytope(ConvexSetND::from_points(&pts, Provenance::Exact));
        assert_eq!(s.extreme_points().len(), 4);
        assert_eq!(s.support_min(&[1.0, 1.0]).0, 0.0);
        assert_eq!(s.support_max(&[1.0, 1.0]).0, 2.0);
        assert_eq!(s.candidates(3).len(), 4 + 4 * 3);
        assert!(s.contains(&[0.5, 0.5], 0.0));
        assert!((s.dist(&[2.0, 0.5]) - 1.0).abs() < 1e-12);
    }
}
