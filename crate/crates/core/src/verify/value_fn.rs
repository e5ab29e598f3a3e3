//! Value functions that the checks accept: closed forms and solved tables.

use crate::error::Error;
use crate::geometry::{self, Point};
use crate::hjb::ValueTable;
use crate::toy::ToyValue;

/// Exact proximal sub- and superdifferentials as covectors `(p_t, p_x)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Differentials {
    pub sub: Vec<Point>,
    pub sup: Vec<Point>,
}

pub trait ValueFn: Sync {
    fn dim(&self) -> usize;

    /// `None` where the function is undefined, `+∞` where infeasible.
    fn value(&self, t: f64, x: &[f64]) -> Option<f64>;

    /// Exact differentials, when known in closed form.
    fn differentials(&self, _t: f64, _x: &[f64]) -> Option<Differentials> {
        None
    }
}

/// Samples per segment of a closed-form differential.
pub const SEGMENT_SAMPLES: usize = 20;

fn segment(c: f64, lo: f64, hi: f64) -> Vec<Point> {
    (0..SEGMENT_SAMPLES)
        .map(|i| geometry::point(&[c, lo + (hi - lo) * i as f64 / (SEGMENT_SAMPLES - 1) as f64]))
        .collect()
}

impl ValueFn for ToyValue {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, t: f64, x: &[f64]) -> Option<f64> {
        Some(ToyValue::value(self, t, x[0]))
    }

    fn differentials(&self, t: f64, x: &[f64]) -> Option<Differentials> {
        let v = x[0];
        if self.is_differentiable(v) {
            let (pt, pv) = self.gradient(t, v);
            let g = geometry::point(&[pt, pv]);
            return Some(Differentials { sub: vec![g.clone()], sup: vec![g] });
        }
        if v == 0.0 {
            let q = self.superdifferential_at_zero();
            return Some(Differentials { sub: vec![], sup: segment(self.c, q.lo, q.hi) });
        }
        // Convex kink at the target edge when the level is r > v*.
        Some(Differentials { sub: segment(self.c, -2.0 * self.c, -2.0 / (self.r * self.r * self.r)), sup: vec![] })
    }
}

impl ValueFn for ValueTable {
    fn dim(&self) -> usize {
        self.grid.dim()
    }

    fn value(&self, t: f64, x: &[f64]) -> Option<f64> {
        match self.query(t, x) {
            Ok(v) => Some(v),
            Err(Error::OutOfGrid { .. }) => None,
            Err(_) => None,
        }
    }
}

/// Wraps a closure `(t, x) -> value`.
pub struct FnValue<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(f64, &[f64]) -> f64 + Sync> ValueFn for FnValue<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, t: f64, x: &[f64]) -> Option<f64> {
        Some((self.f)(t, x))
    }
}
