//! Space-time node grid and the tabulated value function.

use std::io::Write;

use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::scenario::Scenario;

/// Uniform nodes `t0 + k (T - t0)/N` in time and `lo + i (hi - lo)/nᵢ` per
/// state axis; flat node index has the last axis fastest.
/// Relative offset below which a point counts as lying on a grid node.
pub const NODE_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid {
    pub t0: f64,
    pub t_end: f64,
    pub steps: usize,
    pub lo: Point,
    pub hi: Point,
    pub intervals: SmallVec<[usize; 2]>,
}

/// Result of locating a point for interpolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lookup {
    Value(f64),
    Masked,
    Outside,
}

impl ValueGrid {
    pub fn new(s: &Scenario, t0: f64, t_end: f64, h: f64, delta: f64) -> Result<Self> {
        if !(h > 0.0 && delta > 0.0 && t_end > t0) {
            return Err(Error::InvalidArgument(format!(
                "value grid needs h, delta > 0 and t_end > t0 (h = {h}, delta = {delta}, [{t0}, {t_end}])"
            )));
        }
        let steps = ((t_end - t0) / h - 1e-9).ceil().max(1.0) as usize;
        let b = &s.state_box;
        let intervals =
            b.lo.iter().zip(&b.hi).map(|(a, c)| ((c - a) / delta - 1e-9).ceil().max(1.0) as usize).collect();
        Ok(ValueGrid { t0, t_end, steps, lo: b.lo.clone(), hi: b.hi.clone(), intervals })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn slices(&self) -> usize {
        self.steps + 1
    }

    pub fn h(&self) -> f64 {
        (self.t_end - self.t0) / self.steps as f64
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.intervals[axis] as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim()).map(|i| self.spacing(i)).fold(f64::INFINITY, f64::min)
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.t_end
        } else {
            self.t0 + (self.t_end - self.t0) * k as f64 / self.steps as f64
        }
    }

    pub fn nodes(&self) -> usize {
        self.intervals.iter().map(|n| n + 1).product()
    }

    pub fn node_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.intervals).fold(0, |acc, (i, n)| acc * (n + 1) + i)
    }

    pub fn node_multi(&self, flat: usize) -> SmallVec<[usize; 2]> {
        let mut rem = flat;
        let mut out: SmallVec<[usize; 2]> = SmallVec::from_elem(0, self.dim());
        for i in (0..self.dim()).rev() {
            let n = self.intervals[i] + 1;
            out[i] = rem % n;
            rem /= n;
        }
        out
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        if i == self.intervals[axis] {
            self.hi[axis]
        } else {
            self.lo[axis] + (self.hi[axis] - self.lo[axis]) * i as f64 / self.intervals[axis] as f64
        }
    }

    pub fn node(&self, flat: usize) -> Point {
        self.node_multi(flat).iter().enumerate().map(|(a, i)| self.coord(a, *i)).collect()
    }

    /// Nearest node to `x`, clamped to the grid.
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let idx: SmallVec<[usize; 2]> = (0..self.dim())
            .map(|a| (((x[a] - self.lo[a]) / self.spacing(a)).round().max(0.0) as usize).min(self.intervals[a]))
            .collect();
        self.node_index(&idx)
    }

    /// Nearest slice index to `t`, clamped.
    pub fn nearest_slice(&self, t: f64) -> usize {
        (((t - self.t0) / self.h()).round().max(0.0) as usize).min(self.steps)
    }

    pub fn contains_state(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    /// Corner nodes and multilinear weights of `x`; `None` outside the box.
    /// Offsets within [`NODE_SNAP`] cells of a node snap to it.
    pub fn stencil(&self, x: &[f64]) -> Option<SmallVec<[(usize, f64); 4]>> {
        if !self.contains_state(x) {
            return None;
        }
        let d = self.dim();
        let mut base: SmallVec<[usize; 2]> = SmallVec::new();
        let mut frac: SmallVec<[f64; 2]> = SmallVec::new();
        for (a, xa) in x.iter().enumerate().take(d) {
            let s = (xa - self.lo[a]) / self.spacing(a);
            let i = (s.floor().max(0.0) as usize).min(self.intervals[a] - 1);
            base.push(i);
            let f = (s - i as f64).clamp(0.0, 1.0);
            frac.push(if f < NODE_SNAP {
                0.0
            } else if f > 1.0 - NODE_SNAP {
                1.0
            } else {
                f
            });
        }
        let mut out = SmallVec::new();
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx: SmallVec<[usize; 2]> = SmallVec::new();
            for a in 0..d {
                let up = corner >> (d - 1 - a) & 1 == 1;
                w *= if up { frac[a] } else { 1.0 - frac[a] };
                idx.push(base[a] + usize::from(up));
            }
            if w > 0.0 {
                out.push((self.node_index(&idx), w));
            }
        }
        Some(out)
    }
}

/// Value function on a [`ValueGrid`], slice-major. Masked nodes carry +∞ in
/// `values` but are never used in arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub grid: ValueGrid,
    pub values: Vec<f64>,
    pub finite: Vec<bool>,
    /// Candidate velocities per node and slice beyond extreme points.
    pub interior_samples: usize,
    /// Nodes where `F̄` had to be convexified.
    pub nonconvex_nodes: usize,
}

impl ValueTable {
    pub fn at(&self, k: usize, node: usize) -> Option<f64> {
        let i = k * self.grid.nodes() + node;
        self.finite[i].then_some(self.values[i])
    }

    pub fn slice_lookup(&self, k: usize, x: &[f64]) -> Lookup {
        lookup(&self.grid, &self.values, &self.finite, 0, k, x)
    }

    /// Multilinear interpolation in `(t, x)`; +∞ when any corner with
    /// nonzero weight is masked.
    pub fn query(&self, t: f64, x: &[f64]) -> Result<f64> {
        let g = &self.grid;
        let slack = 1e-12 * (1.0 + g.t_end.abs());
        if !(t >= g.t0 - slack && t <= g.t_end + slack) || !g.contains_state(x) || x.len() != g.dim() {
            return Err(Error::OutOfGrid { t, x: x.to_vec() });
        }
        let s = ((t - g.t0) / g.h()).clamp(0.0, g.steps as f64);
        let k = (s.floor() as usize).min(g.steps.saturating_sub(1));
        let f = (s - k as f64).clamp(0.0, 1.0);
        let mut acc = 0.0;
        for (kk, w) in [(k, 1.0 - f), (k + 1, f)] {
            if w == 0.0 {
                continue;
            }
            match self.slice_lookup(kk, x) {
                Lookup::Value(v) => acc += w * v,
                Lookup::Masked => return Ok(f64::INFINITY),
                Lookup::Outside => return Err(Error::OutOfGrid { t, x: x.to_vec() }),
            }
        }
        Ok(acc)
    }

    /// CSV with columns `t, x_1..x_n, value, is_inf`, every `stride`-th slice.
    pub fn write_csv<W: Write>(&self, out: W, stride: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.grid.dim();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend(["value".to_string(), "is_inf".into()]);
        w.write_record(&header)?;
        let stride = stride.max(1);
        let mut ks: Vec<usize> = (0..self.grid.slices()).step_by(stride).collect();
        if ks.last() != Some(&self.grid.steps) {
            ks.push(self.grid.steps);
        }
        for k in ks {
            let t = self.grid.time(k);
            for node in 0..self.grid.nodes() {
                let mut rec = vec![t.to_string()];
                rec.extend(self.grid.node(node).iter().map(|v| v.to_string()));
                match self.at(k, node) {
                    Some(v) => rec.extend([v.to_string(), "0".into()]),
                    None => rec.extend(["inf".to_string(), "1".into()]),
                }
                w.write_record(&rec)?;
            }
        }
        w.flush().map_err(|e| Error::Io { path: "<csv>".into(), source: e })?;
        Ok(())
    }
}

/// Interpolates slice `k` from storage that begins at slice `first`.
pub(crate) fn lookup(grid: &ValueGrid, values: &[f64], finite: &[bool], first: usize, k: usize, x: &[f64]) -> Lookup {
    let Some(st) = grid.stencil(x) else { return Lookup::Outside };
    let base = (k - first) * grid.nodes();
    let mut acc = 0.0;
    for (node, w) in st {
        let i = base + node;
        if !finite[i] {
            return Lookup::Masked;
        }
        acc += w * values[i];
    }
    Lookup::Value(acc)
}
