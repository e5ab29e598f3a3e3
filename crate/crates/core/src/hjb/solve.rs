//! Backward semi-Lagrangian dynamic programming with the target as obstacle.

use rayon::prelude::*;
use smallvec::SmallVec;

use super::grid::{lookup, Lookup, ValueGrid, ValueTable};
use crate::dynamics::eval_Fbar;
use crate::error::Result;
use crate::geometry::{self, Point};
use crate::scenario::Scenario;

/// Grid and scheme parameters for [`solve_value`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridParams {
    pub t0: f64,
    pub t_end: f64,
    pub h: f64,
    pub delta: f64,
    /// Interior velocity samples per hull edge.
    pub interior: usize,
    /// Longest straight-line continuation used when a one-step foot point
    /// touches masked nodes.
    pub lookahead: usize,
}

impl GridParams {
    pub fn from_scenario(s: &Scenario) -> Self {
        let n = &s.numerics;
        GridParams {
            t0: n.t_start,
            t_end: n.horizon,
            h: n.h,
            delta: n.delta,
            interior: n.interior_samples,
            lookahead: 64,
        }
    }
}

/// Finalized slices `first..` of a table under construction.
pub(crate) struct Stored<'a> {
    pub scenario: &'a Scenario,
    pub grid: &'a ValueGrid,
    pub values: &'a [f64],
    pub finite: &'a [bool],
    pub first: usize,
    pub kinks: &'a [f64],
    /// Per-node candidate velocities when the dynamics are time invariant.
    pub cands: Option<&'a [(Vec<Point>, bool)]>,
}

impl Stored<'_> {
    fn lookup(&self, k: usize, x: &[f64]) -> Lookup {
        lookup(self.grid, self.values, self.finite, self.first, k, x)
    }
}

/// Candidate velocities at a node with the convexity flag of `F̄`.
pub(crate) fn node_candidates(s: &Scenario, t: f64, x: &[f64], interior: usize) -> (Vec<Point>, bool) {
    let f = eval_Fbar(s, t, x);
    (f.set.candidates(interior), f.convex)
}

fn stop_cost(s: &Scenario, t: f64, y: &[f64]) -> Option<f64> {
    if s.target.contains(t, y) {
        let w = s.w(t, y);
        w.is_finite().then_some(w)
    } else {
        None
    }
}

fn min_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(p), Some(q)) => Some(p.min(q)),
        (p, None) => p,
        (None, q) => q,
    }
}

/// First time in `(0, h)` at which `x + τ v` reaches a kink coordinate on some
/// axis, with `τ = 0` when `x` sits on a kink and `v` leaves it. Returns the
/// time and the crossed axis.
fn kink_crossing(kinks: &[f64], x: &[f64], v: &[f64], h: f64) -> Option<(f64, usize)> {
    let mut first: Option<(f64, usize)> = None;
    for (a, (&xa, &va)) in x.iter().zip(v).enumerate() {
        if va == 0.0 {
            continue;
        }
        let ya = xa + h * va;
        for &kk in kinks {
            let tol = 1e-12 * (1.0 + kk.abs());
            let tau = if (xa - kk).abs() <= tol {
                0.0
            } else if (xa - kk) * (ya - kk) < 0.0 {
                (kk - xa) / va
            } else {
                continue;
            };
            if tau < h && first.is_none_or(|(f, _)| tau < f) {
                first = Some((tau, a));
            }
        }
    }
    first
}

/// Node nearest to `z` except on `axis`, where it is the first node strictly
/// past `z` in the direction of `va`. `None` when that node is off the grid.
fn far_node(g: &ValueGrid, z: &[f64], axis: usize, va: f64) -> Option<usize> {
    let mut idx: SmallVec<[usize; 2]> = SmallVec::new();
    for (a, &za) in z.iter().enumerate() {
        let pos = (za - g.lo[a]) / g.spacing(a);
        let i = if a != axis {
            pos.round()
        } else if va > 0.0 {
            (pos + 1e-9).floor() + 1.0
        } else {
            (pos - 1e-9).ceil() - 1.0
        };
        if i < 0.0 || i > g.intervals[a] as f64 {
            return None;
        }
        idx.push(i as usize);
    }
    Some(g.node_index(&idx))
}

/// Value of a step that crosses a kink at `τ`: the remaining time is spent
/// with velocities admissible just past the kink that do not point back
/// across the crossed axis.
fn split_value(
    st: &Stored,
    k: usize,
    x: &[f64],
    v: &[f64],
    (tau, axis): (f64, usize),
    lookahead: usize,
) -> Option<f64> {
    let g = st.grid;
    let s = st.scenario;
    let h = g.time(k + 1) - g.time(k);
    let z = geometry::axpy(x, tau, v);
    let owned;
    let cands: &[Point] = match (st.cands, far_node(g, &z, axis, v[axis])) {
        (Some(c), Some(node)) => &c[node].0,
        _ => {
            let eps = 1e-9 * g.min_spacing() / geometry::norm(v);
            let past = geometry::axpy(&z, eps, v);
            owned = eval_Fbar(s, g.time(k) + tau, &past).set.candidates(s.numerics.interior_samples);
            &owned
        }
    };
    cands
        .iter()
        .filter(|w| w[axis] * v[axis] >= 0.0)
        .filter_map(|w| follow(st, k, geometry::axpy(&z, h - tau, w), w, lookahead))
        .reduce(f64::min)
}

/// Value at foot point `y` on slice `k + 1`, or `W` there if `y` is in the
/// target. When `y` touches masked nodes the straight line with velocity `v`
/// is followed for a few more steps until it would cross a kink.
fn follow(st: &Stored, k: usize, y: Point, v: &[f64], lookahead: usize) -> Option<f64> {
    let g = st.grid;
    let s = st.scenario;
    let t1 = g.time(k + 1);
    let mut best = stop_cost(s, t1, &y);
    match st.lookup(k + 1, &y) {
        Lookup::Value(val) => return min_opt(best, Some(val)),
        Lookup::Outside => return best,
        Lookup::Masked if best.is_some() => return best,
        Lookup::Masked => {}
    }
    let speed = geometry::norm(v);
    if speed == 0.0 {
        return None;
    }
    let reach = ((2.0 * g.min_spacing()) / ((t1 - g.time(k)) * speed)).ceil() as usize;
    let cap = lookahead.min(reach).min(g.steps - k);
    let mut prev = y;
    for j in 2..=cap {
        let tj = g.time(k + j);
        let hj = tj - g.time(k + j - 1);
        if kink_crossing(st.kinks, &prev, v, hj).is_some() {
            return None;
        }
        let yj = geometry::axpy(&prev, hj, v);
        best = stop_cost(s, tj, &yj);
        match st.lookup(k + j, &yj) {
            Lookup::Value(val) => return min_opt(best, Some(val)),
            Lookup::Outside => return best,
            Lookup::Masked if best.is_some() => return best,
            Lookup::Masked => {}
        }
        prev = yj;
    }
    None
}

/// Value of moving from node `x` at slice `k` with constant velocity `v` for
/// one step, splitting the step where it crosses a kink.
pub(crate) fn candidate_value(st: &Stored, k: usize, x: &[f64], v: &[f64], lookahead: usize) -> Option<f64> {
    let h = st.grid.time(k + 1) - st.grid.time(k);
    match kink_crossing(st.kinks, x, v, h) {
        Some(cross) => split_value(st, k, x, v, cross, lookahead),
        None => follow(st, k, geometry::axpy(x, h, v), v, lookahead),
    }
}

/// Solves `V(t, x) = min(W(t, x) on the target, min_v V(t + h, x + h v))`
/// backward from `t_end`, where `V = W` on the target and +∞ elsewhere.
pub fn solve_value(s: &Scenario, p: &GridParams) -> Result<ValueTable> {
    let grid = ValueGrid::new(s, p.t0, p.t_end, p.h, p.delta)?;
    let m = grid.nodes();
    let slices = grid.slices();
    let mut values = vec![f64::INFINITY; m * slices];
    let mut finite = vec![false; m * slices];
    let nodes: Vec<Point> = (0..m).map(|i| grid.node(i)).collect();

    let last = grid.steps;
    let t_last = grid.time(last);
    for (i, x) in nodes.iter().enumerate() {
        if let Some(w) = stop_cost(s, t_last, x) {
            values[last * m + i] = w;
            finite[last * m + i] = true;
        }
    }

    let kinks = s.kinks();
    let invariant = s.dynamics_time_invariant();
    let cached: Option<Vec<(Vec<Point>, bool)>> =
        invariant.then(|| nodes.par_iter().map(|x| node_candidates(s, p.t0, x, p.interior)).collect());
    let mut nonconvex = cached.as_ref().map_or(0, |c| c.iter().filter(|(_, cvx)| !cvx).count());

    for k in (0..last).rev() {
        let t = grid.time(k);
        let (lower_v, upper_v) = values.split_at_mut((k + 1) * m);
        let (lower_f, upper_f) = finite.split_at_mut((k + 1) * m);
        let st = Stored {
            scenario: s,
            grid: &grid,
            values: upper_v,
            finite: upper_f,
            first: k + 1,
            kinks: &kinks,
            cands: cached.as_deref(),
        };
        let slice: Vec<(Option<f64>, bool)> = nodes
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                let owned;
                let (cands, convex) = match &cached {
                    Some(c) => (&c[i].0, c[i].1),
                    None => {
                        owned = node_candidates(s, t, x, p.interior);
                        (&owned.0, owned.1)
                    }
                };
                let mut best = stop_cost(s, t, x);
                for v in cands {
                    best = min_opt(best, candidate_value(&st, k, x, v, p.lookahead));
                }
                (best, convex)
            })
            .collect();
        for (i, (val, convex)) in slice.into_iter().enumerate() {
            if let Some(v) = val {
                lower_v[k * m + i] = v;
                lower_f[k * m + i] = true;
            }
            if cached.is_none() && !convex {
                nonconvex += 1;
            }
        }
    }
    Ok(ValueTable { grid, values, finite, interior_samples: p.interior, nonconvex_nodes: nonconvex })
}

pub fn query_value(vt: &ValueTable, t: f64, x: &[f64]) -> Result<f64> {
    vt.query(t, x)
}
