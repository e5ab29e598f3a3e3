//! Optimal feedback read off a solved value table, with one-sided limits of
//! the argmin at nodes on the kink locus of the potentials.

use std::io::Write;

use rayon::prelude::*;

use super::grid::{ValueGrid, ValueTable};
use super::solve::{candidate_value, node_candidates, Stored};
use crate::dynamics::{eval_Fbar, witness_control};
use crate::error::{Error, Result};
use crate::geometry::{self, Point};
use crate::scenario::Scenario;
use crate::sets::VelocitySet;

const TIE: f64 = 1e-12;
const LIMIT_NEIGHBORS: usize = 3;
const MAX_STORED_SLICES: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackEntry {
    /// Index into the scenario's control list.
    pub u_index: usize,
    pub u: Point,
    /// Chosen velocity: the minimizing candidate, or the hold velocity when
    /// stopping is optimal.
    pub w: Point,
    /// Stopping on the target is at least as good as moving on.
    pub stop: bool,
    /// The node has a finite value.
    pub feasible: bool,
}

/// One-sided limit of the argmin along `side · e_axis` at a kink node.
#[derive(Debug, Clone, PartialEq)]
pub struct KinkLimit {
    pub slice: usize,
    pub node: usize,
    pub axis: usize,
    pub side: i8,
    pub w: Point,
    pub u: Point,
    /// All sampled neighbors agreed on the limit velocity.
    pub stabilized: bool,
    /// The limit velocity points into its own side, so trajectories leaving
    /// the kink that way keep using it.
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackLaw {
    pub grid: ValueGrid,
    /// Time slices that were tabulated.
    pub slices: Vec<usize>,
    /// `slices.len() × nodes` entries, slice-major.
    pub entries: Vec<FeedbackEntry>,
    pub limits: Vec<KinkLimit>,
}

impl FeedbackLaw {
    pub fn entry(&self, slot: usize, node: usize) -> &FeedbackEntry {
        &self.entries[slot * self.grid.nodes() + node]
    }

    /// Stored slice nearest to `t`.
    pub fn slot_at(&self, t: f64) -> usize {
        let k = self.grid.nearest_slice(t);
        match self.slices.binary_search(&k) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) if i == self.slices.len() => i - 1,
            Err(i) => {
                if k - self.slices[i - 1] <= self.slices[i] - k {
                    i - 1
                } else {
                    i
                }
            }
        }
    }

    /// Selected kink limit at a stored node, if any.
    pub fn selected_limit(&self, slot: usize, node: usize) -> Option<&KinkLimit> {
        let k = self.slices[slot];
        self.limits.iter().find(|l| l.slice == k && l.node == node && l.selected)
    }

    /// Nearest-node feedback; kink nodes use their selected one-sided limit.
    pub fn control_at(&self, t: f64, x: &[f64]) -> Point {
        let slot = self.slot_at(t);
        let node = self.grid.nearest_node(x);
        match self.selected_limit(slot, node) {
            Some(l) => l.u.clone(),
            None => self.entry(slot, node).u.clone(),
        }
    }

    /// Whether the nearest stored node says to stop.
    pub fn stop_at(&self, t: f64, x: &[f64]) -> bool {
        self.entry(self.slot_at(t), self.grid.nearest_node(x)).stop
    }

    /// CSV with columns `t, x_1..x_n, u_star.., w_star.., stop, limit_flag`;
    /// kink nodes with a selected limit report the limit's control and velocity.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.grid.dim();
        let m = self.entries.first().map_or(1, |e| e.u.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend(if m == 1 {
            vec!["u_star".to_string()]
        } else {
            (1..=m).map(|i| format!("u_star_{i}")).collect()
        });
        header.extend(if n == 1 {
            vec!["w_star".to_string()]
        } else {
            (1..=n).map(|i| format!("w_star_{i}")).collect()
        });
        header.extend(["stop".to_string(), "limit_flag".into()]);
        w.write_record(&header)?;
        for (slot, &k) in self.slices.iter().enumerate() {
            let t = self.grid.time(k);
            for node in 0..self.grid.nodes() {
                let e = self.entry(slot, node);
                if !e.feasible {
                    continue;
                }
                let lim = self.selected_limit(slot, node);
                let (u, v) = lim.map_or((&e.u, &e.w), |l| (&l.u, &l.w));
                let mut rec = vec![t.to_string()];
                rec.extend(self.grid.node(node).iter().map(|v| v.to_string()));
                rec.extend(u.iter().map(|v| v.to_string()));
                rec.extend(v.iter().map(|v| v.to_string()));
                rec.push(u8::from(e.stop).to_string());
                rec.push(u8::from(lim.is_some()).to_string());
                w.write_record(&rec)?;
            }
        }
        w.flush().map_err(|e| Error::Io { path: "<csv>".into(), source: e })?;
        Ok(())
    }
}

fn hold_velocity(f: &VelocitySet) -> Point {
    match f {
        VelocitySet::Interval(i) => geometry::point(&[0.0f64.clamp(i.lo, i.hi)]),
        VelocitySet::Polytope(_) if f.contains(&[0.0, 0.0], 0.0) => geometry::point(&[0.0, 0.0]),
        VelocitySet::Polytope(_) => f
            .extreme_points()
            .into_iter()
            .min_by(|a, b| geometry::norm(a).total_cmp(&geometry::norm(b)))
            .expect("nonempty set"),
    }
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (p, q) in a.iter().zip(b) {
        if p != q {
            return p < q;
        }
    }
    false
}

fn node_entry(
    s: &Scenario,
    vt: &ValueTable,
    cache: Option<&[(Vec<Point>, bool)]>,
    kinks: &[f64],
    k: usize,
    node: usize,
) -> FeedbackEntry {
    let g = &vt.grid;
    let t = g.time(k);
    let x = g.node(node);
    let st = Stored { scenario: s, grid: g, values: &vt.values, finite: &vt.finite, first: 0, kinks, cands: cache };
    let owned;
    let cands = match cache {
        Some(c) => &c[node].0,
        None => {
            owned = node_candidates(s, t, &x, vt.interior_samples);
            &owned.0
        }
    };
    let obstacle = s.target.contains(t, &x).then(|| s.w(t, &x)).filter(|w| w.is_finite());
    let mut best: Option<(f64, Point, usize)> = None;
    if k < g.steps {
        for v in cands {
            let Some(val) = candidate_value(&st, k, &x, v, 64) else { continue };
            match &best {
                Some((b, bv, bu)) if val > b + TIE * (1.0 + b.abs()) => {
                    let _ = (bv, bu);
                }
                Some((b, _, bu)) if val >= b - TIE * (1.0 + b.abs()) => {
                    let (ui, _) = witness_control(s, t, &x, v);
                    if lex_less(&s.controls.values[ui], &s.controls.values[*bu]) {
                        best = Some((val.min(*b), v.clone(), ui));
                    }
                }
                _ => {
                    let (ui, _) = witness_control(s, t, &x, v);
                    best = Some((val, v.clone(), ui));
                }
            }
        }
    }
    let stop = match (obstacle, &best) {
        (Some(w), Some((b, _, _))) => w <= b + TIE * (1.0 + b.abs()),
        (Some(_), None) => true,
        _ => false,
    };
    if stop {
        let hold = hold_velocity(&eval_Fbar(s, t, &x).set);
        let (ui, _) = witness_control(s, t, &x, &hold);
        return FeedbackEntry { u_index: ui, u: s.controls.values[ui].clone(), w: hold, stop, feasible: true };
    }
    match best {
        Some((_, v, ui)) => FeedbackEntry { u_index: ui, u: s.controls.values[ui].clone(), w: v, stop, feasible: true },
        None => FeedbackEntry {
            u_index: 0,
            u: s.controls.values[0].clone(),
            w: cands.first().cloned().unwrap_or_default(),
            stop,
            feasible: false,
        },
    }
}

/// Feedback at every node of every `stride`-th slice.
pub fn extract_feedback_with(s: &Scenario, vt: &ValueTable, stride: usize) -> FeedbackLaw {
    let g = &vt.grid;
    let stride = stride.max(1);
    let slices: Vec<usize> = (0..g.slices()).step_by(stride).collect();
    let m = g.nodes();
    let cached: Option<Vec<(Vec<Point>, bool)>> = s
        .dynamics_time_invariant()
        .then(|| (0..m).into_par_iter().map(|i| node_candidates(s, g.t0, &g.node(i), vt.interior_samples)).collect());
    let kinks = s.kinks();
    let kink_axes = |node: usize| -> Vec<usize> {
        let x = g.node(node);
        (0..g.dim()).filter(|&a| kinks.iter().any(|kk| (x[a] - kk).abs() <= 1e-9 * g.spacing(a))).collect()
    };
    let kink_nodes: Vec<(usize, Vec<usize>)> =
        (0..m).map(|i| (i, kink_axes(i))).filter(|(_, a)| !a.is_empty()).collect();

    let mut entries = Vec::with_capacity(slices.len() * m);
    let mut limits = Vec::new();
    for &k in &slices {
        let slice: Vec<FeedbackEntry> =
            (0..m).into_par_iter().map(|i| node_entry(s, vt, cached.as_deref(), &kinks, k, i)).collect();
        for (node, axes) in &kink_nodes {
            if !slice[*node].feasible || slice[*node].stop {
                continue;
            }
            let idx = g.node_multi(*node);
            for &axis in axes {
                for side in [-1i8, 1] {
                    let mut ws: Vec<&FeedbackEntry> = Vec::new();
                    for off in 1..=LIMIT_NEIGHBORS {
                        let j = idx[axis] as i64 + side as i64 * off as i64;
                        if j < 0 || j > g.intervals[axis] as i64 {
                            break;
                        }
                        let mut nb = idx.clone();
                        nb[axis] = j as usize;
                        let e = &slice[g.node_index(&nb)];
                        if !e.feasible {
                            break;
                        }
                        ws.push(e);
                    }
                    let Some(first) = ws.first() else { continue };
                    let stabilized =
                        ws.len() == LIMIT_NEIGHBORS && ws.iter().all(|e| geometry::dist(&e.w, &first.w) <= 1e-9);
                    let selected = stabilized && !first.stop && f64::from(side) * first.w[axis] > 0.0;
                    limits.push(KinkLimit {
                        slice: k,
                        node: *node,
                        axis,
                        side,
                        w: first.w.clone(),
                        u: first.u.clone(),
                        stabilized,
                        selected,
                    });
                }
            }
        }
        entries.extend(slice);
    }
    FeedbackLaw { grid: g.clone(), slices, entries, limits }
}

/// [`extract_feedback_with`] with a stride keeping at most 256 slices.
pub fn extract_feedback(s: &Scenario, vt: &ValueTable) -> FeedbackLaw {
    extract_feedback_with(s, vt, vt.grid.slices().div_ceil(MAX_STORED_SLICES))
}
