//! Grid outer approximations of reachable sets of `ẋ ∈ F̄(t, x)`, the
//! attainable part of the target graph, and horizon-relative feasibility.

use std::io::Write;
use std::sync::OnceLock;

use rayon::prelude::*;
use smallvec::SmallVec;

use crate::dynamics::eval_Fbar;
use crate::error::{Error, Result};
use crate::geometry::{self, Point};
use crate::scenario::Scenario;

const MAX_CELLS: usize = 50_000_000;
const MAX_CACHE: usize = 4_000_000;

/// Uniform cell grid over the state box; flat index has the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    pub lo: Point,
    pub delta: f64,
    pub counts: SmallVec<[usize; 2]>,
}

impl CellGrid {
    pub fn new(s: &Scenario, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidArgument(format!("cell size must be positive, got {delta}")));
        }
        let b = &s.state_box;
        let counts: SmallVec<[usize; 2]> =
            b.lo.iter().zip(&b.hi).map(|(a, c)| (((c - a) / delta) - 1e-9).ceil().max(1.0) as usize).collect();
        let total: usize = counts.iter().product();
        if total > MAX_CELLS {
            return Err(Error::Budget(format!("{total} cells exceed the limit of {MAX_CELLS}; increase reach_delta")));
        }
        Ok(CellGrid { lo: b.lo.clone(), delta, counts })
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn multi(&self, flat: usize) -> SmallVec<[usize; 2]> {
        let mut rem = flat;
        let mut out: SmallVec<[usize; 2]> = SmallVec::from_elem(0, self.counts.len());
        for i in (0..self.counts.len()).rev() {
            out[i] = rem % self.counts[i];
            rem /= self.counts[i];
        }
        out
    }

    fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.counts).fold(0, |acc, (i, n)| acc * n + i)
    }

    pub fn center(&self, flat: usize) -> Point {
        self.multi(flat).iter().zip(&self.lo).map(|(i, a)| a + (*i as f64 + 0.5) * self.delta).collect()
    }

    pub fn cell_of(&self, x: &[f64]) -> Option<usize> {
        let mut idx: SmallVec<[usize; 2]> = SmallVec::new();
        for ((v, a), n) in x.iter().zip(&self.lo).zip(&self.counts) {
            let f = ((v - a) / self.delta).floor();
            if !(f >= 0.0) || f as usize > *n {
                return None;
            }
            idx.push((f as usize).min(n - 1));
        }
        Some(self.flat(&idx))
    }

    /// Cells whose centers lie within `pad` of the closed axis interval
    /// `[a, b]` along `axis`, clipped to the grid; the flag reports clipping.
    fn axis_range(&self, axis: usize, a: f64, b: f64, pad: f64) -> (usize, usize, bool) {
        let n = self.counts[axis] as i64;
        let lo = ((a - pad - self.lo[axis]) / self.delta - 0.5).ceil() as i64;
        let hi = ((b + pad - self.lo[axis]) / self.delta - 0.5).floor() as i64;
        let clipped = lo < 0 || hi > n - 1;
        let lo = lo.clamp(0, n - 1);
        let hi = hi.clamp(-1, n - 1);
        if hi < lo {
            return (1, 0, clipped);
        }
        (lo as usize, hi as usize, clipped)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachTable {
    pub t0: f64,
    pub x0: Point,
    pub times: Vec<f64>,
    pub grid: CellGrid,
    /// One bitset over the grid per time node.
    pub occupancy: Vec<Vec<u64>>,
    /// First time at which the propagation had to be clipped by the box.
    pub clipped_at: Option<f64>,
}

impl ReachTable {
    pub fn occupied(&self, node: usize, cell: usize) -> bool {
        self.occupancy[node][cell / 64] >> (cell % 64) & 1 == 1
    }

    pub fn cells_at(&self, node: usize) -> Vec<usize> {
        bits(&self.occupancy[node])
    }

    /// Whether `x` lies in an occupied cell or one of its neighbors.
    pub fn covers(&self, node: usize, x: &[f64]) -> bool {
        let Some(c) = self.grid.cell_of(x) else { return false };
        let idx = self.grid.multi(c);
        let n = idx.len();
        for offset in 0..3usize.pow(n as u32) {
            let mut o = offset;
            let mut nb: SmallVec<[usize; 2]> = SmallVec::new();
            let mut ok = true;
            for (k, i) in idx.iter().enumerate() {
                let d = (o % 3) as i64 - 1;
                o /= 3;
                let j = *i as i64 + d;
                if j < 0 || j >= self.grid.counts[k] as i64 {
                    ok = false;
                    break;
                }
                nb.push(j as usize);
            }
            if ok && self.occupied(node, self.grid.flat(&nb)) {
                return true;
            }
        }
        false
    }

    /// Per-axis range of occupied cell centers at a node.
    pub fn extent(&self, node: usize) -> Option<(Point, Point)> {
        let cells = self.cells_at(node);
        let first = cells.first()?;
        let mut lo = self.grid.center(*first);
        let mut hi = lo.clone();
        for &c in &cells[1..] {
            for (k, v) in self.grid.center(c).iter().enumerate() {
                lo[k] = lo[k].min(*v);
                hi[k] = hi[k].max(*v);
            }
        }
        Some((lo, hi))
    }

    /// Index of the last node at or before `t`.
    pub fn node_at(&self, t: f64) -> usize {
        self.times.partition_point(|s| *s <= t + 1e-12).saturating_sub(1)
    }

    /// CSV with columns `s, cell_index, x_1..x_n` (cell centers).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.grid.counts.len();
        let mut header = vec!["s".to_string(), "cell_index".into()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        w.write_record(&header)?;
        for (k, t) in self.times.iter().enumerate() {
            for c in self.cells_at(k) {
                let mut rec = vec![t.to_string(), c.to_string()];
                rec.extend(self.grid.center(c).iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
            }
        }
        w.flush().map_err(|e| Error::Io { path: "<csv>".into(), source: e })?;
        Ok(())
    }
}

fn bits(set: &[u64]) -> Vec<usize> {
    let mut out = Vec::new();
    for (w, word) in set.iter().enumerate() {
        let mut b = *word;
        while b != 0 {
            let i = b.trailing_zeros() as usize;
            out.push(w * 64 + i);
            b &= b - 1;
        }
    }
    out
}

fn set_bit(set: &mut [u64], i: usize) {
    set[i / 64] |= 1 << (i % 64);
}

/// Extreme velocities of `F̄` at half-lattice points of the grid.
struct VelocityOracle<'a> {
    s: &'a Scenario,
    grid: &'a CellGrid,
    cache: Option<Vec<OnceLock<Vec<Point>>>>,
    lattice: SmallVec<[usize; 2]>,
}

impl<'a> VelocityOracle<'a> {
    fn new(s: &'a Scenario, grid: &'a CellGrid) -> Self {
        let lattice: SmallVec<[usize; 2]> = grid.counts.iter().map(|n| 2 * n + 1).collect();
        let size: usize = lattice.iter().product();
        let cache =
            (s.dynamics_time_invariant() && size <= MAX_CACHE).then(|| (0..size).map(|_| OnceLock::new()).collect());
        VelocityOracle { s, grid, cache, lattice }
    }

    fn lattice_point(&self, j: &[usize]) -> Point {
        j.iter().zip(&self.grid.lo).map(|(k, a)| a + *k as f64 * 0.5 * self.grid.delta).collect()
    }

    fn at_lattice(&self, t: f64, j: &[usize]) -> (Point, Vec<Point>) {
        let p = self.lattice_point(j);
        let Some(cache) = &self.cache else {
            let v = eval_Fbar(self.s, t, &p).set.extreme_points();
            return (p, v);
        };
        let flat = j.iter().zip(&self.lattice).fold(0, |acc, (i, n)| acc * n + i);
        let v = cache[flat].get_or_init(|| eval_Fbar(self.s, t, &p).set.extreme_points()).clone();
        (p, v)
    }
}

/// Image vertices `p + h v` of one cell over its sample points.
fn cell_image(oracle: &VelocityOracle, kinks: &[f64], t: f64, h: f64, cell: usize) -> Vec<Point> {
    let grid = oracle.grid;
    let idx = grid.multi(cell);
    let n = idx.len();
    let mut out = Vec::new();
    for offset in 0..3usize.pow(n as u32) {
        let mut o = offset;
        let j: SmallVec<[usize; 2]> = idx
            .iter()
            .map(|i| {
                let d = o % 3;
                o /= 3;
                2 * i + d
            })
            .collect();
        let (p, vs) = oracle.at_lattice(t, &j);
        out.extend(vs.iter().map(|v| geometry::axpy(&p, h, v)));
    }
    // Kink lines crossing the cell, sampled on the other axis' lattice values.
    for axis in 0..n {
        let a = grid.lo[axis] + idx[axis] as f64 * grid.delta;
        let b = a + grid.delta;
        for &k in kinks.iter().filter(|&&k| k > a && k < b) {
            let others: Vec<Point> = if n == 1 {
                vec![geometry::point(&[k])]
            } else {
                let other = 1 - axis;
                let base = grid.lo[other] + idx[other] as f64 * grid.delta;
                let mut pts: Vec<f64> = (0..3).map(|d| base + d as f64 * 0.5 * grid.delta).collect();
                pts.extend(kinks.iter().copied().filter(|&q| q > base && q < base + grid.delta));
                pts.iter()
                    .map(|&q| if axis == 0 { geometry::point(&[k, q]) } else { geometry::point(&[q, k]) })
                    .collect()
            };
            for p in others {
                let vs = eval_Fbar(oracle.s, t, &p).set.extreme_points();
                out.extend(vs.iter().map(|v| geometry::axpy(&p, h, v)));
            }
        }
    }
    out
}

/// Cells marked by the image of `cell`: centers within `δ/2` of the hull of
/// the image vertices.
fn mark_image(grid: &CellGrid, verts: &[Point]) -> (Vec<(usize, usize)>, bool) {
    let pad = 0.5 * grid.delta * (1.0 + 1e-9);
    if grid.counts.len() == 1 {
        let lo = verts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi = verts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        let (a, b, clipped) = grid.axis_range(0, lo, hi, pad);
        return (if a <= b { vec![(a, b)] } else { vec![] }, clipped);
    }
    let hull = geometry::convex_hull_2d(verts, 1e-15);
    let mut out = Vec::new();
    let lo: Point = (0..2).map(|k| verts.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Point = (0..2).map(|k| verts.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let (a0, b0, c0) = grid.axis_range(0, lo[0], hi[0], pad);
    let (a1, b1, c1) = grid.axis_range(1, lo[1], hi[1], pad);
    let clipped = c0 || c1;
    if a0 > b0 || a1 > b1 {
        return (out, clipped);
    }
    for i in a0..=b0 {
        for j in a1..=b1 {
            let c = grid.flat(&[i, j]);
            if geometry::dist_to_polygon(&hull, &grid.center(c)) <= pad {
                out.push((c, c));
            }
        }
    }
    (out, clipped)
}

/// Forward propagation from the cell of `x0`. Each step maps every occupied
/// cell through `x + h v` at its corners, edge midpoints, center and kink
/// crossings, for extreme `v` of `F̄`, and marks cells whose centers lie
/// within half a cell of the image hull.
pub fn reach(s: &Scenario, t0: f64, x0: &[f64], s_end: f64, h: f64, delta: f64) -> Result<ReachTable> {
    reach_inner(s, t0, x0, s_end, h, delta, false)
}

fn reach_inner(
    s: &Scenario,
    t0: f64,
    x0: &[f64],
    s_end: f64,
    h: f64,
    delta: f64,
    stop_on_hit: bool,
) -> Result<ReachTable> {
    if !(h > 0.0) || !(s_end >= t0) {
        return Err(Error::InvalidArgument(format!("need h > 0 and s_end >= t0, got h = {h}, [{t0}, {s_end}]")));
    }
    let grid = CellGrid::new(s, delta)?;
    let start = grid
        .cell_of(x0)
        .filter(|_| s.state_box.contains(x0))
        .ok_or_else(|| Error::OutOfGrid { t: t0, x: x0.to_vec() })?;
    let words = grid.len().div_ceil(64);
    let mut first = vec![0u64; words];
    set_bit(&mut first, start);
    let mut table = ReachTable {
        t0,
        x0: geometry::point(x0),
        times: vec![t0],
        grid: grid.clone(),
        occupancy: vec![first],
        clipped_at: None,
    };
    if stop_on_hit && s.target.contains(t0, x0) {
        return Ok(table);
    }
    let oracle = VelocityOracle::new(s, &grid);
    let kinks = s.kinks();
    let slack = 1e-12 * (1.0 + s_end.abs());
    let mut k = 0usize;
    let mut t = t0;
    while t < s_end - slack {
        let next_t = (t0 + (k + 1) as f64 * h).min(s_end);
        let next_t = if s_end - next_t <= slack { s_end } else { next_t };
        let hk = next_t - t;
        let cells = table.cells_at(k);
        let images: Vec<(Vec<(usize, usize)>, bool)> =
            cells.par_iter().map(|&c| mark_image(&grid, &cell_image(&oracle, &kinks, t, hk, c))).collect();
        let mut next = vec![0u64; words];
        let mut clipped = false;
        if grid.counts.len() == 1 {
            let mut diff = vec![0i32; grid.len() + 1];
            for (ranges, c) in &images {
                clipped |= c;
                for &(a, b) in ranges {
                    diff[a] += 1;
                    diff[b + 1] -= 1;
                }
            }
            let mut acc = 0;
            for (i, d) in diff[..grid.len()].iter().enumerate() {
                acc += d;
                if acc > 0 {
                    set_bit(&mut next, i);
                }
            }
        } else {
            for (ranges, c) in &images {
                clipped |= c;
                for &(a, _) in ranges {
                    set_bit(&mut next, a);
                }
            }
        }
        if clipped && table.clipped_at.is_none() {
            table.clipped_at = Some(next_t);
        }
        table.occupancy.push(next);
        table.times.push(next_t);
        t = next_t;
        k += 1;
        if stop_on_hit && !attainable_at(s, &table, k).is_empty() {
            break;
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttainableSet {
    /// `(s, y)` with `y` a cell center (or the exact origin) in `𝒯(s)`.
    pub points: Vec<(f64, Point)>,
}

impl AttainableSet {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.points.first().map_or(1, |p| p.1.len());
        let mut header = vec!["s".to_string()];
        header.extend((1..=n).map(|i| format!("y_{i}")));
        w.write_record(&header)?;
        for (t, y) in &self.points {
            let mut rec = vec![t.to_string()];
            rec.extend(y.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::Io { path: "<csv>".into(), source: e })?;
        Ok(())
    }
}

fn attainable_at(s: &Scenario, rt: &ReachTable, node: usize) -> Vec<(f64, Point)> {
    let t = rt.times[node];
    let mut out = Vec::new();
    if node == 0 && s.target.contains(t, &rt.x0) {
        out.push((t, rt.x0.clone()));
    }
    for c in rt.cells_at(node) {
        let y = rt.grid.center(c);
        if s.target.contains(t, &y) && !(node == 0 && y == rt.x0) {
            out.push((t, y));
        }
    }
    out
}

pub fn attainable(s: &Scenario, rt: &ReachTable) -> AttainableSet {
    AttainableSet { points: (0..rt.times.len()).flat_map(|k| attainable_at(s, rt, k)).collect() }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DomainStatus {
    /// Some target point is attainable; the earliest one found.
    Feasible { time: f64, point: Point },
    /// Nothing attainable up to the given end time at this resolution.
    InfeasibleUpToHorizon { horizon: f64 },
}

impl DomainStatus {
    pub fn is_feasible(&self) -> bool {
        matches!(self, DomainStatus::Feasible { .. })
    }
}

/// Horizon-relative feasibility of `(t0, x0)`, with `horizon` an absolute end
/// time, using the scenario's reachability resolution.
pub fn in_domain(s: &Scenario, t0: f64, x0: &[f64], horizon: f64) -> Result<DomainStatus> {
    if horizon > s.numerics.horizon + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} exceeds the scenario horizon {}",
            s.numerics.horizon
        )));
    }
    let end = horizon.max(t0);
    let rt = reach_inner(s, t0, x0, end, s.numerics.reach_h, s.numerics.reach_delta, true)?;
    let found = (0..rt.times.len()).find_map(|k| attainable_at(s, &rt, k).into_iter().next());
    Ok(match found {
        Some((time, point)) => DomainStatus::Feasible { time, point },
        None => DomainStatus::InfeasibleUpToHorizon { horizon: end },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Scenario {
        Scenario::load(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/toy.scn")).unwrap()
    }

    #[test]
    fn zero_horizon_is_origin_cell() {
        let s = toy();
        let rt = reach(&s, 0.0, &[-1.0], 0.0, 0.01, 1e-3).unwrap();
        assert_eq!(rt.times.len(), 1);
        assert_eq!(rt.cells_at(0), vec![rt.grid.cell_of(&[-1.0]).unwrap()]);
    }

    #[test]
    fn toy_envelopes() {
        let s = toy();
        let (h, d) = (0.01, 1e-4);
        let rt = reach(&s, 0.0, &[-1.0], 0.5, h, d).unwrap();
        let (lo, hi) = rt.extent(rt.times.len() - 1).unwrap();
        assert!((lo[0] + 2.0).abs() <= d + 2.0 * h, "{lo:?}");
        assert!(hi[0].abs() <= d + 2.0 * h, "{hi:?}");
        assert!(rt.clipped_at.is_some());
        let rt = reach(&s, 0.0, &[2.0], 1.0, h, d).unwrap();
        let (_, hi) = rt.extent(rt.times.len() - 1).unwrap();
        assert!((hi[0] - 2.5).abs() <= d + 2.0 * h, "{hi:?}");
    }

    #[test]
    fn toy_attainable_and_domain() {
        let s = toy();
        let rt = reach(&s, 0.0, &[-1.0], 0.1, 0.01, 1e-3).unwrap();
        assert!(attainable(&s, &rt).is_empty());
        let rt = reach(&s, 0.0, &[2.0], 1.0, 0.01, 1e-3).unwrap();
        let a = attainable(&s, &rt);
        assert!(!a.is_empty() && a.points.iter().all(|(t, y)| s.target.contains(*t, y)));
        assert!(in_domain(&s, 0.0, &[2.0], 0.0).unwrap().is_feasible());
        match in_domain(&s, 0.0, &[-1.0], 5.0).unwrap() {
            DomainStatus::Feasible { time, .. } => assert!(time <= 2.1 + 0.05, "{time}"),
            other => panic!("{other:?}"),
        }
    }
}
