//! Set-valued friction field `F(t, x, u) = g(t, x, u) - I(t, x, u)`, its
//! union `F̄(t, x)` over the control list, and the Hamiltonians of the
//! augmented system. Potentials act separably on each state coordinate, so
//! in two dimensions every subdifferential and friction integral is a box.

use std::io::Write;

use rand::Rng;

use crate::error::Result;
use crate::geometry::{self, Point};
use crate::sampling;
use crate::scenario::{Scenario, StructuralConstants};
use crate::sets::{ConvexSet1D, ConvexSetND, FbarSet, Provenance, VelocitySet};

/// Per-coordinate intervals `[lo_i, hi_i]`, realized as a `VelocitySet`.
fn box_set(iv: &[ConvexSet1D], provenance: Provenance) -> VelocitySet {
    if iv.len() == 1 {
        return VelocitySet::Interval(iv[0]);
    }
    let corners: Vec<Point> = [(false, false), (true, false), (true, true), (false, true)]
        .iter()
        .map(|&(a, b)| geometry::point(&[if a { iv[0].hi } else { iv[0].lo }, if b { iv[1].hi } else { iv[1].lo }]))
        .collect();
    VelocitySet::Polytope(ConvexSetND::from_points(&corners, provenance))
}

/// Subdifferential of `φ(·, α)` for atom `atom` at `x`, per coordinate.
pub fn subdifferential_intervals(s: &Scenario, x: &[f64], atom: usize) -> Vec<ConvexSet1D> {
    let p = s.atom_potential(atom);
    x.iter().map(|&z| p.subdifferential(z)).collect()
}

/// Exact convex subdifferential of the atom's potential at `x`.
pub fn subdifferential(s: &Scenario, x: &[f64], atom: usize) -> VelocitySet {
    box_set(&subdifferential_intervals(s, x, atom), Provenance::Exact)
}

/// `I(t, x, u) = Σ wᵢ k(t, x, u, αᵢ) ∂φ(x, αᵢ)` per coordinate.
pub fn friction_intervals(s: &Scenario, t: f64, x: &[f64], u: &[f64]) -> Vec<ConvexSet1D> {
    let mut out = vec![ConvexSet1D::point(0.0); x.len()];
    for (ai, atom) in s.measure.atoms.iter().enumerate() {
        let c = atom.weight * s.k(t, x, u, &atom.alpha);
        if c == 0.0 {
            continue;
        }
        for (o, d) in out.iter_mut().zip(subdifferential_intervals(s, x, ai)) {
            let (a, b) = (c * d.lo, c * d.hi);
            o.lo += a.min(b);
            o.hi += a.max(b);
        }
    }
    out
}

pub fn friction_integral(s: &Scenario, t: f64, x: &[f64], u: &[f64]) -> VelocitySet {
    box_set(&friction_intervals(s, t, x, u), Provenance::Exact)
}

/// Per-coordinate intervals of `F(t, x, u)`.
pub fn f_intervals(s: &Scenario, t: f64, x: &[f64], u: &[f64]) -> Vec<ConvexSet1D> {
    let g = s.g(t, x, u);
    friction_intervals(s, t, x, u).iter().zip(&g).map(|(i, gi)| ConvexSet1D::new(gi - i.hi, gi - i.lo)).collect()
}

#[allow(non_snake_case)]
pub fn eval_F(s: &Scenario, t: f64, x: &[f64], u: &[f64]) -> VelocitySet {
    box_set(&f_intervals(s, t, x, u), Provenance::Exact)
}

/// Largest endpoint jump between grid-adjacent controls; gaps in the union
/// up to this size are discretization artifacts.
fn neighbor_scale(s: &Scenario, sets: &[Vec<ConvexSet1D>]) -> f64 {
    let mut scale: f64 = 0.0;
    for &(a, b) in &s.controls.neighbors {
        for (p, q) in sets[a].iter().zip(&sets[b]) {
            scale = scale.max((p.lo - q.lo).abs()).max((p.hi - q.hi).abs());
        }
    }
    scale
}

#[allow(non_snake_case)]
pub fn eval_Fbar(s: &Scenario, t: f64, x: &[f64]) -> FbarSet {
    let sets: Vec<Vec<ConvexSet1D>> = s.controls.values.iter().map(|u| f_intervals(s, t, x, u)).collect();
    let tol = 1e-12 + neighbor_scale(s, &sets);
    if x.len() == 1 {
        let mut iv: Vec<ConvexSet1D> = sets.iter().map(|v| v[0]).collect();
        iv.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        let mut reach = iv[0].hi;
        let mut convex = true;
        for i in &iv[1..] {
            if i.lo > reach + tol {
                convex = false;
            }
            reach = reach.max(i.hi);
        }
        let lo = iv[0].lo;
        return FbarSet { set: VelocitySet::Interval(ConvexSet1D::new(lo, reach)), convex };
    }
    let boxes: Vec<VelocitySet> = sets.iter().map(|b| box_set(b, Provenance::Exact)).collect();
    let mut corners: Vec<Point> = boxes.iter().flat_map(|b| b.extreme_points()).collect();
    corners.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    corners.dedup();
    let provenance = if boxes.len() == 1 { Provenance::Exact } else { Provenance::SampledHull };
    let hull = ConvexSetND::from_points(&corners, provenance);
    let set = VelocitySet::Polytope(hull);
    let convex = union_covers_hull(&set, &boxes, tol);
    FbarSet { set, convex }
}

/// Probes the hull at edge midpoints and the vertex centroid.
fn union_covers_hull(hull: &VelocitySet, parts: &[VelocitySet], tol: f64) -> bool {
    let ext = hull.extreme_points();
    if ext.len() < 2 {
        return true;
    }
    let mut probes: Vec<Point> = (0..ext.len())
        .map(|i| {
            let (a, b) = (&ext[i], &ext[(i + 1) % ext.len()]);
            a.iter().zip(b).map(|(p, q)| 0.5 * (p + q)).collect()
        })
        .collect();
    let n = ext.len() as f64;
    probes.push((0..2).map(|k| ext.iter().map(|p| p[k]).sum::<f64>() / n).collect());
    probes.iter().all(|p| parts.iter().any(|b| b.contains(p, tol)))
}

/// Index of the first control whose `F(t, x, u)` is nearest to `v`, with the
/// distance.
pub fn witness_control(s: &Scenario, t: f64, x: &[f64], v: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, u) in s.controls.values.iter().enumerate() {
        let d = eval_F(s, t, x, u).dist(v);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianPair {
    pub h_min: f64,
    pub h_max: f64,
    pub argmin_velocity: Point,
    pub argmax_velocity: Point,
}

/// Lower and upper Hamiltonians of the augmented field `{1} × F̄ × {0}` at
/// covector `eta = (η_t, η_x, η_a)`.
pub fn hamiltonians(s: &Scenario, t: f64, x: &[f64], eta: &[f64]) -> HamiltonianPair {
    hamiltonians_on(&eval_Fbar(s, t, x).set, eta)
}

/// Same as [`hamiltonians`] on a precomputed `F̄` value.
pub fn hamiltonians_on(fbar: &VelocitySet, eta: &[f64]) -> HamiltonianPair {
    let n = fbar.dim();
    assert_eq!(eta.len(), n + 2, "covector must have length n + 2");
    let dir = &eta[1..=n];
    let (lo, argmin_velocity) = fbar.support_min(dir);
    let (hi, argmax_velocity) = fbar.support_max(dir);
    HamiltonianPair { h_min: eta[0] + lo, h_max: eta[0] + hi, argmin_velocity, argmax_velocity }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OslRow {
    pub t1: f64,
    pub x1: Point,
    pub t2: f64,
    pub x2: Point,
    pub lhs: f64,
    pub bound: f64,
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OslReport {
    pub max_violation: f64,
    pub rows: Vec<OslRow>,
}

impl OslReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let dim = self.rows.first().map_or(1, |r| r.x1.len());
        let mut header = vec!["t1".to_string()];
        header.extend((1..=dim).map(|i| format!("x1_{i}")));
        header.push("t2".into());
        header.extend((1..=dim).map(|i| format!("x2_{i}")));
        header.extend(["lhs", "bound", "violation"].map(String::from));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.t1];
            rec.extend_from_slice(&r.x1);
            rec.push(r.t2);
            rec.extend_from_slice(&r.x2);
            rec.extend([r.lhs, r.bound, r.violation]);
            w.write_record(rec.iter().map(|v| v.to_string()))?;
        }
        w.flush().map_err(|e| crate::Error::Io { path: "<csv>".into(), source: e })?;
        Ok(())
    }
}

/// Samples `pairs` random pairs `yᵢ = (tᵢ, xᵢ)` and evaluates
/// `max_{F̄(y₁)} <v, x₁-x₂> - max_{F̄(y₂)} <w, x₁-x₂> - L_F̄ |y₁-y₂|²`.
/// The first pair is the degenerate `y₁ = y₂`.
pub fn osl_check(s: &Scenario, consts: &StructuralConstants, pairs: usize) -> OslReport {
    let mut rng = sampling::stream_rng(s.numerics.seed, sampling::STREAM_OSL);
    let (t_lo, t_hi) = s.numerics.time_window;
    let mut rows = Vec::with_capacity(pairs);
    for i in 0..pairs {
        let t1 = rng.random_range(t_lo..=t_hi);
        let x1 = sampling::uniform_in_box(&mut rng, &s.state_box);
        let (t2, x2) = if i == 0 {
            (t1, x1.clone())
        } else {
            (rng.random_range(t_lo..=t_hi), sampling::uniform_in_box(&mut rng, &s.state_box))
        };
        rows.push(osl_pair(s, consts, t1, &x1, t2, &x2));
    }
    let max_violation = rows.iter().map(|r| r.violation).fold(f64::NEG_INFINITY, f64::max);
    OslReport { max_violation, rows }
}

pub fn osl_pair(s: &Scenario, consts: &StructuralConstants, t1: f64, x1: &[f64], t2: f64, x2: &[f64]) -> OslRow {
    let d: Point = x1.iter().zip(x2).map(|(a, b)| a - b).collect();
    let m1 = eval_Fbar(s, t1, x1).set.support_max(&d).0;
    let m2 = eval_Fbar(s, t2, x2).set.support_max(&d).0;
    let lhs = m1 - m2;
    let y = geometry::time_state_dist(t1, x1, t2, x2);
    let bound = consts.l_fbar * y * y;
    OslRow { t1, x1: geometry::point(x1), t2, x2: geometry::point(x2), lhs, bound, violation: lhs - bound }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Scenario {
        Scenario::load(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/toy.scn")).unwrap()
    }

    fn iv(v: &VelocitySet) -> (f64, f64) {
        let i = v.as_interval().unwrap();
        (i.lo, i.hi)
    }

    #[test]
    fn toy_subdifferential_and_friction() {
        let s = toy();
        assert_eq!(iv(&subdifferential(&s, &[1.0], 0)), (1.0, 1.0));
        assert_eq!(iv(&subdifferential(&s, &[0.0], 0)), (0.0, 1.0));
        assert_eq!(iv(&friction_integral(&s, 0.0, &[0.0], &[2.0])), (0.0, 2.0));
        assert_eq!(iv(&friction_integral(&s, 0.0, &[-1.0], &[2.0])), (0.0, 0.0));
        assert_eq!(iv(&eval_F(&s, 0.0, &[1.0], &[1.0])), (0.5, 0.5));
        assert_eq!(iv(&eval_F(&s, 0.0, &[0.0], &[2.0])), (0.0, 2.0));
        assert_eq!(iv(&eval_F(&s, 0.0, &[-1.0], &[2.0])), (2.0, 2.0));
    }

    #[test]
    fn toy_fbar_regions() {
        let s = toy();
        for (v, want) in [(0.5, (-4.0, 0.5)), (0.0, (-4.0, 2.0)), (-0.3, (-2.0, 2.0))] {
            let f = eval_Fbar(&s, 0.0, &[v]);
            assert_eq!(iv(&f.set), want, "v = {v}");
            assert!(f.convex);
        }
    }

    #[test]
    fn toy_hamiltonians() {
        let s = toy();
        let h = hamiltonians(&s, 0.0, &[0.5], &[1.0, -2.0, 0.0]);
        assert!(h.h_min.abs() < 1e-15);
        assert_eq!(h.argmin_velocity[0], 0.5);
        let h = hamiltonians(&s, 0.0, &[-1.0], &[1.0, -0.5, 0.0]);
        assert!(h.h_min.abs() < 1e-15);
        assert_eq!(h.argmin_velocity[0], 2.0);
        let h = hamiltonians(&s, 0.3, &[0.2], &[0.0, 0.0, 0.0]);
        assert_eq!((h.h_min, h.h_max), (0.0, 0.0));
    }

    #[test]
    fn toy_osl_is_dissipative() {
        let s = toy();
        let c = crate::estimate_constants(&s, 200).unwrap();
        assert_eq!(c.l_fbar, 0.0);
        let r = osl_check(&s, &c, 500);
        assert!(r.max_violation <= 0.0, "{}", r.max_violation);
        assert_eq!(r.rows[0].violation, 0.0);
        let row = osl_pair(&s, &c, 0.0, &[1.0], 0.0, &[-1.0]);
        assert_eq!(row.lhs, 2.0 * 0.5 - 2.0 * 2.0);
    }

    #[test]
    fn two_atom_weighted_sum() {
        let src = r#"
dim = 1
[dynamics]
drift = ["0"]
coupling = 1.0
control_values = [[0.0]]
[friction]
potential = "relu"
atoms = [{ alpha = [0.1], weight = 1.0 }, { alpha = [0.2], weight = 2.0 }]
[target]
kind = "intervals"
intervals = [[0.5, 1.0]]
[cost]
expr = "t"
[numerics]
horizon = 1.0
state_box = { lo = -1.0, hi = 1.0 }
samples = 10
"#;
        let s = Scenario::from_toml_str(src).unwrap();
        assert_eq!(iv(&friction_integral(&s, 0.0, &[0.3], &[0.0])), (3.0, 3.0));
    }

    #[test]
    fn planar_sets_are_boxes() {
        let s = Scenario::load(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/planar.scn")).unwrap();
        let sub = subdifferential(&s, &[0.0, 1.0], 0);
        assert_eq!(sub.extreme_points().len(), 2);
        let f = eval_Fbar(&s, 0.0, &[0.3, -0.2]);
        for u in &s.controls.values {
            assert!(f.set.includes(&eval_F(&s, 0.0, &[0.3, -0.2], u), 1e-12));
        }
        let h = hamiltonians(&s, 0.0, &[0.3, -0.2], &[1.0, 1.0, 0.0, 0.0]);
        assert!(h.h_min <= h.h_max);
        assert!(f.set.contains(&h.argmin_velocity, 1e-12));
    }
}
