//! Problem data: drift, coupling, potential, friction measure, controls,
//! target tube, cost and numerical parameters.

mod constants;
mod file;
pub mod measure;
pub mod potential;
pub mod target;
mod validate;

use std::collections::BTreeMap;
use std::path::Path;

pub use constants::{estimate_constants, StructuralConstants};
pub use measure::{Atom, FrictionMeasure};
pub use potential::{Potential, PotentialSpec};
pub use target::{BoundaryPoint, GraphProjection, OutsideRange, TargetTube, TubeShape};

use crate::error::{Error, Result};
use crate::expr::{Args, Expr};
use crate::geometry::Point;

/// Axis-aligned bounding box for grids and sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct StateBox {
    pub lo: Point,
    pub hi: Point,
}

impl StateBox {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    /// Largest |x_i| over the box, per coordinate maximum.
    pub fn abs_bound(&self) -> f64 {
        self.lo.iter().chain(&self.hi).fold(0.0, |m, v| f64::max(m, v.abs()))
    }

    /// Nearest box point to the origin.
    pub fn closest_to_origin(&self) -> Point {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.0f64.clamp(*a, *b)).collect()
    }

    pub fn check(&self) -> Result<()> {
        let ok = self.lo.len() == self.hi.len()
            && self.lo.iter().zip(&self.hi).all(|(a, b)| a.is_finite() && b.is_finite() && a < b);
        if ok {
            Ok(())
        } else {
            Err(Error::DegenerateBox(format!("lo = {:?}, hi = {:?}", self.lo.as_slice(), self.hi.as_slice())))
        }
    }
}

/// Finite control list standing for a compact control set.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSet {
    pub values: Vec<Point>,
    /// Declared continuum bounds.
    pub lo: Point,
    pub hi: Point,
    /// Pairs of grid-adjacent controls when the list discretizes a box.
    pub neighbors: Vec<(usize, usize)>,
}

impl ControlSet {
    /// Tensor grid with `steps[i]` points along axis `i`, endpoints included.
    pub fn grid(lo: &[f64], hi: &[f64], steps: &[usize]) -> Result<Self> {
        let m = lo.len();
        if m == 0 || m > 4 || hi.len() != m || steps.len() != m {
            return Err(Error::InvalidArgument("control grid needs matching lo/hi/steps of length 1..=4".into()));
        }
        if steps.contains(&0) || lo.iter().zip(hi).any(|(a, b)| !(a <= b)) {
            return Err(Error::InvalidArgument("control grid needs steps >= 1 and lo <= hi".into()));
        }
        let axis = |i: usize, k: usize| -> f64 {
            if steps[i] == 1 {
                lo[i]
            } else {
                lo[i] + (hi[i] - lo[i]) * k as f64 / (steps[i] - 1) as f64
            }
        };
        let total: usize = steps.iter().product();
        let mut values = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut u = Point::new();
            for i in (0..m).rev() {
                let k = rem % steps[i];
                rem /= steps[i];
                u.insert(0, axis(i, k));
            }
            values.push(u);
        }
        let mut neighbors = Vec::new();
        let mut stride = 1;
        for i in (0..m).rev() {
            for flat in 0..total {
                let k = (flat / stride) % steps[i];
                if k + 1 < steps[i] {
                    neighbors.push((flat, flat + stride));
                }
            }
            stride *= steps[i];
        }
        Ok(ControlSet { values, lo: lo.iter().copied().collect(), hi: hi.iter().copied().collect(), neighbors })
    }

    pub fn from_values(values: Vec<Point>) -> Result<Self> {
        let m = values.first().map_or(0, |v| v.len());
        if m == 0 || m > 4 || values.iter().any(|v| v.len() != m) {
            return Err(Error::InvalidArgument("control values need a common dimension 1..=4".into()));
        }
        let lo = (0..m).map(|i| values.iter().map(|v| v[i]).fold(f64::INFINITY, f64::min)).collect();
        let hi = (0..m).map(|i| values.iter().map(|v| v[i]).fold(f64::NEG_INFINITY, f64::max)).collect();
        Ok(ControlSet { values, lo, hi, neighbors: vec![] })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the listed control nearest to `u`.
    pub fn nearest(&self, u: &[f64]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, v) in self.values.iter().enumerate() {
            let d = crate::geometry::dist(v, u);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }
}

/// Numerical parameters carried by a scenario file.
#[derive(Debug, Clone, PartialEq)]
pub struct Numerics {
    pub t_start: f64,
    /// Free-time truncation: the last time at which the target may be hit.
    pub horizon: f64,
    /// Time window for constant estimation; its start is `t₁`.
    pub time_window: (f64, f64),
    pub h: f64,
    pub delta: f64,
    pub seed: u64,
    pub samples: usize,
    pub interior_samples: usize,
    pub reach_h: f64,
    pub reach_delta: f64,
    pub oracle_h: f64,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub dim: usize,
    pub params: BTreeMap<String, f64>,
    pub drift: Vec<Expr>,
    pub coupling: Expr,
    pub potential: PotentialSpec,
    pub measure: FrictionMeasure,
    pub controls: ControlSet,
    pub target: TargetTube,
    pub cost: Expr,
    pub state_box: StateBox,
    pub numerics: Numerics,
}

impl Scenario {
    /// Loads and validates a scenario file.
    pub fn load(path: impl AsRef<Path>) -> Result<Scenario> {
        Self::load_with(path, &BTreeMap::new())
    }

    /// Loads a scenario file, replacing the listed `[params]` entries.
    pub fn load_with(path: impl AsRef<Path>, overrides: &BTreeMap<String, f64>) -> Result<Scenario> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str_with(&text, overrides)
    }

    pub fn from_toml_str(text: &str) -> Result<Scenario> {
        Self::from_toml_str_with(text, &BTreeMap::new())
    }

    pub fn from_toml_str_with(text: &str, overrides: &BTreeMap<String, f64>) -> Result<Scenario> {
        let s = file::parse(text, overrides)?;
        validate::validate(&s)?;
        Ok(s)
    }

    pub fn control_dim(&self) -> usize {
        self.controls.dim()
    }

    pub fn g(&self, t: f64, x: &[f64], u: &[f64]) -> Point {
        let args = Args::new(t, x, u, &[]);
        self.drift.iter().map(|e| e.eval(&args)).collect()
    }

    pub fn k(&self, t: f64, x: &[f64], u: &[f64], alpha: &[f64]) -> f64 {
        self.coupling.eval(&Args::new(t, x, u, alpha))
    }

    pub fn w(&self, t: f64, x: &[f64]) -> f64 {
        self.cost.eval(&Args::new(t, x, &[], &[]))
    }

    pub fn atom_potential(&self, atom: usize) -> &Potential {
        self.potential.for_atom(atom)
    }

    /// Whether drift and coupling ignore time, so F̄ can be cached per state.
    pub fn dynamics_time_invariant(&self) -> bool {
        self.drift.iter().all(|e| !e.uses_time()) && !self.coupling.uses_time()
    }

    /// Kink locations of the potentials of active atoms along each axis.
    pub fn kinks(&self) -> Vec<f64> {
        let mut k: Vec<f64> = (0..self.measure.atoms.len()).flat_map(|i| self.atom_potential(i).kinks()).collect();
        k.sort_by(f64::total_cmp);
        k.dedup();
        k
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.get(name).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_grid_layout_and_neighbors() {
        let c = ControlSet::grid(&[-2.0], &[2.0], &[41]).unwrap();
        assert_eq!(c.len(), 41);
        assert_eq!(c.values[20][0], 0.0);
        assert_eq!(c.values[30][0], 1.0);
        assert_eq!(c.values[40][0], 2.0);
        assert_eq!(c.neighbors.len(), 40);
        let c2 = ControlSet::grid(&[0.0, 0.0], &[1.0, 2.0], &[2, 3]).unwrap();
        assert_eq!(c2.len(), 6);
        assert_eq!(c2.values[1].as_slice(), &[0.0, 1.0]);
        assert_eq!(c2.values[3].as_slice(), &[1.0, 0.0]);
        assert_eq!(c2.neighbors.len(), 3 + 4);
        assert_eq!(c2.nearest(&[0.9, 1.1]), 4);
    }

    #[test]
    fn box_checks() {
        let b = StateBox { lo: crate::geometry::point(&[-2.0]), hi: crate::geometry::point(&[3.0]) };
        assert!(b.check().is_ok());
        assert_eq!(b.abs_bound(), 3.0);
        assert_eq!(b.closest_to_origin()[0], 0.0);
        let bad = StateBox { lo: crate::geometry::point(&[1.0]), hi: crate::geometry::point(&[1.0]) };
        assert!(matches!(bad.check(), Err(Error::DegenerateBox(_))));
    }
}
