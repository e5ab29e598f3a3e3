//! Built-in convex friction potentials. In two dimensions every potential
//! acts separably, `φ(x) = φ(x₁) + φ(x₂)`.

use std::collections::BTreeMap;

use crate::error::{Assumption, Error, Result};
use crate::sets::ConvexSet1D;

#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    /// `max(z, 0)`.
    Relu,
    /// `|z|`.
    Abs,
    /// Distance from `z` to `[lo, hi]`.
    DistanceToInterval { lo: f64, hi: f64 },
    /// `scale * z²`, admitted on a bounded state box only.
    Quadratic { scale: f64 },
    /// Continuous piecewise-affine function with `slopes.len() == breakpoints.len() + 1`,
    /// zero at the first breakpoint.
    PiecewiseAffine { breakpoints: Vec<f64>, slopes: Vec<f64> },
}

impl Potential {
    pub fn name(&self) -> &'static str {
        match self {
            Potential::Relu => "relu",
            Potential::Abs => "abs",
            Potential::DistanceToInterval { .. } => "distance_to_interval",
            Potential::Quadratic { .. } => "quadratic",
            Potential::PiecewiseAffine { .. } => "piecewise_affine",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String, witness: String| Err(Error::validation(Assumption::Potential, msg, witness));
        match self {
            Potential::Relu | Potential::Abs => Ok(()),
            Potential::DistanceToInterval { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                    return bad("distance potential needs finite lo <= hi".into(), format!("lo = {lo}, hi = {hi}"));
                }
                Ok(())
            }
            Potential::Quadratic { scale } => {
                if !scale.is_finite() || *scale < 0.0 {
                    return bad(
                        "non-convex potential: quadratic scale must be >= 0".into(),
                        format!("scale = {scale}"),
                    );
                }
                Ok(())
            }
            Potential::PiecewiseAffine { breakpoints, slopes } => {
                if slopes.len() != breakpoints.len() + 1 {
                    return bad(
                        "piecewise_affine needs one more slope than breakpoints".into(),
                        format!("{} breakpoints, {} slopes", breakpoints.len(), slopes.len()),
                    );
                }
                if breakpoints.iter().chain(slopes).any(|v| !v.is_finite()) {
                    return bad("piecewise_affine data must be finite".into(), format!("{breakpoints:?} / {slopes:?}"));
                }
                if let Some(w) = breakpoints.windows(2).find(|w| w[0] >= w[1]) {
                    return bad("breakpoints must be strictly increasing".into(), format!("{} >= {}", w[0], w[1]));
                }
                if let Some(i) = slopes.windows(2).position(|w| w[0] > w[1]) {
                    return bad(
                        "non-convex potential: slopes must be nondecreasing".into(),
                        format!("slope {} followed by {}", slopes[i], slopes[i + 1]),
                    );
                }
                Ok(())
            }
        }
    }

    pub fn value(&self, z: f64) -> f64 {
        match self {
            Potential::Relu => z.max(0.0),
            Potential::Abs => z.abs(),
            Potential::DistanceToInterval { lo, hi } => (lo - z).max(z - hi).max(0.0),
            Potential::Quadratic { scale } => scale * z * z,
            Potential::PiecewiseAffine { breakpoints, slopes } => {
                if breakpoints.is_empty() {
                    return slopes[0] * z;
                }
                if z <= breakpoints[0] {
                    return slopes[0] * (z - breakpoints[0]);
                }
                let mut acc = 0.0;
                for (i, b) in breakpoints.iter().enumerate() {
                    let next = breakpoints.get(i + 1).copied().unwrap_or(f64::INFINITY);
                    if z <= next {
                        return acc + slopes[i + 1] * (z - b);
                    }
                    acc += slopes[i + 1] * (next - b);
                }
                acc
            }
        }
    }

    /// Kink locations (points of nondifferentiability), sorted.
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            Potential::Relu | Potential::Abs => vec![0.0],
            Potential::DistanceToInterval { lo, hi } if lo == hi => vec![*lo],
            Potential::DistanceToInterval { lo, hi } => vec![*lo, *hi],
            Potential::Quadratic { .. } => vec![],
            Potential::PiecewiseAffine { breakpoints, slopes } => {
                breakpoints.iter().zip(slopes.windows(2)).filter(|(_, w)| w[0] != w[1]).map(|(b, _)| *b).collect()
            }
        }
    }

    /// Coefficient `a` of the smooth part `a·z` of the subgradient.
    pub fn linear_coefficient(&self) -> f64 {
        match self {
            Potential::Quadratic { scale } => 2.0 * scale,
            _ => 0.0,
        }
    }

    /// Left and right derivatives of the piecewise-affine part at `z`.
    pub fn one_sided_slopes(&self, z: f64) -> (f64, f64) {
        match self {
            Potential::Relu => {
                if z < 0.0 {
                    (0.0, 0.0)
                } else if z > 0.0 {
                    (1.0, 1.0)
                } else {
                    (0.0, 1.0)
                }
            }
            Potential::Abs => {
                if z < 0.0 {
                    (-1.0, -1.0)
                } else if z > 0.0 {
                    (1.0, 1.0)
                } else {
                    (-1.0, 1.0)
                }
            }
            Potential::DistanceToInterval { lo, hi } => {
                let left = if z <= *lo {
                    -1.0
                } else if z <= *hi {
                    0.0
                } else {
                    1.0
                };
                let right = if z < *lo {
                    -1.0
                } else if z < *hi {
                    0.0
                } else {
                    1.0
                };
                (left, right)
            }
            Potential::Quadratic { .. } => (0.0, 0.0),
            Potential::PiecewiseAffine { breakpoints, slopes } => {
                let left = slopes[breakpoints.partition_point(|b| *b < z)];
                let right = slopes[breakpoints.partition_point(|b| *b <= z)];
                (left, right)
            }
        }
    }

    /// Convex subdifferential at `z`.
    pub fn subdifferential(&self, z: f64) -> ConvexSet1D {
        let (l, r) = self.one_sided_slopes(z);
        let s = self.linear_coefficient() * z;
        ConvexSet1D::new(l + s, r + s)
    }

    /// Global Lipschitz constant in one coordinate; `abs_bound` bounds |z| on
    /// the state box and only matters for the quadratic.
    pub fn lipschitz(&self, abs_bound: f64) -> f64 {
        match self {
            Potential::Relu | Potential::Abs | Potential::DistanceToInterval { .. } => 1.0,
            Potential::Quadratic { scale } => 2.0 * scale * abs_bound,
            Potential::PiecewiseAffine { slopes, .. } => slopes.iter().fold(0.0, |m, s| f64::max(m, s.abs())),
        }
    }
}

/// Base potential plus per-atom replacements.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    pub base: Potential,
    pub overrides: BTreeMap<usize, Potential>,
}

impl PotentialSpec {
    pub fn uniform(base: Potential) -> Self {
        PotentialSpec { base, overrides: BTreeMap::new() }
    }

    pub fn for_atom(&self, atom: usize) -> &Potential {
        self.overrides.get(&atom).unwrap_or(&self.base)
    }
}

/// Solves `y ∈ z + Σ cᵢ ∂φᵢ(z)` for `z`, i.e. the proximal map of
/// `Σ cᵢ φᵢ` at `y`. Weights must be nonnegative.
pub fn prox_sum(terms: &[(f64, &Potential)], y: f64) -> f64 {
    let active: Vec<(f64, &Potential)> = terms.iter().copied().filter(|(c, _)| *c > 0.0).collect();
    if active.is_empty() {
        return y;
    }
    let a = 1.0 + active.iter().map(|(c, p)| c * p.linear_coefficient()).sum::<f64>();
    let mut kinks: Vec<f64> = active.iter().flat_map(|(_, p)| p.kinks()).collect();
    kinks.sort_by(f64::total_cmp);
    kinks.dedup();
    let offset = |z: f64, right: bool| -> f64 {
        active
            .iter()
            .map(|(c, p)| {
                let (l, r) = p.one_sided_slopes(z);
                c * if right { r } else { l }
            })
            .sum()
    };
    if kinks.is_empty() {
        return (y - offset(0.0, true)) / a;
    }
    let first = kinks[0];
    let b = offset(first, false);
    if y < a * first + b {
        return (y - b) / a;
    }
    for (i, &kappa) in kinks.iter().enumerate() {
        let right = offset(kappa, true);
        if y <= a * kappa + right {
            return kappa;
        }
        if let Some(&next) = kinks.get(i + 1) {
            if y < a * next + right {
                return (y - right) / a;
            }
        } else {
            return (y - right) / a;
        }
    }
    unreachable!("segments cover the real line")
}
