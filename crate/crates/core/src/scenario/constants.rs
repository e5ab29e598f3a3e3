//! Sample-based estimates of the structural constants.

use rand::Rng;

use super::Scenario;
use crate::error::{Error, Result};
use crate::geometry;
use crate::sampling;

#[derive(Debug, Clone, PartialEq)]
pub struct StructuralConstants {
    /// Lipschitz estimate of drift and coupling in (t, x).
    pub l: f64,
    /// Growth bound `|g(t, x, u)| <= c1 + c2 |x|`.
    pub c1: f64,
    pub c2: f64,
    /// Lipschitz constant of each atom's potential.
    pub lphi: Vec<f64>,
    /// `Σ wᵢ L_φ(αᵢ)`.
    pub lphi_integral: f64,
    pub kappa: f64,
    /// One-sided Lipschitz constant of `x ↦ F(t, x, u)`.
    pub l_f: f64,
    /// One-sided Lipschitz constant of `(t, x) ↦ F̄(t, x)`.
    pub l_fbar: f64,
    /// Start `t₁` of the estimation window.
    pub t1: f64,
}

impl StructuralConstants {
    /// Assembles the derived constants from the estimated ones.
    pub fn from_parts(l: f64, c1: f64, c2: f64, lphi: Vec<f64>, weights: &[f64], t1: f64) -> Self {
        let lphi_integral: f64 = lphi.iter().zip(weights).map(|(a, w)| a * w).sum();
        let kappa = 1.0 + lphi_integral;
        let l_f = l * kappa;
        let l_fbar = l_f + l;
        StructuralConstants { l, c1, c2, lphi, lphi_integral, kappa, l_f, l_fbar, t1 }
    }

    /// `C_r(t) = κ (C₁ + C₂ r) exp(κ (t - t₁))`. The ratio `L_F / L` equals κ
    /// whenever `L > 0`, and κ is used directly so that `L = 0` is defined.
    pub fn c_r(&self, r: f64, t: f64) -> f64 {
        self.kappa * (self.c1 + self.c2 * r) * (self.kappa * (t - self.t1)).exp()
    }

    /// `λ_r(t) = 2 exp(L_F̄ t) max{C_r(t), 1}`.
    pub fn lambda_r(&self, r: f64, t: f64) -> f64 {
        2.0 * (self.l_fbar * t).exp() * self.c_r(r, t).max(1.0)
    }
}

/// Estimates the constants from `samples` random draws of the scenario's
/// constants stream. Each draw contributes difference quotients in x alone
/// and in t alone, so estimates only grow with `samples`.
pub fn estimate_constants(s: &Scenario, samples: usize) -> Result<StructuralConstants> {
    if samples < 2 {
        return Err(Error::InvalidArgument(format!("samples must be >= 2, got {samples}")));
    }
    s.state_box.check()?;
    let (t_lo, t_hi) = s.numerics.time_window;
    let mut rng = sampling::stream_rng(s.numerics.seed, sampling::STREAM_CONSTANTS);
    let anchor = s.state_box.closest_to_origin();
    let (mut l, mut c2, mut g_anchor) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..samples {
        let t = rng.random_range(t_lo..=t_hi);
        let t2 = rng.random_range(t_lo..=t_hi);
        let x = sampling::uniform_in_box(&mut rng, &s.state_box);
        let x2 = sampling::uniform_in_box(&mut rng, &s.state_box);
        let ui = rng.random_range(0..s.controls.len());
        let atom = if s.measure.atoms.is_empty() { None } else { Some(rng.random_range(0..s.measure.atoms.len())) };
        let u = &s.controls.values[ui];
        let dx = geometry::dist(&x, &x2);
        let dt = (t - t2).abs();
        let g = s.g(t, &x, u);
        if dx > 0.0 {
            let q = geometry::dist(&g, &s.g(t, &x2, u)) / dx;
            c2 = c2.max(q);
            l = l.max(q);
        }
        if dt > 0.0 {
            l = l.max(geometry::dist(&g, &s.g(t2, &x, u)) / dt);
        }
        if let Some(ai) = atom {
            let alpha = &s.measure.atoms[ai].alpha;
            let k = s.k(t, &x, u, alpha);
            if dx > 0.0 {
                l = l.max((k - s.k(t, &x2, u, alpha)).abs() / dx);
            }
            if dt > 0.0 {
                l = l.max((k - s.k(t2, &x, u, alpha)).abs() / dt);
            }
        }
        for v in &s.controls.values {
            g_anchor = g_anchor.max(geometry::norm(&s.g(t, &anchor, v)));
        }
    }
    let c1 = g_anchor + c2 * geometry::norm(&anchor);
    let scale = (s.dim as f64).sqrt();
    let abs_bound = s.state_box.abs_bound();
    let lphi: Vec<f64> = (0..s.measure.atoms.len()).map(|i| scale * s.atom_potential(i).lipschitz(abs_bound)).collect();
    let weights: Vec<f64> = s.measure.atoms.iter().map(|a| a.weight).collect();
    Ok(StructuralConstants::from_parts(l, c1, c2, lphi, &weights, t_lo))
}
