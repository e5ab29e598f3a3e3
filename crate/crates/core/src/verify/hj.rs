//! Pointwise Hamilton-Jacobi residuals of a value function at points where
//! it is differentiable.

use rayon::prelude::*;

use crate::dynamics::eval_Fbar;
use crate::geometry::{self, Point};
use crate::scenario::Scenario;
use crate::verify::{Condition, Relation, ReportRow, ValueFn, VerificationReport};

#[derive(Debug, Clone, PartialEq)]
pub struct HjOptions {
    pub tol: f64,
    /// Finite-difference step. A probe counts as differentiable when the
    /// one-sided quotients agree and the gradient is stable under doubling
    /// the step, both within `smooth_tol`.
    pub fd_step: f64,
    /// Largest gradient change between the two steps at a differentiability point.
    pub smooth_tol: f64,
}

impl HjOptions {
    pub fn tabulated(h: f64, delta: f64) -> Self {
        let scale = h + delta;
        HjOptions { tol: 10.0 * scale, fd_step: 5.0 * scale, smooth_tol: 0.1 }
    }
}

/// `(∂_t V, ∇_x V)` by central differences, one-sided where a side is
/// undefined; `None` when a needed value is missing or infinite.
pub fn fd_gradient(v: &dyn ValueFn, t: f64, x: &[f64], step: f64) -> Option<Point> {
    fd_gradient_with_jump(v, t, x, step).map(|(g, _)| g)
}

/// [`fd_gradient`] with the largest gap between forward and backward
/// quotients.
fn fd_gradient_with_jump(v: &dyn ValueFn, t: f64, x: &[f64], step: f64) -> Option<(Point, f64)> {
    let f0 = v.value(t, x).filter(|f| f.is_finite())?;
    let mut z: Point = geometry::point(&[t]);
    z.extend_from_slice(x);
    let at = |z: &[f64]| v.value(z[0], &z[1..]).filter(|f| f.is_finite());
    let mut jump = 0.0f64;
    let g = (0..z.len())
        .map(|i| {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[i] += step;
            zm[i] -= step;
            match (at(&zp), at(&zm)) {
                (Some(a), Some(b)) => {
                    jump = jump.max(((a - f0) / step - (f0 - b) / step).abs());
                    Some((a - b) / (2.0 * step))
                }
                (Some(a), None) => Some((a - f0) / step),
                (None, Some(b)) => Some((f0 - b) / step),
                (None, None) => None,
            }
        })
        .collect::<Option<Point>>()?;
    Some((g, jump))
}

fn probe_rows(s: &Scenario, v: &dyn ValueFn, t: f64, x: &[f64], o: &HjOptions) -> VerificationReport {
    let mut rep = VerificationReport::default();
    let Some(val) = v.value(t, x).filter(|f| f.is_finite()) else {
        rep.notes.push(format!("({t}, {x:?}): outside the feasibility region"));
        return rep;
    };
    let (Some((g1, jump)), Some(g2)) =
        (fd_gradient_with_jump(v, t, x, o.fd_step), fd_gradient(v, t, x, 2.0 * o.fd_step))
    else {
        rep.notes.push(format!("({t}, {x:?}): stencil leaves the feasibility region"));
        return rep;
    };
    let change = g1.iter().zip(&g2).map(|(a, b)| (a - b).abs()).fold(jump, f64::max);
    if change > o.smooth_tol {
        rep.notes.push(format!("({t}, {x:?}): non-differentiable (gradient change {change:.3e})"));
        return rep;
    }
    let ham = g1[0] + eval_Fbar(s, t, x).set.support_min(&g1[1..]).0;
    let row = if s.target.contains(t, x) {
        let obstacle = s.w(t, x) - val;
        ReportRow::new(Condition::Hj2, t, x, obstacle.min(ham), Relation::AbsLe, o.tol)
    } else {
        ReportRow::new(Condition::Hj1, t, x, ham, Relation::AbsLe, o.tol)
    };
    rep.push(row);
    rep
}

/// `∂_t V + min_{F̄} v·∇V = 0` off the target and
/// `min{W - V, ∂_t V + min_{F̄} v·∇V} = 0` on it, at every probe whose
/// finite-difference gradient is stable under doubling the step.
#[allow(non_snake_case)]
pub fn check_HJ_pointwise(s: &Scenario, v: &dyn ValueFn, probes: &[(f64, Point)], o: &HjOptions) -> VerificationReport {
    let parts: Vec<VerificationReport> = probes.par_iter().map(|(t, x)| probe_rows(s, v, *t, x, o)).collect();
    let mut report = VerificationReport::default();
    for p in parts {
        report.merge(p);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hjb::{solve_value, GridParams};
    use crate::toy::ToyValue;

    #[test]
    fn toy_residuals_vanish() {
        let s = Scenario::load(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/toy.scn")).unwrap();
        let exact = ToyValue::new(1.0, 0.8);
        let probes: Vec<(f64, Point)> = [-1.0, 0.5, 0.9, 2.0].iter().map(|&v| (0.5, geometry::point(&[v]))).collect();
        let r = check_HJ_pointwise(&s, &exact, &probes, &HjOptions { tol: 1e-6, fd_step: 1e-4, smooth_tol: 1e-3 });
        assert_eq!(r.rows.len(), 4, "{:?}", r.notes);
        assert!(r.all_pass(), "{}", r.summary());
        assert_eq!(r.count(Condition::Hj2), 2);

        let vt =
            solve_value(&s, &GridParams { h: 0.01, delta: 0.01, t_end: 4.0, ..GridParams::from_scenario(&s) }).unwrap();
        let r = check_HJ_pointwise(&s, &vt, &probes, &HjOptions::tabulated(0.01, 0.01));
        assert!(r.rows.len() >= 3, "{:?}", r.notes);
        assert!(r.all_pass(), "{}", r.summary());
        let kink = check_HJ_pointwise(&s, &vt, &[(0.5, geometry::point(&[0.0]))], &HjOptions::tabulated(0.01, 0.01));
        assert!(kink.rows.is_empty() && kink.notes.len() == 1);
    }
}
