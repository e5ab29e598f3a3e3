//! Viscosity inequalities characterizing the value function, checked at
//! probe points with exact or probed proximal differentials.

use rayon::prelude::*;

use crate::dynamics::{eval_Fbar, hamiltonians_on};
use crate::geometry::{self, Point};
use crate::scenario::Scenario;
use crate::verify::{proximal_probe, Condition, Differentials, Relation, ReportRow, ValueFn, VerificationReport};

#[derive(Debug, Clone, PartialEq)]
pub struct T14Options {
    pub tol: f64,
    /// `|V - W| <= omega_tol` on the target classifies a probe into Ω.
    pub omega_tol: f64,
    /// Largest step of the directional ladder `ε, ε/2, ε/4, ε/8`.
    pub ladder_eps: f64,
    /// Consecutive ladder values within this are stabilized.
    pub stab_tol: f64,
    /// Radius and quadratic bound for probed differentials.
    pub probe_eps: f64,
    pub probe_m_max: f64,
}

impl T14Options {
    /// Tolerances for a closed-form value with exact differentials.
    pub fn closed_form() -> Self {
        T14Options { tol: 1e-9, omega_tol: 1e-12, ladder_eps: 1e-3, stab_tol: 1e-9, probe_eps: 1e-2, probe_m_max: 1e3 }
    }

    /// Tolerances for a table with steps `h` and `delta`.
    pub fn tabulated(h: f64, delta: f64) -> Self {
        let scale = h + delta;
        T14Options {
            tol: 5.0 * scale,
            omega_tol: 5.0 * scale,
            ladder_eps: 8.0 * scale,
            stab_tol: scale,
            probe_eps: 16.0 * scale,
            probe_m_max: 1.0 / scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct T14Result {
    pub report: VerificationReport,
    /// Largest `|(v) residual - λ · (vii) residual|` over the probes.
    pub max_duality_gap: f64,
}

/// `λ = 1 / |(p, -1)|`, the normalization of an epigraph normal.
fn lift_scale(p: &[f64]) -> f64 {
    1.0 / (1.0 + geometry::dot(p, p)).sqrt()
}

fn lifted(p: &[f64], scale: f64, last: f64) -> Point {
    let mut eta: Point = p.iter().map(|v| v * scale).collect();
    eta.push(last);
    eta
}

/// Values of `g` at the ladder points `x - s q/|q|`, returning the extreme
/// of the stabilized values (all values when none stabilize).
fn ladder(
    s: &Scenario,
    t: f64,
    x: &[f64],
    q: &[f64],
    opts: &T14Options,
    g: impl Fn(&crate::sets::VelocitySet) -> f64,
    take_min: bool,
) -> f64 {
    let qn = geometry::norm(q);
    let vals: Vec<f64> = (0..4)
        .map(|k| {
            let step = opts.ladder_eps * 0.5f64.powi(k);
            let y = if qn > 0.0 { geometry::axpy(x, -step / qn, q) } else { geometry::point(x) };
            g(&eval_Fbar(s, t, &y).set)
        })
        .collect();
    let pick = |a: f64, b: f64| if take_min { a.min(b) } else { a.max(b) };
    let init = if take_min { f64::INFINITY } else { f64::NEG_INFINITY };
    let stable = vals
        .windows(2)
        .filter(|w| (w[0] - w[1]).abs() <= opts.stab_tol)
        .fold(init, |acc, w| pick(acc, pick(w[0], w[1])));
    if stable.is_finite() {
        stable
    } else {
        vals.into_iter().fold(init, pick)
    }
}

fn probe_rows(s: &Scenario, v: &dyn ValueFn, t: f64, x: &[f64], opts: &T14Options) -> (VerificationReport, f64) {
    let mut rep = VerificationReport::default();
    let mut gap = 0.0f64;
    let Some(val) = v.value(t, x).filter(|v| v.is_finite()) else {
        rep.notes.push(format!("({t}, {x:?}): outside the feasibility region"));
        return (rep, gap);
    };
    let diffs = v.differentials(t, x).unwrap_or_else(|| {
        let p = proximal_probe(v, t, x, opts.probe_eps, opts.probe_m_max);
        Differentials {
            sub: p.sub.into_iter().map(|c| c.covector).collect(),
            sup: p.sup.into_iter().map(|c| c.covector).collect(),
        }
    });
    if diffs.sub.is_empty() && diffs.sup.is_empty() {
        rep.notes.push(format!("({t}, {x:?}): no proximal differentials found"));
    }
    let fbar = eval_Fbar(s, t, x).set;
    let on_tube = s.target.contains(t, x);
    let w_minus_v = if on_tube { s.w(t, x) - val } else { f64::INFINITY };
    let in_omega = on_tube && w_minus_v.abs() <= opts.omega_tol;
    let n = x.len();

    for p in &diffs.sub {
        let mut eta = p.clone();
        eta.push(0.0);
        let h = hamiltonians_on(&fbar, &eta).h_min;
        if in_omega {
            rep.push(
                ReportRow::new(Condition::T14vii, t, x, w_minus_v.min(h), Relation::AbsLe, opts.tol)
                    .with_note(format!("on Omega, p = {:?}", p.as_slice())),
            );
            continue;
        }
        rep.push(
            ReportRow::new(Condition::T14vii, t, x, h, Relation::Le, opts.tol)
                .with_note(format!("p = {:?}", p.as_slice())),
        );
        let lam = lift_scale(&p[1..=n]);
        let eta_v = lifted(p, lam, -lam);
        let hv = hamiltonians_on(&fbar, &eta_v).h_min;
        gap = gap.max((hv - lam * h).abs());
        rep.push(
            ReportRow::new(Condition::T14v, t, x, hv, Relation::Le, opts.tol).with_note(format!("lambda = {lam}")),
        );
    }

    for q in &diffs.sup {
        let qx = &q[1..=n];
        let liminf = ladder(s, t, x, qx, opts, |f| f.support_min(qx).0, true);
        rep.push(
            ReportRow::new(Condition::T14viii, t, x, q[0] + liminf, Relation::Ge, opts.tol)
                .with_note(format!("q = {:?}", q.as_slice())),
        );
        let lam = lift_scale(qx);
        let eta: Point = lifted(&q.iter().map(|c| -c).collect::<Point>(), lam, lam);
        let limsup = ladder(s, t, x, qx, opts, |f| hamiltonians_on(f, &eta).h_max, false);
        rep.push(
            ReportRow::new(Condition::T14vi, t, x, limsup, Relation::Le, opts.tol).with_note(format!("lambda = {lam}")),
        );
    }
    (rep, gap)
}

/// Checks (v)-(viii) at every probe. Subgradient rows off Ω test
/// `p_t + min_{F̄} v·p_x <= 0` and its epigraph lift; on Ω they test
/// `min{W - V, p_t + min v·p_x} = 0`. Supergradient rows test
/// `q_t + liminf min_{F̄(x')} v·q_x >= 0` along `x' → x` from `-q_x`, and
/// its hypograph lift.
#[allow(non_snake_case)]
pub fn check_T14(s: &Scenario, v: &dyn ValueFn, probes: &[(f64, Point)], opts: &T14Options) -> T14Result {
    let parts: Vec<(VerificationReport, f64)> = probes.par_iter().map(|(t, x)| probe_rows(s, v, *t, x, opts)).collect();
    let mut report = VerificationReport::default();
    let mut max_duality_gap = 0.0f64;
    for (r, g) in parts {
        report.merge(r);
        max_duality_gap = max_duality_gap.max(g);
    }
    report.metrics.insert("max_duality_gap".into(), max_duality_gap);
    T14Result { report, max_duality_gap }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::ToyValue;

    fn toy() -> Scenario {
        Scenario::load(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/toy.scn")).unwrap()
    }

    fn probe(t: f64, v: f64) -> (f64, Point) {
        (t, geometry::point(&[v]))
    }

    #[test]
    fn closed_form_passes_everywhere() {
        let s = toy();
        let v = ToyValue::new(1.0, 0.8);
        let probes: Vec<_> = [-1.0, -0.3, 0.0, 0.2, 0.5, 0.9, 1.2, 2.0].iter().map(|&x| probe(0.0, x)).collect();
        let r = check_T14(&s, &v, &probes, &T14Options::closed_form());
        assert!(r.report.all_pass(), "{}", r.report.summary());
        for c in [Condition::T14v, Condition::T14vi, Condition::T14vii, Condition::T14viii] {
            assert!(r.report.count(c) > 0, "{c}");
        }
        assert!(r.report.max_abs_residual(Condition::T14vii).unwrap() <= 1e-9);
        assert!(r.max_duality_gap <= 1e-12);
    }

    #[test]
    fn kink_supergradients() {
        let s = toy();
        let v = ToyValue::new(1.0, 0.8);
        let r = check_T14(&s, &v, &[probe(0.0, 0.0)], &T14Options::closed_form());
        assert_eq!(r.report.count(Condition::T14vii), 0);
        let rows: Vec<_> = r.report.rows_for(Condition::T14viii).collect();
        assert_eq!(rows.len(), 20);
        // Residual C + q_v / 2 for q_v sampled in [-2C, -C/2].
        assert!((rows[0].residual - 0.0).abs() < 1e-12);
        assert!((rows[19].residual - 0.75).abs() < 1e-12);
    }

    #[test]
    fn wrong_value_fails() {
        let s = toy();
        let bad = ToyValue::new(1.0, 0.8);
        let wrong = crate::verify::FnValue { dim: 1, f: move |t: f64, x: &[f64]| bad.value(t, x[0]) - 0.5 * x[0] };
        let r =
            check_T14(&s, &wrong, &[probe(0.0, -1.0)], &T14Options { probe_eps: 1e-3, ..T14Options::closed_form() });
        assert!(!r.report.all_pass());
    }
}
