//! Sampled checks of the standing assumptions on a parsed scenario.

use rand::Rng;

use super::{Scenario, TubeShape};
use crate::error::{Assumption, Error, Result};
use crate::expr::Args;
use crate::geometry::Point;
use crate::sampling;

const CLOSED_SCAN: usize = 2000;
const JUMP_TOL: f64 = 1e-3;
const JUMP_WIDTH: f64 = 1e-12;

pub(super) fn validate(s: &Scenario) -> Result<()> {
    s.state_box.check()?;
    let n = &s.numerics;
    let cfg = |msg: String| Err(Error::validation(Assumption::Configuration, msg, "numerics"));
    if !(n.horizon.is_finite() && n.t_start.is_finite() && n.horizon > n.t_start) {
        return cfg(format!("horizon {} must exceed t_start {}", n.horizon, n.t_start));
    }
    if !(n.time_window.0 < n.time_window.1) {
        return cfg(format!("time window {:?} is empty", n.time_window));
    }
    for (name, v) in [
        ("h", n.h),
        ("delta", n.delta),
        ("reach_h", n.reach_h),
        ("reach_delta", n.reach_delta),
        ("oracle_h", n.oracle_h),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return cfg(format!("{name} must be positive, got {v}"));
        }
    }
    if n.samples < 2 {
        return cfg(format!("samples must be >= 2, got {}", n.samples));
    }
    if s.controls.is_empty() || s.controls.values.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::validation(
            Assumption::Configuration,
            "control list must be finite and nonempty",
            "controls",
        ));
    }

    s.measure.validate()?;
    s.potential.base.validate()?;
    for p in s.potential.overrides.values() {
        p.validate()?;
    }

    let mut rng = sampling::stream_rng(n.seed, sampling::STREAM_VALIDATION);
    let (t0, t1) = n.time_window;
    for _ in 0..n.samples {
        let t = rng.random_range(t0..=t1);
        let x = sampling::uniform_in_box(&mut rng, &s.state_box);
        let ui = rng.random_range(0..s.controls.len());
        let u = &s.controls.values[ui];
        let g = s.g(t, &x, u);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(
                Assumption::Finiteness,
                "drift is not finite",
                format!("t = {t}, x = {:?}, u = {:?}, g = {:?}", x.as_slice(), u.as_slice(), g.as_slice()),
            ));
        }
        for (ai, atom) in s.measure.atoms.iter().enumerate() {
            let k = s.k(t, &x, u, &atom.alpha);
            if !k.is_finite() {
                return Err(Error::validation(
                    Assumption::Finiteness,
                    "coupling is not finite",
                    format!("t = {t}, x = {:?}, u = {:?}, atom {ai}", x.as_slice(), u.as_slice()),
                ));
            }
            if k < 0.0 {
                return Err(Error::validation(
                    Assumption::CouplingAndGrowth,
                    "negative coupling k",
                    format!("t = {t}, x = {:?}, u = {:?}, atom {ai}, k = {k}", x.as_slice(), u.as_slice()),
                ));
            }
        }
        let (d, proj) = s.target.state_distance(t, &x);
        if d.is_finite() && s.state_box.contains(&proj) {
            let w = s.w(t, &proj);
            if !w.is_finite() {
                return Err(Error::validation(
                    Assumption::CostRegularity,
                    "cost is not finite on the target",
                    format!("t = {t}, x = {:?}, W = {w}", proj.as_slice()),
                ));
            }
        }
    }
    check_closed(s)
}

/// Interval endpoints are scanned on a fine time grid; any jump that
/// survives bisection down to `JUMP_WIDTH` is reported, since a sampled scan
/// cannot tell on which side the endpoint value sits.
fn check_closed(s: &Scenario) -> Result<()> {
    let TubeShape::Intervals(iv) = &s.target.shape else {
        let probe: Point = s.state_box.closest_to_origin();
        let TubeShape::SignedDistance(e) = &s.target.shape else { unreachable!() };
        let (t0, t1) = s.numerics.time_window;
        for i in 0..=CLOSED_SCAN {
            let t = t0 + (t1 - t0) * i as f64 / CLOSED_SCAN as f64;
            if e.eval(&Args::new(t, &probe, &[], &[])).is_nan() {
                return Err(Error::validation(Assumption::TargetClosed, "signed distance is NaN", format!("t = {t}")));
            }
        }
        return Ok(());
    };
    let (t0, t1) = s.numerics.time_window;
    for (i, (lo, hi)) in iv.iter().enumerate() {
        for (which, e) in [("lo", lo), ("hi", hi)] {
            if !e.uses_time() {
                if e.eval(&Args::new(t0, &[], &[], &[])).is_nan() {
                    return Err(Error::validation(
                        Assumption::TargetClosed,
                        format!("interval {i} endpoint {which} is NaN"),
                        format!("t = {t0}"),
                    ));
                }
                continue;
            }
            let at = |tt: f64| e.eval(&Args::new(tt, &[], &[], &[]));
            let jumps = |a: f64, b: f64| {
                let (va, vb) = (at(a), at(b));
                if va.is_infinite() && vb.is_infinite() && va == vb {
                    return false;
                }
                !((va - vb).abs() <= JUMP_TOL * (1.0 + va.abs().min(vb.abs())))
            };
            for k in 0..CLOSED_SCAN {
                let mut a = t0 + (t1 - t0) * k as f64 / CLOSED_SCAN as f64;
                let mut b = t0 + (t1 - t0) * (k + 1) as f64 / CLOSED_SCAN as f64;
                if at(a).is_nan() {
                    return Err(Error::validation(
                        Assumption::TargetClosed,
                        format!("interval {i} endpoint {which} is NaN"),
                        format!("t = {a}"),
                    ));
                }
                if !jumps(a, b) {
                    continue;
                }
                while b - a > JUMP_WIDTH * (1.0 + a.abs()) {
                    let m = 0.5 * (a + b);
                    if jumps(a, m) {
                        b = m;
                    } else if jumps(m, b) {
                        a = m;
                    } else {
                        break;
                    }
                }
                if jumps(a, b) {
                    return Err(Error::validation(
                        Assumption::TargetClosed,
                        format!("interval {i} endpoint {which} jumps; the graph is not certified closed"),
                        format!("t = {a}, endpoint {} -> {}", at(a), at(b)),
                    ));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use crate::scenario::Scenario;

    const BASE: &str = r#"
dim = 1
[dynamics]
drift = ["u"]
coupling = "COUPLING"
controls = { min = -1.0, max = 1.0, steps = 3 }
[friction]
potential = "relu"
atoms = [{ alpha = [0.5], weight = 1.0 }]
[target]
kind = "intervals"
intervals = [["LO", "inf"]]
[cost]
expr = "t + x^2"
[numerics]
horizon = 2.0
state_box = { lo = -1.0, hi = 1.0 }
samples = 200
"#;

    fn with(coupling: &str, lo: &str) -> String {
        BASE.replace("COUPLING", coupling).replace("LO", lo)
    }

    #[test]
    fn accepts_well_posed_data() {
        Scenario::from_toml_str(&with("u^2*alpha", "0.5")).unwrap();
    }

    #[test]
    fn rejects_negative_coupling() {
        let err = Scenario::from_toml_str(&with("u*alpha", "0.5")).unwrap_err().to_string();
        assert!(err.contains("negative coupling"), "{err}");
        assert!(err.contains("coupling positivity"), "{err}");
    }

    #[test]
    fn rejects_jumping_tube() {
        let err = Scenario::from_toml_str(&with("1", "floor(t*3+0.5)")).unwrap_err().to_string();
        assert!(err.contains("not closed") || err.contains("jumps"), "{err}");
    }

    #[test]
    fn rejects_malformed_expressions_and_fields() {
        assert!(Scenario::from_toml_str(&with("u^", "0.5")).is_err());
        assert!(Scenario::from_toml_str(&with("1", "0.5").replace("samples", "sampels")).is_err());
    }
}
