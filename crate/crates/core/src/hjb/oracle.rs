//! Exhaustive search over piecewise-constant controls, an upper bound on the
//! value function that is independent of the grid solver.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::integrator::step;
use crate::scenario::Scenario;

/// Largest admissible `depth · branching`.
pub const ORACLE_BUDGET: usize = 10_000;
/// Largest number of distinct states kept at one depth.
pub const FRONTIER_CAP: usize = 2_000_000;
const QUANTUM: f64 = 1e-9;

/// `branching` controls spread evenly over the control list.
pub fn spread_controls(s: &Scenario, branching: usize) -> Vec<Point> {
    let n = s.controls.len();
    if branching >= n {
        return s.controls.values.clone();
    }
    if branching == 1 {
        return vec![s.controls.values[n / 2].clone()];
    }
    let mut idx: Vec<usize> =
        (0..branching).map(|i| ((i * (n - 1)) as f64 / (branching - 1) as f64).round() as usize).collect();
    idx.dedup();
    idx.into_iter().map(|i| s.controls.values[i].clone()).collect()
}

/// Minimum of `W` over every target hit of every control sequence with
/// `depth` steps of `oracle_h` drawn from `branching` controls, stopping
/// allowed at any node. States that coincide to `1e-9` are merged, which is
/// exact since the dynamics are Markov in `(t, x)`; states leaving the box
/// are dropped.
pub fn brute_force_value(s: &Scenario, t0: f64, x0: &[f64], depth: usize, branching: usize) -> Result<f64> {
    if branching == 0 || depth.saturating_mul(branching) > ORACLE_BUDGET {
        return Err(Error::Budget(format!(
            "depth {depth} x branching {branching} exceeds the oracle budget {ORACLE_BUDGET}"
        )));
    }
    let h = s.numerics.oracle_h;
    let controls = spread_controls(s, branching);
    let hit =
        |t: f64, x: &[f64]| -> Option<f64> { s.target.contains(t, x).then(|| s.w(t, x)).filter(|w| w.is_finite()) };
    let mut best = hit(t0, x0).unwrap_or(f64::INFINITY);
    let mut frontier: Vec<Point> = vec![x0.iter().copied().collect()];
    for d in 0..depth {
        let t = t0 + d as f64 * h;
        let tn = t0 + (d + 1) as f64 * h;
        if tn > s.numerics.horizon + 1e-9 {
            break;
        }
        let mut seen: HashSet<Vec<i64>> = HashSet::new();
        let mut next = Vec::new();
        for x in &frontier {
            for u in &controls {
                let y = step(s, t, x, u, h);
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { time: tn });
                }
                if !s.state_box.contains(&y) {
                    continue;
                }
                let key: Vec<i64> = y.iter().map(|v| (v / QUANTUM).round() as i64).collect();
                if seen.insert(key) {
                    if let Some(w) = hit(tn, &y) {
                        best = best.min(w);
                    }
                    next.push(y);
                }
            }
        }
        if next.len() > FRONTIER_CAP {
            return Err(Error::Budget(format!("oracle frontier exceeded {FRONTIER_CAP} states at depth {}", d + 1)));
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    Ok(best)
}
