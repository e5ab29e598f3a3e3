//! Lie splitting for `ẋ ∈ F(t, x, u)`: an explicit drift step followed by
//! the exact proximal map of the friction potential with `k` frozen at the
//! left endpoint.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{self, Point};
use crate::sampling;
use crate::scenario::potential::prox_sum;
use crate::scenario::{Potential, Scenario, StructuralConstants};

/// `argmin_z ½|z - y|² + h Σ wᵢ k(t, x, u, αᵢ) φ(z, αᵢ)`, coordinatewise.
pub fn prox_friction_step(s: &Scenario, t: f64, x: &[f64], u: &[f64], h: f64, y: &[f64]) -> Point {
    let weights = frozen_weights(s, t, x, u, h);
    let terms: Vec<(f64, &Potential)> = weights.iter().enumerate().map(|(i, c)| (*c, s.atom_potential(i))).collect();
    y.iter().map(|&yi| prox_sum(&terms, yi)).collect()
}

fn frozen_weights(s: &Scenario, t: f64, x: &[f64], u: &[f64], h: f64) -> Vec<f64> {
    s.measure.atoms.iter().map(|a| h * a.weight * s.k(t, x, u, &a.alpha)).collect()
}

pub fn step(s: &Scenario, t: f64, x: &[f64], u: &[f64], h: f64) -> Point {
    let g = s.g(t, x, u);
    let y = geometry::axpy(x, h, &g);
    prox_friction_step(s, t, x, u, h, &y)
}

/// Subgradient selection realizing one step: `(x⁺ - x)/h = g - Σ wᵢ kᵢ ξᵢ`
/// with `ξᵢ ∈ ∂φ(x⁺, αᵢ)`. `xi[i][j]` is atom `i`, coordinate `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepWitness {
    pub u: Point,
    pub xi: Vec<Point>,
}

pub fn step_with_witness(s: &Scenario, t: f64, x: &[f64], u: &[f64], h: f64) -> (Point, StepWitness) {
    let g = s.g(t, x, u);
    let y = geometry::axpy(x, h, &g);
    let weights = frozen_weights(s, t, x, u, h);
    let terms: Vec<(f64, &Potential)> = weights.iter().enumerate().map(|(i, c)| (*c, s.atom_potential(i))).collect();
    let z: Point = y.iter().map(|&yi| prox_sum(&terms, yi)).collect();
    let mut xi = vec![Point::from_elem(0.0, x.len()); terms.len()];
    for j in 0..x.len() {
        let subs: Vec<_> = terms.iter().map(|(_, p)| p.subdifferential(z[j])).collect();
        let lo: f64 = terms.iter().zip(&subs).map(|((c, _), d)| c * d.lo).sum();
        let hi: f64 = terms.iter().zip(&subs).map(|((c, _), d)| c * d.hi).sum();
        let total = y[j] - z[j];
        let f = if hi > lo { ((total - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
        for (i, d) in subs.iter().enumerate() {
            xi[i][j] = d.lo + f * (d.hi - d.lo);
        }
    }
    (z, StepWitness { u: geometry::point(u), xi })
}

type FeedbackFn = dyn Fn(f64, &[f64]) -> Point + Send + Sync;

#[derive(Clone)]
pub enum ControlSignal {
    /// `values[i]` applies on `[times[i], times[i+1])`; the last value
    /// holds forever and the first also covers times before `times[0]`.
    PiecewiseConstant { times: Vec<f64>, values: Vec<Point> },
    /// Sampled at the left endpoint of each step.
    Feedback(Arc<FeedbackFn>),
}

impl fmt::Debug for ControlSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlSignal::PiecewiseConstant { times, values } => {
                f.debug_struct("PiecewiseConstant").field("times", times).field("values", values).finish()
            }
            ControlSignal::Feedback(_) => f.write_str("Feedback(..)"),
        }
    }
}

impl ControlSignal {
    pub fn constant(u: &[f64]) -> Self {
        ControlSignal::PiecewiseConstant { times: vec![f64::NEG_INFINITY], values: vec![geometry::point(u)] }
    }

    pub fn piecewise_constant(times: Vec<f64>, values: Vec<Point>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::InvalidArgument("piecewise control needs one value per switching time".into()));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("switching times must be strictly increasing".into()));
        }
        Ok(ControlSignal::PiecewiseConstant { times, values })
    }

    pub fn feedback(f: impl Fn(f64, &[f64]) -> Point + Send + Sync + 'static) -> Self {
        ControlSignal::Feedback(Arc::new(f))
    }

    pub fn at(&self, t: f64, x: &[f64]) -> Point {
        match self {
            ControlSignal::PiecewiseConstant { times, values } => {
                let i = times.partition_point(|s| *s <= t).saturating_sub(1);
                values[i].clone()
            }
            ControlSignal::Feedback(f) => f(t, x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Point>,
    /// Control applied from each node; the last entry is the control the
    /// signal would apply at the final node.
    pub controls: Vec<Point>,
    pub h: f64,
    /// Per node: whether the step ending there crossed or touched a kink of
    /// an active potential.
    pub kink_events: Vec<bool>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> &Point {
        self.states.last().expect("trajectory has at least one node")
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one node")
    }

    /// Times at which a kink crossing was recorded.
    pub fn events(&self) -> Vec<f64> {
        self.times.iter().zip(&self.kink_events).filter(|(_, e)| **e).map(|(t, _)| *t).collect()
    }

    /// CSV with columns `t, x_1..x_n, u_1..u_m, event_flag`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.states.first().map_or(1, |x| x.len());
        let m = self.controls.first().map_or(1, |u| u.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        if m == 1 {
            header.push("u".into());
        } else {
            header.extend((1..=m).map(|i| format!("u_{i}")));
        }
        header.push("event_flag".into());
        w.write_record(&header)?;
        for i in 0..self.times.len() {
            let mut rec = vec![self.times[i].to_string()];
            rec.extend(self.states[i].iter().map(|v| v.to_string()));
            rec.extend(self.controls[i].iter().map(|v| v.to_string()));
            rec.push(u8::from(self.kink_events[i]).to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::Io { path: "<csv>".into(), source: e })?;
        Ok(())
    }
}

fn side(v: f64, k: f64) -> i8 {
    if v < k {
        -1
    } else if v > k {
        1
    } else {
        0
    }
}

fn crosses_kink(kinks: &[f64], a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).any(|(p, q)| kinks.iter().any(|&k| side(*p, k) != side(*q, k)))
}

pub fn integrate(s: &Scenario, t0: f64, x0: &[f64], ctrl: &ControlSignal, t_end: f64, h: f64) -> Result<Trajectory> {
    integrate_until(s, t0, x0, ctrl, t_end, h, |_, _| false)
}

/// Like [`integrate`] but stops at the first node (including the initial
/// one) where `stop(t, x)` holds.
#[allow(clippy::too_many_arguments)]
pub fn integrate_until(
    s: &Scenario,
    t0: f64,
    x0: &[f64],
    ctrl: &ControlSignal,
    t_end: f64,
    h: f64,
    stop: impl Fn(f64, &[f64]) -> bool,
) -> Result<Trajectory> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    if !(t_end >= t0) {
        return Err(Error::InvalidArgument(format!("end time {t_end} precedes start {t0}")));
    }
    if x0.len() != s.dim {
        return Err(Error::InvalidArgument(format!("initial state has {} components, dim is {}", x0.len(), s.dim)));
    }
    let kinks = s.kinks();
    let steps_est = ((t_end - t0) / h).ceil() as usize + 1;
    let mut times = Vec::with_capacity(steps_est);
    let mut states = Vec::with_capacity(steps_est);
    let mut controls = Vec::with_capacity(steps_est);
    let mut kink_events = Vec::with_capacity(steps_est);
    let mut x: Point = geometry::point(x0);
    let mut t = t0;
    times.push(t);
    states.push(x.clone());
    kink_events.push(false);
    let slack = 1e-12 * (1.0 + t_end.abs());
    let mut k = 0usize;
    while t < t_end - slack && !stop(t, &x) {
        let u = ctrl.at(t, &x);
        let next_t = (t0 + (k + 1) as f64 * h).min(t_end);
        let next_t = if t_end - next_t <= slack { t_end } else { next_t };
        let xn = step(s, t, &x, &u, next_t - t);
        if xn.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { time: next_t });
        }
        kink_events.push(crosses_kink(&kinks, &x, &xn));
        controls.push(u);
        x = xn;
        t = next_t;
        k += 1;
        times.push(t);
        states.push(x.clone());
    }
    controls.push(ctrl.at(t, &x));
    Ok(Trajectory { times, states, controls, h, kink_events })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GronwallReport {
    /// Max over trials and times of `|x₁(t) - x₂(t)| - λ_r(t) |(t₁,x₁) - (t₂,x₂)|`.
    pub max_ratio_excess: f64,
    /// Same with `e^{L_F̄ (t - t₂)} |x₁ - x₂|` on equal-start trials.
    pub max_equal_time_excess: f64,
    /// Radius `r` bounding the initial states.
    pub r: f64,
    pub trials: usize,
}

/// Random initial pairs driven by a shared random piecewise-constant control.
/// Even trials start both trajectories at the same time.
pub fn gronwall_check(s: &Scenario, consts: &StructuralConstants, trials: usize) -> Result<GronwallReport> {
    let r = s.state_box.abs_bound() * (s.dim as f64).sqrt();
    let results: Vec<(f64, f64)> =
        (0..trials).into_par_iter().map(|i| gronwall_trial(s, consts, r, i)).collect::<Result<_>>()?;
    let max_ratio_excess = results.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let max_equal_time_excess = results.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(GronwallReport { max_ratio_excess, max_equal_time_excess, r, trials })
}

fn gronwall_trial(s: &Scenario, consts: &StructuralConstants, r: f64, index: usize) -> Result<(f64, f64)> {
    let mut rng = sampling::trial_rng(s.numerics.seed, sampling::STREAM_GRONWALL, index as u64);
    let (w0, w1) = s.numerics.time_window;
    let span = w1 - w0;
    let h = s.numerics.h;
    let t1 = rng.random_range(w0..=w0 + 0.25 * span);
    let t2 = if index.is_multiple_of(2) { t1 } else { rng.random_range(t1..=t1 + 0.25 * span) };
    let t_end = (t2 + 0.5 * span).min(w1);
    let x1 = sampling::uniform_in_box(&mut rng, &s.state_box);
    let x2 = if index.is_multiple_of(4) { x1.clone() } else { sampling::uniform_in_box(&mut rng, &s.state_box) };
    let switches = rng.random_range(1..=6);
    let mut times: Vec<f64> = (0..switches).map(|_| rng.random_range(t1..t_end.max(t1 + h))).collect();
    times.push(t1);
    times.sort_by(f64::total_cmp);
    times.dedup();
    let values = times.iter().map(|_| s.controls.values[rng.random_range(0..s.controls.len())].clone()).collect();
    let ctrl = ControlSignal::piecewise_constant(times, values)?;

    let head = integrate(s, t1, &x1, &ctrl, t2, h)?;
    let a = integrate(s, t2, head.last_state(), &ctrl, t_end, h)?;
    let b = integrate(s, t2, &x2, &ctrl, t_end, h)?;
    let d0 = geometry::time_state_dist(t1, &x1, t2, &x2);
    let dx0 = geometry::dist(&x1, &x2);
    let mut ratio_excess = f64::NEG_INFINITY;
    let mut equal_excess = f64::NEG_INFINITY;
    for ((t, xa), xb) in a.times.iter().zip(&a.states).zip(&b.states) {
        let gap = geometry::dist(xa, xb);
        ratio_excess = ratio_excess.max(gap - consts.lambda_r(r, *t) * d0);
        if t1 == t2 {
            equal_excess = equal_excess.max(gap - (consts.l_fbar * (t - t2)).exp() * dx0);
        }
    }
    Ok((ratio_excess, equal_excess))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Scenario {
        Scenario::load(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/toy.scn")).unwrap()
    }

    #[test]
    fn prox_examples() {
        let s = toy();
        // k = u² α = 4 · 0.5 = 2 at u = 2, so h = 0.1 gives weight 0.2.
        assert_eq!(prox_friction_step(&s, 0.0, &[1.0], &[2.0], 0.1, &[0.1])[0], 0.0);
        assert!((prox_friction_step(&s, 0.0, &[1.0], &[2.0], 0.1, &[0.5])[0] - 0.3).abs() < 1e-15);
        assert_eq!(prox_friction_step(&s, 0.0, &[1.0], &[0.0], 0.1, &[0.7])[0], 0.7);
    }

    #[test]
    fn step_examples() {
        let s = toy();
        assert!((step(&s, 0.0, &[-1.0], &[2.0], 0.1)[0] + 0.8).abs() < 1e-15);
        assert!((step(&s, 0.0, &[1.0], &[1.0], 0.1)[0] - 1.05).abs() < 1e-15);
        assert_eq!(step(&s, 0.0, &[0.0], &[2.0], 0.1)[0], 0.0);
    }

    #[test]
    fn witness_reconstructs_step() {
        let s = toy();
        for (x, u) in [(0.0, 2.0), (0.05, 1.5), (-0.3, 2.0), (0.7, -1.0)] {
            let h = 0.1;
            let (z, w) = step_with_witness(&s, 0.0, &[x], &[u], h);
            let k = s.k(0.0, &[x], &[u], &s.measure.atoms[0].alpha);
            let v = u - s.measure.atoms[0].weight * k * w.xi[0][0];
            assert!(((z[0] - x) / h - v).abs() < 1e-12, "x = {x}, u = {u}");
            assert!(s.atom_potential(0).subdifferential(z[0]).contains(w.xi[0][0], 1e-15));
        }
    }

    #[test]
    fn integrate_edges() {
        let s = toy();
        let c = ControlSignal::constant(&[2.0]);
        let tr = integrate(&s, 0.0, &[-1.0], &c, 0.0, 1e-3).unwrap();
        assert_eq!(tr.len(), 1);
        let tr = integrate(&s, 0.0, &[0.0], &c, 1.0, 1e-3).unwrap();
        assert!(tr.states.iter().all(|x| x[0].abs() <= 1e-9));
        assert_eq!(tr.last_time(), 1.0);
        let tr = integrate(&s, 0.0, &[-0.05], &c, 0.0255, 1e-2).unwrap();
        assert_eq!(tr.times.len(), 4);
        assert!((tr.times[3] - 0.0255).abs() < 1e-15);
        assert_eq!(tr.events().len(), 1);
    }

    #[test]
    fn piecewise_control_lookup() {
        let c =
            ControlSignal::piecewise_constant(vec![0.0, 1.0], vec![geometry::point(&[2.0]), geometry::point(&[1.0])])
                .unwrap();
        assert_eq!(c.at(-1.0, &[0.0])[0], 2.0);
        assert_eq!(c.at(0.5, &[0.0])[0], 2.0);
        assert_eq!(c.at(1.0, &[0.0])[0], 1.0);
        assert!(ControlSignal::piecewise_constant(vec![1.0, 1.0], vec![geometry::point(&[0.0]); 2]).is_err());
    }
}
