//! Inner approximations of proximal sub- and superdifferentials by
//! candidate search.

use crate::geometry::{self, Point};
use crate::verify::ValueFn;

const DIRECTIONS_2D: usize = 16;
const MAGNITUDES: usize = 16;
/// Probe radii are `ε · 2^-k` for `k = 0..=RADIUS_LEVELS`.
pub const RADIUS_LEVELS: i32 = 8;
const MIN_SPREAD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    /// Covector `(p_t, p_x)`.
    pub covector: Point,
    /// Smallest quadratic constant that makes the inequality hold on every sample.
    pub m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProximalProbe {
    pub t: f64,
    pub x: Point,
    pub eps: f64,
    pub m_max: f64,
    /// Value at the probe point.
    pub value: f64,
    /// Finite-difference centre of the candidate grid.
    pub center: Point,
    /// Sample points `(t, x)` with their values.
    pub samples: Vec<(Point, f64)>,
    pub sub: Vec<Candidate>,
    pub sup: Vec<Candidate>,
}

impl ProximalProbe {
    pub fn sub_empty(&self) -> bool {
        self.sub.is_empty()
    }

    pub fn sup_empty(&self) -> bool {
        self.sup.is_empty()
    }
}

/// Unit directions in `R^d`: evenly spaced angles for `d = 2`, normalized
/// nonzero points of `{-1, 0, 1}^d` otherwise.
pub fn unit_directions(d: usize) -> Vec<Point> {
    if d == 2 {
        return (0..DIRECTIONS_2D)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / DIRECTIONS_2D as f64;
                geometry::point(&[a.cos(), a.sin()])
            })
            .collect();
    }
    let total = 3usize.pow(d as u32);
    (0..total)
        .filter_map(|mut code| {
            let p: Point = (0..d)
                .map(|_| {
                    let c = (code % 3) as f64 - 1.0;
                    code /= 3;
                    c
                })
                .collect();
            let n = geometry::norm(&p);
            (n > 0.0).then(|| p.iter().map(|v| v / n).collect())
        })
        .collect()
}

fn eval(f: &dyn ValueFn, z: &[f64]) -> Option<f64> {
    f.value(z[0], &z[1..])
}

/// Central difference where both sides are finite, one-sided otherwise.
/// Also returns the largest jump between forward and backward slopes.
fn centre_and_spread(f: &dyn ValueFn, z: &[f64], fz: f64, step: f64) -> (Point, f64) {
    let mut c = Point::new();
    let mut spread = 0.0f64;
    for i in 0..z.len() {
        let mut zp: Point = geometry::point(z);
        let mut zm: Point = geometry::point(z);
        zp[i] += step;
        zm[i] -= step;
        let fwd = eval(f, &zp).filter(|v| v.is_finite()).map(|v| (v - fz) / step);
        let bwd = eval(f, &zm).filter(|v| v.is_finite()).map(|v| (fz - v) / step);
        c.push(match (fwd, bwd) {
            (Some(a), Some(b)) => {
                spread = spread.max((a - b).abs());
                0.5 * (a + b)
            }
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => 0.0,
        });
    }
    (c, spread)
}

/// Searches covectors `center + m·e` over a direction × magnitude grid and
/// keeps those satisfying the proximal inequality
/// `<ξ, y - z> <= f(y) - f(z) + M |y - z|²` (sub) or its hypograph mirror
/// (sup) at every sample `y` within `eps`, for some `M <= m_max`.
pub fn proximal_probe(f: &dyn ValueFn, t: f64, x: &[f64], eps: f64, m_max: f64) -> ProximalProbe {
    let mut z: Point = geometry::point(&[t]);
    z.extend_from_slice(x);
    let d = z.len();
    let empty = |value: f64| ProximalProbe {
        t,
        x: geometry::point(x),
        eps,
        m_max,
        value,
        center: Point::new(),
        samples: vec![],
        sub: vec![],
        sup: vec![],
    };
    let Some(fz) = eval(f, &z).filter(|v| v.is_finite()) else {
        return empty(f64::INFINITY);
    };
    let dirs = unit_directions(d);
    let mut samples = Vec::new();
    for e in &dirs {
        for k in 0..=RADIUS_LEVELS {
            let r = eps * 2f64.powi(-k);
            let y = geometry::axpy(&z, r, e);
            if let Some(fy) = eval(f, &y) {
                samples.push((y, fy));
            }
        }
    }
    let (center, spread) = centre_and_spread(f, &z, fz, eps * 2f64.powi(-4));
    let scale = spread.max(MIN_SPREAD);

    let mut covectors = vec![center.clone()];
    for e in &dirs {
        for j in 1..MAGNITUDES {
            covectors.push(geometry::axpy(&center, scale * j as f64 / (MAGNITUDES - 1) as f64, e));
        }
    }

    let required = |xi: &[f64], sign: f64| -> f64 {
        let mut m = 0.0f64;
        for (y, fy) in &samples {
            let dy: Point = y.iter().zip(&z).map(|(a, b)| a - b).collect();
            let r2 = geometry::dot(&dy, &dy);
            let lin = geometry::dot(xi, &dy);
            // sub: lin - (fy - fz) <= M r²; sup: (fy - fz) - lin <= M r².
            let gap = sign * (lin - (fy - fz));
            if gap.is_nan() {
                continue;
            }
            m = m.max(gap / r2);
        }
        m
    };
    let mut sub = Vec::new();
    let mut sup = Vec::new();
    for xi in covectors {
        let ms = required(&xi, 1.0);
        if ms <= m_max {
            sub.push(Candidate { covector: xi.clone(), m: ms });
        }
        let mp = required(&xi, -1.0);
        if mp <= m_max {
            sup.push(Candidate { covector: xi, m: mp });
        }
    }
    ProximalProbe { t, x: geometry::point(x), eps, m_max, value: fz, center, samples, sub, sup }
}
