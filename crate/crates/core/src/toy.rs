//! Closed-form solution of the one-sided friction example: `v̇ ∈ u - (u²/2) ∂relu(v)`,
//! `u ∈ [-2, 2]`, target `[r, ∞)`, cost `C t + 1/v²`.

use crate::sets::ConvexSet1D;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyValue {
    pub c: f64,
    pub r: f64,
}

impl ToyValue {
    pub fn new(c: f64, r: f64) -> Self {
        ToyValue { c, r }
    }

    /// Stationary speed of `W` along `v̇ = 1/2`.
    pub fn v_star(&self) -> f64 {
        self.c.powf(-1.0 / 3.0)
    }

    /// Level at which the optimal trajectory stops: `v*` when it lies in the
    /// target, else the target edge `r`.
    pub fn level(&self) -> f64 {
        self.v_star().max(self.r)
    }

    pub fn value(&self, t: f64, v: f64) -> f64 {
        let (c, l) = (self.c, self.level());
        if v >= l {
            c * t + 1.0 / (v * v)
        } else if v >= 0.0 {
            2.0 * c * l - 2.0 * c * v + c * t + 1.0 / (l * l)
        } else {
            2.0 * c * l - c * v / 2.0 + c * t + 1.0 / (l * l)
        }
    }

    pub fn cost(&self, t: f64, v: f64) -> f64 {
        self.c * t + 1.0 / (v * v)
    }

    /// Time the optimal trajectory needs before it stops.
    pub fn completion_time(&self, v: f64) -> f64 {
        let l = self.level();
        if v >= l {
            0.0
        } else if v >= 0.0 {
            2.0 * (l - v)
        } else {
            -v / 2.0 + 2.0 * l
        }
    }

    /// Whether `V` is differentiable at `v`: everywhere except the kink at 0
    /// and, when `v* < r`, the target edge.
    pub fn is_differentiable(&self, v: f64) -> bool {
        v != 0.0 && !(self.r > self.v_star() && v == self.r)
    }

    /// `(∂_t V, ∂_v V)` at a differentiability point.
    pub fn gradient(&self, _t: f64, v: f64) -> (f64, f64) {
        let l = self.level();
        let dv = if v >= l {
            -2.0 / (v * v * v)
        } else if v > 0.0 {
            -2.0 * self.c
        } else {
            -self.c / 2.0
        };
        (self.c, dv)
    }

    /// `v`-components of the proximal superdifferential at `v = 0`.
    pub fn superdifferential_at_zero(&self) -> ConvexSet1D {
        ConvexSet1D::new(-2.0 * self.c, -self.c / 2.0)
    }

    /// Optimal feedback `ū(v)`: full thrust below the kink, the speed
    /// maximizing control above it, and holding once the level is reached.
    pub fn feedback(&self, v: f64) -> f64 {
        if v < 0.0 {
            2.0
        } else if v < self.level() {
            1.0
        } else {
            0.0
        }
    }

    pub fn fbar(v: f64) -> ConvexSet1D {
        if v > 0.0 {
            ConvexSet1D::new(-4.0, 0.5)
        } else if v == 0.0 {
            ConvexSet1D::new(-4.0, 2.0)
        } else {
            ConvexSet1D::new(-2.0, 2.0)
        }
    }

    /// `min_{ξ ∈ F̄(t, r)} <(0, -1), (1, ξ)>` at the target edge.
    pub fn ipc_value(&self) -> f64 {
        -Self::fbar(self.r).hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        let v = ToyValue::new(1.0, 0.8);
        assert_eq!(v.v_star(), 1.0);
        assert_eq!(v.value(0.0, 2.0), 0.25);
        assert_eq!(v.value(0.0, 0.5), 2.0);
        assert_eq!(v.value(0.0, -1.0), 3.5);
        assert_eq!(v.value(0.0, 1.0), 1.0);
        assert_eq!(v.ipc_value(), -0.5);
        assert!((ToyValue::new(8.0, 0.4).v_star() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn continuity_across_branches() {
        for (c, r) in [(1.0, 0.8), (8.0, 0.4), (1.0, 1.2)] {
            let v = ToyValue::new(c, r);
            let l = v.level();
            assert!((v.value(0.3, l) - v.value(0.3, l - 1e-12)).abs() < 1e-9);
            assert!((v.value(0.3, 0.0) - v.value(0.3, -1e-12)).abs() < 1e-9);
        }
    }

    #[test]
    fn value_matches_cost_at_completion() {
        let v = ToyValue::new(1.0, 0.8);
        for v0 in [-1.5, -0.2, 0.0, 0.3, 0.9] {
            let t = v.completion_time(v0);
            assert!((v.value(0.0, v0) - v.cost(t, v.level())).abs() < 1e-12);
        }
    }
}
