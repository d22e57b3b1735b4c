//! The relaxed state `z = (ρ, v, m)`.

use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

/// A point of the relaxed state space ℝ⁵.
///
/// `v = 2u + (0, ρ)` where `u` is the Darcy velocity, and `m` is the relaxed
/// mass flux.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateZ {
    pub rho: f64,
    pub v: [f64; 2],
    pub m: [f64; 2],
}

impl StateZ {
    pub const ZERO: StateZ = StateZ { rho: 0.0, v: [0.0; 2], m: [0.0; 2] };

    pub const fn new(rho: f64, v: [f64; 2], m: [f64; 2]) -> Self {
        StateZ { rho, v, m }
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        StateZ { rho: a[0], v: [a[1], a[2]], m: [a[3], a[4]] }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.rho, self.v[0], self.v[1], self.m[0], self.m[1]]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }

    /// Euclidean norm in ℝ⁵.
    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &StateZ) -> f64 {
        self.to_array().iter().zip(other.to_array()).map(|(a, b)| a * b).sum()
    }

    /// Velocity `u = (v − (0, ρ)) / 2`.
    pub fn velocity(&self) -> [f64; 2] {
        [0.5 * self.v[0], 0.5 * (self.v[1] - self.rho)]
    }

    /// The flux matrix `T z`; column `j` is the flux in direction `j` of
    /// `(x₁, x₂, t)`. Each row is one of the three linear equations
    /// `∇·(Tz) = 0`.
    pub fn flux_matrix(&self) -> [[f64; 3]; 3] {
        let (r, v, m) = (self.rho, self.v, self.m);
        [
            [v[0], v[1] - r, 0.0],
            [v[1] + r, -v[0], 0.0],
            [m[0], m[1], r],
        ]
    }
}

impl Add for StateZ {
    type Output = StateZ;
    fn add(self, o: StateZ) -> StateZ {
        StateZ {
            rho: self.rho + o.rho,
            v: [self.v[0] + o.v[0], self.v[1] + o.v[1]],
            m: [self.m[0] + o.m[0], self.m[1] + o.m[1]],
        }
    }
}

impl AddAssign for StateZ {
    fn add_assign(&mut self, o: StateZ) {
        *self = *self + o;
    }
}

impl Sub for StateZ {
    type Output = StateZ;
    fn sub(self, o: StateZ) -> StateZ {
        self + (-o)
    }
}

impl Neg for StateZ {
    type Output = StateZ;
    fn neg(self) -> StateZ {
        self * -1.0
    }
}

impl Mul<f64> for StateZ {
    type Output = StateZ;
    fn mul(self, s: f64) -> StateZ {
        StateZ {
            rho: self.rho * s,
            v: [self.v[0] * s, self.v[1] * s],
            m: [self.m[0] * s, self.m[1] * s],
        }
    }
}

/// Centered second-order finite-difference divergence of a matrix field
/// `F(y)`, `y = (x₁, x₂, t)`: returns `Σ_j ∂_j F[row][j]` for each row.
pub fn divergence_fd(f: impl Fn([f64; 3]) -> [[f64; 3]; 3], y: [f64; 3], h: f64) -> [f64; 3] {
    let mut out = [0.0; 3];
    for j in 0..3 {
        let mut yp = y;
        let mut ym = y;
        yp[j] += h;
        ym[j] -= h;
        let (fp, fm) = (f(yp), f(ym));
        for (row, o) in out.iter_mut().enumerate() {
            *o += (fp[row][j] - fm[row][j]) / (2.0 * h);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn array_round_trip() {
        let z = StateZ::new(0.1, [0.2, 0.3], [0.4, 0.5]);
        assert_eq!(StateZ::from_array(z.to_array()), z);
    }

    #[test]
    fn velocity_recovers_u() {
        // v = 2u + (0, ρ) with u = (0.1, -0.2), ρ = 0.5
        let z = StateZ::new(0.5, [0.2, 0.1], [0.0, 0.0]);
        let u = z.velocity();
        assert!((u[0] - 0.1).abs() < 1e-15 && (u[1] + 0.2).abs() < 1e-15);
    }

    #[test]
    fn divergence_of_linear_flux() {
        // F = [[x, 0, 0], [0, 2y, 0], [0, 0, 3t]] has divergence (1, 2, 3)
        let f = |y: [f64; 3]| [[y[0], 0.0, 0.0], [0.0, 2.0 * y[1], 0.0], [0.0, 0.0, 3.0 * y[2]]];
        let d = divergence_fd(f, [0.3, -0.2, 0.7], 1e-3);
        for (a, b) in d.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn arithmetic() {
        let a = StateZ::new(1.0, [2.0, 3.0], [4.0, 5.0]);
        let b = a * 2.0 - a;
        assert_eq!(a, b);
        assert_eq!((a + -a).norm(), 0.0);
    }
}
