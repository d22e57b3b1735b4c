//! Localized plane waves generated from a third-order potential.
//!
//! An atom on a cube `C` is built from two scalar potentials
//! `φ = ψ·(a/κ²)H(θ)` and `ϕ = ψ·(b/κ)H'(θ)`, where `θ = κ ξ·(y − y_c)`,
//! `κ = k/s` and `ψ` is the tensor-product cutoff of `C`. Reading the fields
//! off as second derivatives of `φ` and first derivatives of `ϕ` makes every
//! atom an exact solution of the linear system `∇·(Tz) = 0`.

use crate::geometry::in_wave_cone;
use crate::quadrature::{integrate_2d, Rule1d};
use crate::state::StateZ;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaveError {
    #[error("direction is not in the wave cone: |rho| = {rho}, |v| = {v}")]
    NotInCone { rho: f64, v: f64 },
    #[error("direction has non-finite components")]
    NonFinite,
    #[error("invalid atom: {0}")]
    InvalidAtom(String),
}

/// Periodic profile `h(τ) = cos(2πnτ)` with closed-form antiderivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub harmonic: u32,
}

impl Default for Profile {
    fn default() -> Self {
        Profile { harmonic: 1 }
    }
}

impl Profile {
    fn omega(&self) -> f64 {
        TAU * self.harmonic as f64
    }

    pub fn h(&self, tau: f64) -> f64 {
        (self.omega() * tau).cos()
    }

    /// `h'`.
    pub fn dh(&self, tau: f64) -> f64 {
        -self.omega() * (self.omega() * tau).sin()
    }

    /// First antiderivative `H' = H1`.
    pub fn h1(&self, tau: f64) -> f64 {
        (self.omega() * tau).sin() / self.omega()
    }

    /// Second antiderivative `H = H2`, with `H2'' = h`.
    pub fn h2(&self, tau: f64) -> f64 {
        let w = self.omega();
        -(w * tau).cos() / (w * w)
    }

    /// `‖h‖²` over one period.
    pub fn l2_norm_sq(&self) -> f64 {
        0.5
    }

    /// `∫₀¹ A(h(τ)) dτ`.
    pub fn average_of(&self, a: impl Fn(f64) -> f64) -> f64 {
        Rule1d::composite_gauss(0.0, 1.0, 64 * self.harmonic as usize, 6).integrate(|t| a(self.h(t)))
    }
}

/// Ramp shape of the one-dimensional cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ramp {
    /// `6r⁵ − 15r⁴ + 10r³` (C²).
    Quintic,
    /// `126r⁵ − 420r⁶ + 540r⁷ − 315r⁸ + 70r⁹` (C⁴).
    #[default]
    Nonic,
}

impl Ramp {
    /// Value, first and second derivative at `r ∈ [0, 1]`.
    fn eval(self, r: f64) -> [f64; 3] {
        let q = 1.0 - r;
        match self {
            Ramp::Quintic => [
                r * r * r * (10.0 + r * (-15.0 + 6.0 * r)),
                30.0 * r * r * q * q,
                60.0 * r * q * (1.0 - 2.0 * r),
            ],
            Ramp::Nonic => {
                let r2 = r * r;
                let r4 = r2 * r2;
                let q4 = q * q * q * q;
                [
                    r4 * r * (126.0 + r * (-420.0 + r * (540.0 + r * (-315.0 + 70.0 * r)))),
                    630.0 * r4 * q4,
                    2520.0 * r2 * r * q * q * q * (1.0 - 2.0 * r),
                ]
            }
        }
    }
}

/// Tensor-product cutoff equal to one on the middle `(1/8, 7/8)` fraction of
/// each side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Cutoff {
    pub ramp: Ramp,
}

/// Fraction of a cube side occupied by each ramp.
pub const RAMP_FRACTION: f64 = 0.125;

impl Cutoff {
    /// One-dimensional profile `χ(u)` on `[0, 1]` with its first two
    /// derivatives in `u`.
    pub fn chi(&self, u: f64) -> [f64; 3] {
        let inv = 1.0 / RAMP_FRACTION;
        if u <= 0.0 || u >= 1.0 {
            [0.0; 3]
        } else if u < RAMP_FRACTION {
            let [a, b, c] = self.ramp.eval(u * inv);
            [a, b * inv, c * inv * inv]
        } else if u > 1.0 - RAMP_FRACTION {
            let [a, b, c] = self.ramp.eval((1.0 - u) * inv);
            [a, -b * inv, c * inv * inv]
        } else {
            [1.0, 0.0, 0.0]
        }
    }
}

/// Space-time cube with equal spatial and temporal side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeCube {
    /// `(x₁, x₂, t)`.
    pub center: [f64; 3],
    pub side: f64,
    pub parity: u8,
}

/// Value, gradient and Hessian of a scalar in `(x₁, x₂, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet2 {
    pub val: f64,
    pub grad: [f64; 3],
    pub hess: [[f64; 3]; 3],
}

impl SpaceTimeCube {
    pub fn contains(&self, y: [f64; 3]) -> bool {
        (0..3).all(|j| (y[j] - self.center[j]).abs() <= 0.5 * self.side)
    }

    /// Inside the inner cube where the cutoff equals one.
    pub fn inner_contains(&self, y: [f64; 3]) -> bool {
        let r = (0.5 - RAMP_FRACTION) * self.side;
        (0..3).all(|j| (y[j] - self.center[j]).abs() < r)
    }

    /// The cutoff `ψ` with its derivatives up to order two.
    pub fn cutoff_jet(&self, cutoff: &Cutoff, y: [f64; 3]) -> Jet2 {
        let inv = 1.0 / self.side;
        let mut c = [[0.0; 3]; 3];
        for j in 0..3 {
            let u = (y[j] - self.center[j]) * inv + 0.5;
            let [a, b, d] = cutoff.chi(u);
            c[j] = [a, b * inv, d * inv * inv];
        }
        let mut jet = Jet2 { val: c[0][0] * c[1][0] * c[2][0], ..Jet2::default() };
        if jet.val == 0.0 && c.iter().any(|cj| cj == &[0.0; 3]) {
            return jet;
        }
        for i in 0..3 {
            let (o1, o2) = ((i + 1) % 3, (i + 2) % 3);
            jet.grad[i] = c[i][1] * c[o1][0] * c[o2][0];
            jet.hess[i][i] = c[i][2] * c[o1][0] * c[o2][0];
            for j in (i + 1)..3 {
                let o = 3 - i - j;
                let v = c[i][1] * c[j][1] * c[o][0];
                jet.hess[i][j] = v;
                jet.hess[j][i] = v;
            }
        }
        jet
    }
}

/// Space-time frequency `ξ = (ζ, ξ₀)` and the secondary coefficient `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveFrequency {
    pub zeta: [f64; 2],
    pub xi0: f64,
    pub b_coeff: f64,
}

impl WaveFrequency {
    /// Marker for the null atom.
    pub const NULL: WaveFrequency = WaveFrequency { zeta: [1.0, 0.0], xi0: 0.0, b_coeff: 0.0 };

    pub fn xi(&self) -> [f64; 3] {
        [self.zeta[0], self.zeta[1], self.xi0]
    }

    pub fn is_valid(&self) -> bool {
        let n = self.zeta[0].hypot(self.zeta[1]);
        self.xi0.is_finite() && self.b_coeff.is_finite() && (n - 1.0).abs() <= 1e-12
    }
}

/// Frequency whose plane wave has amplitude `zbar`.
pub fn solve_direction(zbar: &StateZ) -> Result<WaveFrequency, WaveError> {
    if !zbar.is_finite() {
        return Err(WaveError::NonFinite);
    }
    if !in_wave_cone(zbar, 1e-10) {
        return Err(WaveError::NotInCone { rho: zbar.rho.abs(), v: zbar.v[0].hypot(zbar.v[1]) });
    }
    let a = zbar.rho;
    let m = zbar.m;
    if a == 0.0 {
        let b = m[0].hypot(m[1]);
        if b == 0.0 {
            return Ok(WaveFrequency::NULL);
        }
        // b ζ⊥ = m̄ with ζ⊥ = (−ζ₂, ζ₁)
        return Ok(WaveFrequency { zeta: [m[1] / b, -m[0] / b], xi0: 0.0, b_coeff: b });
    }
    let mut eta = [zbar.v[0] / a, zbar.v[1] / a];
    let n = eta[0].hypot(eta[1]);
    eta = [eta[0] / n, eta[1] / n];
    let sign = if eta[0] < 0.0 { -1.0 } else { 1.0 };
    let z2 = (0.5 * (1.0 + eta[1])).max(0.0).sqrt();
    let z1 = sign * (0.5 * (1.0 - eta[1])).max(0.0).sqrt();
    let nz = z1.hypot(z2);
    let (z1, z2) = (z1 / nz, z2 / nz);
    // [[−aζ₁, −ζ₂], [−aζ₂, ζ₁]]·(ξ₀, b) = m̄, determinant −a
    let xi0 = -(m[0] * z1 + m[1] * z2) / a;
    let b = z1 * m[1] - z2 * m[0];
    Ok(WaveFrequency { zeta: [z1, z2], xi0, b_coeff: b })
}

/// The amplitude of the plane wave with density amplitude `a` and
/// frequency `freq`.
pub fn realized_direction(a: f64, freq: &WaveFrequency) -> StateZ {
    let [z1, z2] = freq.zeta;
    let (x0, b) = (freq.xi0, freq.b_coeff);
    StateZ::new(
        a,
        [2.0 * a * z1 * z2, a * (z2 * z2 - z1 * z1)],
        [-a * z1 * x0 - b * z2, -a * z2 * x0 + b * z1],
    )
}

/// `(T z̄)·ξ`, the symbol of the linear system applied to `zbar`.
pub fn symbol_residual(zbar: &StateZ, freq: &WaveFrequency) -> [f64; 3] {
    let t = zbar.flux_matrix();
    let xi = freq.xi();
    [0, 1, 2].map(|r| t[r][0] * xi[0] + t[r][1] * xi[1] + t[r][2] * xi[2])
}

/// One localized plane-wave perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveAtom {
    pub cube: SpaceTimeCube,
    pub direction: StateZ,
    pub freq: WaveFrequency,
    pub k: u32,
    pub profile: Profile,
    pub cutoff: Cutoff,
}

impl WaveAtom {
    /// Builds an atom, solving for the frequency of `direction`.
    pub fn new(cube: SpaceTimeCube, direction: StateZ, k: u32) -> Result<Self, WaveError> {
        let freq = solve_direction(&direction)?;
        WaveAtom::from_parts(cube, direction, freq, k)
    }

    /// Builds an atom from stored parts without re-solving the frequency.
    pub fn from_parts(
        cube: SpaceTimeCube,
        direction: StateZ,
        freq: WaveFrequency,
        k: u32,
    ) -> Result<Self, WaveError> {
        if k == 0 {
            return Err(WaveError::InvalidAtom("k must be at least 1".into()));
        }
        if !(cube.side > 0.0 && cube.side.is_finite()) || cube.center.iter().any(|c| !c.is_finite()) {
            return Err(WaveError::InvalidAtom("cube must have finite center and positive side".into()));
        }
        if !direction.is_finite() {
            return Err(WaveError::NonFinite);
        }
        if !freq.is_valid() {
            return Err(WaveError::InvalidAtom("frequency must have unit spatial part".into()));
        }
        Ok(WaveAtom {
            cube,
            direction,
            freq,
            k,
            profile: Profile::default(),
            cutoff: Cutoff::default(),
        })
    }

    /// Wavenumber `κ = k/s`.
    pub fn kappa(&self) -> f64 {
        self.k as f64 / self.cube.side
    }

    pub fn phase(&self, y: [f64; 3]) -> f64 {
        let xi = self.freq.xi();
        let c = self.cube.center;
        self.kappa() * (xi[0] * (y[0] - c[0]) + xi[1] * (y[1] - c[1]) + xi[2] * (y[2] - c[2]))
    }

    /// Jets of `φ` (to order two) and `ϕ` (to order one). Returns `None`
    /// outside the cube support.
    pub fn potential_jets(&self, y: [f64; 3]) -> Option<(Jet2, [f64; 4])> {
        if !self.cube.contains(y) {
            return None;
        }
        let psi = self.cube.cutoff_jet(&self.cutoff, y);
        if psi.val == 0.0 && psi.grad == [0.0; 3] && psi.hess == [[0.0; 3]; 3] {
            return None;
        }
        let a = self.direction.rho;
        let b = self.freq.b_coeff;
        let kap = self.kappa();
        let xi = self.freq.xi();
        let th = self.phase(y);
        let (h, h1, h2) = (self.profile.h(th), self.profile.h1(th), self.profile.h2(th));
        // plane-wave parts Φ = (a/κ²)H(θ), Φ̃ = (b/κ)H'(θ)
        let big = a / (kap * kap) * h2;
        let dbig = xi.map(|x| a / kap * h1 * x);
        let small = b / kap * h1;
        let dsmall = xi.map(|x| b * h * x);
        let mut phi = Jet2 { val: psi.val * big, ..Jet2::default() };
        for i in 0..3 {
            phi.grad[i] = psi.grad[i] * big + psi.val * dbig[i];
            for j in 0..3 {
                phi.hess[i][j] = psi.hess[i][j] * big
                    + psi.grad[i] * dbig[j]
                    + psi.grad[j] * dbig[i]
                    + psi.val * a * h * xi[i] * xi[j];
            }
        }
        let varphi = [
            psi.val * small,
            psi.grad[0] * small + psi.val * dsmall[0],
            psi.grad[1] * small + psi.val * dsmall[1],
            psi.grad[2] * small + psi.val * dsmall[2],
        ];
        Some((phi, varphi))
    }

    /// The scalar potential `φ`.
    pub fn potential_phi(&self, y: [f64; 3]) -> f64 {
        self.potential_jets(y).map_or(0.0, |(p, _)| p.val)
    }

    /// The secondary potential `ϕ`.
    pub fn potential_varphi(&self, y: [f64; 3]) -> f64 {
        self.potential_jets(y).map_or(0.0, |(_, q)| q[0])
    }

    /// The perturbation `z̃(y)`; exactly zero outside the cube.
    pub fn eval(&self, y: [f64; 3]) -> StateZ {
        let Some((p, q)) = self.potential_jets(y) else {
            return StateZ::ZERO;
        };
        let h = p.hess;
        StateZ::new(
            h[0][0] + h[1][1],
            [2.0 * h[0][1], h[1][1] - h[0][0]],
            [-h[2][0] - q[2], -h[2][1] + q[1]],
        )
    }

    /// The flux matrix assembled straight from the potentials, bypassing
    /// the state representation.
    pub fn potential_matrix(&self, y: [f64; 3]) -> [[f64; 3]; 3] {
        let Some((p, q)) = self.potential_jets(y) else {
            return [[0.0; 3]; 3];
        };
        let h = p.hess;
        [
            [2.0 * h[0][1], -2.0 * h[0][0], 0.0],
            [2.0 * h[1][1], -2.0 * h[0][1], 0.0],
            [-h[2][0] - q[2], -h[2][1] + q[1], h[0][0] + h[1][1]],
        ]
    }

    /// Leading part `ψ(y)·z̄·h(θ)`.
    pub fn principal_part(&self, y: [f64; 3]) -> StateZ {
        if !self.cube.contains(y) {
            return StateZ::ZERO;
        }
        let psi = self.cube.cutoff_jet(&self.cutoff, y).val;
        self.direction * (psi * self.profile.h(self.phase(y)))
    }

    /// Cutoff value `ψ(y)`.
    pub fn cutoff_value(&self, y: [f64; 3]) -> f64 {
        if !self.cube.contains(y) {
            return 0.0;
        }
        self.cube.cutoff_jet(&self.cutoff, y).val
    }

    /// Whether the stored frequency is the one solved from the direction.
    pub fn is_consistent(&self, tol: f64) -> bool {
        match solve_direction(&self.direction) {
            Ok(f) => {
                let d = [
                    f.zeta[0] - self.freq.zeta[0],
                    f.zeta[1] - self.freq.zeta[1],
                    f.xi0 - self.freq.xi0,
                    f.b_coeff - self.freq.b_coeff,
                ];
                d.iter().all(|x| x.abs() <= tol * (1.0 + self.direction.norm()))
            }
            Err(_) => false,
        }
    }
}

/// Lattice of `n³` points at fractions `(j + ½)/n` of the cube.
pub fn cube_lattice(cube: &SpaceTimeCube, n: usize) -> Vec<[f64; 3]> {
    let mut pts = Vec::with_capacity(n * n * n);
    let f = |j: usize, c: f64| c + cube.side * ((j as f64 + 0.5) / n as f64 - 0.5);
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                pts.push([f(i, cube.center[0]), f(j, cube.center[1]), f(l, cube.center[2])]);
            }
        }
    }
    pts
}

/// Max-norm FD residuals of the three rows of `∇·(Tz) = 0` for `z = z̃`.
pub fn atom_linear_residual(atom: &WaveAtom, spacing: f64) -> [f64; 3] {
    lattice_residual(atom, spacing, |y| atom.eval(y).flux_matrix())
}

/// Same residuals, differentiating the potential matrix directly.
pub fn atom_potential_residual(atom: &WaveAtom, spacing: f64) -> [f64; 3] {
    lattice_residual(atom, spacing, |y| atom.potential_matrix(y))
}

fn lattice_residual(atom: &WaveAtom, h: f64, f: impl Fn([f64; 3]) -> [[f64; 3]; 3]) -> [f64; 3] {
    let mut out = [0.0f64; 3];
    for y in cube_lattice(&atom.cube, 6) {
        let r = crate::state::divergence_fd(&f, y, h);
        for i in 0..3 {
            out[i] = out[i].max(r[i].abs());
        }
    }
    out
}

/// Sup-norm gap `|z̃ − ψ z̄ h(θ)|` sampled along lines in the wave direction
/// through a 16³ lattice, each line spanning one wavelength.
pub fn localization_gap(atom: &WaveAtom, samples_per_wavelength: usize) -> f64 {
    let n = samples_per_wavelength.max(4);
    let wl = 1.0 / atom.kappa();
    let z = atom.freq.zeta;
    let mut worst = 0.0f64;
    for y0 in cube_lattice(&atom.cube, 16) {
        for j in 0..n {
            let d = wl * (j as f64 / n as f64 - 0.5);
            let y = [y0[0] + d * z[0], y0[1] + d * z[1], y0[2]];
            worst = worst.max((atom.eval(y) - atom.principal_part(y)).norm());
        }
    }
    worst
}

/// Axis-aligned rectangle in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Rect {
    pub fn area(&self) -> f64 {
        (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])
    }
}

/// Result of [`oscillation_average`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillationAverage {
    pub value: f64,
    /// Predicted limit `∫g · ∫₀¹ A(h)`.
    pub limit: f64,
}

impl OscillationAverage {
    pub fn gap(&self) -> f64 {
        (self.value - self.limit).abs()
    }
}

/// Quadrature of `∫_rect g(x) A(h(k ξ·(x, t))) dx` with its `k → ∞` limit.
pub fn oscillation_average(
    profile: &Profile,
    a: impl Fn(f64) -> f64,
    g: impl Fn([f64; 2]) -> f64,
    rect: &Rect,
    freq: &WaveFrequency,
    k: u32,
    t: f64,
) -> OscillationAverage {
    let kf = k.max(1) as f64;
    let h = profile.harmonic as f64;
    let cells = |w: f64, z: f64| (2.0 * kf * h * w * z.abs()).ceil() as usize + 8;
    let rx = Rule1d::composite_gauss(rect.lo[0], rect.hi[0], cells(rect.hi[0] - rect.lo[0], freq.zeta[0]), 5);
    let ry = Rule1d::composite_gauss(rect.lo[1], rect.hi[1], cells(rect.hi[1] - rect.lo[1], freq.zeta[1]), 5);
    let value = integrate_2d(&rx, &ry, |x1, x2| {
        let th = kf * (freq.zeta[0] * x1 + freq.zeta[1] * x2 + freq.xi0 * t);
        g([x1, x2]) * a(profile.h(th))
    });
    let gint = integrate_2d(&rx, &ry, |x1, x2| g([x1, x2]));
    OscillationAverage { value, limit: gint * profile.average_of(a) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::loglog_slope;
    use proptest::prelude::*;

    fn unit_cube() -> SpaceTimeCube {
        SpaceTimeCube { center: [0.2, -0.1, 0.7], side: 1.0, parity: 0 }
    }

    fn sample_atom(k: u32) -> WaveAtom {
        let e = [0.6f64, 0.8];
        let dir = StateZ::new(0.4, [0.4 * e[0], 0.4 * e[1]], [0.3, -0.2]);
        WaveAtom::new(unit_cube(), dir, k).unwrap()
    }

    #[test]
    fn profile_invariants() {
        let p = Profile::default();
        let r = Rule1d::composite_gauss(0.0, 1.0, 16, 6);
        assert!(r.integrate(|t| p.h(t)).abs() < 1e-12);
        assert!((r.integrate(|t| p.h(t).powi(2)) - p.l2_norm_sq()).abs() < 1e-12);
        for i in 0..1000 {
            let t = i as f64 / 997.0;
            assert!(p.h(t).abs() <= 1.0 && p.h2(t).abs() <= 1.0);
            let e = 1e-4;
            let fd2 = (p.h2(t + e) - 2.0 * p.h2(t) + p.h2(t - e)) / (e * e);
            assert!((fd2 - p.h(t)).abs() < 1e-6);
            let fd1 = (p.h2(t + e) - p.h2(t - e)) / (2.0 * e);
            assert!((fd1 - p.h1(t)).abs() < 1e-7);
            let fdh = (p.h(t + e) - p.h(t - e)) / (2.0 * e);
            assert!((fdh - p.dh(t)).abs() < 1e-6);
        }
    }

    #[test]
    fn cutoff_shape() {
        for ramp in [Ramp::Quintic, Ramp::Nonic] {
            let c = Cutoff { ramp };
            assert_eq!(c.chi(0.0), [0.0; 3]);
            assert_eq!(c.chi(0.5), [1.0, 0.0, 0.0]);
            assert_eq!(c.chi(1.2), [0.0; 3]);
            let at = c.chi(0.125 - 1e-13);
            assert!((at[0] - 1.0).abs() < 1e-9 && at[1].abs() < 1e-6);
            // symmetry and derivative consistency
            for u in [0.01, 0.05, 0.1, 0.9, 0.97] {
                let [v, d1, d2] = c.chi(u);
                assert!((v - c.chi(1.0 - u)[0]).abs() < 1e-12);
                let e = 1e-6;
                assert!((d1 - (c.chi(u + e)[0] - c.chi(u - e)[0]) / (2.0 * e)).abs() < 1e-5);
                assert!((d2 - (c.chi(u + e)[1] - c.chi(u - e)[1]) / (2.0 * e)).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn cutoff_jet_matches_fd() {
        let cube = unit_cube();
        let c = Cutoff::default();
        let y = [0.2 - 0.45, -0.1 + 0.44, 0.7 - 0.05];
        let jet = cube.cutoff_jet(&c, y);
        let e = 1e-5;
        for i in 0..3 {
            let mut yp = y;
            let mut ym = y;
            yp[i] += e;
            ym[i] -= e;
            let g = (cube.cutoff_jet(&c, yp).val - cube.cutoff_jet(&c, ym).val) / (2.0 * e);
            assert!((g - jet.grad[i]).abs() < 1e-6, "grad {i}");
            for j in 0..3 {
                let h = (cube.cutoff_jet(&c, yp).grad[j] - cube.cutoff_jet(&c, ym).grad[j]) / (2.0 * e);
                assert!((h - jet.hess[i][j]).abs() < 1e-4, "hess {i}{j}");
            }
        }
    }

    #[test]
    fn solve_direction_examples() {
        let f = solve_direction(&StateZ::new(1.0, [0.0, 1.0], [0.0, 0.0])).unwrap();
        assert_eq!(f.zeta, [0.0, 1.0]);
        assert!(f.xi0 == 0.0 && f.b_coeff == 0.0);
        let f = solve_direction(&StateZ::new(0.0, [0.0, 0.0], [1.0, 0.0])).unwrap();
        assert_eq!((f.zeta, f.b_coeff), ([0.0, -1.0], 1.0));
        let f = solve_direction(&StateZ::new(1.0, [1.0, 0.0], [0.0, 0.0])).unwrap();
        let r = 0.5f64.sqrt();
        assert!((f.zeta[0] - r).abs() < 1e-15 && (f.zeta[1] - r).abs() < 1e-15);
        assert!(f.xi0 == 0.0 && f.b_coeff == 0.0);
        assert_eq!(solve_direction(&StateZ::ZERO).unwrap(), WaveFrequency::NULL);
        assert!(matches!(
            solve_direction(&StateZ::new(1.0, [0.0, 2.0], [0.0, 0.0])),
            Err(WaveError::NotInCone { .. })
        ));
    }

    #[test]
    fn sign_flip_changes_only_b() {
        let z = StateZ::new(0.5, [0.3, -0.4], [0.2, 0.7]);
        let f = solve_direction(&z).unwrap();
        let g = solve_direction(&-z).unwrap();
        assert_eq!(f.zeta, g.zeta);
        assert!((f.xi0 - g.xi0).abs() < 1e-15 && (f.b_coeff + g.b_coeff).abs() < 1e-15);
    }

    #[test]
    fn outside_cube_is_zero() {
        let a = sample_atom(8);
        assert_eq!(a.eval([5.0, 0.0, 0.7]), StateZ::ZERO);
        assert_eq!(a.eval([0.2, -0.1, 1.2 + 1e-9]), StateZ::ZERO);
    }

    #[test]
    fn rho_matches_laplacian_of_potential() {
        let a = sample_atom(3);
        let h = 1e-3;
        for y in cube_lattice(&a.cube, 5) {
            let f = |d: [f64; 3]| a.potential_phi([y[0] + d[0], y[1] + d[1], y[2]]);
            let mut lap = 0.0;
            for dir in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]] {
                let s = |m: f64| f([m * h * dir[0], m * h * dir[1], 0.0]);
                lap += (-s(2.0) + 16.0 * s(1.0) - 30.0 * s(0.0) + 16.0 * s(-1.0) - s(-2.0)) / (12.0 * h * h);
            }
            assert!((lap - a.eval(y).rho).abs() < 1e-6, "{lap} vs {}", a.eval(y).rho);
        }
    }

    #[test]
    fn inner_cube_is_pure_wave() {
        let a = sample_atom(5);
        let y = [0.25, -0.05, 0.72];
        assert!(a.cube.inner_contains(y));
        assert!((a.eval(y) - a.principal_part(y)).norm() < 1e-12);
    }

    #[test]
    fn linear_residual_second_order_and_paths_agree() {
        let a = sample_atom(2);
        let hs = [1e-2, 5e-3, 2.5e-3];
        let res: Vec<[f64; 3]> = hs.iter().map(|&h| atom_linear_residual(&a, h)).collect();
        for row in 0..3 {
            let y: Vec<f64> = res.iter().map(|r| r[row]).collect();
            assert!(loglog_slope(&hs, &y) >= 1.8, "row {row}: {y:?}");
        }
        for h in hs {
            let p = atom_potential_residual(&a, h);
            let q = atom_linear_residual(&a, h);
            for i in 0..3 {
                assert!((p[i] - q[i]).abs() < 1e-10);
            }
        }
        let null = WaveAtom::new(unit_cube(), StateZ::ZERO, 4).unwrap();
        assert_eq!(atom_linear_residual(&null, 1e-2), [0.0; 3]);
    }

    #[test]
    fn zero_mean_components() {
        let a = sample_atom(2);
        let c = a.cube;
        let r = |j: usize| Rule1d::composite_gauss(c.center[j] - 0.5, c.center[j] + 0.5, 16, 6);
        let (r0, r1, r2) = (r(0), r(1), r(2));
        let mut sum = [0.0; 5];
        let mut mass = [0.0; 5];
        for (&x, &wx) in r0.nodes.iter().zip(&r0.weights) {
            for (&y, &wy) in r1.nodes.iter().zip(&r1.weights) {
                for (&t, &wt) in r2.nodes.iter().zip(&r2.weights) {
                    let z = a.eval([x, y, t]).to_array();
                    for i in 0..5 {
                        sum[i] += wx * wy * wt * z[i];
                        mass[i] += wx * wy * wt * z[i].abs();
                    }
                }
            }
        }
        for i in 0..5 {
            assert!(sum[i].abs() <= 1e-8 * mass[i], "component {i}: {} / {}", sum[i], mass[i]);
        }
    }

    #[test]
    fn localization_gap_decays() {
        let ks = [8u32, 16, 32, 64];
        let gaps: Vec<f64> = ks.iter().map(|&k| localization_gap(&sample_atom(k), 16)).collect();
        let kf: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
        assert!(loglog_slope(&kf, &gaps) <= -0.9, "{gaps:?}");
    }

    #[test]
    fn amplitude_bound() {
        // sup |ρ̃| ≤ |ρ̄|(1 + C/k) with C stable under rescaling the cube
        let fitted = |side: f64| {
            let mut cs = Vec::new();
            for k in [8u32, 16, 32] {
                let mut a = sample_atom(k);
                a.cube.side = side;
                let mut sup = 0.0f64;
                for y in cube_lattice(&a.cube, 24) {
                    sup = sup.max(a.eval(y).rho.abs());
                }
                cs.push((sup / a.direction.rho.abs() - 1.0).max(0.0) * k as f64);
            }
            cs.into_iter().fold(0.0f64, f64::max)
        };
        let (c1, c2) = (fitted(1.0), fitted(0.25));
        assert!(c1 < 10.0 && c2 < 10.0);
        assert!((c1 - c2).abs() <= 0.5 * c1.max(c2) + 1e-9, "{c1} vs {c2}");
    }

    #[test]
    fn oscillation_average_examples() {
        let p = Profile::default();
        let rect = Rect { lo: [0.0, 0.0], hi: [1.0, 1.0] };
        let f = WaveFrequency { zeta: [0.6, 0.8], xi0: 0.5, b_coeff: 0.0 };
        let id = oscillation_average(&p, |w| w, |_| 1.0, &rect, &f, 8, 0.3);
        assert!(id.limit.abs() < 1e-12);
        let sq = oscillation_average(&p, |w| w * w, |_| 1.0, &rect, &f, 64, 0.7);
        assert!((sq.limit - 0.5).abs() < 1e-12);
        assert!(sq.gap() <= 0.02);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn frequency_solves_symbol(r in -2.0f64..2.0, ang in 0.0f64..6.3, m1 in -3.0f64..3.0, m2 in -3.0f64..3.0) {
            prop_assume!(r.abs() > 1e-3);
            let z = StateZ::new(r, [r.abs() * ang.cos(), r.abs() * ang.sin()], [m1, m2]);
            let f = solve_direction(&z).unwrap();
            prop_assert!(f.is_valid());
            let res = symbol_residual(&z, &f);
            for x in res {
                prop_assert!(x.abs() <= 1e-12 * z.norm().max(1.0));
            }
            prop_assert!((realized_direction(r, &f) - z).norm() <= 1e-12 * z.norm());
        }
    }
}
