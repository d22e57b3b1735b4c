//! The coarse-grained mixing-zone state `z̆ = (ρ̆, v̆, m̆)`.
//!
//! Inside the mixing zone the density is the linear profile `ρ̆ = λ` in the
//! coordinates `x = 𝐱(s, λ, t) = (s, f(s, t) + cλt)`. The flat interface has
//! a closed form; sampled interfaces get their velocity from a spectral
//! Biot–Savart solve and their flux from a column-wise closure.

use crate::geometry::{hull_contains, HullParams};
use crate::state::StateZ;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SubsolutionError {
    #[error("time must be positive, got {0}")]
    InvalidTime(f64),
    #[error("mixing speed c must lie in the admissible range (0,2), got {0}")]
    InvalidSpeed(f64),
    #[error("point ({x1}, {x2}) lies outside the mixing zone at t = {t}")]
    OutsideMixingZone { x1: f64, x2: f64, t: f64 },
    #[error("interface samples do not cover (s, t) = ({s}, {t})")]
    OutOfRange { s: f64, t: f64 },
    #[error("interface table: {0}")]
    Table(String),
    #[error("non-neutral source: zero mode {0:e} exceeds 1e-10")]
    NonNeutralData(f64),
    #[error("invalid settings: {0}")]
    Settings(String),
}

/// Interface samples `f(s, t)` on a tensor grid, cubic in `s` and linear
/// in `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledInterface {
    s: Vec<f64>,
    t: Vec<f64>,
    /// Row-major in `t` then `s`.
    f: Vec<f64>,
    /// Natural-spline second derivatives per time row.
    d2: Vec<f64>,
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

/// Second derivatives of the natural cubic spline through `(x, y)`.
fn natural_spline(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior equations
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        let a = h0 / 6.0;
        let b = (h0 + h1) / 3.0;
        let cc = h1 / 6.0;
        let r = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
        let denom = b - a * c[i - 1];
        c[i] = cc / denom;
        d[i] = (r - a * d[i - 1]) / denom;
    }
    for i in (1..n - 1).rev() {
        m[i] = d[i] - c[i] * m[i + 1];
    }
    m
}

impl SampledInterface {
    pub fn new(s: Vec<f64>, t: Vec<f64>, f: Vec<f64>) -> Result<Self, SubsolutionError> {
        if s.len() < 2 || t.is_empty() {
            return Err(SubsolutionError::Table("need at least 2 s-samples and 1 t-sample".into()));
        }
        if !strictly_increasing(&s) || !strictly_increasing(&t) {
            return Err(SubsolutionError::Table("grids must be strictly increasing".into()));
        }
        if f.len() != s.len() * t.len() {
            return Err(SubsolutionError::Table(format!(
                "expected {} values, got {}",
                s.len() * t.len(),
                f.len()
            )));
        }
        if s.iter().chain(&t).chain(&f).any(|v| !v.is_finite()) {
            return Err(SubsolutionError::Table("non-finite value".into()));
        }
        let ns = s.len();
        let mut d2 = Vec::with_capacity(f.len());
        for row in f.chunks(ns) {
            d2.extend(natural_spline(&s, row));
        }
        Ok(SampledInterface { s, t, f, d2 })
    }

    /// Parses a `s,t,f` table, row-major in `t` then `s`.
    pub fn from_csv_str(text: &str) -> Result<Self, SubsolutionError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| SubsolutionError::Table(e.to_string()))?;
        if headers.iter().collect::<Vec<_>>() != ["s", "t", "f"] {
            return Err(SubsolutionError::Table("header must be `s,t,f`".into()));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.deserialize::<(f64, f64, f64)>().enumerate() {
            let r = rec.map_err(|e| SubsolutionError::Table(format!("row {}: {e}", i + 2)))?;
            rows.push(r);
        }
        let Some(&(_, t0, _)) = rows.first() else {
            return Err(SubsolutionError::Table("no data rows".into()));
        };
        let ns = rows.iter().take_while(|r| r.1 == t0).count();
        if rows.len() % ns != 0 {
            return Err(SubsolutionError::Table("incomplete grid".into()));
        }
        let s: Vec<f64> = rows[..ns].iter().map(|r| r.0).collect();
        let mut t = Vec::new();
        for (j, block) in rows.chunks(ns).enumerate() {
            let tj = block[0].1;
            if block.iter().any(|r| r.1 != tj) || block.iter().zip(&s).any(|(r, &sv)| r.0 != sv) {
                return Err(SubsolutionError::Table(format!("time block {j} does not match the s-grid")));
            }
            t.push(tj);
        }
        let f = rows.iter().map(|r| r.2).collect();
        SampledInterface::new(s, t, f)
    }

    pub fn s_grid(&self) -> &[f64] {
        &self.s
    }

    pub fn t_grid(&self) -> &[f64] {
        &self.t
    }

    /// Largest sampled `|f|`.
    pub fn f_abs_max(&self) -> f64 {
        self.f.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    fn row_eval(&self, j: usize, s: f64) -> (f64, f64) {
        let ns = self.s.len();
        let y = &self.f[j * ns..(j + 1) * ns];
        let m = &self.d2[j * ns..(j + 1) * ns];
        let i = match self.s.partition_point(|&v| v <= s) {
            0 => 0,
            p => (p - 1).min(ns - 2),
        };
        let h = self.s[i + 1] - self.s[i];
        let a = (self.s[i + 1] - s) / h;
        let b = (s - self.s[i]) / h;
        let val = a * y[i] + b * y[i + 1] + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h * h / 6.0;
        let der = (y[i + 1] - y[i]) / h + ((1.0 - 3.0 * a * a) * m[i] + (3.0 * b * b - 1.0) * m[i + 1]) * h / 6.0;
        (val, der)
    }

    /// `(f, ∂_s f, ∂_t f)` at `(s, t)`.
    pub fn eval(&self, s: f64, t: f64) -> Result<[f64; 3], SubsolutionError> {
        let (s0, s1) = (self.s[0], *self.s.last().unwrap());
        let (t0, t1) = (self.t[0], *self.t.last().unwrap());
        let tol = 1e-12 * (1.0 + s1.abs().max(s0.abs()));
        if !(s >= s0 - tol && s <= s1 + tol && t >= t0 - 1e-12 && t <= t1 + 1e-12) {
            return Err(SubsolutionError::OutOfRange { s, t });
        }
        let s = s.clamp(s0, s1);
        if self.t.len() == 1 {
            let (v, d) = self.row_eval(0, s);
            return Ok([v, d, 0.0]);
        }
        let j = match self.t.partition_point(|&v| v <= t) {
            0 => 0,
            p => (p - 1).min(self.t.len() - 2),
        };
        let w = ((t - self.t[j]) / (self.t[j + 1] - self.t[j])).clamp(0.0, 1.0);
        let (v0, d0) = self.row_eval(j, s);
        let (v1, d1) = self.row_eval(j + 1, s);
        Ok([(1.0 - w) * v0 + w * v1, (1.0 - w) * d0 + w * d1, (v1 - v0) / (self.t[j + 1] - self.t[j])])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Interface {
    Flat,
    Sampled(SampledInterface),
}

/// Speed of growth, final time and interface of the mixing zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingGeometry {
    c: f64,
    t_end: f64,
    interface: Interface,
}

pub fn check_speed(c: f64) -> Result<(), SubsolutionError> {
    if c.is_finite() && c > 0.0 && c < 2.0 {
        Ok(())
    } else {
        Err(SubsolutionError::InvalidSpeed(c))
    }
}

impl MixingGeometry {
    pub fn new(c: f64, t_end: f64, interface: Interface) -> Result<Self, SubsolutionError> {
        check_speed(c)?;
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(SubsolutionError::InvalidTime(t_end));
        }
        Ok(MixingGeometry { c, t_end, interface })
    }

    pub fn flat(c: f64, t_end: f64) -> Result<Self, SubsolutionError> {
        MixingGeometry::new(c, t_end, Interface::Flat)
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn interface(&self) -> &Interface {
        &self.interface
    }

    /// `(f, ∂_s f, ∂_t f)`.
    pub fn interface_jet(&self, s: f64, t: f64) -> Result<[f64; 3], SubsolutionError> {
        match &self.interface {
            Interface::Flat => Ok([0.0; 3]),
            Interface::Sampled(si) => si.eval(s, t),
        }
    }

    /// `𝐱(s, λ, t) = (s, f(s, t) + cλt)`.
    pub fn xmap(&self, s: f64, lambda: f64, t: f64) -> Result<[f64; 2], SubsolutionError> {
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN too
        if !(t > 0.0) {
            return Err(SubsolutionError::InvalidTime(t));
        }
        let f = self.interface_jet(s, t)?[0];
        Ok([s, f + self.c * lambda * t])
    }

    /// Inverse of [`MixingGeometry::xmap`] on the closed mixing zone.
    pub fn xmap_inverse(&self, x: [f64; 2], t: f64) -> Result<(f64, f64), SubsolutionError> {
        let l = self.lambda_unclamped(x, t)?;
        if l.abs() > 1.0 + 1e-12 {
            return Err(SubsolutionError::OutsideMixingZone { x1: x[0], x2: x[1], t });
        }
        Ok((x[0], l.clamp(-1.0, 1.0)))
    }

    /// `(x₂ − f(x₁, t))/(ct)` without clamping.
    pub fn lambda_unclamped(&self, x: [f64; 2], t: f64) -> Result<f64, SubsolutionError> {
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN too
        if !(t > 0.0) {
            return Err(SubsolutionError::InvalidTime(t));
        }
        let f = self.interface_jet(x[0], t)?[0];
        Ok((x[1] - f) / (self.c * t))
    }

    /// Jacobian determinant of `𝐱(·, ·, t)`.
    pub fn jacobian(&self, t: f64) -> f64 {
        self.c * t
    }

    /// Open mixing zone membership.
    pub fn in_mixing_zone(&self, x: [f64; 2], t: f64) -> bool {
        self.lambda_unclamped(x, t).map(|l| l.abs() < 1.0).unwrap_or(false)
    }
}

/// Closed-form subsolution for the flat interface.
pub fn flat_subsolution(c: f64, x: [f64; 2], t: f64) -> Result<StateZ, SubsolutionError> {
    check_speed(c)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(SubsolutionError::InvalidTime(t));
    }
    Ok(flat_state(c, x[1] / (c * t)))
}

fn flat_state(c: f64, lambda_raw: f64) -> StateZ {
    let l = lambda_raw.clamp(-1.0, 1.0);
    if l.abs() >= 1.0 {
        return StateZ::new(l, [0.0, l], [0.0, 0.5]);
    }
    StateZ::new(l, [0.0, l], [0.0, 0.5 * (c * l * l + 1.0 - c)])
}

/// Rectangular Biot–Savart box: periodic in `x₁`, Dirichlet stream function
/// at the bottom and top of the `x₂` range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiotSavartBox {
    pub x1: [f64; 2],
    pub x2: [f64; 2],
    /// Number of `x₁` nodes (periodic).
    pub n1: usize,
    /// Number of interior `x₂` nodes.
    pub n2: usize,
}

impl BiotSavartBox {
    pub fn validate(&self) -> Result<(), SubsolutionError> {
        if !(self.x1[1] > self.x1[0] && self.x2[1] > self.x2[0]) || self.n1 < 4 || self.n2 < 3 {
            return Err(SubsolutionError::Settings("degenerate Biot-Savart box".into()));
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        self.x1[1] - self.x1[0]
    }

    pub fn node_x1(&self, i: usize) -> f64 {
        self.x1[0] + self.period() * i as f64 / self.n1 as f64
    }

    pub fn node_x2(&self, j: usize) -> f64 {
        self.x2[0] + (self.x2[1] - self.x2[0]) * (j + 1) as f64 / (self.n2 + 1) as f64
    }
}

/// Velocity on the nodes of a [`BiotSavartBox`], indexed `[j·n1 + i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityGrid {
    pub bx: BiotSavartBox,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    /// Max modulus of the spectral divergence coefficients.
    pub divergence_residual: f64,
}

impl VelocityGrid {
    /// Bilinear interpolation, periodic in `x₁`, clamped in `x₂`.
    pub fn interpolate(&self, x: [f64; 2]) -> [f64; 2] {
        let bx = &self.bx;
        let fx = ((x[0] - bx.x1[0]) / bx.period()).rem_euclid(1.0) * bx.n1 as f64;
        let i0 = (fx.floor() as usize).min(bx.n1 - 1);
        let wx = fx - i0 as f64;
        let i1 = (i0 + 1) % bx.n1;
        let hy = (bx.x2[1] - bx.x2[0]) / (bx.n2 + 1) as f64;
        let fy = ((x[1] - bx.x2[0]) / hy - 1.0).clamp(0.0, (bx.n2 - 1) as f64);
        let j0 = (fy.floor() as usize).min(bx.n2 - 2);
        let wy = fy - j0 as f64;
        let at = |g: &Vec<f64>| {
            let g00 = g[j0 * bx.n1 + i0];
            let g10 = g[j0 * bx.n1 + i1];
            let g01 = g[(j0 + 1) * bx.n1 + i0];
            let g11 = g[(j0 + 1) * bx.n1 + i1];
            (1.0 - wy) * ((1.0 - wx) * g00 + wx * g10) + wy * ((1.0 - wx) * g01 + wx * g11)
        };
        [at(&self.u1), at(&self.u2)]
    }
}

/// `Σ_{l=1}^{N} c_l·sin(πln/(N+1))` (odd) or `cos` (even) at `n = 1..N`,
/// via a length `2(N+1)` FFT.
fn trig_sums(c: &[Complex<f64>], odd: bool, planner: &mut FftPlanner<f64>) -> Vec<Complex<f64>> {
    let n = c.len();
    let len = 2 * (n + 1);
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    let sgn = if odd { -1.0 } else { 1.0 };
    for (l, &v) in c.iter().enumerate() {
        buf[l + 1] = v;
        buf[len - l - 1] = v * sgn;
    }
    planner.plan_fft_forward(len).process(&mut buf);
    // even: E = 2Σ c cos;  odd: O = −2i Σ c sin
    let scale = if odd { Complex::new(0.0, 0.5) } else { Complex::new(0.5, 0.0) };
    buf[1..=n].iter().map(|&v| v * scale).collect()
}

/// Solves `Δψ = ω` and returns `u = ∇^⊥ψ = (−∂₂ψ, ∂₁ψ)` for a vorticity
/// source sampled on the box nodes.
pub fn biot_savart_from_source(omega: &[f64], bx: &BiotSavartBox) -> Result<VelocityGrid, SubsolutionError> {
    bx.validate()?;
    let (n1, n2) = (bx.n1, bx.n2);
    if omega.len() != n1 * n2 {
        return Err(SubsolutionError::Settings("source grid has the wrong size".into()));
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n1);
    let ifft = planner.plan_fft_inverse(n1);
    // x₁ transform of every row
    let mut rows: Vec<Vec<Complex<f64>>> = (0..n2)
        .map(|j| {
            let mut r: Vec<Complex<f64>> = omega[j * n1..(j + 1) * n1].iter().map(|&v| Complex::new(v, 0.0)).collect();
            fft.process(&mut r);
            r.iter_mut().for_each(|v| *v /= n1 as f64);
            r
        })
        .collect();
    let zero_mode = rows.iter().map(|r| r[0].norm()).fold(0.0, f64::max);
    if zero_mode > 1e-10 {
        return Err(SubsolutionError::NonNeutralData(zero_mode));
    }
    let height = bx.x2[1] - bx.x2[0];
    let period = bx.period();
    let mut u1_hat = vec![vec![Complex::new(0.0, 0.0); n2]; n1];
    let mut u2_hat = vec![vec![Complex::new(0.0, 0.0); n2]; n1];
    let mut div = 0.0f64;
    for q in 1..n1 {
        let kq = if q <= n1 / 2 { q as f64 } else { q as f64 - n1 as f64 };
        let kappa = std::f64::consts::TAU * kq / period;
        let column: Vec<Complex<f64>> = rows.iter().map(|r| r[q]).collect();
        // sine coefficients: x_n = (2/(N+1)) Σ_l X_l sin(πln/(N+1))
        let w = trig_sums(&column, true, &mut planner);
        let w: Vec<Complex<f64>> = w.iter().map(|v| v * (2.0 / (n2 + 1) as f64)).collect();
        let mut c1 = vec![Complex::new(0.0, 0.0); n2];
        let mut c2 = vec![Complex::new(0.0, 0.0); n2];
        for l in 0..n2 {
            let mu = std::f64::consts::PI * (l + 1) as f64 / height;
            let psi = -w[l] / (kappa * kappa + mu * mu);
            // u₁ = −∂₂ψ (cosine series), u₂ = ∂₁ψ (sine series)
            c1[l] = -psi * mu;
            c2[l] = psi * Complex::new(0.0, kappa);
            let d1 = c1[l] * Complex::new(0.0, kappa);
            let d2 = c2[l] * mu;
            div = div.max((d1 + d2).norm());
        }
        let s1 = trig_sums(&c1, false, &mut planner);
        let s2 = trig_sums(&c2, true, &mut planner);
        u1_hat[q][..n2].copy_from_slice(&s1[..n2]);
        u2_hat[q][..n2].copy_from_slice(&s2[..n2]);
    }
    rows.clear();
    let mut u1 = vec![0.0; n1 * n2];
    let mut u2 = vec![0.0; n1 * n2];
    for j in 0..n2 {
        let mut r1: Vec<Complex<f64>> = (0..n1).map(|q| u1_hat[q][j]).collect();
        let mut r2: Vec<Complex<f64>> = (0..n1).map(|q| u2_hat[q][j]).collect();
        ifft.process(&mut r1);
        ifft.process(&mut r2);
        for i in 0..n1 {
            u1[j * n1 + i] = r1[i].re;
            u2[j * n1 + i] = r2[i].re;
        }
    }
    Ok(VelocityGrid { bx: *bx, u1, u2, divergence_residual: div })
}

/// `u = 𝐁𝐒(−∂₁ρ)` for a density sampled on the box nodes, with `∂₁`
/// taken spectrally.
pub fn biot_savart_velocity(rho: &[f64], bx: &BiotSavartBox) -> Result<VelocityGrid, SubsolutionError> {
    bx.validate()?;
    let (n1, n2) = (bx.n1, bx.n2);
    if rho.len() != n1 * n2 {
        return Err(SubsolutionError::Settings("density grid has the wrong size".into()));
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n1);
    let ifft = planner.plan_fft_inverse(n1);
    let mut source = vec![0.0; n1 * n2];
    for j in 0..n2 {
        let mut r: Vec<Complex<f64>> = rho[j * n1..(j + 1) * n1].iter().map(|&v| Complex::new(v, 0.0)).collect();
        fft.process(&mut r);
        for (q, v) in r.iter_mut().enumerate() {
            let kq = if q < n1 / 2 {
                q as f64
            } else if q == n1 / 2 {
                0.0
            } else {
                q as f64 - n1 as f64
            };
            let kappa = std::f64::consts::TAU * kq / bx.period();
            *v *= Complex::new(0.0, -kappa) / n1 as f64;
        }
        ifft.process(&mut r);
        for i in 0..n1 {
            source[j * n1 + i] = r[i].re;
        }
    }
    biot_savart_from_source(&source, bx)
}

/// Resolution of the sampled construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledSettings {
    pub bx: BiotSavartBox,
    /// `λ`-cells per column for the flux closure.
    pub n_lambda: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Slice {
    t: f64,
    velocity: VelocityGrid,
    /// `γ₂` at `(x₁ node i, λ cell center j)`, indexed `[i·n_lambda + j]`.
    gamma: Vec<f64>,
}

/// One offending sample point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HullSample {
    pub x: [f64; 2],
    pub t: f64,
    pub min_slack: f64,
}

/// Diagnostics of [`sampled_subsolution`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsolutionReport {
    pub worst_slack: f64,
    pub worst_point: HullSample,
    /// Largest `|w₂(λ = 1)|` over columns: the flux closure mismatch.
    pub worst_conservation_residual: f64,
    pub clamped_gamma: usize,
    pub max_divergence_residual: f64,
    /// Up to ten points with non-positive slack, worst first.
    pub violations: Vec<HullSample>,
}

impl SubsolutionReport {
    pub fn has_violation(&self) -> bool {
        !self.violations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSubsolution {
    geometry: MixingGeometry,
    settings: SampledSettings,
    slices: Vec<Slice>,
}

const GAMMA_CAP: f64 = 0.99;

impl SampledSubsolution {
    fn bracket(&self, t: f64) -> (usize, usize, f64) {
        let n = self.slices.len();
        if n == 1 || t <= self.slices[0].t {
            return (0, 0, 0.0);
        }
        if t >= self.slices[n - 1].t {
            return (n - 1, n - 1, 0.0);
        }
        let p = self.slices.partition_point(|s| s.t <= t).max(1) - 1;
        let w = (t - self.slices[p].t) / (self.slices[p + 1].t - self.slices[p].t);
        (p, p + 1, w)
    }

    pub fn velocity(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let (a, b, w) = self.bracket(t);
        let ua = self.slices[a].velocity.interpolate(x);
        if w == 0.0 {
            return ua;
        }
        let ub = self.slices[b].velocity.interpolate(x);
        [(1.0 - w) * ua[0] + w * ub[0], (1.0 - w) * ua[1] + w * ub[1]]
    }

    fn gamma_at(slice: &Slice, bx: &BiotSavartBox, nl: usize, x1: f64, lambda: f64) -> f64 {
        let fx = ((x1 - bx.x1[0]) / bx.period()).rem_euclid(1.0) * bx.n1 as f64;
        let i0 = (fx.floor() as usize).min(bx.n1 - 1);
        let wx = fx - i0 as f64;
        let i1 = (i0 + 1) % bx.n1;
        let fl = ((lambda + 1.0) * 0.5 * nl as f64 - 0.5).clamp(0.0, (nl - 1) as f64);
        let j0 = (fl.floor() as usize).min(nl.saturating_sub(2));
        let wl = (fl - j0 as f64).min(1.0);
        let j1 = (j0 + 1).min(nl - 1);
        let g = |i: usize, j: usize| slice.gamma[i * nl + j];
        (1.0 - wx) * ((1.0 - wl) * g(i0, j0) + wl * g(i0, j1)) + wx * ((1.0 - wl) * g(i1, j0) + wl * g(i1, j1))
    }

    pub fn eval(&self, x: [f64; 2], t: f64) -> StateZ {
        let lam = self.geometry.lambda_unclamped(x, t).unwrap_or_else(|_| {
            // outside the sampled range the sharp state is used
            let f = self.geometry.interface_jet(x[0], t.max(0.0)).map(|j| j[0]).unwrap_or(0.0);
            if x[1] >= f {
                1.0
            } else {
                -1.0
            }
        });
        let r = lam.clamp(-1.0, 1.0);
        let u = self.velocity(x, t);
        let v = [2.0 * u[0], 2.0 * u[1] + r];
        let mut m = [0.5 * r * v[0], 0.5 * r * v[1]];
        if r.abs() < 1.0 {
            let (a, b, w) = self.bracket(t);
            let (bx, nl) = (&self.settings.bx, self.settings.n_lambda);
            let mut g = Self::gamma_at(&self.slices[a], bx, nl, x[0], r);
            if w > 0.0 {
                g = (1.0 - w) * g + w * Self::gamma_at(&self.slices[b], bx, nl, x[0], r);
            }
            m[1] += 0.5 * (1.0 - r * r) * g;
        }
        StateZ::new(r, v, m)
    }
}

/// Builds the sampled subsolution and its hull/closure report.
pub fn sampled_subsolution(
    geometry: &MixingGeometry,
    params: &HullParams,
    settings: &SampledSettings,
) -> Result<(SubsolutionField, SubsolutionReport), SubsolutionError> {
    let Interface::Sampled(iface) = geometry.interface() else {
        return Err(SubsolutionError::Settings("sampled construction needs a sampled interface".into()));
    };
    let bx = settings.bx;
    bx.validate()?;
    let nl = settings.n_lambda.max(2);
    let c = geometry.c();
    let mut slices = Vec::new();
    let mut closure = 0.0f64;
    let mut clamped = 0usize;
    let mut div = 0.0f64;
    for &t in iface.t_grid().iter().filter(|&&t| t > 0.0) {
        let mut rho = vec![0.0; bx.n1 * bx.n2];
        let mut jets = Vec::with_capacity(bx.n1);
        for i in 0..bx.n1 {
            jets.push(iface.eval(bx.node_x1(i), t)?);
        }
        for j in 0..bx.n2 {
            for i in 0..bx.n1 {
                rho[j * bx.n1 + i] = ((bx.node_x2(j) - jets[i][0]) / (c * t)).clamp(-1.0, 1.0);
            }
        }
        let velocity = biot_savart_velocity(&rho, &bx)?;
        div = div.max(velocity.divergence_residual);
        let mut gamma = vec![0.0; bx.n1 * nl];
        for (i, jet) in jets.iter().enumerate() {
            let s = bx.node_x1(i);
            let [f, fs, ft] = *jet;
            // ∂_λ w₂ = ∂_t f + u₁ ∂_s f − u₂ + (c − 1)λ, integrated from λ = −1
            let integrand = |l: f64| {
                let u = velocity.interpolate([s, f + c * l * t]);
                ft + u[0] * fs - u[1]
            };
            let sub = 2 * nl;
            let h = 2.0 / sub as f64;
            let mut acc = 0.0;
            let mut prev = integrand(-1.0);
            for q in 1..=sub {
                let l = -1.0 + q as f64 * h;
                let cur = integrand(l);
                acc += 0.5 * h * (prev + cur);
                prev = cur;
                if q % 2 == 1 {
                    let w2 = 0.5 * (1.0 - c) * (1.0 - l * l) + acc;
                    let mut g = 2.0 * w2 / (1.0 - l * l);
                    if g.abs() > GAMMA_CAP {
                        g = g.clamp(-GAMMA_CAP, GAMMA_CAP);
                        clamped += 1;
                    }
                    gamma[i * nl + q / 2] = g;
                }
            }
            closure = closure.max(acc.abs());
        }
        slices.push(Slice { t, velocity, gamma });
    }
    if slices.is_empty() {
        return Err(SubsolutionError::Settings("no positive sample times".into()));
    }
    let sub = SampledSubsolution { geometry: geometry.clone(), settings: *settings, slices };
    // hull audit on the (s, λ) lattice of every slice
    let mut worst = HullSample { x: [0.0; 2], t: 0.0, min_slack: f64::INFINITY };
    let mut bad = Vec::new();
    for sl in &sub.slices {
        for i in 0..bx.n1 {
            let s = bx.node_x1(i);
            for j in 0..nl {
                let l = -1.0 + (2 * j + 1) as f64 / nl as f64;
                let x = geometry.xmap(s, l, sl.t)?;
                let rep = hull_contains(&sub.eval(x, sl.t), params);
                let sample = HullSample { x, t: sl.t, min_slack: rep.min_slack };
                if rep.min_slack < worst.min_slack {
                    worst = sample;
                }
                if !rep.is_inside_strict() {
                    bad.push(sample);
                }
            }
        }
    }
    bad.sort_by(|a, b| a.min_slack.total_cmp(&b.min_slack));
    bad.truncate(10);
    let report = SubsolutionReport {
        worst_slack: worst.min_slack,
        worst_point: worst,
        worst_conservation_residual: closure,
        clamped_gamma: clamped,
        max_divergence_residual: div,
        violations: bad,
    };
    Ok((SubsolutionField::Sampled(Box::new(sub)), report))
}

/// The base state of a field model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SubsolutionField {
    /// Constant state everywhere.
    Uniform(StateZ),
    /// Closed-form flat interface with speed `c`.
    Flat { geometry: MixingGeometry },
    Sampled(Box<SampledSubsolution>),
}

impl SubsolutionField {
    pub fn flat(c: f64, t_end: f64) -> Result<Self, SubsolutionError> {
        Ok(SubsolutionField::Flat { geometry: MixingGeometry::flat(c, t_end)? })
    }

    pub fn geometry(&self) -> Option<&MixingGeometry> {
        match self {
            SubsolutionField::Uniform(_) => None,
            SubsolutionField::Flat { geometry } => Some(geometry),
            SubsolutionField::Sampled(s) => Some(&s.geometry),
        }
    }

    /// Evaluates the state; for `t ≤ 0` the sharp interface state.
    pub fn eval(&self, x: [f64; 2], t: f64) -> StateZ {
        match self {
            SubsolutionField::Uniform(z) => *z,
            SubsolutionField::Flat { geometry } => {
                let c = geometry.c();
                let l = if t > 0.0 { x[1] / (c * t) } else { x[1].signum() };
                flat_state(c, l)
            }
            SubsolutionField::Sampled(s) => s.eval(x, t),
        }
    }

    /// Velocity `ŭ`.
    pub fn velocity(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        match self {
            SubsolutionField::Sampled(s) => s.velocity(x, t),
            _ => self.eval(x, t).velocity(),
        }
    }

    /// Open mixing zone membership; a uniform field has no zone and counts
    /// as everywhere mixing.
    pub fn in_mixing_zone(&self, x: [f64; 2], t: f64) -> bool {
        match self.geometry() {
            None => true,
            Some(g) => g.in_mixing_zone(x, t),
        }
    }
}
