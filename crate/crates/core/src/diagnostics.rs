//! Rectangle averages, degraded-bound and mixing checks, volume proportions
//! and finite-difference residual tables.

use crate::quadrature::{loglog_slope, Rule1d};
use crate::scheme::FieldModel;
use crate::state::{divergence_fd, StateZ};
use crate::subsolution::{MixingGeometry, SubsolutionError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("rectangle ({s0},{s1})x({l0},{l1}) at t = {t} lies outside the mixing zone")]
    OutsideMixingZone { s0: f64, s1: f64, l0: f64, l1: f64, t: f64 },
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("field has no mixing geometry")]
    NoGeometry,
    #[error(transparent)]
    Subsolution(#[from] SubsolutionError),
}

/// Anything that can be probed: a state at each space-time point plus the
/// mixing geometry used to map rectangles.
pub trait Observed {
    fn state(&self, y: [f64; 3]) -> StateZ;
    fn geometry(&self) -> Option<&MixingGeometry>;
}

impl Observed for FieldModel {
    fn state(&self, y: [f64; 3]) -> StateZ {
        self.eval_y(y)
    }

    fn geometry(&self) -> Option<&MixingGeometry> {
        self.base.geometry()
    }
}

/// A bare function paired with a geometry (negative controls, corrupted fields).
pub struct WithGeometry<F> {
    pub geometry: MixingGeometry,
    pub f: F,
}

impl<F: Fn([f64; 3]) -> StateZ> Observed for WithGeometry<F> {
    fn state(&self, y: [f64; 3]) -> StateZ {
        (self.f)(y)
    }

    fn geometry(&self) -> Option<&MixingGeometry> {
        Some(&self.geometry)
    }
}

/// Monotone error envelope on `[0, ∞)` with values in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorEnvelope {
    Constant(f64),
    /// `ε·exp(−1/(ε r))`
    SpaceExponential(f64),
    /// `ε·exp(−(1/t + t)/ε)`
    TimeExponential(f64),
}

impl ErrorEnvelope {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            ErrorEnvelope::Constant(c) => c,
            ErrorEnvelope::SpaceExponential(e) => {
                if r <= 0.0 {
                    0.0
                } else {
                    e * (-1.0 / (e * r)).exp()
                }
            }
            ErrorEnvelope::TimeExponential(e) => {
                if r <= 0.0 {
                    0.0
                } else {
                    e * (-(1.0 / r + r) / e).exp()
                }
            }
        }
    }

    fn validate(&self) -> Result<(), DiagnosticsError> {
        let ok = match *self {
            ErrorEnvelope::Constant(c) => c > 0.0 && c <= 1.0,
            ErrorEnvelope::SpaceExponential(e) | ErrorEnvelope::TimeExponential(e) => e > 0.0 && e <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(DiagnosticsError::InvalidQuery(format!("envelope {self:?} must map into [0,1]")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradedBoundSpec {
    pub alpha: f64,
    pub s_func: ErrorEnvelope,
    pub t_func: ErrorEnvelope,
}

impl DegradedBoundSpec {
    pub fn new(alpha: f64, s_func: ErrorEnvelope, t_func: ErrorEnvelope) -> Result<Self, DiagnosticsError> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(DiagnosticsError::InvalidQuery(format!("alpha must lie in [0,1), got {alpha}")));
        }
        s_func.validate()?;
        t_func.validate()?;
        Ok(DegradedBoundSpec { alpha, s_func, t_func })
    }

    /// `α = 0`, `𝒮 = 𝒯 ≡ 1`.
    pub fn constant() -> Self {
        DegradedBoundSpec { alpha: 0.0, s_func: ErrorEnvelope::Constant(1.0), t_func: ErrorEnvelope::Constant(1.0) }
    }

    pub fn exponential(alpha: f64, eps_space: f64, eps_time: f64) -> Result<Self, DiagnosticsError> {
        Self::new(alpha, ErrorEnvelope::SpaceExponential(eps_space), ErrorEnvelope::TimeExponential(eps_time))
    }

    /// `ℰ(λ, t) = 𝒮(1 − |λ|)·𝒯(t)`
    pub fn e(&self, lambda: f64, t: f64) -> f64 {
        self.s_func.eval(1.0 - lambda.abs()) * self.t_func.eval(t)
    }

    /// `q_α(A) = min(1, A^α)/A`
    pub fn q(&self, area: f64) -> f64 {
        1f64.min(area.powf(self.alpha)) / area
    }
}

/// Rectangle `S × L` in mixing coordinates `(s, λ)` at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectangleQuery {
    pub s: [f64; 2],
    pub l: [f64; 2],
    pub t: f64,
}

impl RectangleQuery {
    pub fn new(s: [f64; 2], l: [f64; 2], t: f64) -> Result<Self, DiagnosticsError> {
        let q = RectangleQuery { s, l, t };
        q.validate()?;
        Ok(q)
    }

    fn validate(&self) -> Result<(), DiagnosticsError> {
        let fin = self.s.iter().chain(&self.l).all(|v| v.is_finite()) && self.t.is_finite();
        if !fin || self.s[0] >= self.s[1] || self.l[0] >= self.l[1] || self.l[0] < -1.0 || self.l[1] > 1.0 {
            return Err(DiagnosticsError::InvalidQuery(format!("{self:?}: need S nonempty and L a nonempty subset of (-1,1)")));
        }
        Ok(())
    }

    /// `⟨L⟩`
    pub fn l_mid(&self) -> f64 {
        0.5 * (self.l[0] + self.l[1])
    }

    /// Area of the image rectangle in physical space.
    pub fn area(&self, geometry: &MixingGeometry) -> f64 {
        geometry.jacobian(self.t) * (self.s[1] - self.s[0]) * (self.l[1] - self.l[0])
    }

    fn outside(&self) -> DiagnosticsError {
        DiagnosticsError::OutsideMixingZone { s0: self.s[0], s1: self.s[1], l0: self.l[0], l1: self.l[1], t: self.t }
    }
}

/// Composite Gauss rule sized by physical length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectQuadrature {
    pub cells_per_unit: f64,
    pub order: usize,
}

impl Default for RectQuadrature {
    fn default() -> Self {
        RectQuadrature { cells_per_unit: 64.0, order: 4 }
    }
}

impl RectQuadrature {
    fn rule(&self, a: f64, b: f64, physical_len: f64) -> Rule1d {
        let cells = (physical_len * self.cells_per_unit).ceil().max(1.0) as usize;
        Rule1d::composite_gauss(a, b, cells, self.order)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Density,
    Velocity,
    PowerBalance,
}

/// `|u|² + ρ u₂` with `u = (v − (0, ρ))/2`.
pub fn power_balance(z: &StateZ) -> f64 {
    let u = z.velocity();
    u[0] * u[0] + u[1] * u[1] + z.rho * u[1]
}

/// Averages `g` over the physical image of `query`.
fn average_with<O: Observed + ?Sized, const N: usize>(
    field: &O,
    query: &RectangleQuery,
    quad: &RectQuadrature,
    g: impl Fn(&StateZ) -> [f64; N],
) -> Result<[f64; N], DiagnosticsError> {
    query.validate()?;
    let geo = field.geometry().ok_or(DiagnosticsError::NoGeometry)?;
    if !(query.t > 0.0 && query.t <= geo.t_end()) {
        return Err(query.outside());
    }
    for s in query.s {
        for l in query.l {
            geo.xmap(s, l, query.t).map_err(|_| query.outside())?;
        }
    }
    let rs = quad.rule(query.s[0], query.s[1], query.s[1] - query.s[0]);
    let rl = quad.rule(query.l[0], query.l[1], geo.jacobian(query.t) * (query.l[1] - query.l[0]));
    let norm = (query.s[1] - query.s[0]) * (query.l[1] - query.l[0]);
    let mut out = [0.0; N];
    for (s, ws) in rs.nodes.iter().zip(&rs.weights) {
        for (l, wl) in rl.nodes.iter().zip(&rl.weights) {
            let x = geo.xmap(*s, *l, query.t)?;
            let v = g(&field.state([x[0], x[1], query.t]));
            for j in 0..N {
                out[j] += ws * wl * v[j];
            }
        }
    }
    Ok(out.map(|v| v / norm))
}

/// Average of an observable; scalars are returned in the first slot.
pub fn rectangle_average<O: Observed + ?Sized>(
    field: &O,
    observable: Observable,
    query: &RectangleQuery,
    quad: &RectQuadrature,
) -> Result<[f64; 2], DiagnosticsError> {
    match observable {
        Observable::Density => average_with(field, query, quad, |z| [z.rho, 0.0]),
        Observable::Velocity => average_with(field, query, quad, |z| z.velocity()),
        Observable::PowerBalance => average_with(field, query, quad, |z| [power_balance(z), 0.0]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradedReport {
    pub rectangles: usize,
    pub max_ratio: f64,
    pub worst: Option<RectangleQuery>,
    pub passed: bool,
}

/// Deviations below this are quadrature rounding and count as zero.
pub const ROUNDING_FLOOR: f64 = 1e-13;

/// `max |⨍ρ − ⟨L⟩| / (ℰ(⟨L⟩,t)·q_α(|𝐱(Q,t)|))` over the family.
pub fn degraded_bound_check<O: Observed + ?Sized>(
    field: &O,
    spec: &DegradedBoundSpec,
    family: &[RectangleQuery],
    quad: &RectQuadrature,
) -> Result<DegradedReport, DiagnosticsError> {
    let geo = field.geometry().ok_or(DiagnosticsError::NoGeometry)?;
    let mut max_ratio = 0.0;
    let mut worst = None;
    for q in family {
        let avg = rectangle_average(field, Observable::Density, q, quad)?[0];
        let bound = spec.e(q.l_mid(), q.t) * spec.q(q.area(geo));
        let num = (avg - q.l_mid()).abs();
        let ratio = if num <= ROUNDING_FLOOR { 0.0 } else { num / bound };
        if ratio > max_ratio || ratio.is_nan() {
            max_ratio = ratio;
            worst = Some(*q);
        }
    }
    Ok(DegradedReport { rectangles: family.len(), max_ratio, worst, passed: max_ratio <= 1.0 })
}

/// Dyadic subdivisions of `S × (−1, 1)`: level `ℓ` contributes `4^ℓ`
/// rectangles; levels are added until at least `min_count` exist.
pub fn dyadic_family(s: [f64; 2], t: f64, min_count: usize) -> Vec<RectangleQuery> {
    let mut out = Vec::new();
    let mut level = 0u32;
    while out.len() < min_count.max(1) {
        let n = 1usize << level;
        for a in 0..n {
            for b in 0..n {
                let s0 = s[0] + (s[1] - s[0]) * a as f64 / n as f64;
                let s1 = s[0] + (s[1] - s[0]) * (a + 1) as f64 / n as f64;
                let l0 = -1.0 + 2.0 * b as f64 / n as f64;
                let l1 = -1.0 + 2.0 * (b + 1) as f64 / n as f64;
                out.push(RectangleQuery { s: [s0, s1], l: [l0, l1], t });
            }
        }
        level += 1;
    }
    out
}

/// Contour strips `(−R, R) × (λ − R^{−δ}, λ + R^{−δ})`, clipped to `|λ| < 1`.
pub fn contour_strip(lambda: f64, r: f64, delta: f64, t: f64) -> RectangleQuery {
    let h = r.powf(-delta);
    RectangleQuery { s: [-r, r], l: [(lambda - h).max(-1.0), (lambda + h).min(1.0)], t }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingFailure {
    pub query: RectangleQuery,
    pub minus_part: f64,
    pub plus_part: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    pub t: f64,
    pub boxes: usize,
    pub failures: Vec<MixingFailure>,
    pub passed: bool,
}

/// Relative threshold separating "nonzero" from quadrature noise.
pub const MIXING_THRESHOLD: f64 = 1e-6;

/// Both `∫(1 − ρ)` and `∫(1 + ρ)` must exceed the threshold on every box.
/// Boxes are given in mixing coordinates so that they lie in the zone.
pub fn mixing_check<O: Observed + ?Sized>(
    field: &O,
    t: f64,
    boxes: &[RectangleQuery],
    quad: &RectQuadrature,
) -> Result<MixingReport, DiagnosticsError> {
    let geo = field.geometry().ok_or(DiagnosticsError::NoGeometry)?;
    let mut failures = Vec::new();
    for b in boxes {
        let q = RectangleQuery { t, ..*b };
        let area = q.area(geo);
        let avg = average_with(field, &q, quad, |z| [1.0 - z.rho, 1.0 + z.rho])?;
        let [lo, hi] = avg.map(|v| v * area);
        let thr = MIXING_THRESHOLD * area;
        if !(lo > thr && hi > thr) {
            failures.push(MixingFailure { query: q, minus_part: lo, plus_part: hi });
        }
    }
    Ok(MixingReport { t, boxes: boxes.len(), passed: failures.is_empty(), failures })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeProportion {
    /// `½(1 + ⨍ρ)`
    pub plus: f64,
    /// `½(1 − ⨍ρ)`
    pub minus: f64,
    /// Weighted fraction of samples with `ρ ≥ 1 − band`.
    pub empirical_plus: f64,
    /// Weighted fraction of samples with `ρ ≤ −1 + band`.
    pub empirical_minus: f64,
}

pub fn volume_proportion<O: Observed + ?Sized>(
    field: &O,
    query: &RectangleQuery,
    band: f64,
    quad: &RectQuadrature,
) -> Result<VolumeProportion, DiagnosticsError> {
    let [avg, ep, em] = average_with(field, query, quad, |z| {
        [z.rho, (z.rho >= 1.0 - band) as u8 as f64, (z.rho <= -1.0 + band) as u8 as f64]
    })?;
    Ok(VolumeProportion { plus: 0.5 * (1.0 + avg), minus: 0.5 * (1.0 - avg), empirical_plus: ep, empirical_minus: em })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualTable {
    pub spacings: Vec<f64>,
    /// `rows[r][j]`: max residual of row `r` at spacing `j`.
    pub rows: [Vec<f64>; 3],
    /// Fitted orders; `+∞` for rows that vanish to rounding at every spacing.
    pub orders: [f64; 3],
}

impl ResidualTable {
    pub fn min_order(&self) -> f64 {
        self.orders.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Centered-difference residuals of the three linear rows at `points`.
pub fn linear_residual_suite<O: Observed + ?Sized>(
    field: &O,
    points: &[[f64; 3]],
    spacings: &[f64],
) -> Result<ResidualTable, DiagnosticsError> {
    if spacings.len() < 3 {
        return Err(DiagnosticsError::InvalidQuery("need at least three spacings".into()));
    }
    let mut rows: [Vec<f64>; 3] = Default::default();
    for &h in spacings {
        let mut worst = [0.0f64; 3];
        for &y in points {
            let r = divergence_fd(|p| field.state(p).flux_matrix(), y, h);
            for j in 0..3 {
                worst[j] = worst[j].max(r[j].abs());
            }
        }
        for j in 0..3 {
            rows[j].push(worst[j]);
        }
    }
    let orders = [0, 1, 2].map(|j| {
        if rows[j].iter().all(|&r| r < 1e-9) {
            f64::INFINITY
        } else {
            loglog_slope(spacings, &rows[j])
        }
    });
    Ok(ResidualTable { spacings: spacings.to_vec(), rows, orders })
}

/// Sample points strictly inside the mixing zone, away from its edges.
pub fn interior_points(geometry: &MixingGeometry, s: [f64; 2], t: [f64; 2], n: usize) -> Result<Vec<[f64; 3]>, DiagnosticsError> {
    let mut pts = Vec::new();
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let f = |j: usize| (j as f64 + 0.5) / n as f64;
                let tt = t[0] + (t[1] - t[0]) * f(c);
                let x = geometry.xmap(s[0] + (s[1] - s[0]) * f(a), -0.8 + 1.6 * f(b), tt)?;
                pts.push([x[0], x[1], tt]);
            }
        }
    }
    Ok(pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::HullParams;
    use crate::subsolution::SubsolutionField;
    use crate::waves::{SpaceTimeCube, WaveAtom};
    use crate::scheme::Generation;

    fn flat(c: f64) -> FieldModel {
        FieldModel::new(SubsolutionField::flat(c, 2.0).unwrap(), HullParams::new(5.0, 0.05).unwrap())
    }

    fn q(s: [f64; 2], l: [f64; 2], t: f64) -> RectangleQuery {
        RectangleQuery::new(s, l, t).unwrap()
    }

    #[test]
    fn subsolution_density_average_is_l_mid() {
        let f = flat(0.7);
        for query in [q([-0.5, 0.25], [0.0, 0.5], 0.8), q([0.0, 1.0], [-0.9, 0.3], 1.3), q([-2.0, 2.0], [-1.0, 1.0], 0.4)] {
            let a = rectangle_average(&f, Observable::Density, &query, &RectQuadrature::default()).unwrap();
            assert!((a[0] - query.l_mid()).abs() <= 1e-8, "{a:?} {query:?}");
        }
        let v = rectangle_average(&f, Observable::Velocity, &q([0.0, 1.0], [-0.5, 0.9], 1.0), &RectQuadrature::default()).unwrap();
        assert!(v[0].abs() < 1e-14 && v[1].abs() < 1e-14);
    }

    #[test]
    fn query_validation_and_zone() {
        assert!(RectangleQuery::new([0.0, 1.0], [-1.5, 0.0], 1.0).is_err());
        assert!(RectangleQuery::new([1.0, 0.0], [0.0, 0.5], 1.0).is_err());
        let f = flat(1.0);
        let late = q([0.0, 1.0], [0.0, 0.5], 3.0);
        assert!(matches!(
            rectangle_average(&f, Observable::Density, &late, &RectQuadrature::default()),
            Err(DiagnosticsError::OutsideMixingZone { .. })
        ));
    }

    #[test]
    fn envelopes_and_bound_monotonicity() {
        let e = DegradedBoundSpec::exponential(0.5, 0.3, 0.4).unwrap();
        assert_eq!(e.e(1.0, 0.5), 0.0);
        assert_eq!(e.e(0.0, 0.0), 0.0);
        assert!(e.e(0.2, 0.5) > 0.0 && e.e(0.2, 0.5) <= 1.0);
        assert!(DegradedBoundSpec::new(1.0, ErrorEnvelope::Constant(1.0), ErrorEnvelope::Constant(1.0)).is_err());
        for spec in [DegradedBoundSpec::constant(), e] {
            let mut prev = f64::INFINITY;
            for a in [1.0, 1.5, 2.0, 4.0, 10.0, 100.0] {
                let v = spec.q(a) * spec.e(0.3, 0.7);
                assert!(v <= prev);
                prev = v;
            }
        }
        assert_eq!(DegradedBoundSpec::constant().q(0.25), 4.0);
    }

    #[test]
    fn subsolution_scores_zero_ratio() {
        let f = flat(1.0);
        let fam = dyadic_family([-1.0, 1.0], 0.8, 200);
        assert!(fam.len() >= 200);
        for spec in [DegradedBoundSpec::constant(), DegradedBoundSpec::exponential(0.3, 0.5, 0.5).unwrap()] {
            let r = degraded_bound_check(&f, &spec, &fam, &RectQuadrature::default()).unwrap();
            assert!(r.max_ratio <= 1e-8 && r.passed, "{r:?}");
        }
    }

    #[test]
    fn contour_strips_converge() {
        let f = flat(1.0);
        for r in [1.0, 4.0, 16.0] {
            let s = contour_strip(0.4, r, 0.5, 0.9);
            let a = rectangle_average(&f, Observable::Density, &s, &RectQuadrature { cells_per_unit: 4.0, order: 4 }).unwrap();
            assert!((a[0] - s.l_mid()).abs() < 1e-8);
        }
    }

    #[test]
    fn mixing_positive_and_negative_controls() {
        let f = flat(1.0);
        let fam = dyadic_family([-1.0, 1.0], 0.8, 20);
        assert!(mixing_check(&f, 0.8, &fam, &RectQuadrature::default()).unwrap().passed);
        let geometry = MixingGeometry::flat(1.0, 2.0).unwrap();
        for sign in [1.0, -1.0] {
            let pure = WithGeometry { geometry: geometry.clone(), f: move |_| StateZ::new(sign, [0.0, sign], [0.0, 0.5]) };
            let r = mixing_check(&pure, 0.8, &fam, &RectQuadrature::default()).unwrap();
            assert_eq!(r.failures.len(), fam.len());
        }
    }

    #[test]
    fn volume_proportions() {
        let f = flat(1.0);
        let vp = volume_proportion(&f, &q([-1.0, 1.0], [0.0, 1.0], 0.7), 1e-3, &RectQuadrature::default()).unwrap();
        assert!((vp.plus - 0.75).abs() < 1e-12 && (vp.minus - 0.25).abs() < 1e-12);
        let sym = volume_proportion(&f, &q([-1.0, 1.0], [-0.5, 0.5], 0.7), 1e-3, &RectQuadrature::default()).unwrap();
        assert!((sym.plus - 0.5).abs() < 1e-12);
    }

    #[test]
    fn velocity_recovery_matches_flat_biot_savart() {
        let f = flat(1.3);
        for (x, t) in [([0.1, 0.2], 0.5), ([-0.7, -0.9], 1.0)] {
            let z = f.eval([x[0], x[1]], t);
            let u = z.velocity();
            let b = f.base.velocity(x, t);
            assert!((u[0] - b[0]).abs() < 1e-8 && (u[1] - b[1]).abs() < 1e-8);
        }
    }

    #[test]
    fn residual_suite_orders_and_corruption() {
        let f = flat(0.8);
        let geo = f.base.geometry().unwrap().clone();
        let pts = interior_points(&geo, [-0.5, 0.5], [0.6, 1.0], 4).unwrap();
        let sp = [1e-2, 5e-3, 2.5e-3];
        let tab = linear_residual_suite(&f, &pts, &sp).unwrap();
        assert!(tab.min_order() >= 1.8, "{tab:?}");
        let bad = WithGeometry { geometry: geo, f: |y: [f64; 3]| {
            let mut z = f.eval_y(y);
            z.m = [z.m[0] * 1.1, z.m[1] * 1.1];
            z
        } };
        let tab = linear_residual_suite(&bad, &pts, &sp).unwrap();
        assert!(tab.orders[2] < 0.5 && tab.rows[2][2] > 1e-3, "{tab:?}");
    }

    fn one_atom(k: u32) -> FieldModel {
        let mut f = flat(1.0);
        let cube = SpaceTimeCube { center: [0.0, 0.0, 0.75], side: 0.25, parity: 0 };
        let zc = f.eval_y(cube.center);
        let seg = crate::geometry::lambda_segment(&zc, &f.params).unwrap();
        let atom = WaveAtom::new(cube, seg.direction * (0.5 * seg.lambda_max), k).unwrap();
        f.push_generation(Generation::new(0.25, vec![atom]).unwrap());
        f
    }

    #[test]
    fn single_atom_residual_orders() {
        let f = one_atom(4);
        let pts: Vec<[f64; 3]> = crate::waves::cube_lattice(&f.atoms().next().unwrap().cube, 3);
        let tab = linear_residual_suite(&f, &pts, &[1e-3, 5e-4, 2.5e-4]).unwrap();
        assert!(tab.min_order() >= 1.8, "{tab:?}");
    }

    #[test]
    fn power_balance_converges_with_k() {
        let query = q([-0.1, 0.1], [-0.25, 0.25], 0.75);
        let quad = RectQuadrature { cells_per_unit: 2048.0, order: 4 };
        let vals: Vec<f64> = [8, 16, 32, 64, 128]
            .iter()
            .map(|&k| rectangle_average(&one_atom(k), Observable::PowerBalance, &query, &quad).unwrap()[0])
            .collect();
        let diffs: Vec<f64> = vals.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        assert!(diffs.last().unwrap() <= &(0.1 * diffs[0]), "{vals:?} {diffs:?}");
    }
}
