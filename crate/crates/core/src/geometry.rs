//! Constraint sets, hull membership, the gauge `D` and Λ-segment extraction.
//!
//! The constraint set is `K = {m = ½ρv, |ρ| = 1}` and `K_M` adds `|v| ≤ M`.
//! Its Λ-convex hull is described by five inequalities:
//!
//! 1. `|ρ| ≤ 1`
//! 2. `|m − ½ρv| ≤ ½(1 − ρ²)`
//! 3. `|v|² ≤ M² − (1 − ρ²)`
//! 4. `|m − ½v| ≤ (M/2)(1 − ρ)`
//! 5. `|m + ½v| ≤ (M/2)(1 + ρ)`

use crate::state::StateZ;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for the equality constraints of `K`.
pub const K_TOL: f64 = 1e-12;
/// Normalized slacks within this band of zero count as boundary.
pub const BOUNDARY_TOL: f64 = 1e-12;
/// Segment extraction refuses states with `1 − ρ²` below this.
pub const DEGENERACY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid hull parameters: {0}")]
    InvalidParams(String),
    #[error("state has non-finite components")]
    NonFinite,
    #[error("degenerate state: 1 - rho^2 = {0:e} is below the degeneracy threshold")]
    DegenerateState(f64),
    #[error("state is not strictly inside the hull (class {0:?})")]
    NotStrictlyInside(HullClass),
    #[error("state slack {slack:e} is below the required margin {delta:e}")]
    NoMargin { slack: f64, delta: f64 },
    #[error("invariant violation: empty admissible arc for |v| >= |rho|")]
    EmptyTheta,
}

/// Velocity bound `M` and interior safety margin `δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HullParams {
    m_bound: f64,
    margin_delta: f64,
}

impl HullParams {
    pub fn new(m_bound: f64, margin_delta: f64) -> Result<Self, GeometryError> {
        if !(m_bound.is_finite() && m_bound > 1.0) {
            return Err(GeometryError::InvalidParams(format!("M must exceed 1, got {m_bound}")));
        }
        if !(margin_delta.is_finite() && (0.0..1.0).contains(&margin_delta)) {
            return Err(GeometryError::InvalidParams(format!(
                "margin_delta must lie in [0, 1), got {margin_delta}"
            )));
        }
        Ok(HullParams { m_bound, margin_delta })
    }

    pub fn m_bound(&self) -> f64 {
        self.m_bound
    }

    pub fn margin_delta(&self) -> f64 {
        self.margin_delta
    }

    /// Same `M` with a different margin.
    pub fn with_margin(&self, margin_delta: f64) -> Result<Self, GeometryError> {
        HullParams::new(self.m_bound, margin_delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HullClass {
    InsideStrict,
    Boundary,
    Outside,
}

/// Per-inequality evaluation of the hull description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HullReport {
    pub class: HullClass,
    /// Raw slack `rhs − lhs` of each inequality.
    pub slacks: [f64; 5],
    /// Slacks scaled to be comparable: inequality 3 by `M²`, 4 and 5 by `M`.
    pub normalized: [f64; 5],
    /// Minimum of `normalized`.
    pub min_slack: f64,
    /// Index (0-based) of the inequality attaining `min_slack`.
    pub binding: usize,
}

impl HullReport {
    pub fn is_inside_strict(&self) -> bool {
        self.class == HullClass::InsideStrict
    }

    pub fn is_inside(&self) -> bool {
        self.class != HullClass::Outside
    }
}

fn norm2(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

/// Membership in `K_M`.
pub fn in_constraint_set(z: &StateZ, params: &HullParams) -> bool {
    if !z.is_finite() {
        return false;
    }
    let half_rv = [0.5 * z.rho * z.v[0], 0.5 * z.rho * z.v[1]];
    (z.rho.abs() - 1.0).abs() <= K_TOL
        && norm2([z.m[0] - half_rv[0], z.m[1] - half_rv[1]]) <= K_TOL
        && norm2(z.v) <= params.m_bound + K_TOL
}

/// Evaluates the five hull inequalities and classifies `z`.
///
/// Non-finite states are reported as outside with `NaN` slacks.
pub fn hull_contains(z: &StateZ, params: &HullParams) -> HullReport {
    let mm = params.m_bound;
    let (r, v, m) = (z.rho, z.v, z.m);
    let d = 1.0 - r * r;
    let s1 = 1.0 - r.abs();
    let s2 = 0.5 * d - norm2([m[0] - 0.5 * r * v[0], m[1] - 0.5 * r * v[1]]);
    let s3 = mm * mm - d - (v[0] * v[0] + v[1] * v[1]);
    let s4 = 0.5 * mm * (1.0 - r) - norm2([m[0] - 0.5 * v[0], m[1] - 0.5 * v[1]]);
    let s5 = 0.5 * mm * (1.0 + r) - norm2([m[0] + 0.5 * v[0], m[1] + 0.5 * v[1]]);
    let slacks = [s1, s2, s3, s4, s5];
    let normalized = [s1, s2, s3 / (mm * mm), s4 / mm, s5 / mm];
    let mut binding = 0;
    let mut min_slack = f64::INFINITY;
    for (i, &s) in normalized.iter().enumerate() {
        if s.is_nan() {
            min_slack = f64::NAN;
            binding = i;
            break;
        }
        if s < min_slack {
            min_slack = s;
            binding = i;
        }
    }
    let class = if !(min_slack.is_finite()) || min_slack < -BOUNDARY_TOL {
        HullClass::Outside
    } else if min_slack <= BOUNDARY_TOL {
        HullClass::Boundary
    } else {
        HullClass::InsideStrict
    };
    HullReport { class, slacks, normalized, min_slack, binding }
}

/// The gauge `D(z) = 1 − ρ²`, clamped below at zero.
pub fn gauge_d(z: &StateZ) -> f64 {
    (1.0 - z.rho * z.rho).max(0.0)
}

/// Gradient companion `G(z)` with `D(z + w) = D(z) + G(z)·w − H(w)`.
pub fn gauge_g(z: &StateZ) -> StateZ {
    StateZ::new(-2.0 * z.rho, [0.0; 2], [0.0; 2])
}

/// Quadratic companion `H(w) = ρ_w²`, homogeneous of degree 2.
pub fn gauge_h(w: &StateZ) -> f64 {
    w.rho * w.rho
}

/// Degree of homogeneity of [`gauge_h`].
pub const GAUGE_DEGREE: f64 = 2.0;

/// Wave cone test `||ρ̄| − |v̄|| ≤ tol·(1 + |z̄|)`.
pub fn in_wave_cone(zbar: &StateZ, tol: f64) -> bool {
    (zbar.rho.abs() - norm2(zbar.v)).abs() <= tol * (1.0 + zbar.norm())
}

/// Which branch of the direction construction produced `m̄`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentCase {
    OmegaDominant,
    OmegaPlusDominant,
    OmegaMinusDominant,
    /// `|v| < |ρ|`; `e` was chosen freely on the circle.
    SmallV,
}

/// Formula used for `m̄`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MbarBranch {
    Zero,
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentResult {
    /// `(1, e, m̄)`, a wave-cone direction with unit density component.
    pub direction: StateZ,
    pub lambda_max: f64,
    /// Minimum normalized slack over both endpoints at `lambda_max`.
    pub margin: f64,
    pub case_tag: SegmentCase,
    pub mbar_branch: MbarBranch,
    pub e: [f64; 2],
    pub omega: [f64; 2],
    pub omega_plus: [f64; 2],
    pub omega_minus: [f64; 2],
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut x = a.rem_euclid(two_pi);
    if x > std::f64::consts::PI {
        x -= two_pi;
    }
    x
}

/// Chooses `e ∈ S¹` closest to `ω`, restricted to the admissible arc when
/// `|v| ≥ |ρ|`.
fn select_e(r: f64, v: [f64; 2], omega: [f64; 2], mm: f64) -> Result<[f64; 2], GeometryError> {
    let om = norm2(omega);
    let target = if om > 0.0 { omega[1].atan2(omega[0]) } else { 0.0 };
    let vn = norm2(v);
    if vn < r.abs() || vn == 0.0 {
        return Ok([target.cos(), target.sin()]);
    }
    let rr = mm * mm - vn * vn - (1.0 - r * r);
    // Θ = {e : lo ≤ v·e ≤ hi}
    let lo = r - rr / (2.0 * (1.0 + r));
    let hi = r + rr / (2.0 * (1.0 - r));
    if lo > vn || hi < -vn || lo > hi {
        return Err(GeometryError::EmptyTheta);
    }
    let alpha_min = (hi / vn).clamp(-1.0, 1.0).acos();
    let alpha_max = (lo / vn).clamp(-1.0, 1.0).acos();
    let phi = v[1].atan2(v[0]);
    let rel = wrap_angle(target - phi);
    let mag = rel.abs().clamp(alpha_min, alpha_max);
    let sign = if rel < 0.0 { -1.0 } else { 1.0 };
    let theta = phi + sign * mag;
    Ok([theta.cos(), theta.sin()])
}

/// Direction, case, branch, `e` and `(ω, ω₊, ω₋)`.
pub type DirectionParts = (StateZ, SegmentCase, MbarBranch, [f64; 2], [[f64; 2]; 3]);

/// Builds the direction `(1, e, m̄)` without the length search.
pub fn segment_direction(
    z: &StateZ,
    params: &HullParams,
) -> Result<DirectionParts, GeometryError> {
    direction_with(z, params, None)
}

fn direction_with(
    z: &StateZ,
    params: &HullParams,
    forced: Option<MbarBranch>,
) -> Result<DirectionParts, GeometryError> {
    if !z.is_finite() {
        return Err(GeometryError::NonFinite);
    }
    let (r, v, m) = (z.rho, z.v, z.m);
    let d = 1.0 - r * r;
    if d < DEGENERACY_TOL {
        return Err(GeometryError::DegenerateState(d));
    }
    let mm = params.m_bound();
    let omega = [2.0 * (m[0] - 0.5 * r * v[0]) / d, 2.0 * (m[1] - 0.5 * r * v[1]) / d];
    let omega_p = [
        2.0 * (m[0] + 0.5 * v[0]) / (mm * (1.0 + r)),
        2.0 * (m[1] + 0.5 * v[1]) / (mm * (1.0 + r)),
    ];
    let omega_m = [
        2.0 * (m[0] - 0.5 * v[0]) / (mm * (1.0 - r)),
        2.0 * (m[1] - 0.5 * v[1]) / (mm * (1.0 - r)),
    ];
    let e = select_e(r, v, omega, mm)?;
    let (np, nm, no) = (norm2(omega_p), norm2(omega_m), norm2(omega));
    let pick = forced.unwrap_or(if no >= np.max(nm) {
        MbarBranch::Zero
    } else if np >= nm {
        MbarBranch::Plus
    } else {
        MbarBranch::Minus
    });
    let (mbar, branch) = if pick == MbarBranch::Zero {
        (
            [0.5 * (v[0] + r * e[0]) - r * omega[0], 0.5 * (v[1] + r * e[1]) - r * omega[1]],
            MbarBranch::Zero,
        )
    } else if pick == MbarBranch::Plus {
        (
            [-0.5 * e[0] + 0.5 * mm * omega_p[0], -0.5 * e[1] + 0.5 * mm * omega_p[1]],
            MbarBranch::Plus,
        )
    } else {
        (
            [0.5 * e[0] - 0.5 * mm * omega_m[0], 0.5 * e[1] - 0.5 * mm * omega_m[1]],
            MbarBranch::Minus,
        )
    };
    let case = if norm2(v) < r.abs() {
        SegmentCase::SmallV
    } else {
        match branch {
            MbarBranch::Zero => SegmentCase::OmegaDominant,
            MbarBranch::Plus => SegmentCase::OmegaPlusDominant,
            MbarBranch::Minus => SegmentCase::OmegaMinusDominant,
        }
    };
    Ok((StateZ::new(1.0, e, mbar), case, branch, e, [omega, omega_p, omega_m]))
}

/// Both endpoints `z ± λ·dir` strictly inside with normalized slack ≥ δ.
/// Returns the smaller endpoint slack when feasible.
fn endpoints_ok(z: &StateZ, dir: &StateZ, lambda: f64, params: &HullParams) -> Option<f64> {
    let a = hull_contains(&(*z + *dir * lambda), params);
    let b = hull_contains(&(*z - *dir * lambda), params);
    let s = a.min_slack.min(b.min_slack);
    (a.is_inside_strict() && b.is_inside_strict() && s >= params.margin_delta()).then_some(s)
}

/// Extracts a sizeable Λ-segment `[z − λ·dir, z + λ·dir]` at `z`.
pub fn lambda_segment(z: &StateZ, params: &HullParams) -> Result<SegmentResult, GeometryError> {
    let rep = check_segment_pre(z, params)?;
    let (direction, case_tag, mbar_branch, e, om) = segment_direction(z, params)?;
    Ok(search_length(z, params, rep.min_slack, direction, case_tag, mbar_branch, e, om))
}

/// Like [`lambda_segment`], but tries all three `m̄` formulas with the same
/// `e` and keeps the longest segment. Unlike the dominance rule this is
/// lower semicontinuous across case switches.
pub fn lambda_segment_best(z: &StateZ, params: &HullParams) -> Result<SegmentResult, GeometryError> {
    let rep = check_segment_pre(z, params)?;
    let mut best: Option<SegmentResult> = None;
    for b in [MbarBranch::Zero, MbarBranch::Plus, MbarBranch::Minus] {
        let (direction, case_tag, mbar_branch, e, om) = direction_with(z, params, Some(b))?;
        let r = search_length(z, params, rep.min_slack, direction, case_tag, mbar_branch, e, om);
        if best.as_ref().map_or(true, |x| r.lambda_max > x.lambda_max) {
            best = Some(r);
        }
    }
    Ok(best.expect("three candidates"))
}

fn check_segment_pre(z: &StateZ, params: &HullParams) -> Result<HullReport, GeometryError> {
    if !z.is_finite() {
        return Err(GeometryError::NonFinite);
    }
    let d = 1.0 - z.rho * z.rho;
    if d < DEGENERACY_TOL {
        return Err(GeometryError::DegenerateState(d));
    }
    let rep = hull_contains(z, params);
    if !rep.is_inside_strict() {
        return Err(GeometryError::NotStrictlyInside(rep.class));
    }
    if rep.min_slack < params.margin_delta() {
        return Err(GeometryError::NoMargin { slack: rep.min_slack, delta: params.margin_delta() });
    }
    Ok(rep)
}

#[allow(clippy::too_many_arguments)]
fn search_length(
    z: &StateZ,
    params: &HullParams,
    slack: f64,
    direction: StateZ,
    case_tag: SegmentCase,
    mbar_branch: MbarBranch,
    e: [f64; 2],
    om: [[f64; 2]; 3],
) -> SegmentResult {
    let mut lo = 0.0;
    let mut hi = 1.0 - z.rho.abs();
    let mut margin = slack;
    if let Some(s) = endpoints_ok(z, &direction, hi, params) {
        lo = hi;
        margin = s;
    } else {
        for _ in 0..100 {
            if hi - lo <= 1e-10 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            match endpoints_ok(z, &direction, mid, params) {
                Some(s) => {
                    lo = mid;
                    margin = s;
                }
                None => hi = mid,
            }
        }
    }
    SegmentResult {
        direction,
        lambda_max: lo,
        margin,
        case_tag,
        mbar_branch,
        e,
        omega: om[0],
        omega_plus: om[1],
        omega_minus: om[2],
    }
}
