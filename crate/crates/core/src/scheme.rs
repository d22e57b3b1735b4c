//! Shifted grids, perturbation passes and the relaxation-error functional.

use crate::geometry::{gauge_d, hull_contains, lambda_segment, GeometryError, HullParams, SegmentCase};
use crate::quadrature::{integrate_2d, Rule1d};
use crate::state::StateZ;
use crate::subsolution::{SubsolutionError, SubsolutionField};
use crate::waves::{SpaceTimeCube, WaveAtom, WaveError, RAMP_FRACTION};
use log::{debug, warn};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("no cube of side {0} qualifies in the window")]
    EmptyGrid(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Subsolution(#[from] SubsolutionError),
    #[error(transparent)]
    Wave(#[from] WaveError),
}

/// Space box `Ω` and time interval `I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub x1: [f64; 2],
    pub x2: [f64; 2],
    pub t: [f64; 2],
}

impl Window {
    pub fn validate(&self) -> Result<(), SchemeError> {
        let ok = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] < r[1];
        if ok(self.x1) && ok(self.x2) && ok(self.t) {
            Ok(())
        } else {
            Err(SchemeError::InvalidConfig("window intervals must be finite and nonempty".into()))
        }
    }

    pub fn area(&self) -> f64 {
        (self.x1[1] - self.x1[0]) * (self.x2[1] - self.x2[0])
    }
}

/// Index of a cube in the shifted grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridCube {
    pub zeta: [i64; 2],
    pub i: i64,
    pub parity: u8,
}

impl GridCube {
    /// The cube of side `s` containing `y`.
    pub fn locate(y: [f64; 3], s: f64) -> GridCube {
        let z1 = (y[0] / s).round() as i64;
        let z2 = (y[1] / s).round() as i64;
        let parity = (z1 + z2).rem_euclid(2) as u8;
        let i = (y[2] / s - 0.5 * parity as f64).round() as i64;
        GridCube { zeta: [z1, z2], i, parity }
    }

    pub fn center(&self, s: f64) -> [f64; 3] {
        [s * self.zeta[0] as f64, s * self.zeta[1] as f64, s * (self.i as f64 + 0.5 * self.parity as f64)]
    }

    pub fn cube(&self, s: f64) -> SpaceTimeCube {
        SpaceTimeCube { center: self.center(s), side: s, parity: self.parity }
    }

    fn key(&self) -> [i64; 3] {
        [self.zeta[0], self.zeta[1], self.i]
    }
}

/// Cube qualification options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    /// Also require the eight cube corners to be strictly inside the hull.
    pub corner_check: bool,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions { corner_check: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftedGrid {
    pub side: f64,
    pub window: Window,
    /// Sorted by `(ζ, i, b)`.
    pub cubes: Vec<GridCube>,
}

/// Enumerates the cubes of side `s` inside `Ω × [t₁ − s, t₂ + s]` whose
/// center (and optionally corners) are strictly inside the hull.
pub fn build_grid(
    window: &Window,
    s: f64,
    field: &FieldModel,
    opts: &GridOptions,
) -> Result<ShiftedGrid, SchemeError> {
    window.validate()?;
    if !(s > 0.0 && s.is_finite()) {
        return Err(SchemeError::InvalidConfig(format!("cube side must be positive, got {s}")));
    }
    let eps = 1e-12 * s;
    let range = |lo: f64, hi: f64, shift: f64| {
        // integers n with s(n + shift − ½) ≥ lo and s(n + shift + ½) ≤ hi
        let a = ((lo - eps) / s - shift + 0.5).ceil() as i64;
        let b = ((hi + eps) / s - shift - 0.5).floor() as i64;
        a..=b
    };
    let (tlo, thi) = (window.t[0] - s, window.t[1] + s);
    let mut cubes = Vec::new();
    for z1 in range(window.x1[0], window.x1[1], 0.0) {
        for z2 in range(window.x2[0], window.x2[1], 0.0) {
            let parity = (z1 + z2).rem_euclid(2) as u8;
            for i in range(tlo, thi, 0.5 * parity as f64) {
                let gc = GridCube { zeta: [z1, z2], i, parity };
                let c = gc.center(s);
                if !hull_contains(&field.eval_y(c), &field.params).is_inside_strict() {
                    continue;
                }
                if opts.corner_check {
                    let h = 0.5 * s;
                    let all = (0..8).all(|m| {
                        let y = [
                            c[0] + if m & 1 == 0 { -h } else { h },
                            c[1] + if m & 2 == 0 { -h } else { h },
                            c[2] + if m & 4 == 0 { -h } else { h },
                        ];
                        hull_contains(&field.eval_y(y), &field.params).is_inside_strict()
                    });
                    if !all {
                        continue;
                    }
                }
                cubes.push(gc);
            }
        }
    }
    if cubes.is_empty() {
        return Err(SchemeError::EmptyGrid(s));
    }
    cubes.sort();
    Ok(ShiftedGrid { side: s, window: *window, cubes })
}

/// Atoms of one pass; their supports are pairwise disjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub side: f64,
    pub atoms: Vec<WaveAtom>,
    index: HashMap<[i64; 3], usize>,
}

impl Generation {
    pub fn new(side: f64, atoms: Vec<WaveAtom>) -> Result<Self, SchemeError> {
        let mut index = HashMap::with_capacity(atoms.len());
        for (n, a) in atoms.iter().enumerate() {
            if (a.cube.side - side).abs() > 1e-12 * side {
                return Err(SchemeError::InvalidConfig("atom side differs from its generation".into()));
            }
            let gc = GridCube::locate(a.cube.center, side);
            let c = gc.center(side);
            if (0..3).any(|j| (c[j] - a.cube.center[j]).abs() > 1e-9 * side) || gc.parity != a.cube.parity {
                return Err(SchemeError::InvalidConfig("atom cube is not on the shifted grid".into()));
            }
            if index.insert(gc.key(), n).is_some() {
                return Err(SchemeError::InvalidConfig("two atoms share a cube in one generation".into()));
            }
        }
        Ok(Generation { side, atoms, index })
    }

    /// The atom whose cube contains `y`, if any.
    pub fn atom_at(&self, y: [f64; 3]) -> Option<&WaveAtom> {
        let gc = GridCube::locate(y, self.side);
        self.index.get(&gc.key()).map(|&n| &self.atoms[n])
    }
}

/// Subsolution plus ordered generations of atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldModel {
    pub base: SubsolutionField,
    pub params: HullParams,
    generations: Vec<Generation>,
}

/// Phase-independent description of the field at a point: every value
/// `center + Σ τ_j spans_j` with `|τ_j| ≤ 1` is reachable by shifting the
/// phases of the atoms present.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub center: StateZ,
    pub spans: Vec<StateZ>,
}

impl Envelope {
    /// Minimum normalized hull slack over all `2ⁿ` vertices.
    pub fn min_slack(&self, params: &HullParams) -> f64 {
        let n = self.spans.len();
        let mut worst = f64::INFINITY;
        for mask in 0..(1usize << n) {
            let mut z = self.center;
            for (j, s) in self.spans.iter().enumerate() {
                z += if mask >> j & 1 == 1 { *s } else { -*s };
            }
            worst = worst.min(hull_contains(&z, params).min_slack);
        }
        worst
    }
}

impl FieldModel {
    pub fn new(base: SubsolutionField, params: HullParams) -> Self {
        FieldModel { base, params, generations: Vec::new() }
    }

    pub fn generations(&self) -> &[Generation] {
        &self.generations
    }

    pub fn atoms(&self) -> impl Iterator<Item = &WaveAtom> {
        self.generations.iter().flat_map(|g| g.atoms.iter())
    }

    pub fn atom_count(&self) -> usize {
        self.generations.iter().map(|g| g.atoms.len()).sum()
    }

    pub fn push_generation(&mut self, generation: Generation) {
        self.generations.push(generation);
    }

    /// Sum of the atoms at `y`.
    pub fn perturbation(&self, y: [f64; 3]) -> StateZ {
        let mut z = StateZ::ZERO;
        for g in &self.generations {
            if let Some(a) = g.atom_at(y) {
                z += a.eval(y);
            }
        }
        z
    }

    pub fn eval_y(&self, y: [f64; 3]) -> StateZ {
        self.base.eval([y[0], y[1]], y[2]) + self.perturbation(y)
    }

    pub fn eval(&self, x: [f64; 2], t: f64) -> StateZ {
        self.eval_y([x[0], x[1], t])
    }

    pub fn envelope(&self, y: [f64; 3]) -> Envelope {
        let mut env = Envelope { center: self.base.eval([y[0], y[1]], y[2]), spans: Vec::new() };
        for g in &self.generations {
            if let Some(a) = g.atom_at(y) {
                add_atom_to_envelope(&mut env, a, y);
            }
        }
        env
    }
}

fn add_atom_to_envelope(env: &mut Envelope, a: &WaveAtom, y: [f64; 3]) {
    let psi = a.cutoff_value(y);
    if psi == 0.0 && !a.cube.contains(y) {
        return;
    }
    env.center += a.eval(y) - a.principal_part(y);
    if psi > 0.0 {
        env.spans.push(a.direction * psi);
    }
}

/// Piecewise-constant function on inner cubes.
#[derive(Debug, Clone, PartialEq)]
pub struct SimpleFunction {
    pub side: f64,
    pub values: Vec<(GridCube, f64)>,
}

impl SimpleFunction {
    pub fn eval(&self, y: [f64; 3]) -> f64 {
        let gc = GridCube::locate(y, self.side);
        let inner = gc.cube(self.side);
        if !inner.inner_contains(y) {
            return 0.0;
        }
        self.values.iter().find(|(c, _)| *c == gc).map_or(0.0, |(_, v)| *v)
    }

    /// Exact spatial integral at time `t` over inner cubes of the given
    /// parity (both when `None`).
    pub fn integrate_slice(&self, t: f64, parity: Option<u8>) -> f64 {
        let r = (0.5 - RAMP_FRACTION) * self.side;
        let area = (2.0 * r) * (2.0 * r);
        self.values
            .iter()
            .filter(|(c, _)| parity.map_or(true, |p| p == c.parity))
            .filter(|(c, _)| (t - c.center(self.side)[2]).abs() < r)
            .map(|(_, v)| v * area)
            .sum()
    }
}

/// `⊡_s f`: the value of `f` at each cube center, held on the inner cube.
pub fn discretize(field: &FieldModel, grid: &ShiftedGrid, f: impl Fn(&StateZ) -> f64) -> SimpleFunction {
    SimpleFunction {
        side: grid.side,
        values: grid.cubes.iter().map(|c| (*c, f(&field.eval_y(c.center(grid.side))))).collect(),
    }
}

/// Frequency and acceptance policy for new atoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KPolicy {
    pub k0: u32,
    pub k_cap: u32,
    /// Required fraction of the predicted gain.
    pub gain_fraction: f64,
    /// Hull sample lattice per cube side.
    pub hull_lattice: usize,
    /// Number of amplitude reductions tried when doubling `k` stops helping.
    pub amplitude_backoff: u32,
    /// Factor applied to the amplitude at each reduction.
    pub backoff_factor: f64,
}

impl Default for KPolicy {
    fn default() -> Self {
        KPolicy { k0: 8, k_cap: 1024, gain_fraction: 0.5, hull_lattice: 5, amplitude_backoff: 10, backoff_factor: 0.8 }
    }
}

/// Quadrature for `J`: composite two-point Gauss rules in space, uniform
/// time slices including both ends of `I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JQuadrature {
    pub points_per_side: usize,
    pub time_slices: usize,
}

impl Default for JQuadrature {
    fn default() -> Self {
        JQuadrature { points_per_side: 256, time_slices: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JValue {
    pub value: f64,
    pub argmax_t: f64,
    pub slices: Vec<(f64, f64)>,
}

/// Spatial integral of `1 − ρ²` at one time.
pub fn gauge_integral(field: &FieldModel, window: &Window, t: f64, points_per_side: usize) -> f64 {
    let cells = (points_per_side / 2).max(1);
    let rx = Rule1d::composite_gauss(window.x1[0], window.x1[1], cells, 2);
    let ry = Rule1d::composite_gauss(window.x2[0], window.x2[1], cells, 2);
    integrate_2d(&rx, &ry, |a, b| gauge_d(&field.eval([a, b], t)))
}

/// `J = sup_t ∫_Ω (1 − ρ²) dx` over a time lattice.
pub fn relaxation_error_j(field: &FieldModel, window: &Window, quad: &JQuadrature) -> Result<JValue, SchemeError> {
    window.validate()?;
    if quad.points_per_side < 16 || quad.time_slices < 2 {
        return Err(SchemeError::InvalidConfig("J quadrature needs >= 16 points per side and >= 2 slices".into()));
    }
    let n = quad.time_slices;
    let mut slices = Vec::with_capacity(n);
    for j in 0..n {
        let t = window.t[0] + (window.t[1] - window.t[0]) * j as f64 / (n - 1) as f64;
        slices.push((t, gauge_integral(field, window, t, quad.points_per_side)));
    }
    let (argmax_t, value) = slices.iter().copied().fold((f64::NAN, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    Ok(JValue { value, argmax_t, slices })
}

/// Outcome for one perturbed cube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubeRecord {
    pub cube: GridCube,
    pub k: u32,
    pub lambda_max: f64,
    /// Fraction of `lambda_max` used after backoff.
    pub amplitude: f64,
    pub case_tag: SegmentCase,
    pub measured_gain: f64,
    pub predicted_gain: f64,
}

impl CubeRecord {
    pub fn gain_ratio(&self) -> f64 {
        self.measured_gain / self.predicted_gain
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassReport {
    pub side: f64,
    pub j_before: f64,
    pub j_after: f64,
    pub argmax_t_after: f64,
    /// `Σ C_γ·H(z̄)·|Q̃|` over perturbed cubes.
    pub predicted_gain: f64,
    pub measured_gain: f64,
    pub cubes_considered: usize,
    pub cubes_perturbed: usize,
    pub segment_failures: usize,
    pub rejected: usize,
    pub k_values: BTreeMap<u32, usize>,
    pub cubes: Vec<CubeRecord>,
}

/// Inputs of one pass besides the field and grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassSettings {
    pub policy: KPolicy,
    pub quadrature: JQuadrature,
}

/// Integral over the inner square at the cube's center time of
/// `D(z) − D(z + z̃)`.
pub fn measured_gain(field: &FieldModel, atom: &WaveAtom) -> f64 {
    let c = atom.cube.center;
    let r = (0.5 - RAMP_FRACTION) * atom.cube.side;
    let osc = 2.0 * r * atom.kappa();
    let cells = |z: f64| ((2.0 * osc * z.abs()).ceil() as usize + 4).min(512);
    let rx = Rule1d::composite_gauss(c[0] - r, c[0] + r, cells(atom.freq.zeta[0]), 4);
    let ry = Rule1d::composite_gauss(c[1] - r, c[1] + r, cells(atom.freq.zeta[1]), 4);
    integrate_2d(&rx, &ry, |a, b| {
        let y = [a, b, c[2]];
        let z = field.eval_y(y);
        let zt = atom.eval(y);
        // D(z) − D(z + z̃) = 2ρρ̃ + ρ̃², unclamped
        2.0 * z.rho * zt.rho + zt.rho * zt.rho
    })
}

/// Predicted gain `C_γ·H(z̄)·|Q̃|`.
pub fn predicted_gain(atom: &WaveAtom) -> f64 {
    let r = (0.5 - RAMP_FRACTION) * atom.cube.side;
    atom.profile.l2_norm_sq() * atom.direction.rho * atom.direction.rho * (2.0 * r) * (2.0 * r)
}

/// Minimum slack over the hull lattice of the field with `atom` added.
fn hull_deficit(field: &FieldModel, atom: &WaveAtom, lattice: &[[f64; 3]], need: f64) -> f64 {
    let mut worst = f64::INFINITY;
    for &y in lattice {
        let mut env = field.envelope(y);
        add_atom_to_envelope(&mut env, atom, y);
        worst = worst.min(env.min_slack(&field.params));
        let actual = field.eval_y(y) + atom.eval(y);
        worst = worst.min(hull_contains(&actual, &field.params).min_slack);
        if worst < need - 1.0 {
            break;
        }
    }
    need - worst
}

fn try_cube(field: &FieldModel, grid: &ShiftedGrid, gc: &GridCube, policy: &KPolicy) -> Result<Option<(WaveAtom, CubeRecord)>, GeometryError> {
    let s = grid.side;
    let cube = gc.cube(s);
    let zc = field.eval_y(cube.center);
    let seg = lambda_segment(&zc, &field.params)?;
    let lattice = crate::waves::cube_lattice(&cube, policy.hull_lattice.max(2));
    let need = 0.5 * field.params.margin_delta();
    let mut amp = 1.0;
    for _ in 0..=policy.amplitude_backoff {
        let zbar = seg.direction * (amp * seg.lambda_max);
        let mut k = policy.k0.max(1);
        let mut last_deficit = f64::INFINITY;
        while let Ok(atom) = WaveAtom::new(cube, zbar, k) {
            let deficit = hull_deficit(field, &atom, &lattice, need);
            if deficit <= 0.0 {
                let gain = measured_gain(field, &atom);
                let pred = predicted_gain(&atom);
                if gain >= policy.gain_fraction * pred {
                    let rec = CubeRecord {
                        cube: *gc,
                        k,
                        lambda_max: seg.lambda_max,
                        amplitude: amp,
                        case_tag: seg.case_tag,
                        measured_gain: gain,
                        predicted_gain: pred,
                    };
                    return Ok(Some((atom, rec)));
                }
            } else if deficit > 0.75 * last_deficit {
                // the violation is not an O(1/k) effect
                break;
            }
            last_deficit = deficit.max(0.0);
            if k >= policy.k_cap {
                warn!("cube {gc:?}: k reached the cap {} without acceptance", policy.k_cap);
                break;
            }
            k = (k * 2).min(policy.k_cap);
        }
        amp *= policy.backoff_factor;
    }
    Ok(None)
}

/// One perturbation pass over every cube of `grid`.
pub fn perturbation_pass(
    field: &FieldModel,
    grid: &ShiftedGrid,
    settings: &PassSettings,
) -> Result<(FieldModel, PassReport), SchemeError> {
    let j_before = relaxation_error_j(field, &grid.window, &settings.quadrature)?.value;
    let mut atoms = Vec::new();
    let mut records = Vec::new();
    let mut failures = 0;
    let mut rejected = 0;
    for gc in &grid.cubes {
        match try_cube(field, grid, gc, &settings.policy) {
            Ok(Some((atom, rec))) => {
                atoms.push(atom);
                records.push(rec);
            }
            Ok(None) => rejected += 1,
            Err(e) => {
                debug!("cube {gc:?} skipped: {e}");
                failures += 1;
            }
        }
    }
    let mut next = field.clone();
    if !atoms.is_empty() {
        next.push_generation(Generation::new(grid.side, atoms)?);
    }
    let after = relaxation_error_j(&next, &grid.window, &settings.quadrature)?;
    let mut k_values = BTreeMap::new();
    for r in &records {
        *k_values.entry(r.k).or_insert(0) += 1;
    }
    let report = PassReport {
        side: grid.side,
        j_before,
        j_after: after.value,
        argmax_t_after: after.argmax_t,
        predicted_gain: records.iter().map(|r| r.predicted_gain).sum(),
        measured_gain: records.iter().map(|r| r.measured_gain).sum(),
        cubes_considered: grid.cubes.len(),
        cubes_perturbed: records.len(),
        segment_failures: failures,
        rejected,
        k_values,
        cubes: records,
    };
    Ok((next, report))
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub speed_c: f64,
    pub m_bound: f64,
    pub margin_delta: f64,
    pub window: Window,
    pub s_initial: f64,
    pub s_min: f64,
    pub passes_max: usize,
    pub k0: u32,
    pub k_cap: u32,
    pub gain_fraction: f64,
    pub hull_lattice: usize,
    pub corner_check: bool,
    pub j_points: usize,
    pub j_slices: usize,
    /// Relative `J` decrease below which the next pass halves `s`.
    pub stall_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            speed_c: 1.0,
            m_bound: 5.0,
            margin_delta: 0.05,
            window: Window { x1: [-1.0, 1.0], x2: [-1.0, 1.0], t: [0.5, 1.0] },
            s_initial: 0.125,
            s_min: 0.03125,
            passes_max: 3,
            k0: 8,
            k_cap: 1024,
            gain_fraction: 0.5,
            hull_lattice: 5,
            corner_check: true,
            j_points: 256,
            j_slices: 32,
            stall_tol: 1e-2,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), SchemeError> {
        crate::subsolution::check_speed(self.speed_c)?;
        HullParams::new(self.m_bound, self.margin_delta)?;
        self.window.validate()?;
        if self.window.t[0] <= 0.0 {
            return Err(SchemeError::InvalidConfig("window times must be positive".into()));
        }
        if !(self.s_initial > 0.0 && self.s_min > 0.0 && self.s_min <= self.s_initial) {
            return Err(SchemeError::InvalidConfig("need 0 < s_min <= s_initial".into()));
        }
        if self.k0 == 0 || self.k_cap < self.k0 {
            return Err(SchemeError::InvalidConfig("need 1 <= k0 <= k_cap".into()));
        }
        if !(self.gain_fraction >= 0.0 && self.gain_fraction.is_finite()) {
            return Err(SchemeError::InvalidConfig("gain_fraction must be nonnegative".into()));
        }
        if self.j_points < 16 || self.j_slices < 32 {
            return Err(SchemeError::InvalidConfig("J quadrature needs >= 16 points and >= 32 slices".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> Result<HullParams, SchemeError> {
        Ok(HullParams::new(self.m_bound, self.margin_delta)?)
    }

    pub fn pass_settings(&self) -> PassSettings {
        PassSettings {
            policy: KPolicy {
                k0: self.k0,
                k_cap: self.k_cap,
                gain_fraction: self.gain_fraction,
                hull_lattice: self.hull_lattice,
                ..KPolicy::default()
            },
            quadrature: self.j_quadrature(),
        }
    }

    pub fn j_quadrature(&self) -> JQuadrature {
        JQuadrature { points_per_side: self.j_points, time_slices: self.j_slices }
    }

    /// The flat-interface base field of this configuration.
    pub fn base_field(&self) -> Result<FieldModel, SchemeError> {
        let base = SubsolutionField::flat(self.speed_c, self.window.t[1] + self.s_initial)?;
        Ok(FieldModel::new(base, self.params()?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub j_initial: f64,
    pub j_final: f64,
    pub passes: Vec<PassReport>,
    /// Why the schedule stopped.
    pub termination: String,
}

/// Iterates passes on `field`, halving `s` when `J` stalls or the grid is
/// empty.
pub fn run_on(config: &RunConfig, mut field: FieldModel) -> Result<(FieldModel, RunReport), SchemeError> {
    config.validate()?;
    let settings = config.pass_settings();
    let j_initial = relaxation_error_j(&field, &config.window, &settings.quadrature)?.value;
    let opts = GridOptions { corner_check: config.corner_check };
    let mut s = config.s_initial;
    let mut passes = Vec::new();
    let mut termination = "passes_max reached".to_string();
    while passes.len() < config.passes_max {
        let grid = match build_grid(&config.window, s, &field, &opts) {
            Ok(g) => g,
            Err(SchemeError::EmptyGrid(_)) => {
                if s * 0.5 >= config.s_min {
                    s *= 0.5;
                    continue;
                }
                termination = format!("empty grid at s = {s}");
                break;
            }
            Err(e) => return Err(e),
        };
        let (next, report) = perturbation_pass(&field, &grid, &settings)?;
        let stalled = report.cubes_perturbed == 0 || report.j_before - report.j_after < config.stall_tol * report.j_before;
        field = next;
        passes.push(report);
        if stalled {
            if s * 0.5 < config.s_min {
                if passes.len() < config.passes_max {
                    termination = format!("stalled at s_min = {s}");
                }
                break;
            }
            s *= 0.5;
        }
    }
    let j_final = passes.last().map_or(j_initial, |p| p.j_after);
    Ok((field, RunReport { j_initial, j_final, passes, termination }))
}

/// [`run_on`] starting from the flat subsolution of the configuration.
pub fn run(config: &RunConfig) -> Result<(FieldModel, RunReport), SchemeError> {
    config.validate()?;
    run_on(config, config.base_field()?)
}
