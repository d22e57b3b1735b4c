use mixlab_core::diagnostics::{
    degraded_bound_check, dyadic_family, interior_points, linear_residual_suite, mixing_check, rectangle_average,
    DegradedBoundSpec, DegradedReport, DiagnosticsError, MixingReport, Observable, RectQuadrature, RectangleQuery,
    ResidualTable,
};
use mixlab_core::geometry::{hull_contains, HullParams};
use mixlab_core::io::{
    config_hash, dump_field, hex, load_atoms, read_config, save_atoms, AtomsFile, DumpSpec, FileConfig, IoError,
};
use mixlab_core::scheme::{relaxation_error_j, run_on, FieldModel, PassReport, SchemeError};
use mixlab_core::subsolution::{
    sampled_subsolution, BiotSavartBox, Interface, MixingGeometry, SampledInterface, SampledSettings,
    SubsolutionError, SubsolutionReport,
};
use mixlab_core::SubsolutionField;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    HullViolation(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::HullViolation(_) => 3,
            CliError::Io(_) => 4,
            CliError::Verification(_) => 5,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::MissingKeys(_)
            | IoError::UnknownKey(_)
            | IoError::Syntax { .. }
            | IoError::BadValue { .. }
            | IoError::Invalid(_) => CliError::Config(e.to_string()),
            IoError::BadMagic | IoError::Corrupt(_) | IoError::File { .. } | IoError::Io(_) => CliError::Io(e.to_string()),
        }
    }
}

impl From<SchemeError> for CliError {
    fn from(e: SchemeError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SubsolutionError> for CliError {
    fn from(e: SubsolutionError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<DiagnosticsError> for CliError {
    fn from(e: DiagnosticsError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn check_resolution(n: usize) -> Result<(), CliError> {
    if n.is_power_of_two() && (16..=4096).contains(&n) {
        Ok(())
    } else {
        Err(CliError::Config(format!("resolution must be a power of two between 16 and 4096, got {n}")))
    }
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn read_json<T: for<'a> Deserialize<'a>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

/// Loaded configuration with its provenance hash.
struct Setup {
    cfg: FileConfig,
    hash: [u8; 32],
    params: HullParams,
}

fn load_setup(path: &Path) -> Result<Setup, CliError> {
    let mut cfg = read_config(path)?;
    cfg.run.validate()?;
    if let Some(p) = &cfg.interface_csv {
        if p.is_relative() {
            cfg.interface_csv = Some(path.parent().unwrap_or(Path::new(".")).join(p));
        }
    }
    let hash = config_hash(&cfg);
    let params = cfg.run.params()?;
    Ok(Setup { cfg, hash, params })
}

/// Base field of the configuration and, for sampled interfaces, the
/// construction report.
fn base_field(setup: &Setup) -> Result<(FieldModel, Option<SubsolutionReport>), CliError> {
    let run = &setup.cfg.run;
    let t_end = run.window.t[1] + run.s_initial;
    let Some(csv_path) = &setup.cfg.interface_csv else {
        return Ok((FieldModel::new(SubsolutionField::flat(run.speed_c, t_end)?, setup.params), None));
    };
    let text = fs::read_to_string(csv_path).map_err(|e| io_err(csv_path, e))?;
    let iface = SampledInterface::from_csv_str(&text)?;
    let fmax = iface.f_abs_max();
    let geometry = MixingGeometry::new(run.speed_c, t_end, Interface::Sampled(iface))?;
    let pad = fmax + run.speed_c * t_end + 0.25;
    let n = setup.cfg.bs_points;
    let bx = BiotSavartBox { x1: run.window.x1, x2: [-pad, pad], n1: n, n2: n };
    let (field, report) = sampled_subsolution(&geometry, &setup.params, &SampledSettings { bx, n_lambda: setup.cfg.n_lambda })?;
    Ok((FieldModel::new(field, setup.params), Some(report)))
}

#[derive(Debug, Serialize, Deserialize)]
struct SlackSummary {
    /// Minimum normalized hull slack over grid points inside the mixing zone.
    worst_slack: f64,
    worst_point: [f64; 3],
    samples: usize,
}

/// Hull slack of the base field on a grid over the window, restricted to
/// the open mixing zone.
fn slack_scan(field: &FieldModel, setup: &Setup, n: usize) -> SlackSummary {
    let w = setup.cfg.run.window;
    let mut out = SlackSummary { worst_slack: f64::INFINITY, worst_point: [f64::NAN; 3], samples: 0 };
    let nt = 8;
    for it in 0..nt {
        let t = w.t[0] + (w.t[1] - w.t[0]) * it as f64 / (nt - 1) as f64;
        for i in 0..n {
            for j in 0..n {
                let x = [
                    w.x1[0] + (w.x1[1] - w.x1[0]) * (i as f64 + 0.5) / n as f64,
                    w.x2[0] + (w.x2[1] - w.x2[0]) * (j as f64 + 0.5) / n as f64,
                ];
                if !field.base.in_mixing_zone(x, t) {
                    continue;
                }
                let s = hull_contains(&field.eval(x, t), &field.params).min_slack;
                out.samples += 1;
                if s < out.worst_slack {
                    out.worst_slack = s;
                    out.worst_point = [x[0], x[1], t];
                }
            }
        }
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct SubsolutionSummary {
    config_hash: String,
    slack: SlackSummary,
    sampled: Option<SubsolutionReport>,
    dump: Vec<PathBuf>,
}

fn dump(field: &FieldModel, setup: &Setup, out: &Path, stem: &str, n: usize) -> Result<Vec<PathBuf>, CliError> {
    let w = setup.cfg.run.window;
    let spec = DumpSpec { x1: w.x1, x2: w.x2, t: w.t[1], n };
    let p = dump_field(|x, t| field.eval(x, t), &spec, out, stem)?;
    Ok(vec![p.raw, p.header, p.profile])
}

pub fn subsolution(config: &Path, out: &Path, resolution: usize) -> Result<(), CliError> {
    check_resolution(resolution)?;
    let setup = load_setup(config)?;
    prepare_out(out)?;
    let (field, sampled) = base_field(&setup)?;
    let slack = slack_scan(&field, &setup, resolution.min(256));
    let files = dump(&field, &setup, out, "subsolution", resolution)?;
    let violated = slack.worst_slack <= 0.0 || sampled.as_ref().is_some_and(|r| r.has_violation());
    let summary = SubsolutionSummary { config_hash: hex(&setup.hash), slack, sampled, dump: files };
    write_json(&out.join("subsolution_report.json"), &summary)?;
    println!("worst hull slack {:.6e} over {} samples", summary.slack.worst_slack, summary.slack.samples);
    if violated {
        return Err(CliError::HullViolation(format!(
            "subsolution leaves the relaxed hull (worst slack {:.3e} at {:?})",
            summary.slack.worst_slack, summary.slack.worst_point
        )));
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub j_initial: f64,
    pub j_final: f64,
    pub termination: String,
    pub atom_count: usize,
    pub pass_reports: Vec<PassReport>,
}

pub fn run(config: &Path, out: &Path, resolution: usize) -> Result<(), CliError> {
    check_resolution(resolution)?;
    let setup = load_setup(config)?;
    prepare_out(out)?;
    let (base, _) = base_field(&setup)?;
    let (field, report) = run_on(&setup.cfg.run, base)?;
    save_atoms(&out.join("atoms.bin"), &AtomsFile::from_field(&field, setup.hash))?;
    dump(&field, &setup, out, "field", resolution)?;
    let summary = RunSummary {
        config_hash: hex(&setup.hash),
        j_initial: report.j_initial,
        j_final: report.j_final,
        termination: report.termination,
        atom_count: field.atom_count(),
        pass_reports: report.passes,
    };
    write_json(&out.join("run_report.json"), &summary)?;
    println!(
        "J {:.10} -> {:.10} after {} passes, {} atoms",
        summary.j_initial,
        summary.j_final,
        summary.pass_reports.len(),
        summary.atom_count
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VerifySummary {
    pub config_hash: String,
    pub atom_count: usize,
    pub inconsistent_atoms: usize,
    pub j: f64,
    pub residual_tables: Vec<ResidualTable>,
    pub degraded_checks: Vec<DegradedReport>,
    pub mixing_checks: Vec<MixingReport>,
    pub failures: Vec<String>,
    pub passed: bool,
}

/// Three time slices inside the window and the mixing zone.
fn check_times(setup: &Setup) -> [f64; 3] {
    let t = setup.cfg.run.window.t;
    [t[0], 0.5 * (t[0] + t[1]), t[1]]
}

pub fn verify(config: &Path, atoms: &Path, out: &Path) -> Result<(), CliError> {
    let setup = load_setup(config)?;
    prepare_out(out)?;
    let file = load_atoms(atoms)?;
    if file.config_hash != setup.hash {
        return Err(CliError::Config(format!(
            "atoms file was produced by config {} but {} hashes to {}",
            hex(&file.config_hash),
            config.display(),
            hex(&setup.hash)
        )));
    }
    let inconsistent = file.generations.iter().flatten().filter(|a| !a.is_consistent(1e-9)).count();
    let min_wavelength = file.generations.iter().flatten().map(|a| a.cube.side / a.k as f64).fold(f64::INFINITY, f64::min);
    let (base, _) = base_field(&setup)?;
    let field = file.into_field(base)?;
    let run = &setup.cfg.run;
    let j = relaxation_error_j(&field, &run.window, &run.j_quadrature())?.value;

    let mut failures = Vec::new();
    if inconsistent > 0 {
        failures.push(format!("{inconsistent} atoms have a direction inconsistent with their stored frequency"));
    }
    let geometry = field.base.geometry().cloned().ok_or_else(|| CliError::Config("field has no mixing geometry".into()))?;
    let mut points = interior_points(&geometry, run.window.x1, run.window.t, 4)?;
    points.extend(field.atoms().step_by(53).map(|a| {
        let c = a.cube.center;
        [c[0] + 0.07 * a.cube.side, c[1] - 0.11 * a.cube.side, c[2] + 0.05 * a.cube.side]
    }));
    let h = if min_wavelength.is_finite() { min_wavelength / 40.0 } else { 1e-3 };
    let table = linear_residual_suite(&field, &points, &[h, h / 2.0, h / 4.0])?;
    if table.min_order() < 1.8 {
        failures.push(format!("linear residual order {:.3} below 1.8", table.min_order()));
    }
    let quad = RectQuadrature::default();
    let spec = DegradedBoundSpec::constant();
    let mut degraded = Vec::new();
    let mut mixing = Vec::new();
    for t in check_times(&setup) {
        let family = dyadic_family(run.window.x1, t, 200);
        let d = degraded_bound_check(&field, &spec, &family, &quad)?;
        if !d.passed {
            failures.push(format!("degraded bound ratio {:.3e} > 1 at t = {t}", d.max_ratio));
        }
        degraded.push(d);
        let m = mixing_check(&field, t, &family, &quad)?;
        if !m.passed {
            failures.push(format!("{} boxes fail to mix at t = {t}", m.failures.len()));
        }
        mixing.push(m);
    }
    let summary = VerifySummary {
        config_hash: hex(&setup.hash),
        atom_count: field.atom_count(),
        inconsistent_atoms: inconsistent,
        j,
        residual_tables: vec![table],
        degraded_checks: degraded,
        mixing_checks: mixing,
        passed: failures.is_empty(),
        failures,
    };
    write_json(&out.join("verify_report.json"), &summary)?;
    println!("J {:.10} from {} atoms", summary.j, summary.atom_count);
    if !summary.passed {
        return Err(CliError::Verification(summary.failures.join("; ")));
    }
    Ok(())
}

fn parse_rect(text: &str) -> Result<RectangleQuery, CliError> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(format!("--rect: {e}")))?;
    let [s0, s1, l0, l1, t] = v[..] else {
        return Err(CliError::Config(format!("--rect expects s0,s1,l0,l1,t, got `{text}`")));
    };
    Ok(RectangleQuery::new([s0, s1], [l0, l1], t)?)
}

pub fn average(config: &Path, rect: &str, atoms: Option<&Path>) -> Result<(), CliError> {
    let setup = load_setup(config)?;
    let q = parse_rect(rect)?;
    let (mut field, _) = base_field(&setup)?;
    if let Some(p) = atoms {
        field = load_atoms(p)?.into_field(field)?;
    }
    let quad = RectQuadrature::default();
    let rho = rectangle_average(&field, Observable::Density, &q, &quad)?[0];
    let u = rectangle_average(&field, Observable::Velocity, &q, &quad)?;
    let p = rectangle_average(&field, Observable::PowerBalance, &q, &quad)?[0];
    println!("s0,s1,l0,l1,t,density,u1,u2,power_balance");
    println!("{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}", q.s[0], q.s[1], q.l[0], q.l[1], q.t, rho, u[0], u[1], p);
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct Provenance {
    config_hash: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CombinedReport {
    pass_reports: Vec<PassReport>,
    residual_tables: Vec<ResidualTable>,
    degraded_checks: Vec<DegradedReport>,
    mixing_checks: Vec<MixingReport>,
    provenance: Provenance,
}

pub fn report(out: &Path) -> Result<(), CliError> {
    let run: RunSummary = read_json(&out.join("run_report.json"))?;
    let ver: VerifySummary = read_json(&out.join("verify_report.json"))?;
    if run.config_hash != ver.config_hash {
        return Err(CliError::Config("run and verify reports come from different configs".into()));
    }
    let combined = CombinedReport {
        pass_reports: run.pass_reports,
        residual_tables: ver.residual_tables,
        degraded_checks: ver.degraded_checks,
        mixing_checks: ver.mixing_checks,
        provenance: Provenance { config_hash: run.config_hash },
    };
    write_json(&out.join("report.json"), &combined)
}
