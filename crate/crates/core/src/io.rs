//! Run configuration files, binary atoms files and field dumps.

use crate::scheme::{FieldModel, Generation, RunConfig, SchemeError, Window};
use crate::state::StateZ;
use crate::waves::{SpaceTimeCube, WaveAtom, WaveFrequency};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("missing config keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("bad value for `{key}`: {msg}")]
    BadValue { key: String, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(#[from] SchemeError),
    #[error("not an atoms file (bad magic)")]
    BadMagic,
    #[error("corrupt atoms file: {0}")]
    Corrupt(String),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const REQUIRED_KEYS: [&str; 10] =
    ["speed_c", "M", "margin_delta", "window", "s_initial", "s_min", "passes_max", "k0", "k_cap", "gain_fraction"];

pub const OPTIONAL_KEYS: [&str; 8] =
    ["hull_lattice", "corner_check", "j_points", "j_slices", "stall_tol", "interface_csv", "bs_points", "n_lambda"];

/// Parsed configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct FileConfig {
    pub run: RunConfig,
    /// CSV `s,t,f` samples of a curved interface; flat when absent.
    pub interface_csv: Option<PathBuf>,
    /// Biot–Savart grid points per side for sampled interfaces.
    pub bs_points: usize,
    pub n_lambda: usize,
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, IoError>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| IoError::BadValue { key: key.into(), msg: e.to_string() })
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<FileConfig, IoError> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| IoError::Syntax { line: n + 1, msg: format!("expected `key = value`, got `{line}`") })?;
        let k = k.trim();
        if !REQUIRED_KEYS.contains(&k) && !OPTIONAL_KEYS.contains(&k) {
            return Err(IoError::UnknownKey(k.into()));
        }
        if map.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(IoError::Syntax { line: n + 1, msg: format!("duplicate key `{k}`") });
        }
    }
    let missing: Vec<String> = REQUIRED_KEYS.iter().filter(|k| !map.contains_key(**k)).map(|k| k.to_string()).collect();
    if !missing.is_empty() {
        return Err(IoError::MissingKeys(missing));
    }
    let get = |k: &str| map[k].as_str();
    let w: Vec<f64> = get("window")
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| parse_num("window", s))
        .collect::<Result<_, _>>()?;
    if w.len() != 6 {
        return Err(IoError::BadValue { key: "window".into(), msg: format!("expected 6 numbers, got {}", w.len()) });
    }
    let d = RunConfig::default();
    let opt = |k: &str| map.get(k).map(String::as_str);
    let run = RunConfig {
        speed_c: parse_num("speed_c", get("speed_c"))?,
        m_bound: parse_num("M", get("M"))?,
        margin_delta: parse_num("margin_delta", get("margin_delta"))?,
        window: Window { x1: [w[0], w[1]], x2: [w[2], w[3]], t: [w[4], w[5]] },
        s_initial: parse_num("s_initial", get("s_initial"))?,
        s_min: parse_num("s_min", get("s_min"))?,
        passes_max: parse_num("passes_max", get("passes_max"))?,
        k0: parse_num("k0", get("k0"))?,
        k_cap: parse_num("k_cap", get("k_cap"))?,
        gain_fraction: parse_num("gain_fraction", get("gain_fraction"))?,
        hull_lattice: opt("hull_lattice").map_or(Ok(d.hull_lattice), |v| parse_num("hull_lattice", v))?,
        corner_check: opt("corner_check").map_or(Ok(d.corner_check), |v| parse_num("corner_check", v))?,
        j_points: opt("j_points").map_or(Ok(d.j_points), |v| parse_num("j_points", v))?,
        j_slices: opt("j_slices").map_or(Ok(d.j_slices), |v| parse_num("j_slices", v))?,
        stall_tol: opt("stall_tol").map_or(Ok(d.stall_tol), |v| parse_num("stall_tol", v))?,
    };
    Ok(FileConfig {
        run,
        interface_csv: opt("interface_csv").map(PathBuf::from),
        bs_points: opt("bs_points").map_or(Ok(128), |v| parse_num("bs_points", v))?,
        n_lambda: opt("n_lambda").map_or(Ok(64), |v| parse_num("n_lambda", v))?,
    })
}

pub fn read_config(path: &Path) -> Result<FileConfig, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::File { path: path.into(), source })?;
    parse_config(&text)
}

/// Exact, order-fixed text form of a configuration.
pub fn canonical_config_text(cfg: &FileConfig) -> String {
    let r = &cfg.run;
    let w = &r.window;
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        s.push_str(k);
        s.push_str(" = ");
        s.push_str(&v);
        s.push('\n');
    };
    kv("speed_c", format!("{:?}", r.speed_c));
    kv("M", format!("{:?}", r.m_bound));
    kv("margin_delta", format!("{:?}", r.margin_delta));
    kv("window", format!("{:?},{:?},{:?},{:?},{:?},{:?}", w.x1[0], w.x1[1], w.x2[0], w.x2[1], w.t[0], w.t[1]));
    kv("s_initial", format!("{:?}", r.s_initial));
    kv("s_min", format!("{:?}", r.s_min));
    kv("passes_max", r.passes_max.to_string());
    kv("k0", r.k0.to_string());
    kv("k_cap", r.k_cap.to_string());
    kv("gain_fraction", format!("{:?}", r.gain_fraction));
    kv("hull_lattice", r.hull_lattice.to_string());
    kv("corner_check", r.corner_check.to_string());
    kv("j_points", r.j_points.to_string());
    kv("j_slices", r.j_slices.to_string());
    kv("stall_tol", format!("{:?}", r.stall_tol));
    if let Some(p) = &cfg.interface_csv {
        kv("interface_csv", p.display().to_string());
        kv("bs_points", cfg.bs_points.to_string());
        kv("n_lambda", cfg.n_lambda.to_string());
    }
    s
}

pub fn config_hash(cfg: &FileConfig) -> [u8; 32] {
    Sha256::digest(canonical_config_text(cfg).as_bytes()).into()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub const ATOMS_MAGIC: &[u8; 8] = b"MIXLAB01";

/// Contents of an atoms file.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomsFile {
    pub config_hash: [u8; 32],
    pub generations: Vec<Vec<WaveAtom>>,
}

impl AtomsFile {
    pub fn from_field(field: &FieldModel, config_hash: [u8; 32]) -> Self {
        AtomsFile { config_hash, generations: field.generations().iter().map(|g| g.atoms.clone()).collect() }
    }

    pub fn atom_count(&self) -> usize {
        self.generations.iter().map(Vec::len).sum()
    }

    /// Rebuilds the field on top of `base`.
    pub fn into_field(self, mut base: FieldModel) -> Result<FieldModel, IoError> {
        for atoms in self.generations {
            let side = atoms.first().map(|a| a.cube.side).ok_or_else(|| IoError::Corrupt("empty generation".into()))?;
            base.push_generation(Generation::new(side, atoms)?);
        }
        Ok(base)
    }
}

pub fn write_atoms(w: &mut impl Write, file: &AtomsFile) -> std::io::Result<()> {
    w.write_all(ATOMS_MAGIC)?;
    w.write_all(&(file.atom_count() as u64).to_le_bytes())?;
    w.write_all(&(file.generations.len() as u32).to_le_bytes())?;
    for g in &file.generations {
        w.write_all(&(g.len() as u64).to_le_bytes())?;
    }
    w.write_all(&file.config_hash)?;
    for a in file.generations.iter().flatten() {
        let c = &a.cube;
        for v in c.center.iter().chain([&c.side]) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&[c.parity])?;
        for v in a.direction.to_array() {
            w.write_all(&v.to_le_bytes())?;
        }
        let f = &a.freq;
        for v in [f.zeta[0], f.zeta[1], f.xi0, f.b_coeff] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&a.k.to_le_bytes())?;
    }
    Ok(())
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N], IoError> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| IoError::Corrupt(format!("truncated: {e}")))?;
    Ok(b)
}

fn f64s<const N: usize>(r: &mut impl Read) -> Result<[f64; N], IoError> {
    let mut out = [0.0; N];
    for v in &mut out {
        *v = f64::from_le_bytes(take(r)?);
    }
    Ok(out)
}

/// Reads an atoms file. Atoms are not checked for consistency here, so a
/// tampered file loads and is caught by verification.
pub fn read_atoms(r: &mut impl Read) -> Result<AtomsFile, IoError> {
    let magic: [u8; 8] = take(r).map_err(|_| IoError::BadMagic)?;
    if &magic != ATOMS_MAGIC {
        return Err(IoError::BadMagic);
    }
    let total = u64::from_le_bytes(take(r)?);
    let ngen = u32::from_le_bytes(take(r)?);
    let mut counts = Vec::with_capacity(ngen.min(1 << 16) as usize);
    for _ in 0..ngen {
        counts.push(u64::from_le_bytes(take(r)?));
    }
    if counts.iter().sum::<u64>() != total {
        return Err(IoError::Corrupt("generation counts do not add up".into()));
    }
    let config_hash = take(r)?;
    let mut generations = Vec::with_capacity(counts.len());
    for n in counts {
        let mut atoms = Vec::new();
        for _ in 0..n {
            let [c0, c1, c2, side] = f64s(r)?;
            let [parity] = take(r)?;
            let d = f64s::<5>(r)?;
            let [z0, z1, xi0, b] = f64s(r)?;
            let k = u32::from_le_bytes(take(r)?);
            let cube = SpaceTimeCube { center: [c0, c1, c2], side, parity };
            let freq = WaveFrequency { zeta: [z0, z1], xi0, b_coeff: b };
            let atom = WaveAtom::from_parts(cube, StateZ::from_array(d), freq, k)
                .map_err(|e| IoError::Corrupt(e.to_string()))?;
            atoms.push(atom);
        }
        generations.push(atoms);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(IoError::Corrupt("trailing bytes".into()));
    }
    Ok(AtomsFile { config_hash, generations })
}

pub fn save_atoms(path: &Path, file: &AtomsFile) -> Result<(), IoError> {
    let mut buf = Vec::new();
    write_atoms(&mut buf, file)?;
    fs::write(path, buf).map_err(|source| IoError::File { path: path.into(), source })
}

pub fn load_atoms(path: &Path) -> Result<AtomsFile, IoError> {
    let bytes = fs::read(path).map_err(|source| IoError::File { path: path.into(), source })?;
    read_atoms(&mut bytes.as_slice())
}

/// Where a field dump went.
#[derive(Debug, Clone, PartialEq)]
pub struct DumpPaths {
    pub raw: PathBuf,
    pub header: PathBuf,
    pub profile: PathBuf,
}

/// Box and time of a field dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DumpSpec {
    pub x1: [f64; 2],
    pub x2: [f64; 2],
    pub t: f64,
    pub n: usize,
}

const COMPONENTS: [&str; 5] = ["rho", "v1", "v2", "m1", "m2"];

/// Writes `stem.f64` (component-major `[5][n][n]` little-endian values,
/// `x₁` fastest), `stem.hdr` and `stem_profile.csv` (profile along `x₂` at
/// the middle of the `x₁` range).
pub fn dump_field(
    eval: impl Fn([f64; 2], f64) -> StateZ,
    spec: &DumpSpec,
    dir: &Path,
    stem: &str,
) -> Result<DumpPaths, IoError> {
    let n = spec.n;
    let node = |r: [f64; 2], j: usize| r[0] + (r[1] - r[0]) * (j as f64 + 0.5) / n as f64;
    let mut comps: Vec<Vec<f64>> = (0..5).map(|_| Vec::with_capacity(n * n)).collect();
    for j2 in 0..n {
        for j1 in 0..n {
            let z = eval([node(spec.x1, j1), node(spec.x2, j2)], spec.t).to_array();
            for c in 0..5 {
                comps[c].push(z[c]);
            }
        }
    }
    let raw = dir.join(format!("{stem}.f64"));
    let bytes: Vec<u8> = comps.iter().flatten().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(&raw, bytes).map_err(|source| IoError::File { path: raw.clone(), source })?;

    let header = dir.join(format!("{stem}.hdr"));
    let hdr = format!(
        "format = f64le\nlayout = component,x2,x1\ncomponents = {}\nn1 = {n}\nn2 = {n}\nx1 = {:?},{:?}\nx2 = {:?},{:?}\nt = {:?}\nnodes = cell_centers\n",
        COMPONENTS.join(","),
        spec.x1[0],
        spec.x1[1],
        spec.x2[0],
        spec.x2[1],
        spec.t
    );
    fs::write(&header, hdr).map_err(|source| IoError::File { path: header.clone(), source })?;

    let profile = dir.join(format!("{stem}_profile.csv"));
    let mut w = csv::Writer::from_path(&profile).map_err(|e| IoError::Corrupt(e.to_string()))?;
    let x1 = 0.5 * (spec.x1[0] + spec.x1[1]);
    let mut head = vec!["x2"];
    head.extend(COMPONENTS);
    w.write_record(&head).map_err(|e| IoError::Corrupt(e.to_string()))?;
    for j in 0..n {
        let x2 = node(spec.x2, j);
        let z = eval([x1, x2], spec.t).to_array();
        let row: Vec<String> = std::iter::once(x2).chain(z).map(|v| format!("{v:?}")).collect();
        w.write_record(&row).map_err(|e| IoError::Corrupt(e.to_string()))?;
    }
    w.flush()?;
    Ok(DumpPaths { raw, header, profile })
}

/// Reads back one component of a raw dump.
pub fn read_dump_component(raw: &Path, n: usize, component: usize) -> Result<Vec<f64>, IoError> {
    let bytes = fs::read(raw).map_err(|source| IoError::File { path: raw.into(), source })?;
    if bytes.len() != 5 * n * n * 8 || component >= 5 {
        return Err(IoError::Corrupt(format!("dump size {} does not match n = {n}", bytes.len())));
    }
    let start = component * n * n * 8;
    Ok(bytes[start..start + n * n * 8].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}
