//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

use mixlab_core::diagnostics::{
    degraded_bound_check, dyadic_family, mixing_check, volume_proportion, DegradedBoundSpec, RectQuadrature, RectangleQuery, WithGeometry,
};
use mixlab_core::geometry::{hull_contains, in_constraint_set, in_wave_cone, lambda_segment, HullClass, HullParams};
use mixlab_core::io::{load_atoms, save_atoms, write_atoms, AtomsFile};
use mixlab_core::quadrature::loglog_slope;
use mixlab_core::scheme::{relaxation_error_j, run, FieldModel, RunConfig, RunReport};
use mixlab_core::subsolution::flat_subsolution;
use mixlab_core::waves::{
    atom_linear_residual, localization_gap, oscillation_average, symbol_residual, Rect, SpaceTimeCube, WaveFrequency,
};
use mixlab_core::{MixingGeometry, Profile, StateZ, WaveAtom};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::time::{Duration, Instant};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

fn p5(delta: f64) -> HullParams {
    HullParams::new(5.0, delta).unwrap()
}

fn hull_consistency() -> Outcome {
    let p = p5(0.0);
    let mut rng = StdRng::seed_from_u64(1);
    let mut outside = 0;
    for _ in 0..10_000 {
        let rho: f64 = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let (r, a) = (5.0 * rng.random::<f64>().sqrt(), rng.random_range(0.0..std::f64::consts::TAU));
        let v = [r * a.cos(), r * a.sin()];
        let z = StateZ::new(rho, v, [0.5 * rho * v[0], 0.5 * rho * v[1]]);
        if !in_constraint_set(&z, &p) || hull_contains(&z, &p).class == HullClass::Outside {
            outside += 1;
        }
    }
    let mut worst = 0.0f64;
    for c in [0.25, 0.5, 1.0, 1.5, 1.9] {
        for i in 1..40 {
            let lambda = -1.0 + 2.0 * i as f64 / 40.0;
            let t = 0.8;
            let z = flat_subsolution(c, [0.3, lambda * c * t], t).unwrap();
            let lhs = (z.m[0] - 0.5 * z.rho * z.v[0]).hypot(z.m[1] - 0.5 * z.rho * z.v[1]);
            worst = worst.max((lhs - (1.0 - c).abs() * (1.0 - lambda * lambda) / 2.0).abs());
        }
    }
    Outcome::new(outside == 0 && worst <= 1e-12, format!("{outside} of 10000 K_M states outside; flat slack error {worst:.2e}"))
}

/// Random wave-cone direction with moderate size.
fn random_direction(rng: &mut StdRng) -> StateZ {
    let rho = rng.random_range(0.1..1.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let a = rng.random_range(0.0..std::f64::consts::TAU);
    StateZ::new(rho, [rho.abs() * a.cos(), rho.abs() * a.sin()], [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
}

fn wave_exactness() -> Outcome {
    let mut rng = StdRng::seed_from_u64(2);
    let hs = [1e-2, 5e-3, 2.5e-3];
    let mut worst_order = f64::INFINITY;
    let mut worst_symbol = 0.0f64;
    for _ in 0..100 {
        let dir = random_direction(&mut rng);
        let side = rng.random_range(0.75..1.25);
        let cube = SpaceTimeCube { center: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.5..1.5)], side, parity: 0 };
        let atom = WaveAtom::new(cube, dir, rng.random_range(1..=4)).unwrap();
        for x in symbol_residual(&dir, &atom.freq) {
            worst_symbol = worst_symbol.max(x.abs());
        }
        let res: Vec<[f64; 3]> = hs.iter().map(|&h| atom_linear_residual(&atom, h)).collect();
        for row in 0..3 {
            let y: Vec<f64> = res.iter().map(|r| r[row]).collect();
            if y.iter().any(|&v| v >= 1e-9) {
                worst_order = worst_order.min(loglog_slope(&hs, &y));
            }
        }
    }
    Outcome::new(worst_order >= 1.8 && worst_symbol <= 1e-12, format!("min fitted order {worst_order:.3}; symbol residual {worst_symbol:.2e}"))
}

fn localization() -> Outcome {
    let mut rng = StdRng::seed_from_u64(3);
    let ks = [8u32, 16, 32, 64, 128, 256];
    let kf: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    let mut worst = f64::INFINITY;
    for _ in 0..5 {
        let dir = random_direction(&mut rng);
        let cube = SpaceTimeCube { center: [0.0, 0.0, 1.0], side: 1.0, parity: 0 };
        let gaps: Vec<f64> = ks.iter().map(|&k| localization_gap(&WaveAtom::new(cube, dir, k).unwrap(), 16)).collect();
        worst = worst.min(-loglog_slope(&kf, &gaps));
    }
    Outcome::new(worst >= 0.9, format!("min decay slope {worst:.3} over k = 8..256"))
}

fn oscillation() -> Outcome {
    let p = Profile::default();
    let rect = Rect { lo: [0.0, 0.0], hi: [1.0, 1.0] };
    let f = WaveFrequency { zeta: [0.6, 0.8], xi0: 0.5, b_coeff: 0.0 };
    let g = |x: [f64; 2]| 1.0 + 0.5 * x[0] * x[1];
    let sq = |w: f64| w * w;
    let ks = [8u32, 16, 32, 64, 128, 256];
    let kf: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    let at64 = oscillation_average(&p, sq, g, &rect, &f, 64, 0.7);
    let gaps: Vec<f64> = ks.iter().map(|&k| oscillation_average(&p, sq, g, &rect, &f, k, 0.7).gap()).collect();
    let slope = -loglog_slope(&kf, &gaps);
    let times: Vec<f64> = (0..8).map(|i| 0.3 + 0.1 * i as f64).collect();
    let per_t: Vec<f64> = times.iter().map(|&t| oscillation_average(&p, sq, g, &rect, &f, 64, t).gap()).collect();
    let max = per_t.iter().copied().fold(0.0, f64::max);
    let min = per_t.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio = max / min;
    let mean = per_t.iter().sum::<f64>() / per_t.len() as f64;
    let limit_ok = (at64.limit - 0.5 * 1.125).abs() <= 1e-12;
    Outcome::new(
        at64.gap() <= 0.02 && slope >= 0.9 && ratio <= 3.0 && limit_ok,
        format!("gap at k=64 {:.2e}; slope {slope:.3}; max/min gap over 8 t {ratio:.3} (max/mean {:.3})", at64.gap(), max / mean),
    )
}

fn segments() -> Outcome {
    let s = lambda_segment(&StateZ::ZERO, &p5(0.0)).unwrap();
    let origin_err = (s.lambda_max - 0.5f64.sqrt()).abs();
    let p = p5(0.0);
    let mut rng = StdRng::seed_from_u64(5);
    let (mut done, mut bad) = (0, 0);
    while done < 10_000 {
        let z = StateZ::new(
            rng.random_range(-0.99..0.99),
            [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)],
            [rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5)],
        );
        if hull_contains(&z, &p).min_slack <= 1e-3 {
            continue;
        }
        done += 1;
        let Ok(seg) = lambda_segment(&z, &p) else {
            bad += 1;
            continue;
        };
        let ends = [z + seg.direction * seg.lambda_max, z - seg.direction * seg.lambda_max];
        let ok = seg.lambda_max > 0.0 && in_wave_cone(&seg.direction, 1e-12) && ends.iter().all(|e| hull_contains(e, &p).is_inside_strict());
        bad += !ok as usize;
    }
    Outcome::new(origin_err <= 1e-9 && bad == 0, format!("|λ_max(0) − √2/2| = {origin_err:.2e}; {bad} of 10000 random segments bad"))
}

fn criterion_six_config() -> RunConfig {
    RunConfig { passes_max: 3, s_initial: 0.125, j_points: 256, ..RunConfig::default() }
}

fn j_decrease(report: &RunReport) -> Outcome {
    let strictly = report.passes.iter().all(|p| p.j_after < p.j_before);
    let factor = report.j_initial / report.j_final;
    let (mut perturbed, mut in_band) = (0usize, 0usize);
    for c in report.passes.iter().flat_map(|p| &p.cubes) {
        perturbed += 1;
        in_band += (0.3..=1.5).contains(&c.gain_ratio()) as usize;
    }
    let frac = in_band as f64 / perturbed.max(1) as f64;
    let js: Vec<String> = report.passes.iter().map(|p| format!("{:.4}", p.j_after)).collect();
    Outcome::new(
        report.passes.len() == 3 && strictly && factor >= 2.0 && frac >= 0.8,
        format!(
            "J {:.4} -> [{}], reduction factor {factor:.4} (need 2); gain ratio in band for {:.1}% of {perturbed} perturbed cubes",
            report.j_initial,
            js.join(", "),
            100.0 * frac
        ),
    )
}

fn check_times(cfg: &RunConfig) -> [f64; 3] {
    let t = cfg.window.t;
    [t[0], 0.5 * (t[0] + t[1]), t[1]]
}

fn degraded(field: &FieldModel, cfg: &RunConfig) -> Outcome {
    let spec = DegradedBoundSpec::constant();
    let quad = RectQuadrature::default();
    let base = FieldModel::new(field.base.clone(), field.params);
    let (mut worst, mut worst_base, mut count) = (0.0f64, 0.0f64, usize::MAX);
    for t in check_times(cfg) {
        let fam = dyadic_family(cfg.window.x1, t, 200);
        count = count.min(fam.len());
        worst = worst.max(degraded_bound_check(field, &spec, &fam, &quad).unwrap().max_ratio);
        worst_base = worst_base.max(degraded_bound_check(&base, &spec, &fam, &quad).unwrap().max_ratio);
    }
    Outcome::new(
        count >= 200 && worst <= 1.0 && worst_base <= 1e-8,
        format!("{count} rectangles per slice; max ratio {worst:.3e} perturbed, {worst_base:.1e} subsolution"),
    )
}

fn mixing(field: &FieldModel, cfg: &RunConfig) -> Outcome {
    let quad = RectQuadrature::default();
    let geometry: MixingGeometry = field.base.geometry().unwrap().clone();
    let (mut fails, mut boxes, mut controls_ok) = (0, 0, true);
    for t in check_times(cfg) {
        let fam = dyadic_family(cfg.window.x1, t, 200);
        let r = mixing_check(field, t, &fam, &quad).unwrap();
        fails += r.failures.len();
        boxes += r.boxes;
        for sign in [1.0, -1.0] {
            let pure = WithGeometry { geometry: geometry.clone(), f: move |_| StateZ::new(sign, [0.0, sign], [0.0, 0.5]) };
            controls_ok &= mixing_check(&pure, t, &fam, &quad).unwrap().failures.len() == fam.len();
        }
    }
    Outcome::new(fails == 0 && controls_ok, format!("{fails} of {boxes} boxes fail; pure-fluid controls rejected on every box: {controls_ok}"))
}

fn volumes(field: &FieldModel, cfg: &RunConfig) -> Outcome {
    let quad = RectQuadrature::default();
    let spec = DegradedBoundSpec::constant();
    let base = FieldModel::new(field.base.clone(), field.params);
    let geometry = field.base.geometry().unwrap();
    let (mut exact_err, mut worst_ratio) = (0.0f64, 0.0f64);
    for t in check_times(cfg) {
        // S spans the window, L = (0, 1): ⟨L⟩ = 1/2
        let q = RectangleQuery::new(cfg.window.x1, [0.0, 1.0], t).unwrap();
        let a = volume_proportion(&base, &q, 1e-3, &quad).unwrap();
        exact_err = exact_err.max((a.plus - 0.75).abs()).max((a.minus - 0.25).abs());
        let b = volume_proportion(field, &q, 1e-3, &quad).unwrap();
        let env = spec.e(q.l_mid(), t) * spec.q(q.area(geometry));
        worst_ratio = worst_ratio.max((b.plus - 0.75).abs().max((b.minus - 0.25).abs()) / env);
    }
    Outcome::new(
        exact_err <= 1e-12 && worst_ratio <= 1.0,
        format!("subsolution pair error {exact_err:.1e}; perturbed deviation / envelope {worst_ratio:.3e}"),
    )
}

fn determinism(field: &FieldModel, report: &RunReport, cfg: &RunConfig) -> Outcome {
    let bytes = |f: &FieldModel| {
        let mut b = Vec::new();
        write_atoms(&mut b, &AtomsFile::from_field(f, [7; 32])).unwrap();
        b
    };
    let (again, _) = run(cfg).unwrap();
    let identical = bytes(field) == bytes(&again);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("atoms.bin");
    save_atoms(&path, &AtomsFile::from_field(field, [7; 32])).unwrap();
    let replay = load_atoms(&path).unwrap().into_field(FieldModel::new(field.base.clone(), field.params)).unwrap();
    let j = relaxation_error_j(&replay, &cfg.window, &cfg.j_quadrature()).unwrap().value;
    let err = (j - report.j_final).abs();
    Outcome::new(identical && err <= 1e-10, format!("atoms files identical: {identical}; replayed J error {err:.1e}"))
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome, Duration, Duration)> = Vec::new();
    let mut timed = |n: usize, name: &'static str, limit: Duration, f: &mut dyn FnMut() -> Outcome| {
        let t0 = Instant::now();
        let o = f();
        let dt = t0.elapsed();
        print_line(n, name, &o, dt, limit);
        results.push((n, name, o, dt, limit));
    };
    let min = |m: u64| Duration::from_secs(60 * m);
    let sec = Duration::from_secs;

    timed(1, "hull consistency", sec(5), &mut hull_consistency);
    timed(2, "wave exactness", sec(30), &mut wave_exactness);
    timed(3, "O(1/k) localization", sec(20), &mut localization);
    timed(4, "oscillation averaging", sec(10), &mut oscillation);
    timed(5, "segment correctness", sec(10), &mut segments);

    let cfg = criterion_six_config();
    let mut shared = None;
    timed(6, "J decrease", min(5), &mut || {
        let (field, report) = run(&cfg).unwrap();
        let o = j_decrease(&report);
        shared = Some((field, report));
        o
    });
    let (field, report) = shared.expect("criterion 6 run");
    timed(7, "degraded averages", min(2), &mut || degraded(&field, &cfg));
    timed(8, "mixing surrogate", min(1), &mut || mixing(&field, &cfg));
    timed(9, "volume proportions", min(1), &mut || volumes(&field, &cfg));
    timed(10, "determinism and replay", min(10), &mut || determinism(&field, &report, &cfg));

    let failed: Vec<usize> = results.iter().filter(|r| !(r.2.pass && r.3 <= r.4)).map(|r| r.0).collect();
    println!("acceptance: {} of {} criteria pass", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}

fn print_line(n: usize, name: &str, o: &Outcome, dt: Duration, limit: Duration) {
    let in_time = dt <= limit;
    let tag = if o.pass && in_time { "PASS" } else { "FAIL" };
    let late = if in_time { String::new() } else { format!(" (over the {:.0} s budget)", limit.as_secs_f64()) };
    println!("{tag} [{n:>2}] {name}: {} [{:.2} s{late}]", o.detail, dt.as_secs_f64());
}
