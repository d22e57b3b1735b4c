use criterion::{criterion_group, criterion_main, Criterion};
use mixlab_core::scheme::{relaxation_error_j, JQuadrature};
use mixlab_core::waves::SpaceTimeCube;
use mixlab_core::geometry::{hull_contains, lambda_segment};
use mixlab_core::{FieldModel, HullParams, StateZ, SubsolutionField, WaveAtom, Window};
use std::hint::black_box;

fn params() -> HullParams {
    HullParams::new(5.0, 0.05).unwrap()
}

fn hull(c: &mut Criterion) {
    let p = params();
    let z = StateZ::from_array([0.3, 0.1, 0.4, 0.05, 0.3]);
    c.bench_function("hull_contains", |b| b.iter(|| hull_contains(black_box(&z), &p)));
    c.bench_function("lambda_segment", |b| b.iter(|| lambda_segment(black_box(&z), &p)));
}

fn atom(c: &mut Criterion) {
    let cube = SpaceTimeCube { center: [0.0, 0.2, 0.75], side: 0.125, parity: 0 };
    let z = StateZ::from_array([0.3, 0.1, 0.4, 0.05, 0.3]);
    let dir = lambda_segment(&z, &params()).unwrap().direction;
    let a = WaveAtom::new(cube, dir, 32).unwrap();
    let y = [0.01, 0.19, 0.76];
    c.bench_function("atom_eval", |b| b.iter(|| a.eval(black_box(y))));
}

fn functional(c: &mut Criterion) {
    let field = FieldModel::new(SubsolutionField::flat(1.0, 1.2).unwrap(), params());
    let window = Window { x1: [-1.0, 1.0], x2: [-1.0, 1.0], t: [0.5, 1.0] };
    let quad = JQuadrature { points_per_side: 64, time_slices: 8 };
    let mut g = c.benchmark_group("functional");
    g.sample_size(20);
    g.bench_function("relaxation_error_j_flat_64", |b| b.iter(|| relaxation_error_j(&field, &window, &quad).unwrap()));
    g.finish();
}

criterion_group!(benches, hull, atom, functional);
criterion_main!(benches);
