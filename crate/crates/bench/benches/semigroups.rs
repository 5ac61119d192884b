use std::sync::Arc;

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use ergodelab_core::means::{cesaro_mean, counterexample_field, ergodic_project, CounterexampleSpec};
use ergodelab_core::{CompactWindow, Elliptic1D, Expr, Extension, Grid, QuadratureSpec, SampledField, SemigroupModel};

fn field(l: f64, h: f64, g: impl Fn(f64) -> f64 + Sync) -> SampledField {
    let grid = Arc::new(Grid::uniform(1, l, h).unwrap());
    SampledField::from_fn(grid, Extension::ConstantExtend, |x| g(x[0])).unwrap()
}

fn apply(c: &mut Criterion) {
    let q = QuadratureSpec::default();
    let f = field(20.0, 0.05, f64::cos);
    let ou = SemigroupModel::ou1d(1.0, 1.0).unwrap();
    c.bench_function("ou1d apply t=1", |b| b.iter(|| ou.apply(black_box(1.0), &f, &q).unwrap()));

    let small = field(6.0, 0.05, f64::cos);
    let ell = SemigroupModel::Elliptic1d(
        Elliptic1D::new(Expr::parse("1+x^2").unwrap(), Expr::parse("-x^3").unwrap(), vec![8.0, 10.0]).unwrap(),
    );
    c.bench_function("elliptic1d apply t=0.5", |b| b.iter(|| ell.apply(black_box(0.5), &small, &q).unwrap()));
}

fn means(c: &mut Criterion) {
    let q = QuadratureSpec::default().with_dt(0.01).with_growth(1.0);
    let f = field(20.0, 0.05, |x| x * x);
    let ou = SemigroupModel::ou1d(1.0, 1.0).unwrap();
    c.bench_function("ou1d cesaro r=64", |b| b.iter(|| cesaro_mean(&ou, &f, black_box(64.0), &q).unwrap()));

    let ce = counterexample_field(CounterexampleSpec::default()).unwrap();
    let schedule: Vec<f64> = (1..=5).map(|n| 10f64.powi(n + 1) - 0.5).collect();
    c.bench_function("counterexample project", |b| {
        b.iter(|| {
            ergodic_project(
                &SemigroupModel::Translation,
                &ce,
                &schedule,
                &QuadratureSpec::default(),
                CompactWindow::new(10.0),
                1e-2,
            )
            .unwrap()
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = apply, means
}
criterion_main!(benches);
