use criterion::{black_box, criterion_group, criterion_main, Criterion};
use ergodelab_core::invariant::ou_invariant;
use ergodelab_core::wiener::{dilated_span_approx, mellin_nonvanishing, DilationRange, KernelSpec};
use nalgebra::DMatrix;

fn lyapunov(c: &mut Criterion) {
    let b = DMatrix::from_row_slice(4, 4, &[
        -2.0, 0.3, 0.0, 0.1,
        0.0, -1.5, 0.4, 0.0,
        0.2, 0.0, -1.0, 0.3,
        0.0, 0.1, 0.0, -3.0,
    ]);
    let q = DMatrix::identity(4, 4);
    c.bench_function("ou_invariant 4x4", |bn| bn.iter(|| ou_invariant(black_box(&b), &q).unwrap()));
}

fn wiener(c: &mut Criterion) {
    let xi: Vec<f64> = (0..=40).map(|k| 0.25 * k as f64).collect();
    let k = KernelSpec::exp_decay();
    c.bench_function("mellin table 41 points", |b| b.iter(|| mellin_nonvanishing(&k, black_box(&xi)).unwrap()));
    let target = KernelSpec::indicator();
    c.bench_function("dilated span n=10", |b| {
        b.iter(|| dilated_span_approx(&k, &target, black_box(10), DilationRange::default()).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = lyapunov, wiener
}
criterion_main!(benches);
