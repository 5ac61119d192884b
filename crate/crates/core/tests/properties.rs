use std::sync::Arc;

use ergodelab_core::means::{cesaro_mean, counterexample_value};
use ergodelab_core::models::contraction_excess;
use ergodelab_core::invariant::{lyapunov_residual, ou_invariant};
use ergodelab_core::report::fmt_sig;
use ergodelab_core::{CompactWindow, Expr, Extension, Grid, QuadratureSpec, SampledField, SemigroupModel};
use nalgebra::DMatrix;
use proptest::prelude::*;

const NODES: usize = 41;

fn grid() -> Arc<Grid> {
    Arc::new(Grid::uniform(1, 4.0, 0.2).unwrap())
}

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0_f64, NODES)
}

fn sampled(v: Vec<f64>) -> SampledField {
    SampledField::new(grid(), v, Extension::ConstantExtend).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn seminorm_is_monotone_in_the_window(v in values(), r1 in 0.0..4.0_f64, r2 in 0.0..4.0_f64) {
        let f = sampled(v);
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        let a = f.seminorm(CompactWindow::new(lo)).unwrap();
        let b = f.seminorm(CompactWindow::new(hi)).unwrap();
        prop_assert!(a <= b);
        prop_assert!(b <= f.sup_norm());
    }

    #[test]
    fn window_distance_is_a_pseudometric(u in values(), v in values(), w in values(), r in 0.0..4.0_f64) {
        let (f, g, h) = (sampled(u), sampled(v), sampled(w));
        let win = CompactWindow::new(r);
        let fg = f.distance(&g, win).unwrap();
        prop_assert_eq!(fg, g.distance(&f, win).unwrap());
        prop_assert!(fg <= f.distance(&h, win).unwrap() + h.distance(&g, win).unwrap() + 1e-12);
    }

    #[test]
    fn ou_semigroup_is_a_positive_contraction(v in values(), t in 0.05..3.0_f64) {
        let m = SemigroupModel::ou1d(1.0, 0.5).unwrap();
        let q = QuadratureSpec::default();
        let f = sampled(v.iter().map(|x| x.abs()).collect());
        let image = m.apply(t, &f, &q).unwrap();
        prop_assert!(contraction_excess(&f, &image) <= 1e-9);
        prop_assert!(image.min_value() >= -1e-12);
    }

    #[test]
    fn cesaro_mean_is_linear(a in -2.0..2.0_f64, b in -2.0..2.0_f64, c1 in -1.0..1.0_f64, c2 in 0.5..2.0_f64) {
        let m = SemigroupModel::heat(0.5).unwrap();
        let q = QuadratureSpec::default().with_dt(0.05);
        let f = SampledField::from_fn(grid(), Extension::ConstantExtend, |x| (c1 * x[0]).sin()).unwrap();
        let g = SampledField::from_fn(grid(), Extension::ConstantExtend, |x| (-c2 * x[0] * x[0]).exp()).unwrap();
        let combo = f.scale(a).unwrap().add(&g.scale(b).unwrap()).unwrap();
        let lhs = cesaro_mean(&m, &combo, 1.5, &q).unwrap();
        let rhs = cesaro_mean(&m, &f, 1.5, &q).unwrap().scale(a).unwrap()
            .add(&cesaro_mean(&m, &g, 1.5, &q).unwrap().scale(b).unwrap()).unwrap();
        prop_assert!(lhs.distance(&rhs, CompactWindow::new(3.0)).unwrap() <= 1e-12);
    }

    #[test]
    fn translation_cesaro_mean_of_constant_is_constant(c in -5.0..5.0_f64, r in 0.1..50.0_f64) {
        let q = QuadratureSpec::default();
        let f = SampledField::constant(grid(), Extension::ConstantExtend, c).unwrap();
        let mean = cesaro_mean(&SemigroupModel::Translation, &f, r, &q).unwrap();
        let tol = 4.0 * (r / q.dt) * f64::EPSILON * c.abs().max(1.0);
        prop_assert!(mean.values().iter().all(|v| (v - c).abs() <= tol));
    }

    #[test]
    fn polynomials_evaluate_like_horner(c in prop::collection::vec(-3.0..3.0_f64, 4), x in -2.0..2.0_f64) {
        let src = format!("{:e} + {:e}*x + {:e}*x^2 + {:e}*x^3", c[0], c[1], c[2], c[3]);
        let e = Expr::parse(&src).unwrap();
        let horner = ((c[3] * x + c[2]) * x + c[1]) * x + c[0];
        prop_assert!((e.eval_x(x) - horner).abs() <= 1e-12 * (1.0 + horner.abs()));
    }

    #[test]
    fn twelve_digit_formatting_round_trips(x in prop::num::f64::NORMAL) {
        let y: f64 = fmt_sig(x).parse().unwrap();
        prop_assert!((y - x).abs() <= 5e-12 * x.abs());
    }

    #[test]
    fn counterexample_stays_in_the_unit_band(x in -10.0..1e7_f64) {
        let v = counterexample_value(x);
        prop_assert!((-1.0..=1.0).contains(&v));
    }

    #[test]
    fn lyapunov_solves_random_stable_drifts(
        d in prop::collection::vec(1.0..3.0_f64, 3),
        off in prop::collection::vec(-0.4..0.4_f64, 6),
    ) {
        let mut b = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(3, d.iter().map(|v| -v)));
        let mut k = 0;
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    b[(i, j)] = off[k];
                    k += 1;
                }
            }
        }
        let q = DMatrix::identity(3, 3);
        let mu = ou_invariant(&b, &q).unwrap().expect("diagonally dominant drift is stable");
        prop_assert!(lyapunov_residual(&b, &q, &mu.covariance) <= 1e-10);
    }
}
