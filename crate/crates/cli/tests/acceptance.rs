//! Acceptance criteria 1–10, one PASS/FAIL line each.

use std::f64::consts::PI;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use ergodelab_core::expr::Expr;
use ergodelab_core::invariant::{
    adjoint_residual, invariance_residual, ou_invariant, stationary_density_1d, GaussianMeasure, Measure,
};
use ergodelab_core::means::{
    abel_mean, cesaro_mean, commutation_residual, counterexample_field, ergodic_project, CesaroReport,
    CounterexampleSpec, Verdict,
};
use ergodelab_core::models::{contraction_excess, semigroup_law_residual};
use ergodelab_core::periodic::{
    evolution_invariance_residual, evolution_measures, periodicity_residual, time_average_check, EvolutionModel,
};
use ergodelab_core::quadrature::riemann_integral;
use ergodelab_core::wiener::{
    abel_to_cesaro_transfer_check, dilated_span_approx, mellin_nonvanishing, DilationRange, KernelSpec,
    TransferVerdict,
};
use ergodelab_core::{CompactWindow, Elliptic1D, Extension, Grid, Interpolation, QuadratureSpec, Rule, SampledField, SemigroupModel};
use nalgebra::DMatrix;

type Outcome = Result<(bool, String), String>;

fn field(l: f64, h: f64, g: impl Fn(f64) -> f64 + Sync) -> SampledField {
    let grid = Arc::new(Grid::uniform(1, l, h).unwrap());
    SampledField::from_fn(grid, Extension::ConstantExtend, |x| g(x[0])).unwrap()
}

fn doubling(k: i32) -> Vec<f64> {
    (0..=k).map(|j| 2f64.powi(j)).collect()
}

fn graded() -> QuadratureSpec {
    QuadratureSpec::default().with_dt(0.01).with_growth(1.0)
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// `|Γ(1 − iξ)| = sqrt(πξ / sinh(πξ))`.
fn gamma_modulus(xi: f64) -> f64 {
    if xi == 0.0 {
        1.0
    } else {
        (PI * xi / (PI * xi).sinh()).sqrt()
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let f = counterexample_field(CounterexampleSpec::default()).map_err(err)?;
    let schedule: Vec<f64> = (1..=5).map(|n| 10f64.powi(n + 1) - 0.5).collect();
    let rep = ergodic_project(
        &SemigroupModel::Translation,
        &f,
        &schedule,
        &QuadratureSpec::default(),
        CompactWindow::new(10.0),
        1e-2,
    )
    .map_err(err)?;
    let v = rep.values_at_origin();
    let mut ok = true;
    let mut worst = 0.0_f64;
    for n in 2..=4 {
        let p = 10f64.powi(n + 1);
        let target = 9.0 / 11.0 * p / (p - 0.5);
        let d = (v[n as usize - 1].abs() - target).abs();
        worst = worst.max(d);
        ok &= d <= 0.02;
    }
    let alternating = (1..=3).all(|k| v[k] * v[k + 1] < 0.0) && v[0] * v[1] < 0.0;
    let oscillating = matches!(rep.verdict, Verdict::Oscillating { .. });
    let secs = start.elapsed().as_secs_f64();
    Ok((
        ok && alternating && oscillating && secs <= 10.0,
        format!(
            "max |C(r_n)f(0)| deviation {worst:.2e} (<= 0.02), alternating {alternating}, verdict {}, {secs:.2}s (<= 10s)",
            rep.verdict.name()
        ),
    ))
}

struct OuRuns {
    x2: CesaroReport,
    cos: CesaroReport,
    x2_field: SampledField,
    cos_field: SampledField,
    secs: f64,
}

fn ou_runs() -> Result<OuRuns, String> {
    let start = Instant::now();
    let m = SemigroupModel::ou1d(1.0, 1.0).map_err(err)?;
    let w = CompactWindow::new(5.0);
    let x2_field = field(20.0, 0.05, |x| x * x);
    let cos_field = field(20.0, 0.05, f64::cos);
    let x2 = ergodic_project(&m, &x2_field, &doubling(13), &graded(), w, 1e-2).map_err(err)?;
    let cos = ergodic_project(&m, &cos_field, &doubling(13), &graded(), w, 1e-2).map_err(err)?;
    Ok(OuRuns {
        x2,
        cos,
        x2_field,
        cos_field,
        secs: start.elapsed().as_secs_f64(),
    })
}

fn criterion_2(runs: &OuRuns) -> Outcome {
    let w = CompactWindow::new(5.0);
    let mut ok = runs.secs <= 60.0;
    let mut detail = Vec::new();
    for (name, rep, c) in [("x^2", &runs.x2, 1.0), ("cos", &runs.cos, (-0.5f64).exp())] {
        match rep.limit() {
            Some(l) => {
                let d = l.map(|v| v - c).map_err(err)?.seminorm(w).map_err(err)?;
                ok &= d <= 1e-2;
                detail.push(format!("{name}: p_5(limit - {c:.5}) = {d:.2e}"));
            }
            None => {
                ok = false;
                detail.push(format!("{name}: verdict {}", rep.verdict.name()));
            }
        }
    }
    Ok((ok, format!("{} (<= 1e-2), {:.1}s (<= 60s)", detail.join(", "), runs.secs)))
}

fn criterion_3(runs: &OuRuns) -> Outcome {
    let m = SemigroupModel::ou1d(1.0, 1.0).map_err(err)?;
    let w = CompactWindow::new(5.0);
    let q = graded();
    let lambda = 2f64.powi(-8);
    let mut worst = 0.0_f64;
    let mut converged = true;
    for (rep, f) in [(&runs.x2, &runs.x2_field), (&runs.cos, &runs.cos_field)] {
        converged &= rep.limit().is_some();
        let c = cesaro_mean(&m, f, 1.0 / lambda, &q).map_err(err)?;
        let a = abel_mean(&m, f, lambda, &q).map_err(err)?;
        worst = worst.max(c.distance(&a, w).map_err(err)?);
    }

    let ce = counterexample_field(CounterexampleSpec::default()).map_err(err)?;
    let per_decade = 20;
    let lambdas: Vec<f64> = (0..=3 * per_decade)
        .map(|k| 1e-2 * 10f64.powf(-(k as f64) / per_decade as f64))
        .collect();
    let t = abel_to_cesaro_transfer_check(
        &SemigroupModel::Translation,
        &ce,
        &lambdas,
        &QuadratureSpec::default().with_dt(0.5),
        CompactWindow::new(0.0),
    )
    .map_err(err)?;
    let divergent = t.verdict == TransferVerdict::JointlyDivergent && t.abel.tail > 0.5 && t.cesaro.tail > 0.5;
    Ok((
        converged && worst <= 1e-2 && divergent,
        format!(
            "OU max p_5(C(1/λ)f - λR(λ)f) at λ = 2^-8: {worst:.2e} (<= 1e-2); counterexample {:?}, trailing-decade spreads abel {:.3} cesaro {:.3} (> 0.5)",
            t.verdict, t.abel.tail, t.cesaro.tail
        ),
    ))
}

fn criterion_4() -> Outcome {
    let m = SemigroupModel::ou1d(1.0, 1.0).map_err(err)?;
    let w = CompactWindow::new(5.0);
    let q = graded();
    let mut fixed = 0.0_f64;
    let mut generator = 0.0_f64;
    for f in [field(20.0, 0.05, |x| x * x), field(20.0, 0.05, f64::cos)] {
        let rep = ergodic_project(&m, &f, &doubling(15), &q, w, 1e-2).map_err(err)?;
        let p = rep.limit().ok_or_else(|| format!("verdict {}", rep.verdict.name()))?;
        for t in [0.5, 1.0, 2.0] {
            fixed = fixed.max(m.apply(t, p, &q).map_err(err)?.distance(p, w).map_err(err)?);
        }
        generator = generator.max(m.generator_apply(p).map_err(err)?.seminorm(w).map_err(err)?);
    }
    Ok((
        fixed <= 1e-3 && generator <= 1e-3,
        format!("max_t p_5(T(t)Pf - Pf) = {fixed:.2e}, p_5(A Pf) = {generator:.2e} (<= 1e-3)"),
    ))
}

fn criterion_5() -> Outcome {
    let w = CompactWindow::new(5.0);
    let q = graded();
    let ou = SemigroupModel::ou1d(1.0, 1.0).map_err(err)?;
    let cases = [
        (ou.clone(), field(20.0, 0.02, |x| x * x)),
        (ou, field(20.0, 0.02, f64::cos)),
        (
            SemigroupModel::Translation,
            field(100.0, 0.01, f64::sin).with_interpolation(Interpolation::Linear),
        ),
    ];
    let mut residual = 0.0_f64;
    let mut excess = 0.0_f64;
    for (m, f) in &cases {
        for t in [0.5, 1.0, 2.0] {
            for r in [4.0, 16.0, 64.0] {
                let rep = commutation_residual(m, f, t, r, &q, w).map_err(err)?;
                residual = residual.max(rep.residual);
                excess = excess.max(rep.bound_excess);
            }
        }
    }
    Ok((
        residual <= 1e-4 && excess <= 1e-6,
        format!("max commutation residual {residual:.2e} (<= 1e-4), max 2t/r bound excess {excess:.2e} (<= 1e-6)"),
    ))
}

/// `(B, spectrum inside the open left half-plane)`, eigenvalues worked out by hand.
fn spectral_matrix() -> Vec<(DMatrix<f64>, bool)> {
    let m2 = |a: [f64; 4]| DMatrix::from_row_slice(2, 2, &a);
    let m3 = |a: [f64; 9]| DMatrix::from_row_slice(3, 3, &a);
    vec![
        (m2([-1.0, 0.0, 0.0, -2.0]), true),  // -1, -2
        (m2([-1.0, 0.0, 0.0, 1.0]), false),  // -1, 1
        (m2([1.0, 0.0, 0.0, -3.0]), false),  // 1, -3
        (m2([-1.0, 5.0, 0.0, -1.0]), true),  // Jordan block at -1
        (m2([-0.5, 2.0, -2.0, -0.5]), true), // -0.5 ± 2i
        (m2([0.5, 2.0, -2.0, 0.5]), false),  // 0.5 ± 2i
        (m2([0.0, 1.0, -1.0, 0.0]), false),  // ±i
        (m2([0.0, 1.0, 2.0, -1.0]), false),  // 1, -2
        (m2([-2.0, 1.0, 1.0, -2.0]), true),  // -1, -3
        (m3([-1.0, 0.0, 0.0, 0.0, -2.0, 0.0, 0.0, 0.0, 0.5]), false), // -1, -2, 0.5
        (m3([-1.0, 1.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0, -1.0]), true), // triple -1
        (m3([-3.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, -1.0, 1.0]), false), // -3, 1 ± i
    ]
}

fn criterion_6() -> Outcome {
    let mut consistent = true;
    let mut lyap = 0.0_f64;
    for (b, stable) in spectral_matrix() {
        let n = b.nrows();
        let q = DMatrix::identity(n, n);
        let mu = ou_invariant(&b, &q).map_err(err)?;
        consistent &= mu.is_some() == stable;
        if let Some(mu) = mu {
            let s = &mu.covariance;
            let r = &b * s + s * b.transpose() + 2.0 * &q;
            lyap = lyap.max(r.amax());
        }
    }
    let b = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
    let sigma = ou_invariant(&b, &DMatrix::identity(2, 2))
        .map_err(err)?
        .ok_or("diag(-1,-2) has no invariant law")?
        .covariance;
    let expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]);
    let diag_err = (&sigma - &expected).amax();
    Ok((
        consistent && lyap <= 1e-10 && diag_err <= 1e-14,
        format!(
            "existence matches spectra on 12 cases: {consistent}, Lyapunov residual {lyap:.2e} (<= 1e-10), |Σ - diag(1, 0.5)| = {diag_err:.1e}"
        ),
    ))
}

fn criterion_7() -> Outcome {
    let m = SemigroupModel::ou1d(1.0, 1.0).map_err(err)?;
    let q = QuadratureSpec::default();
    let mu = Measure::Gaussian(GaussianMeasure::new(vec![0.0], DMatrix::from_element(1, 1, 1.0)).map_err(err)?);
    let mut inv = 0.0_f64;
    for f in [field(20.0, 0.05, |x| x), field(20.0, 0.05, |x| x * x), field(20.0, 0.05, f64::cos)] {
        for t in [0.3, 0.7, 1.5] {
            inv = inv.max(invariance_residual(&m, &mu, &f, t, &q).map_err(err)?);
        }
    }

    let grid = Arc::new(Grid::uniform(1, 8.0, 0.01).map_err(err)?);
    let mut adj = 0.0_f64;
    for (qs, bs) in [("1", "-x"), ("1+x^2", "-x^3"), ("2", "-x-x^3")] {
        let (qe, be) = (Expr::parse(qs).map_err(err)?, Expr::parse(bs).map_err(err)?);
        let rho = stationary_density_1d(&qe, &be, grid.clone()).map_err(err)?;
        let model = SemigroupModel::Elliptic1d(Elliptic1D::new(qe, be, vec![8.0]).map_err(err)?);
        for c in [0.0, 0.7, -1.3] {
            let f = field(8.0, 0.01, move |x| (-2.0 * (x - c) * (x - c)).exp());
            adj = adj.max(adjoint_residual(&model, &rho, &f).map_err(err)?);
        }
    }
    Ok((
        inv <= 1e-6 && adj <= 1e-4,
        format!("OU invariance residual {inv:.2e} (<= 1e-6), adjoint residual {adj:.2e} (<= 1e-4)"),
    ))
}

fn criterion_8() -> Outcome {
    let xi = [0.0, 0.5, 1.0, 2.0];
    let table = mellin_nonvanishing(&KernelSpec::exp_decay(), &xi).map_err(err)?;
    let mellin = table
        .rows
        .iter()
        .map(|r| (r.modulus - gamma_modulus(r.xi)).abs())
        .fold(0.0_f64, f64::max);
    let fit = |n| dilated_span_approx(&KernelSpec::exp_decay(), &KernelSpec::indicator(), n, DilationRange::default());
    let e5 = fit(5).map_err(err)?.l1_error;
    let e20 = fit(20).map_err(err)?.l1_error;
    Ok((
        mellin <= 1e-4 && e20 <= 0.5 * e5,
        format!("max |Mellin - |Γ(1-iξ)|| {mellin:.2e} (<= 1e-4), L1 error n=5 {e5:.4}, n=20 {e20:.4} (<= half)"),
    ))
}

fn criterion_9() -> Outcome {
    let e = EvolutionModel::test_model(1.0, 2.0 * PI).map_err(err)?;
    let q = QuadratureSpec::default();
    let w = CompactWindow::new(3.0);
    let f = field(16.0, 0.05, |x| (0.7 * x).sin() + 0.1 * x * x);
    let mut periodic = 0.0_f64;
    for (s, t) in [(0.0, 1.0), (0.5, 2.5), (-1.0, 4.0)] {
        periodic = periodic.max(periodicity_residual(&e, s, t, &f, &q, w).map_err(err)?);
    }

    let sys = evolution_measures(&e).map_err(err)?;
    let mut inv = 0.0_f64;
    for g in [field(16.0, 0.05, |x| x), field(16.0, 0.05, |x| x * x)] {
        for (s, t) in [(0.0, 0.5), (1.0, 3.0), (-2.0, 2.0)] {
            inv = inv.max(evolution_invariance_residual(&e, &sys, &g, s, t, &q).map_err(err)?);
        }
    }

    let gq = graded();
    let x = field(12.0, 0.05, |x| x);
    let schedule: Vec<f64> = (0..=7).map(|k| 2f64.powi(k) * e.period).collect();
    let avg = time_average_check(&e, &x, &[0.0], &schedule, &gq, CompactWindow::new(5.0)).map_err(err)?;
    let running = avg.rows.last().map_or(f64::INFINITY, |r| r.residual);

    let x2 = field(16.0, 0.05, |x| x * x);
    let late: Vec<f64> = (4..=7).map(|k| 2f64.powi(k) * e.period).collect();
    let avg2 = time_average_check(&e, &x2, &[0.0], &late, &gq, CompactWindow::new(3.0)).map_err(err)?;
    // 1 + mean of M(s)^2 = 1 + c^2 / (2 (1 + ω^2)) with c = ω = 1
    let identity = 1.25;
    let orbit = avg2.rows.last().map_or(f64::NAN, |r| r.orbit_average_at_origin);
    let identity_err = (avg2.period_average - identity).abs().max((orbit - identity).abs());

    Ok((
        periodic <= 1e-6 && inv <= 1e-4 && running <= 1e-2 && identity_err <= 1e-2,
        format!(
            "periodicity {periodic:.2e} (<= 1e-6), evolution invariance {inv:.2e} (<= 1e-4), running average at 2^7 T {running:.2e} (<= 1e-2), period average {:.6} and orbit average {orbit:.6} vs 1.25 (± 1e-2)",
            avg2.period_average
        ),
    ))
}

fn run_cli(dir: &std::path::Path, args: &[&str], threads: &str) -> Result<Vec<(String, Vec<u8>)>, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_ergodelab"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env("ERGODELAB_THREADS", threads)
        .output()
        .map_err(err)?;
    if !status.status.success() {
        return Err(format!("ergodelab {args:?} exited with {}", status.status));
    }
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .map_err(err)?
        .map(|e| {
            let p = e.map_err(err)?.path();
            Ok((p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).map_err(err)?))
        })
        .collect::<Result<_, String>>()?;
    files.sort();
    Ok(files)
}

fn criterion_10() -> Outcome {
    let w = CompactWindow::new(3.0);
    let q = QuadratureSpec::default();
    let f = field(12.0, 0.05, |x| (0.8 * x).cos() / (1.0 + 0.1 * x * x));
    let b = DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -1.5]);
    let models = [
        SemigroupModel::Translation,
        SemigroupModel::heat(0.5).map_err(err)?,
        SemigroupModel::ou1d(1.0, 1.0).map_err(err)?,
        SemigroupModel::ou_nd(b, DMatrix::identity(2, 2)).map_err(err)?,
    ];
    let grid2 = Arc::new(Grid::uniform(2, 6.0, 0.1).map_err(err)?);
    let f2 = SampledField::from_fn(grid2, Extension::ConstantExtend, |x| (-(x[0] * x[0] + 0.5 * x[1] * x[1])).exp() + 0.3 * x[0].sin())
        .map_err(err)?;
    let mut law = 0.0_f64;
    let mut contraction = 0.0_f64;
    for m in &models {
        let g = if m.dim() == Some(2) { &f2 } else { &f };
        for (s, t) in [(0.3, 0.7), (1.0, 2.0)] {
            law = law.max(semigroup_law_residual(m, s, t, g, w, &q).map_err(err)?);
            contraction = contraction.max(contraction_excess(g, &m.apply(s + t, g, &q).map_err(err)?));
        }
    }

    let exact = (1.0 - (-2.0f64).exp()) / 2.0;
    let simpson = |dt: f64| -> Result<f64, String> {
        let q = QuadratureSpec::default().with_rule(Rule::Simpson).with_dt(dt);
        let trivial = field(1.0, 1.0, |_| 0.0);
        let i = riemann_integral(|t| trivial.map(|_| (-2.0 * t).exp()), 1.0, &q).map_err(err)?;
        Ok((i.value_at_origin() - exact).abs())
    };
    let ratio = simpson(0.1)? / simpson(0.05)?;

    let root = tempfile::tempdir().map_err(err)?;
    let cfg = root.path().join("run.toml");
    std::fs::write(&cfg, "[task]\nr_max = 256.0\nt = [0.5, 1.0]\n").map_err(err)?;
    let cfg = cfg.to_string_lossy().into_owned();
    let mut identical = true;
    for args in [
        vec!["project", "--config", cfg.as_str()],
        vec!["abel", "--config", cfg.as_str()],
        vec!["counterexample", "--max-n", "4"],
        vec!["wiener"],
    ] {
        let runs: Vec<_> = [("a", "1"), ("b", "4"), ("c", "4")]
            .iter()
            .map(|(d, threads)| run_cli(&root.path().join(format!("{}-{d}", args[0])), &args, threads))
            .collect::<Result<_, _>>()?;
        identical &= runs.windows(2).all(|p| p[0] == p[1]) && !runs[0].is_empty();
    }
    Ok((
        law <= 1e-4 && contraction <= 1e-6 && ratio >= 8.0 && identical,
        format!(
            "semigroup law {law:.2e} (<= 1e-4), contraction excess {contraction:.2e} (<= 1e-6), simpson ratio {ratio:.2} (>= 8), byte-identical outputs {identical}"
        ),
    ))
}

fn main() {
    // cargo passes harness flags such as --list or filters; only a plain run executes
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let start = Instant::now();
    let runs = ou_runs();
    let criteria: Vec<Box<dyn Fn() -> Outcome + '_>> = vec![
        Box::new(criterion_1),
        Box::new(|| runs.as_ref().map_err(Clone::clone).and_then(criterion_2)),
        Box::new(|| runs.as_ref().map_err(Clone::clone).and_then(criterion_3)),
        Box::new(criterion_4),
        Box::new(criterion_5),
        Box::new(criterion_6),
        Box::new(criterion_7),
        Box::new(criterion_8),
        Box::new(criterion_9),
        Box::new(criterion_10),
    ];
    let mut failed = 0;
    for (i, c) in criteria.iter().enumerate() {
        let (pass, detail) = match c() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        println!("criterion {}: {} {detail}", i + 1, if pass { "PASS" } else { "FAIL" });
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        criteria.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
