//! Independent oracles for the forward model, the spectral formulas and the
//! direct baseline.

use std::f64::consts::PI;

use isp_core::allatonce::{self, DirectStrategy};
use isp_core::experiment::{prepare, run_example, BetaRule, DataScheme, ExampleSpec, ExperimentConfig, Source, TimeProfile};
use isp_core::forward::{add_noise, crank_nicolson_forward};
use isp_core::grid::{build_laplacian, SpatialGrid};
use isp_core::spectral::{self, SpectralField};
use isp_core::timedisc::{Method, TimeGrid};

fn sine_mode_error(m: usize, n: usize) -> f64 {
    let g = SpatialGrid::one_d(m).unwrap();
    let lap = build_laplacian(&g);
    let tg = TimeGrid::new(1.0, n).unwrap();
    let f = g.sample(|x, _| x.sin());
    let out = crank_nicolson_forward(&lap, &f, &vec![1.0; n + 1], &vec![0.0; m], &tg).unwrap();
    let k = 1.0 - (-1.0f64).exp();
    out.iter().zip(&f).map(|(u, s)| (u - k * s).abs()).fold(0.0, f64::max)
}

#[test]
fn crank_nicolson_second_order() {
    let errs: Vec<f64> = [(15, 16), (31, 32), (63, 64), (127, 128)].iter().map(|&(m, n)| sine_mode_error(m, n)).collect();
    for w in errs.windows(2) {
        let rate = (w[0] / w[1]).log2();
        assert!(rate >= 1.9, "{errs:?}");
    }
}

/// Composite Simpson on [0, T] with many panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut s = f(a) + f(b);
    for i in 1..panels {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn time_dependent_source_matches_quadrature() {
    // single mode sin x: g = (∫₀ᵀ e^{−λ(T−s)} q(s) ds)·sin x with the discrete eigenvalue λ
    let q = TimeProfile::Mixed;
    for &(m, n) in &[(63usize, 64usize), (127, 128)] {
        let g = SpatialGrid::one_d(m).unwrap();
        let lap = build_laplacian(&g);
        let tg = TimeGrid::new(1.0, n).unwrap();
        let f = g.sample(|x, _| x.sin());
        let qs: Vec<f64> = tg.times().into_iter().map(|t| q.eval(t)).collect();
        let out = crank_nicolson_forward(&lap, &f, &qs, &vec![0.0; m], &tg).unwrap();
        let lam = lap.sine_spectrum()[0];
        let want = simpson(|s| (-lam * (1.0 - s)).exp() * q.eval(s), 0.0, 1.0, 20_000);
        let err = out.iter().zip(&f).map(|(u, s)| (u - want * s).abs()).fold(0.0, f64::max);
        assert!(err <= 2.0 * tg.tau() * tg.tau(), "m={m}: {err:e}");
    }
}

#[test]
fn noise_level_ratio_distribution() {
    let g = SpatialGrid::one_d(256).unwrap();
    let v = g.sample(|x, _| 1.0 + x.sin());
    let norm = g.l2_norm(&v);
    let eps = 1e-2;
    let inside = (0..1000u64)
        .filter(|&seed| {
            let (gd, delta) = add_noise(&g, &v, eps, seed).unwrap();
            assert_eq!(g.l2_distance(&gd, &v).to_bits(), delta.to_bits());
            (0.4..=0.75).contains(&(delta / (eps * norm)))
        })
        .count();
    assert!(inside >= 990, "{inside}");
}

#[test]
fn parseval_for_smooth_function() {
    let m = 4095;
    let l_max = 256;
    let v = |x: f64| x * (PI - x) * (4.0 * x).sin();
    let c = spectral::sine_coefficients_of(v, m, l_max).unwrap();
    // ‖v‖² by high-order quadrature
    let norm2 = simpson(|x| v(x).powi(2), 0.0, PI, 20_000);
    let defect = norm2 - c.coeffs.iter().map(|a| a * a).sum::<f64>();
    assert!(defect >= -1e-10 && defect <= 1e-6, "{defect:e}");
    // decay
    assert!(c.coeffs[200].abs() < 1e-4 * c.coeffs[3].abs());
}

#[test]
fn forward_then_spectral_inverse_round_trip() {
    let m = 511;
    let g = SpatialGrid::one_d(m).unwrap();
    let lap = build_laplacian(&g);
    let tg = TimeGrid::new(1.0, 512).unwrap();
    let f = g.sample(|x, _| x.sin() + 0.5 * (2.0 * x).sin() - 0.2 * (3.0 * x).sin());
    let out = crank_nicolson_forward(&lap, &f, &vec![1.0; 513], &vec![0.0; m], &tg).unwrap();
    let l = 3;
    let gs = spectral::sine_coefficients(&lap, &out, l).unwrap();
    let fs = spectral::exact_source(&gs, &SpectralField::zeros(l), 1.0).unwrap();
    let want = spectral::sine_coefficients(&lap, &f, l).unwrap();
    assert!(fs.distance(&want) < 1e-3 * want.norm(), "{:?} vs {:?}", fs, want);
}

#[test]
fn mqbvm_filter_form() {
    let g = SpectralField::new(vec![0.4, 0.1, -0.05]);
    let z = SpectralField::zeros(3);
    let r = spectral::regularized_source(&g, &z, 1.0, 0.0, 1e-3).unwrap();
    for (i, v) in r.coeffs.iter().enumerate() {
        let lam = ((i + 1) * (i + 1)) as f64;
        let want = lam / (1.0 - (-lam).exp() + 1e-3 * lam * lam) * g.coeffs[i];
        assert!((v - want).abs() <= 1e-15 * want.abs());
    }
}

fn noise_free_backward_euler(method: Method, source: Source, m: usize, n: usize, beta: f64) -> isp_core::experiment::RunRow {
    let example = ExampleSpec::custom(1, 1.0, source, TimeProfile::One).unwrap();
    let mut cfg = ExperimentConfig::new(example, method, m, n);
    cfg.epsilons = vec![0.0];
    cfg.beta_rule = Some(BetaRule::Explicit(beta));
    cfg.data = DataScheme::BackwardEuler;
    let row = run_example(&cfg).unwrap().remove(0);
    assert!(row.ok(), "{}", row.status);
    row
}

#[test]
fn inverse_crime_control_recovers_source() {
    let row = noise_free_backward_euler(Method::Mqbvm, Source::Smooth, 64, 64, 1e-10);
    assert!(row.error_l2 <= 1e-6, "{:e} via {}", row.error_l2, row.solver);
}

#[test]
fn pqbvm_noise_free_floor_matches_mode_formula() {
    // Single mode with σ the discrete eigenvalue: backward Euler gives uⁿ = s·f with
    // s = (1 − (1+τσ)^{−n})/σ, and the first block row gives
    // f_h = s/(s + β(α_* + σ))·f, so the error is β(α_*+σ)/(s+β(α_*+σ))·‖f‖,
    // with α_*β = β/τ + τ ≥ τ whatever β is.
    for &(n, beta) in &[(64usize, 1e-10), (256, 1e-10), (256, 1e-6)] {
        let m = 16;
        let row = noise_free_backward_euler(Method::Pqbvm, Source::SineMode, m, n, beta);
        let grid = SpatialGrid::one_d(m).unwrap();
        let lap = build_laplacian(&grid);
        let sigma = lap.sine_spectrum()[0];
        let tau = 1.0 / n as f64;
        let s = (1.0 - (1.0 + tau * sigma).powi(-(n as i32))) / sigma;
        let r = beta * (1.0 / tau + tau / beta + sigma);
        let want = r / (s + r) * grid.l2_norm(&grid.sample(|x, _| x.sin()));
        assert!((row.error_l2 - want).abs() <= 1e-5 * want, "n={n}: {:e} vs {want:e}", row.error_l2);
        assert!(row.error_l2 >= tau / 2.0);
    }
}

/// The literal tiny-β PQBVM control (error ≤ 1e-6) cannot hold: the α_* floor is
/// O(τ), see `pqbvm_noise_free_floor_matches_mode_formula`.
#[test]
#[ignore = "unattainable at desk scale: PQBVM noise-free error is bounded below by O(tau)"]
fn pqbvm_tiny_beta_literal_control() {
    let row = noise_free_backward_euler(Method::Pqbvm, Source::Smooth, 64, 64, 1e-10);
    assert!(row.error_l2 <= 1e-6, "{:e}", row.error_l2);
}

#[test]
fn qbvm_and_pqbvm_approach_each_other() {
    let cfg = ExperimentConfig::new(ExampleSpec::preset(1).unwrap(), Method::Qbvm, 32, 32);
    let case = prepare(&cfg).unwrap();
    let mut gaps = Vec::new();
    for beta in [1e-2, 1e-4, 1e-6] {
        let solve = |method| {
            let p = case.problem(method, beta, case.g_clean.clone()).unwrap();
            allatonce::solve_problem(&p, DirectStrategy::SparseLu).unwrap().f
        };
        let a = solve(Method::Qbvm);
        let b = solve(Method::Pqbvm);
        gaps.push(case.grid.l2_distance(&a, &b));
    }
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
}

#[test]
fn direct_matches_pint_on_small_mesh() {
    let cfg = ExperimentConfig::new(ExampleSpec::preset(1).unwrap(), Method::Pqbvm, 16, 8);
    let case = prepare(&cfg).unwrap();
    let (g, delta) = add_noise(&case.grid, &case.g_clean, 1e-2, 5).unwrap();
    let p = case.problem(Method::Pqbvm, cfg.rule().beta(delta, case.timegrid.tau()), g).unwrap();
    let d = isp_core::pint::solve(&p, &isp_core::timedisc::diagonalize(&p.time_matrix().unwrap()).unwrap()).unwrap();
    let s = allatonce::solve_problem(&p, DirectStrategy::SparseLu).unwrap();
    assert!(case.grid.l2_distance(&d.f, &s.f) <= 1e-8 * case.grid.l2_norm(&s.f));
}

#[test]
fn qbvm_two_dimensional_block_elimination() {
    let mut cfg = ExperimentConfig::new(ExampleSpec::preset(4).unwrap(), Method::Qbvm, 16, 16);
    cfg.epsilons = vec![1e-2];
    let case = prepare(&cfg).unwrap();
    let (g, delta) = add_noise(&case.grid, &case.g_clean, 1e-2, 1).unwrap();
    let p = case.problem(Method::Qbvm, delta.sqrt(), g).unwrap();
    let a = allatonce::solve_problem(&p, DirectStrategy::SparseLu).unwrap();
    let b = allatonce::solve_problem(&p, DirectStrategy::BlockElimination).unwrap();
    assert!(a.residual <= 1e-10 && b.residual <= 1e-10);
    assert!(case.grid.l2_distance(&a.f, &b.f) <= 1e-10 * case.grid.l2_norm(&a.f));
}
