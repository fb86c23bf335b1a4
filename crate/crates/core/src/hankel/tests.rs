use super::*;
use crate::linalg::{c, real_matrix};
use crate::symbol::{ExpTerm, SymbolFamily};
use approx::assert_relative_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn scalar(a: f64, b: f64, cc: f64) -> ModeTriple {
    ModeTriple::from_real(&[&[a]], &[&[b]], &[&[cc]]).unwrap()
}

fn oscillator() -> ModeTriple {
    ModeTriple::from_real(&[&[0.0, 1.0], &[-1.0, -0.2]], &[&[0.0], &[1.0]], &[&[0.0, 1.0]]).unwrap()
}

fn sum_of_exponentials(terms: &[(f64, f64)]) -> ModeTriple {
    let f = SymbolFamily::diagonal_exponential(
        terms
            .iter()
            .map(|&(p, r)| ExpTerm { offset: p, curvature: 0.0, residue: r })
            .collect(),
    );
    evaluate_symbol(&f, &[0.0]).unwrap()
}

fn trapezoid_for(mode: &ModeTriple, n: usize) -> TimeQuadrature {
    let rate = -spectral_abscissa(mode).unwrap();
    build_quadrature(QuadratureScheme::TruncatedTrapezoid, n, rate).unwrap()
}

fn exp_profile(quad: &TimeQuadrature, rate: f64) -> Vec<C64> {
    quad.nodes().iter().map(|t| c((-rate * t).exp())).collect()
}

#[test]
fn scalar_exponential_is_rank_one_psd() {
    let m = scalar(-1.0, 1.0, 1.0);
    for quad in [trapezoid_for(&m, 32), TimeQuadrature::gauss_laguerre(20, 1.0).unwrap()] {
        let d = build_hankel(&m, &quad).unwrap();
        // H = h hᵀ with h_i = √w_i e^{-t_i}.
        let h: Vec<f64> = quad.nodes().iter().zip(quad.weights()).map(|(t, w)| w.sqrt() * (-t).exp()).collect();
        let hh: f64 = h.iter().map(|x| x * x).sum();
        assert_relative_eq!(d.max_eigenvalue, hh, max_relative = 1e-12);
        assert!(d.min_eigenvalue >= -1e-12 * d.max_eigenvalue);
        assert_eq!(d.symmetry_defect, 0.0);
        assert!(hankel_psd_test(&d, 1e-9).passed);
    }
}

#[test]
fn two_pole_sum_is_psd() {
    let m = sum_of_exponentials(&[(1.0, 1.0), (2.0, 1.0)]);
    let d = build_hankel(&m, &trapezoid_for(&m, 64)).unwrap();
    assert!(hankel_psd_test(&d, 1e-9).passed);
}

/// Closed-form oscillator kernel, independent of the matrix exponential.
fn oscillator_kernel(t: f64) -> f64 {
    let nu = 0.99f64.sqrt();
    (-0.1 * t).exp() * ((nu * t).cos() - 0.1 / nu * (nu * t).sin())
}

#[test]
fn damped_oscillator_hankel_is_indefinite() {
    let m = oscillator();
    let quad = trapezoid_for(&m, 64);
    let d = build_hankel(&m, &quad).unwrap();

    let (t, w) = (quad.nodes(), quad.weights());
    let oracle = DMatrix::from_fn(64, 64, |i, j| (w[i] * w[j]).sqrt() * oscillator_kernel(t[i] + t[j]));
    assert!((d.matrix.map(|z| z.re) - &oracle).norm() < 1e-9 * oracle.norm());
    let mut ev: Vec<f64> = oracle.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    assert_relative_eq!(d.min_eigenvalue, ev[0], max_relative = 1e-8);
    assert_relative_eq!(d.max_eigenvalue, ev[63], max_relative = 1e-8);

    assert!(d.min_eigenvalue < -1e-3 * d.max_eigenvalue, "{} vs {}", d.min_eigenvalue, d.max_eigenvalue);
    let test = hankel_psd_test(&d, 1e-9);
    assert!(!test.passed);
    assert!(test.margin < 0.0);
}

#[test]
fn zero_impulse_response_passes() {
    let m = scalar(-1.0, 0.0, 0.0);
    let d = build_hankel(&m, &trapezoid_for(&m, 16)).unwrap();
    assert_eq!(d.max_eigenvalue, 0.0);
    assert!(hankel_psd_test(&d, 1e-9).passed);
    let v = vec![c(1.0); 16];
    assert!(apply_hankel(&d, &v).unwrap().iter().all(|z| z.norm() == 0.0));
}

#[test]
fn marginal_and_unstable_modes_rejected() {
    let quad = TimeQuadrature::trapezoid(8, 1.0).unwrap();
    assert!(matches!(build_hankel(&scalar(0.0, 1.0, 1.0), &quad), Err(Error::NotStable { .. })));
    assert!(matches!(build_hankel(&scalar(0.5, 1.0, 1.0), &quad), Err(Error::NotStable { .. })));
}

#[test]
fn apply_hankel_matches_analytic_convolution() {
    // ∫₀^∞ e^{-(t+τ)} e^{-τ} dτ = e^{-t}/2
    let m = scalar(-1.0, 1.0, 1.0);
    let quad = TimeQuadrature::gauss_laguerre(128, 1.0).unwrap();
    let d = build_hankel(&m, &quad).unwrap();
    let out = apply_hankel(&d, &exp_profile(&quad, 1.0)).unwrap();
    for (t, y) in quad.nodes().iter().zip(&out) {
        assert!((y.re - 0.5 * (-t).exp()).abs() <= 1e-6, "t = {t}");
        assert!(y.im.abs() < 1e-15);
    }
    assert!(apply_hankel(&d, &[c(1.0); 3]).is_err());
    let zero = apply_hankel(&d, &vec![c(0.0); 128]).unwrap();
    assert!(zero.iter().all(|z| z.norm() == 0.0));
}

#[test]
fn trapezoid_convolution_error_is_second_order() {
    let m = scalar(-1.0, 1.0, 1.0);
    let err = |n: usize| {
        let quad = TimeQuadrature::trapezoid(n, 1e10f64.ln()).unwrap();
        let d = build_hankel(&m, &quad).unwrap();
        let out = apply_hankel(&d, &exp_profile(&quad, 1.0)).unwrap();
        quad.nodes()
            .iter()
            .zip(&out)
            .map(|(t, y)| (y.re - 0.5 * (-t).exp()).abs())
            .fold(0.0, f64::max)
    };
    let (e1, e2) = (err(129), err(257));
    assert!(e1 / e2 > 3.8, "{e1} {e2}");
}

#[test]
fn memory_functional_of_exponential() {
    // ⟨ℋv, v⟩ = (∫ e^{-2t} dt)² = 1/4
    let m = scalar(-1.0, 1.0, 1.0);
    let quad = TimeQuadrature::gauss_laguerre(64, 1.0).unwrap();
    let d = build_hankel(&m, &quad).unwrap();
    let v = exp_profile(&quad, 1.0);
    let h = memory_functional(&d, &v).unwrap();
    assert_relative_eq!(h.value, 0.125, max_relative = 1e-12);
    assert!(h.imaginary_residual.abs() < 1e-15);

    let v2: Vec<C64> = v.iter().map(|z| z * 2.0).collect();
    assert_relative_eq!(memory_functional(&d, &v2).unwrap().value, 4.0 * h.value, max_relative = 1e-14);
    assert_eq!(memory_functional(&d, &vec![c(0.0); 64]).unwrap().value, 0.0);
}

#[test]
fn aggregate_single_mode_reduces_to_mode_form() {
    let f = SymbolFamily::shifted_diffusion(1.0, 0.5);
    let grid = FrequencyGrid::single(vec![1.0]);
    let quad = TimeQuadrature::gauss_laguerre(32, 1.5).unwrap();
    let v = exp_profile(&quad, 1.0);
    let w: Vec<C64> = quad.nodes().iter().map(|t| C64::new(0.0, (-2.0 * t).exp())).collect();
    let agg = aggregate_hankel_form(&f, &grid, &quad, std::slice::from_ref(&v), std::slice::from_ref(&w)).unwrap();
    let d = build_hankel(&evaluate_symbol(&f, &[1.0]).unwrap(), &quad).unwrap();
    let direct = weighted_form(&d, &v, &w).unwrap();
    assert!((agg - direct).norm() < 1e-15);
    // ⟨ℋv, w⟩ = ∫∫ e^{-1.5(t+τ)} e^{-τ} (i e^{-2t})* = -i/(2.5·3.5)
    assert_relative_eq!(agg.im, -1.0 / (2.5 * 3.5), max_relative = 1e-10);
}

#[test]
fn aggregate_rejects_mismatched_vectors() {
    let f = SymbolFamily::diffusion(1.0);
    let grid = make_grid();
    let quad = TimeQuadrature::gauss_laguerre(8, 1.0).unwrap();
    let v = vec![vec![c(1.0); 8]; 2];
    assert!(aggregate_hankel_form(&f, &grid, &quad, &v, &v).is_err());
    let v = vec![vec![c(1.0); 7]; 3];
    assert!(aggregate_hankel_form(&f, &grid, &quad, &v, &v).is_err());
}

fn make_grid() -> FrequencyGrid {
    crate::grid::make_frequency_grid(1.0, 3, 1).unwrap()
}

#[test]
fn aggregate_of_psd_family_on_equal_vectors_is_nonnegative() {
    let f = SymbolFamily::shifted_diffusion(1.0, 0.5);
    let grid = crate::grid::make_frequency_grid(3.0, 7, 1).unwrap();
    let quad = TimeQuadrature::gauss_laguerre(24, 1.0).unwrap();
    let v: Vec<Vec<C64>> = grid
        .points()
        .iter()
        .map(|w| quad.nodes().iter().map(|t| C64::new((t - w[0]).sin(), (-t).exp())).collect())
        .collect();
    let agg = aggregate_hankel_form(&f, &grid, &quad, &v, &v).unwrap();
    assert!(agg.re >= -1e-12);
    assert!(agg.im.abs() < 1e-12);
}

#[test]
fn matches_bernstein_test_on_builtin_families() {
    use crate::lti_mode::{cm_test_bernstein, TriState};
    let cases = [
        (SymbolFamily::shifted_diffusion(1.0, 0.5), true),
        (
            SymbolFamily::diagonal_exponential(vec![
                ExpTerm { offset: 1.0, curvature: 1.0, residue: 1.0 },
                ExpTerm { offset: 2.0, curvature: 0.5, residue: 0.5 },
            ]),
            true,
        ),
        (
            SymbolFamily::diagonal_exponential(vec![
                ExpTerm { offset: 1.0, curvature: 0.0, residue: 1.0 },
                ExpTerm { offset: 2.0, curvature: 0.0, residue: -0.5 },
            ]),
            false,
        ),
    ];
    for (family, relax) in cases {
        for w in [-2.0, 0.5, 3.0] {
            let mode = evaluate_symbol(&family, &[w]).unwrap();
            let bern = cm_test_bernstein(&mode, 1e-9).unwrap().status();
            let d = build_hankel(&mode, &trapezoid_for(&mode, 64)).unwrap();
            let hk = hankel_psd_test(&d, 1e-9).passed;
            assert_eq!(bern == TriState::Pass, relax);
            assert_eq!(hk, relax, "{family:?} at {w}");
        }
    }
}

#[test]
fn min_eigenvalue_converges_under_refinement() {
    let m = sum_of_exponentials(&[(1.0, 1.0), (2.0, -0.5)]);
    let lam = |n| build_hankel(&m, &TimeQuadrature::gauss_laguerre(n, 1.0).unwrap()).unwrap().min_eigenvalue;
    let (a, b) = (lam(64), lam(128));
    // The operator is R·G on span{e^{-t}, e^{-2t}} with R = diag(1, -1/2) and
    // Gram matrix G = [[1/2, 1/3], [1/3, 1/4]]; its negative eigenvalue:
    let (tr, det): (f64, f64) = (0.5 - 0.125, -0.5 * (1.0 / 8.0 - 1.0 / 9.0));
    let exact = 0.5 * (tr - (tr * tr - 4.0 * det).sqrt());
    assert!(a < 0.0);
    assert!((a - exact).abs() <= 1e-12, "{a} {exact}");
    assert!((a - b).abs() <= 1e-6, "{a} {b}");
}

#[test]
fn csv_dump_layout() {
    let m = scalar(-1.0, 1.0, 1.0);
    let d = build_hankel(&m, &TimeQuadrature::trapezoid(3, 2.0).unwrap()).unwrap();
    let mut buf = Vec::new();
    write_hankel_csv(&d, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[1], "node,weight");
    assert_eq!(lines.len(), 2 + 3 + 1 + 3 + 2 + 3);
    assert_eq!(lines[6].split(',').count(), 6);
}

#[test]
fn complex_matrix_valued_mode() {
    // Hermitian A ⪯ 0 with B = C*: the Hankel matrix is Hermitian PSD but complex.
    let a = CMat::from_row_slice(2, 2, &[c(-2.0), C64::new(0.3, 0.4), C64::new(0.3, -0.4), c(-1.0)]);
    let b = CMat::from_row_slice(2, 2, &[c(1.0), C64::new(0.0, 0.5), c(0.2), c(1.0)]);
    let mode = ModeTriple::new(a, b.clone(), b.adjoint(), vec![0.0]).unwrap();
    let quad = trapezoid_for(&mode, 24);
    let d = build_hankel(&mode, &quad).unwrap();
    assert_eq!(d.matrix.nrows(), 48);
    assert!(d.symmetry_defect < 1e-13);
    assert!(hankel_psd_test(&d, 1e-9).passed);
    let _ = real_matrix(&[&[0.0]]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn conic_combinations_stay_psd(
        p1 in 0.2f64..5.0, p2 in 0.2f64..5.0,
        r1 in 0.0f64..3.0, r2 in 0.0f64..3.0,
        s1 in 0.0f64..2.0, s2 in 0.0f64..2.0,
    ) {
        let combo = sum_of_exponentials(&[(p1, s1 * r1), (p2, s2 * r2)]);
        let quad = TimeQuadrature::gauss_laguerre(32, p1.min(p2)).unwrap();
        let d = build_hankel(&combo, &quad).unwrap();
        prop_assert!(hankel_psd_test(&d, 1e-9).passed, "min {} max {}", d.min_eigenvalue, d.max_eigenvalue);
    }
}
