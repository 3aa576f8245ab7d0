use fracdiff::operators::{
    build, build_laplacian, build_rfl, build_spectral_function, build_spectral_power, check_kernel_bounds,
    heat_kernel_subordination, rfl_constant, Hypothesis, KernelBoundOptions, OperatorFamily, PowerTerm,
    SpectralSymbol,
};
use fracdiff::{DiscreteOperator, Domain};
use gauss_quad::GaussLegendre;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use statrs::function::gamma::gamma;
use std::f64::consts::PI;
use std::num::NonZeroUsize;

/// Closed-form Green function of the restricted fractional Laplacian on
/// (-1, 1) in one dimension:
/// `kappa |x-y|^{2s-1} int_0^{r0} t^{s-1} (t+1)^{-1/2} dt`,
/// `r0 = (1-x^2)(1-y^2)/|x-y|^2`, `kappa = 1 / (4^s Gamma(s)^2)`.
fn rfl_green_unit(x: f64, y: f64, s: f64, gl: &GaussLegendre) -> f64 {
    let kappa = 1.0 / (4f64.powf(s) * gamma(s).powi(2));
    let r0 = (1.0 - x * x) * (1.0 - y * y) / (x - y).powi(2);
    // t = tau^{1/s}: int_0^{r0^s} (1 + tau^{1/s})^{-1/2} dtau / s.
    let upper = r0.powf(s);
    let f = |tau: f64| (1.0 + tau.powf(1.0 / s)).powf(-0.5);
    let mut total = 0.0;
    let mut a = 0.0;
    let mut b = upper.min(1.0);
    while a < upper {
        total += gl.integrate(a, b, f);
        a = b;
        b = (2.0 * b).min(upper);
    }
    kappa * (x - y).abs().powf(2.0 * s - 1.0) * total / s
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, b| a.max(b.abs()))
}

#[test]
fn rfl_green_matches_closed_form() {
    let (l, n, s) = (1.0, 1024, 0.25);
    let d = Domain::interval(l, n).unwrap();
    let op = build_rfl(&d, s).unwrap();
    let k = op.green_matrix();
    let gl = GaussLegendre::new(NonZeroUsize::new(30).unwrap());
    let scale = (l / 2.0).powf(2.0 * s - 1.0);
    let mut worst: f64 = 0.0;
    // Every 16th node, away from the diagonal and the boundary by the standard bands.
    for i in (3..n - 3).step_by(16) {
        for j in (3..n - 3).step_by(16) {
            if i.abs_diff(j) <= 3 {
                continue;
            }
            let (x, y) = (d.point(i)[0], d.point(j)[0]);
            let exact = scale * rfl_green_unit(2.0 * x / l - 1.0, 2.0 * y / l - 1.0, s, &gl);
            worst = worst.max((k[(i, j)] / exact - 1.0).abs());
        }
    }
    assert!(worst < 0.05, "worst interior relative error {worst}");
}

#[test]
fn rfl_constant_against_reference_values() {
    // c_{1,s} = 4^s Gamma(1/2+s) / (sqrt(pi) |Gamma(-s)|).
    for s in [0.2, 0.5, 0.7] {
        let reference = 4f64.powf(s) * gamma(0.5 + s) / (PI.sqrt() * gamma(-s).abs());
        assert!((rfl_constant(s) - reference).abs() < 1e-13 * reference);
    }
}

#[test]
fn rfl_approaches_laplacian_as_s_increases() {
    let d = Domain::interval(PI, 256).unwrap();
    let u: Vec<f64> = d.points().iter().map(|p| p[0].sin()).collect();
    let middle: Vec<usize> = (64..192).collect();
    let mut errors = Vec::new();
    for s in [0.6, 0.8, 0.9, 0.95] {
        let au = build_rfl(&d, s).unwrap().apply(&u);
        let err = middle.iter().map(|&i| (au[i] - u[i]).abs()).fold(0.0, f64::max);
        errors.push(err);
    }
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
}

#[test]
fn laplacian_green_is_the_classical_one() {
    let l = 1.0;
    let d = Domain::interval(l, 256).unwrap();
    let op = build_laplacian(&d).unwrap();
    let k = op.green_matrix();
    for i in (10..246).step_by(7) {
        for j in (10..246).step_by(11) {
            let (x, y) = (d.point(i)[0], d.point(j)[0]);
            let exact = x.min(y) * (l - x.max(y)) / l;
            assert!((k[(i, j)] / exact - 1.0).abs() < 0.01);
        }
    }
}

#[test]
fn subordination_reproduces_spectral_green() {
    let d = Domain::interval(1.0, 256).unwrap();
    let op = build_spectral_power(&d, 0.5).unwrap();
    let sub = heat_kernel_subordination(&d, 0.5, &Default::default()).unwrap();
    assert!(sub.warning.is_none());
    let k = op.green_matrix();
    let mut worst: f64 = 0.0;
    for i in 3..253usize {
        for j in 3..253 {
            if i.abs_diff(j) > 3 {
                worst = worst.max((sub.green[(i, j)] / k[(i, j)] - 1.0).abs());
            }
        }
    }
    assert!(worst < 0.005, "{worst}");
}

#[test]
fn subordination_near_one_is_the_laplacian_green() {
    let d = Domain::interval(1.0, 64).unwrap();
    let lap = build_laplacian(&d).unwrap();
    let sub = heat_kernel_subordination(&d, 0.999, &Default::default()).unwrap();
    let k = lap.green_matrix();
    for i in 3..61usize {
        for j in 3..61 {
            if i.abs_diff(j) > 3 {
                assert!((sub.green[(i, j)] / k[(i, j)] - 1.0).abs() < 0.02);
            }
        }
    }
}

#[test]
fn kernel_bounds_for_small_s() {
    let d = Domain::interval(1.0, 512).unwrap();
    let op = build_spectral_power(&d, 0.25).unwrap();
    let opts = KernelBoundOptions::default();
    let k1 = check_kernel_bounds(&op, Hypothesis::K1, &opts).unwrap();
    let k2 = check_kernel_bounds(&op, Hypothesis::K2, &opts).unwrap();
    assert!(k1.pass && k2.pass);
    assert!(k1.c1.is_finite() && k1.c1 > 0.0);
    assert!(k2.c1.is_finite() && k2.c0.unwrap() > 0.0);
    // Independent fit of the K1 constant by brute force.
    let k = op.green_matrix();
    let mut c1: f64 = 0.0;
    for i in 3..509usize {
        for j in 3..509 {
            if i.abs_diff(j) > 3 {
                c1 = c1.max(k[(i, j)] * d.distance(i, j).sqrt());
            }
        }
    }
    assert!((k1.c1 - c1).abs() < 1e-12 * c1);
}

#[test]
fn bounded_kernel_fallback_is_flagged() {
    let d = Domain::interval(1.0, 64).unwrap();
    let op = build_spectral_power(&d, 0.75).unwrap();
    let r = check_kernel_bounds(&op, Hypothesis::K1, &Default::default()).unwrap();
    assert!(r.bounded_kernel_fallback);
    assert_eq!(r.exponent, 0.0);
    let d2 = Domain::rectangle(1.0, 1.0, 16, 16).unwrap();
    let op2 = build_spectral_power(&d2, 0.75).unwrap();
    let r2 = check_kernel_bounds(&op2, Hypothesis::K1, &Default::default()).unwrap();
    assert!(!r2.bounded_kernel_fallback && r2.pass);
}

fn shipped(d: &Domain) -> Vec<DiscreteOperator> {
    let mut ops = vec![
        build_laplacian(d).unwrap(),
        build_spectral_power(d, 0.25).unwrap(),
        build_spectral_power(d, 0.5).unwrap(),
        build_spectral_power(d, 0.75).unwrap(),
        build(
            d,
            &OperatorFamily::SpectralFunction {
                symbol: SpectralSymbol::PowerSum {
                    terms: vec![PowerTerm { coeff: 1.0, power: 0.5 }, PowerTerm { coeff: 1.0, power: 0.25 }],
                },
                gamma: None,
            },
        )
        .unwrap(),
    ];
    if d.dim() == 1 {
        ops.push(build_rfl(d, 0.25).unwrap());
        ops.push(build_rfl(d, 0.5).unwrap());
        ops.push(build_rfl(d, 0.75).unwrap());
    }
    ops
}

#[test]
fn green_kernels_are_nonnegative_and_symmetric() {
    for d in [
        Domain::interval(1.0, 64).unwrap(),
        Domain::interval(1.0, 256).unwrap(),
        Domain::rectangle(1.0, 1.0, 8, 8).unwrap(),
        Domain::rectangle(1.0, 2.0, 16, 16).unwrap(),
    ] {
        for op in shipped(&d) {
            let k = op.green_matrix();
            let min = k.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            assert!(min >= -1e-12, "{:?}: {min}", op.family());
            assert!(max_abs(&(k - k.transpose())) <= 1e-12 * max_abs(k));
            let a = op.matrix();
            assert!(max_abs(&(a - a.transpose())) <= 1e-12 * max_abs(a));
            assert!(op.eigenvalues()[0] > 0.0);
            assert!(op.green_row_sum_max().is_finite());
        }
    }
}

#[test]
fn spectral_families_diagonalise_exactly() {
    let d = Domain::rectangle(1.0, 1.3, 10, 9).unwrap();
    for op in shipped(&d) {
        let a = op.matrix();
        let phi = op.eigenvectors();
        for (k, &g) in op.eigenvalues().iter().enumerate() {
            let col = phi.column(k);
            let r = a * col - col * g;
            assert!(r.amax() <= 1e-10 * g.max(1.0), "{:?} mode {k}", op.family());
        }
    }
}

#[test]
fn resolvent_is_positivity_preserving() {
    let d = Domain::interval(1.0, 64).unwrap();
    for op in shipped(&d) {
        for h in [1e-4, 1e-2, 1.0] {
            let m = DMatrix::identity(64, 64) + op.matrix() * h;
            let inv = m.try_inverse().unwrap();
            let min = inv.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            assert!(min >= -1e-12, "{:?} h={h}: {min}", op.family());
        }
    }
}

#[test]
fn one_dimensional_spectra_are_strictly_increasing() {
    let d = Domain::interval(2.0, 128).unwrap();
    for op in shipped(&d) {
        assert!(op.eigenvalues().windows(2).all(|w| w[1] > w[0]), "{:?}", op.family());
    }
}

#[test]
fn first_eigenfunction_comparable_to_distance() {
    let d = Domain::interval(PI, 256).unwrap();
    let op = build_laplacian(&d).unwrap();
    let (lo, hi) = op.phi1_comparability(&op.boundary_weight());
    assert!(lo > 0.0 && hi / lo < 3.0);
    let (l1, phi1) = op.first_eigenpair();
    assert!((l1 - 1.0).abs() < 1e-4);
    assert!(phi1.iter().all(|&v| v > 0.0));
}

#[test]
fn spectral_function_identity_symbol_is_laplacian() {
    let d = Domain::interval(1.0, 32).unwrap();
    let lap = build_laplacian(&d).unwrap();
    let id = build_spectral_function(&d, |l| l, 1.0, 1.0).unwrap();
    assert!(max_abs(&(lap.matrix() - id.matrix())) < 1e-10 * max_abs(lap.matrix()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn operator_and_green_are_inverse(
        v in prop::collection::vec(-1.0f64..1.0, 40),
        s in 0.05f64..0.95,
        rfl in any::<bool>(),
    ) {
        let d = Domain::interval(1.5, 40).unwrap();
        let op = if rfl { build_rfl(&d, s).unwrap() } else { build_spectral_power(&d, s).unwrap() };
        let back = op.green_apply(&op.apply(&v));
        let fwd = op.apply(&op.green_apply(&v));
        for i in 0..40 {
            prop_assert!((back[i] - v[i]).abs() < 1e-10);
            prop_assert!((fwd[i] - v[i]).abs() < 1e-10);
        }
        let dense = op.matrix() * DVector::from_column_slice(&v);
        let fast = op.apply(&v);
        for i in 0..40 {
            prop_assert!((dense[i] - fast[i]).abs() <= 1e-12 * dense.amax().max(1.0));
        }
    }
}
