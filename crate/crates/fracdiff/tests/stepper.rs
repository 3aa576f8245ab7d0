use fracdiff::operators::{build_laplacian, build_spectral_power, Domain};
use fracdiff::stepper::{evolve, implicit_step};
use fracdiff::{DiscreteOperator, Nonlinearity, StepperConfig};
use proptest::prelude::*;

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn bump(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let x = (i + 1) as f64 / (n + 1) as f64;
            (std::f64::consts::PI * x).sin().powi(3) + 0.5 * (-(x - 0.3).powi(2) / 0.005).exp()
        })
        .collect()
}

/// Linear F: implicit Euler against `e^{-tA} u0` built from the eigenpairs.
fn linear_error(op: &DiscreteOperator, u0: &[f64], t: f64, dt: f64) -> f64 {
    let lin = Nonlinearity::linear();
    let traj = evolve(op, &lin, u0, &[0.0, t], &StepperConfig::with_dt(dt)).unwrap();
    sup_diff(traj.last().unwrap(), &op.heat_apply(t, u0))
}

#[test]
fn linear_flow_converges_at_first_order_to_the_semigroup() {
    let d = Domain::interval(1.0, 128).unwrap();
    let u0 = bump(128);
    for op in [build_spectral_power(&d, 0.5).unwrap(), build_laplacian(&d).unwrap()] {
        let e1 = linear_error(&op, &u0, 1.0, 1e-2);
        let e2 = linear_error(&op, &u0, 1.0, 5e-3);
        let ratio = e1 / e2;
        assert!(e1 < 1e-2 * 1.0, "error {e1} at dt = 1e-2");
        assert!((1.7..=2.3).contains(&ratio), "halving ratio {ratio}");
    }
}

#[test]
fn semigroup_oracle_agrees_with_a_dense_exponential() {
    // e^{-tA} by scaling and squaring the Taylor series, independent of the eigenbasis.
    let d = Domain::interval(1.0, 24).unwrap();
    let op = build_spectral_power(&d, 0.5).unwrap();
    let a = op.matrix().clone();
    let t = 0.3;
    let squarings = 12;
    let m = &a * (-t / 2f64.powi(squarings));
    let n = a.nrows();
    let mut e = nalgebra::DMatrix::<f64>::identity(n, n);
    let mut term = e.clone();
    for k in 1..20 {
        term = &term * &m / k as f64;
        e += &term;
    }
    for _ in 0..squarings {
        e = &e * &e;
    }
    let u0 = bump(24);
    let dense = &e * nalgebra::DVector::from_vec(u0.clone());
    let spectral = op.heat_apply(t, &u0);
    assert!(sup_diff(dense.as_slice(), &spectral) < 1e-10);
}

#[test]
fn evolution_is_deterministic() {
    let d = Domain::interval(1.0, 48).unwrap();
    let op = build_spectral_power(&d, 0.5).unwrap();
    let nl = Nonlinearity::power(2.0).unwrap();
    let u0: Vec<f64> = bump(48).iter().map(|v| 10.0 * v).collect();
    let times: Vec<f64> = (0..=20).map(|k| k as f64 * 0.01).collect();
    let cfg = StepperConfig::with_dt(1e-3);
    let a = evolve(&op, &nl, &u0, &times, &cfg).unwrap();
    let b = evolve(&op, &nl, &u0, &times, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn porous_medium_mass_does_not_grow_and_support_spreads() {
    let d = Domain::interval(1.0, 64).unwrap();
    let op = build_laplacian(&d).unwrap();
    let nl = Nonlinearity::power(2.0).unwrap();
    let u0: Vec<f64> = (0..64).map(|i| if (28..36).contains(&i) { 1.0 } else { 0.0 }).collect();
    let traj = evolve(&op, &nl, &u0, &[0.0, 0.01, 0.05], &StepperConfig::with_dt(1e-3)).unwrap();
    let mass: Vec<f64> = traj.states.iter().map(|u| d.integrate(u)).collect();
    // Conserved to roundoff until the support reaches the boundary.
    for w in mass.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-13), "{mass:?}");
    }
    let support = |u: &[f64]| u.iter().filter(|v| **v > 1e-8).count();
    assert!(support(&traj.states[2]) > support(&traj.states[0]));
}

fn data(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let u: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
    let v: Vec<f64> = u.iter().map(|x| x * rng.gen_range(0.0..1.0)).collect();
    (u, v)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ordered_data_stay_ordered(seed in any::<u64>(), m in 1.2f64..3.0) {
        let d = Domain::interval(1.0, 24).unwrap();
        let op = build_spectral_power(&d, 0.5).unwrap();
        let nl = Nonlinearity::power(m).unwrap();
        let (u0, v0) = data(seed, 24);
        let cfg = StepperConfig::with_dt(0.01);
        let times = [0.0, 0.05, 0.1];
        let u = evolve(&op, &nl, &u0, &times, &cfg).unwrap();
        let v = evolve(&op, &nl, &v0, &times, &cfg).unwrap();
        for (a, b) in u.states.iter().zip(&v.states) {
            for (x, y) in a.iter().zip(b) {
                prop_assert!(*y <= *x + 1e-10 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn l1_distance_does_not_grow(seed in any::<u64>(), m in 1.2f64..3.0) {
        let d = Domain::interval(1.0, 24).unwrap();
        let op = build_spectral_power(&d, 0.5).unwrap();
        let nl = Nonlinearity::power(m).unwrap();
        let (u0, _) = data(seed, 24);
        let (w0, _) = data(seed ^ 0x9e37_79b9, 24);
        let cfg = StepperConfig::with_dt(0.01);
        let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.01).collect();
        let u = evolve(&op, &nl, &u0, &times, &cfg).unwrap();
        let w = evolve(&op, &nl, &w0, &times, &cfg).unwrap();
        let dist: Vec<f64> = u.states.iter().zip(&w.states).map(|(a, b)| {
            let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            d.l1_norm(&diff)
        }).collect();
        for p in dist.windows(2) {
            prop_assert!(p[1] <= p[0] * (1.0 + 1e-10) + 1e-12);
        }
    }

    #[test]
    fn one_step_preserves_nonnegativity(seed in any::<u64>(), h in 1e-4f64..1.0) {
        let d = Domain::interval(1.0, 16).unwrap();
        let op = build_spectral_power(&d, 0.75).unwrap();
        let nl = Nonlinearity::power(2.0).unwrap();
        let (u0, _) = data(seed, 16);
        let u1 = implicit_step(&op, &nl, &u0, h, &StepperConfig::with_dt(h)).unwrap();
        prop_assert!(u1.iter().all(|v| *v >= 0.0));
        prop_assert!(u1.iter().cloned().fold(0.0, f64::max) <= u0.iter().cloned().fold(0.0, f64::max) * (1.0 + 1e-10));
    }
}
