//! Restricted fractional Laplacian on an interval.
//!
//! `u` is extended by zero outside the interval and represented by the
//! piecewise-linear interpolant of its nodal values. Inside one cell of the
//! evaluation node the principal value is taken against the local quadratic
//! interpolant; everywhere else the hat functions are integrated exactly
//! against `|y|^{-1-2s}` by Gauss-Legendre. The exterior tail contributes
//! `u_i / s` in units of `h^{-2s}`. The result is a symmetric Toeplitz
//! M-matrix.

use super::{DiscreteOperator, Domain, OperatorFamily};
use crate::error::{Error, Result};
use gauss_quad::GaussLegendre;
use nalgebra::DMatrix;
use statrs::function::gamma::gamma;
use std::f64::consts::PI;
use std::num::NonZeroUsize;

/// Normalisation `c_{1,s} = s 4^s Gamma(1/2 + s) / (sqrt(pi) Gamma(1 - s))`.
pub fn rfl_constant(s: f64) -> f64 {
    s * 4f64.powf(s) * gamma(0.5 + s) / (PI.sqrt() * gamma(1.0 - s))
}

/// Dimensionless Toeplitz symbol `T_m`, `m = 0..n`; the matrix is
/// `c_{1,s} h^{-2s} T_{|i-j|}`.
pub(crate) fn toeplitz_column(n: usize, s: f64) -> Vec<f64> {
    let gl = GaussLegendre::new(NonZeroUsize::new(20).unwrap());
    let weight = |y: f64| y.powf(-1.0 - 2.0 * s);
    let mut t = vec![0.0; n];
    t[0] = 1.0 / s + 1.0 / (1.0 - s);
    if n > 1 {
        let omega1 = gl.integrate(1.0, 2.0, |y| (2.0 - y) * weight(y));
        t[1] = -(1.0 / (2.0 - 2.0 * s) + omega1);
    }
    for (m, tm) in t.iter_mut().enumerate().skip(2) {
        let c = m as f64;
        let left = gl.integrate(c - 1.0, c, |y| (y - c + 1.0) * weight(y));
        let right = gl.integrate(c, c + 1.0, |y| (c + 1.0 - y) * weight(y));
        *tm = -(left + right);
    }
    t
}

pub fn build_rfl(domain: &Domain, s: f64) -> Result<DiscreteOperator> {
    if domain.dim() != 1 {
        return Err(Error::Unsupported(
            "the restricted fractional Laplacian is implemented on intervals only".into(),
        ));
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Config(format!("restricted fractional Laplacian needs s in (0, 1), got {s}")));
    }
    let n = domain.len();
    let h = domain.spacing()[0];
    let scale = rfl_constant(s) * h.powf(-2.0 * s);
    let t = toeplitz_column(n, s);
    let a = DMatrix::from_fn(n, n, |i, j| scale * t[i.abs_diff(j)]);
    DiscreteOperator::from_symmetric(domain, OperatorFamily::RestrictedFractional { s }, s, s, a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalisation_limits() {
        // c_{1,1/2} = 1/pi; c_{1,s} -> 0 as s -> 0 and -> 0 like (1-s) as s -> 1.
        assert!((rfl_constant(0.5) - 1.0 / PI).abs() < 1e-14);
        assert!(rfl_constant(1e-6) < 1e-5);
        let near_one = rfl_constant(1.0 - 1e-6);
        assert!(near_one > 0.0 && near_one < 1e-5);
    }

    #[test]
    fn toeplitz_is_an_m_matrix_symbol() {
        for s in [0.1, 0.25, 0.5, 0.75, 0.9] {
            let t = toeplitz_column(64, s);
            assert!(t[0] > 0.0);
            assert!(t[1..].iter().all(|&v| v < 0.0));
            let row: f64 = t[0] + 2.0 * t[1..].iter().sum::<f64>();
            assert!(row > 0.0);
            // The full-line sum of off-diagonal mass equals the diagonal.
            let tail = 2.0 * ((64.0f64).powf(-2.0 * s) / (2.0 * s));
            assert!((row - tail).abs() < 0.05 * tail, "s={s}: {row} vs {tail}");
        }
    }

    #[test]
    fn far_weights_decay_like_the_kernel() {
        let s = 0.3;
        let t = toeplitz_column(200, s);
        let m = 150.0f64;
        let expect = m.powf(-1.0 - 2.0 * s);
        assert!((-t[150] / expect - 1.0).abs() < 1e-4);
    }

    #[test]
    fn constant_maps_to_positive_values() {
        let d = Domain::interval(1.0, 50).unwrap();
        let op = build_rfl(&d, 0.4).unwrap();
        let ones = vec![1.0; 50];
        assert!(op.apply(&ones).iter().all(|&v| v > 0.0));
    }

    #[test]
    fn rectangle_is_unsupported() {
        let d = Domain::rectangle(1.0, 1.0, 4, 4).unwrap();
        assert!(matches!(build_rfl(&d, 0.5), Err(Error::Unsupported(_))));
    }
}
