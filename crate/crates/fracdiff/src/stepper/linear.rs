//! Linear solves with `I + h A D`, `D` diagonal and nonnegative.
//!
//! The system is symmetrised as `(I + h S A S) z = S r` with `S = sqrt(D)`;
//! the solution is then recovered as `x = r - h A S z`, which never divides
//! by `S` and so stays well defined where `D` vanishes.

use crate::operators::DiscreteOperator;
use nalgebra::{Cholesky, DMatrix, DVector};

#[derive(Clone, Copy, Debug)]
pub(crate) struct SolveInfo {
    pub iterations: usize,
    pub used_direct: bool,
}

/// Solve `(I + h A diag(d)) x = r`.
pub(crate) fn solve_shifted(op: &DiscreteOperator, h: f64, d: &[f64], r: &[f64]) -> (Vec<f64>, SolveInfo) {
    let n = r.len();
    let s: Vec<f64> = d.iter().map(|v| v.max(0.0).sqrt()).collect();
    let b: Vec<f64> = s.iter().zip(r).map(|(a, b)| a * b).collect();
    let max_iter = (4 * n).max(200);
    let (z, info) = match pcg(op, h, &s, &b, 1e-14, max_iter) {
        Some((z, it)) => (
            z,
            SolveInfo {
                iterations: it,
                used_direct: false,
            },
        ),
        None => (
            direct(op, h, &s, &b),
            SolveInfo {
                iterations: max_iter,
                used_direct: true,
            },
        ),
    };
    let sz: Vec<f64> = s.iter().zip(&z).map(|(a, b)| a * b).collect();
    let asz = op.apply(&sz);
    let x = r.iter().zip(&asz).map(|(ri, ai)| ri - h * ai).collect();
    (x, info)
}

fn scaled_apply(op: &DiscreteOperator, h: f64, s: &[f64], z: &[f64]) -> Vec<f64> {
    let sz: Vec<f64> = s.iter().zip(z).map(|(a, b)| a * b).collect();
    let asz = op.apply(&sz);
    z.iter()
        .zip(&asz)
        .zip(s)
        .map(|((zi, ai), si)| zi + h * si * ai)
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients; `None` if the relative
/// residual does not reach `tol` within `max_iter` iterations.
fn pcg(op: &DiscreteOperator, h: f64, s: &[f64], b: &[f64], tol: f64, max_iter: usize) -> Option<(Vec<f64>, usize)> {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Some((vec![0.0; n], 0));
    }
    let a = op.matrix();
    let inv_diag: Vec<f64> = (0..n).map(|i| 1.0 / (1.0 + h * s[i] * s[i] * a[(i, i)])).collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let q = scaled_apply(op, h, s, &p);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return None;
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        if dot(&r, &r).sqrt() <= tol * bnorm {
            return Some((x, it));
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    None
}

fn direct(op: &DiscreteOperator, h: f64, s: &[f64], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let a = op.matrix();
    let m = DMatrix::from_fn(n, n, |i, j| {
        let v = h * s[i] * a[(i, j)] * s[j];
        if i == j {
            1.0 + v
        } else {
            v
        }
    });
    let rhs = DVector::from_column_slice(b);
    let sol = match Cholesky::new(m.clone()) {
        Some(c) => c.solve(&rhs),
        None => m.lu().solve(&rhs).unwrap_or(rhs),
    };
    sol.data.into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{build_spectral_power, Domain};

    #[test]
    fn matches_dense_solve_including_zero_diagonal() {
        let d = Domain::interval(1.0, 40).unwrap();
        let op = build_spectral_power(&d, 0.5).unwrap();
        let diag: Vec<f64> = (0..40).map(|i| if i % 3 == 0 { 0.0 } else { 1.0 + i as f64 }).collect();
        let r: Vec<f64> = (0..40).map(|i| (i as f64 * 0.3).cos()).collect();
        let h = 0.05;
        let (x, info) = solve_shifted(&op, h, &diag, &r);
        assert!(!info.used_direct);
        let ad = op.matrix() * DMatrix::from_diagonal(&DVector::from_column_slice(&diag));
        let j = DMatrix::identity(40, 40) + ad * h;
        let exact = j.lu().solve(&DVector::from_column_slice(&r)).unwrap();
        for (a, b) in x.iter().zip(exact.iter()) {
            assert!((a - b).abs() < 1e-11, "{a} vs {b}");
        }
        let sq: Vec<f64> = diag.iter().map(|v| v.sqrt()).collect();
        let b: Vec<f64> = sq.iter().zip(&r).map(|(a, b)| a * b).collect();
        let (z_cg, _) = pcg(&op, h, &sq, &b, 1e-14, 400).unwrap();
        for (a, b) in direct(&op, h, &sq, &b).iter().zip(&z_cg) {
            assert!((a - b).abs() < 1e-11);
        }
    }
}
