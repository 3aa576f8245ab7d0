//! Green matrix of the spectral fractional Laplacian from the heat
//! semigroup, `K = Gamma(s)^{-1} int_0^inf H(t) t^{s-1} dt`.
//!
//! Used as an independent check of the spectral-calculus construction: the
//! time integral is done by quadrature instead of taking `lambda^{-s}`.

use super::sine::SineBasis;
use super::Domain;
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

/// Trapezoid rule in `ln t` on `[t_min, t_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubordinationQuadrature {
    pub t_min: f64,
    pub t_max: f64,
    pub nodes_per_decade: usize,
}

impl Default for SubordinationQuadrature {
    fn default() -> Self {
        SubordinationQuadrature {
            t_min: 1e-6,
            t_max: 1e6,
            nodes_per_decade: 24,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SubordinationResult {
    pub green: DMatrix<f64>,
    /// Largest relative change of the per-mode weights between the rule and
    /// its every-other-node coarsening.
    pub refinement_change: f64,
    pub warning: Option<String>,
}

fn mode_weights(lam: &[f64], s: f64, q: &SubordinationQuadrature, stride: usize) -> Vec<f64> {
    let decades = (q.t_max / q.t_min).log10();
    let intervals = ((decades * q.nodes_per_decade as f64).ceil() as usize).max(2);
    let intervals = intervals.next_multiple_of(2);
    let (a, b) = (q.t_min.ln(), q.t_max.ln());
    let dtau = (b - a) / intervals as f64 * stride as f64;
    let g = gamma(s);
    let mut out = vec![0.0; lam.len()];
    for idx in (0..=intervals).step_by(stride) {
        let tau = a + (b - a) * idx as f64 / intervals as f64;
        let t = tau.exp();
        let end = idx == 0 || idx == intervals;
        let w = dtau * if end { 0.5 } else { 1.0 } * (s * tau).exp() / g;
        for (o, &l) in out.iter_mut().zip(lam) {
            *o += w * (-l * t).exp();
        }
    }
    out
}

pub fn heat_kernel_subordination(
    domain: &Domain,
    s: f64,
    quadrature: &SubordinationQuadrature,
) -> Result<SubordinationResult> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Config(format!("subordination needs s in (0, 1), got {s}")));
    }
    if quadrature.t_min > 1e-6 || quadrature.t_max < 1e6 || quadrature.nodes_per_decade == 0 {
        return Err(Error::Precondition(format!(
            "time quadrature must cover [1e-6, 1e6] with at least one node per decade, got {quadrature:?}"
        )));
    }
    let basis = SineBasis::new(domain);
    let lam = basis.eigenvalues();
    let fine = mode_weights(lam, s, quadrature, 1);
    let coarse = mode_weights(lam, s, quadrature, 2);
    let refinement_change = fine
        .iter()
        .zip(&coarse)
        .map(|(f, c)| ((f - c) / f).abs())
        .fold(0.0, f64::max);
    let warning = (refinement_change > 0.01).then(|| {
        format!("time quadrature under-resolved: weights change by {refinement_change:.3e} under refinement")
    });
    let phi = basis.eigenvector_matrix();
    let mut scaled = phi.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col *= fine[k];
    }
    let mut green = &scaled * phi.transpose();
    let n = green.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (green[(i, j)] + green[(j, i)]);
            green[(i, j)] = v;
            green[(j, i)] = v;
        }
    }
    Ok(SubordinationResult {
        green,
        refinement_change,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::gamma_lr;

    #[test]
    fn weights_reproduce_negative_powers() {
        let lam = [1.0, 10.0, 1e3, 1e5];
        let w = mode_weights(&lam, 0.5, &Default::default(), 1);
        for (l, q) in lam.iter().zip(&w) {
            // Exact over [t_min, inf) up to the trapezoid endpoint error.
            let expect = (1.0 - gamma_lr(0.5, l * 1e-6)) / l.sqrt();
            assert!((q / expect - 1.0).abs() < 2e-4, "{l}: {q} vs {expect}");
        }
    }

    #[test]
    fn coarse_rule_is_flagged() {
        let d = Domain::interval(1.0, 16).unwrap();
        let q = SubordinationQuadrature {
            nodes_per_decade: 1,
            ..Default::default()
        };
        let r = heat_kernel_subordination(&d, 0.5, &q).unwrap();
        assert!(r.warning.is_some());
        let fine = heat_kernel_subordination(&d, 0.5, &Default::default()).unwrap();
        assert!(fine.warning.is_none());
        assert_eq!(fine.green, fine.green.transpose());
    }

    #[test]
    fn short_range_is_rejected() {
        let d = Domain::interval(1.0, 8).unwrap();
        let q = SubordinationQuadrature {
            t_max: 10.0,
            ..Default::default()
        };
        assert!(matches!(heat_kernel_subordination(&d, 0.5, &q), Err(Error::Precondition(_))));
    }
}
