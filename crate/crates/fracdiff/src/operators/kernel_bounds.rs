//! Fitted constants for the pointwise Green-kernel bounds
//!
//! ```text
//! (K1)  K(x,y) <= c1 |x-y|^{-(N-2s)}
//! (K2)  c0 phi(x) phi(y) <= K(x,y)
//!       K(x,y) <= c1 |x-y|^{-(N-2s)} (phi(x)/|x-y|^gamma ^ 1) (phi(y)/|x-y|^gamma ^ 1)
//! ```
//!
//! Pairs close to the diagonal and nodes close to the boundary are
//! excluded, since discretisation pollutes the kernel there.

use super::{BoundaryWeight, DiscreteOperator, Domain};
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    K1,
    K2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelBoundOptions {
    /// Pairs with Chebyshev index distance `<=` this are skipped.
    pub diagonal_band: usize,
    /// Nodes with fewer than this many cells to the boundary are skipped.
    pub boundary_band: usize,
}

impl Default for KernelBoundOptions {
    fn default() -> Self {
        KernelBoundOptions {
            diagonal_band: 3,
            boundary_band: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelBoundReport {
    pub hypothesis: Hypothesis,
    pub pass: bool,
    /// Smallest upper constant consistent with the sampled pairs.
    pub c1: f64,
    /// Largest lower constant (K2 only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    /// Singularity exponent used, `max(N - 2s, 0)`.
    pub exponent: f64,
    pub gamma: f64,
    /// `N <= 2s`: the kernel is not singular of order `N - 2s` and the
    /// upper bound degenerates to a bounded-kernel fit.
    pub bounded_kernel_fallback: bool,
    /// Pair attaining `c1`.
    pub upper_pair: Option<(usize, usize)>,
    /// Pair attaining `c0`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower_pair: Option<(usize, usize)>,
    pub diagonal_band: usize,
    pub boundary_band: usize,
    pub pairs: usize,
}

pub fn check_kernel_bounds(
    op: &DiscreteOperator,
    hypothesis: Hypothesis,
    opts: &KernelBoundOptions,
) -> Result<KernelBoundReport> {
    certify_kernel(op.domain(), op.green_matrix(), op.order(), op.gamma(), hypothesis, opts)
}

/// Fit the bound constants for an arbitrary symmetric kernel matrix.
pub fn certify_kernel(
    domain: &Domain,
    kernel: &DMatrix<f64>,
    s: f64,
    gamma: f64,
    hypothesis: Hypothesis,
    opts: &KernelBoundOptions,
) -> Result<KernelBoundReport> {
    let n = domain.len();
    if kernel.nrows() != n || kernel.ncols() != n {
        return Err(Error::Precondition(format!(
            "kernel is {}x{} but the domain has {n} nodes",
            kernel.nrows(),
            kernel.ncols()
        )));
    }
    let phi = BoundaryWeight::new(domain, gamma)?;
    let nd = domain.dim() as f64;
    let fallback = nd <= 2.0 * s;
    let exponent = (nd - 2.0 * s).max(0.0);
    let nodes: Vec<usize> = (0..n)
        .filter(|&i| domain.boundary_layer(i) >= opts.boundary_band)
        .collect();

    let mut c1 = 0.0f64;
    let mut upper_pair = None;
    let mut c0 = f64::INFINITY;
    let mut lower_pair = None;
    let mut pairs = 0;
    for (a, &i) in nodes.iter().enumerate() {
        for &j in &nodes[a + 1..] {
            if domain.index_distance(i, j) <= opts.diagonal_band {
                continue;
            }
            pairs += 1;
            let k = kernel[(i, j)];
            let r = domain.distance(i, j);
            let mut profile = r.powf(-exponent);
            if hypothesis == Hypothesis::K2 {
                let rg = r.powf(gamma);
                profile *= (phi.values[i] / rg).min(1.0) * (phi.values[j] / rg).min(1.0);
                let lower = k / (phi.values[i] * phi.values[j]);
                if lower < c0 || lower.is_nan() {
                    c0 = lower;
                    lower_pair = Some((i, j));
                }
            }
            let upper = k / profile;
            if upper > c1 || upper.is_nan() {
                c1 = upper;
                upper_pair = Some((i, j));
            }
        }
    }
    let c0 = (hypothesis == Hypothesis::K2).then_some(if pairs == 0 { 0.0 } else { c0 });
    let upper_ok = pairs > 0 && c1.is_finite() && c1 > 0.0;
    let lower_ok = c0.is_none_or(|c| c.is_finite() && c > 0.0);
    Ok(KernelBoundReport {
        hypothesis,
        pass: upper_ok && lower_ok,
        c1,
        c0,
        exponent,
        gamma,
        bounded_kernel_fallback: fallback,
        upper_pair,
        lower_pair,
        diagonal_band: opts.diagonal_band,
        boundary_band: opts.boundary_band,
        pairs,
    })
}

/// Smallest `c1` with both `K <= c1 r^{-e}` and
/// `K(x,y) <= c1 phi(y) r^{-(e+gamma)}`, `e = max(N - 2s, 0)`, over the
/// same pairs as [`check_kernel_bounds`].
pub fn smoothing_kernel_constant(op: &DiscreteOperator, opts: &KernelBoundOptions) -> f64 {
    let domain = op.domain();
    let kernel = op.green_matrix();
    let phi = op.boundary_weight();
    let gamma = op.gamma();
    let exponent = (domain.dim() as f64 - 2.0 * op.order()).max(0.0);
    let nodes: Vec<usize> = (0..domain.len())
        .filter(|&i| domain.boundary_layer(i) >= opts.boundary_band)
        .collect();
    let mut c1 = 0.0f64;
    for &i in &nodes {
        for &j in &nodes {
            if domain.index_distance(i, j) <= opts.diagonal_band {
                continue;
            }
            let k = kernel[(i, j)];
            let r = domain.distance(i, j);
            let re = r.powf(exponent);
            c1 = c1.max(k * re).max(k * re * r.powf(gamma) / phi.values[j]);
        }
    }
    c1
}
