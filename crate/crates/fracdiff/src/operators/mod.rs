//! Dense Dirichlet realisations of the diffusion operator, their Green
//! matrices and first eigenpairs.
//!
//! Spectral families are assembled from the analytic sine eigenbasis of the
//! second-difference Laplacian, so `A phi_k = g(lambda_k) phi_k` holds to
//! rounding. The restricted fractional Laplacian is assembled by quadrature
//! and diagonalised numerically.

mod domain;
pub mod kernel_bounds;
mod rfl;
mod sine;
pub mod subordination;

pub use domain::{BoundaryWeight, Domain, DomainSpec, MAX_NODES_1D, MAX_NODES_2D_SIDE};
pub use kernel_bounds::{
    certify_kernel, check_kernel_bounds, smoothing_kernel_constant, Hypothesis, KernelBoundOptions, KernelBoundReport,
};
pub use rfl::{build_rfl, rfl_constant};
pub use subordination::{heat_kernel_subordination, SubordinationQuadrature, SubordinationResult};

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use sine::SineBasis;

/// One term `coeff * lambda^power` of a spectral symbol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerTerm {
    pub coeff: f64,
    pub power: f64,
}

/// Monotone map applied to the Dirichlet-Laplacian spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum SpectralSymbol {
    PowerSum { terms: Vec<PowerTerm> },
    /// Log-log linear interpolation through `(lambda, g)` pairs, power-law
    /// extrapolation beyond both ends.
    Table { lambda: Vec<f64>, g: Vec<f64> },
}

impl SpectralSymbol {
    pub fn validate(&self) -> Result<()> {
        match self {
            SpectralSymbol::PowerSum { terms } => {
                if terms.is_empty() {
                    return Err(Error::Config("spectral power sum needs at least one term".into()));
                }
                for t in terms {
                    if !(t.coeff.is_finite() && t.coeff >= 0.0 && t.power.is_finite() && t.power >= 0.0) {
                        return Err(Error::Config(format!(
                            "spectral term needs coeff >= 0 and power >= 0, got {t:?}"
                        )));
                    }
                }
                if terms.iter().all(|t| t.coeff == 0.0) {
                    return Err(Error::Config("spectral power sum is identically zero".into()));
                }
            }
            SpectralSymbol::Table { lambda, g } => {
                if lambda.len() < 2 || lambda.len() != g.len() {
                    return Err(Error::Config("spectral table needs >= 2 matching (lambda, g) pairs".into()));
                }
                if lambda.iter().any(|l| !(*l > 0.0 && l.is_finite()))
                    || lambda.windows(2).any(|w| w[1] <= w[0])
                {
                    return Err(Error::Config("spectral table lambdas must be positive and increasing".into()));
                }
                if g.iter().any(|v| !(*v > 0.0 && v.is_finite())) || g.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::Config("spectral table values must be positive and nondecreasing".into()));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, lam: f64) -> f64 {
        match self {
            SpectralSymbol::PowerSum { terms } => terms.iter().map(|t| t.coeff * lam.powf(t.power)).sum(),
            SpectralSymbol::Table { lambda, g } => {
                let n = lambda.len();
                let k = lambda.partition_point(|&l| l <= lam).clamp(1, n - 1);
                let (x0, x1) = (lambda[k - 1].ln(), lambda[k].ln());
                let (y0, y1) = (g[k - 1].ln(), g[k].ln());
                let w = (lam.ln() - x0) / (x1 - x0);
                (y0 + w * (y1 - y0)).exp()
            }
        }
    }

    /// High-frequency growth exponent `s` of `g(lambda) ~ lambda^s`.
    pub fn order(&self) -> f64 {
        match self {
            SpectralSymbol::PowerSum { terms } => terms
                .iter()
                .filter(|t| t.coeff > 0.0)
                .map(|t| t.power)
                .fold(0.0, f64::max),
            SpectralSymbol::Table { lambda, g } => {
                let n = lambda.len();
                (g[n - 1] / g[n - 2]).ln() / (lambda[n - 1] / lambda[n - 2]).ln()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum OperatorFamily {
    Laplacian,
    SpectralPower {
        s: f64,
    },
    SpectralFunction {
        symbol: SpectralSymbol,
        /// Boundary exponent; defaults to 1.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
    },
    RestrictedFractional {
        s: f64,
    },
}

impl OperatorFamily {
    pub fn validate(&self) -> Result<()> {
        match self {
            OperatorFamily::Laplacian => Ok(()),
            OperatorFamily::SpectralPower { s } => {
                if s.is_finite() && *s > 0.0 && *s <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::Config(format!("spectral power needs s in (0, 1], got {s}")))
                }
            }
            OperatorFamily::RestrictedFractional { s } => {
                if s.is_finite() && *s > 0.0 && *s < 1.0 {
                    Ok(())
                } else {
                    Err(Error::Config(format!("restricted fractional Laplacian needs s in (0, 1), got {s}")))
                }
            }
            OperatorFamily::SpectralFunction { symbol, gamma } => {
                symbol.validate()?;
                if let Some(g) = gamma {
                    if !(*g > 0.0 && *g <= 1.0) {
                        return Err(Error::Config(format!("gamma must lie in (0, 1], got {g}")));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Fast application through the sine transform, for spectral families.
#[derive(Clone, Debug)]
struct SpectralApply {
    basis: SineBasis,
    symbol_grid: Vec<f64>,
}

/// Grids above this size apply spectral operators through the sine
/// transform instead of a dense product.
const FAST_APPLY_THRESHOLD: usize = 400;

/// Matrix realisation of the operator with its spectral data and Green
/// matrix, all computed at construction.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    domain: Domain,
    family: OperatorFamily,
    order: f64,
    gamma: f64,
    matrix: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    green: DMatrix<f64>,
    fast: Option<SpectralApply>,
}

pub fn build(domain: &Domain, family: &OperatorFamily) -> Result<DiscreteOperator> {
    family.validate()?;
    match family {
        OperatorFamily::Laplacian => build_laplacian(domain),
        OperatorFamily::SpectralPower { s } => build_spectral_power(domain, *s),
        OperatorFamily::SpectralFunction { symbol, gamma } => {
            let mut op = build_spectral_function(domain, |l| symbol.eval(l), symbol.order(), gamma.unwrap_or(1.0))?;
            op.family = family.clone();
            Ok(op)
        }
        OperatorFamily::RestrictedFractional { s } => build_rfl(domain, *s),
    }
}

/// Second-difference Dirichlet Laplacian (3-point / 5-point stencil).
pub fn build_laplacian(domain: &Domain) -> Result<DiscreteOperator> {
    let n = domain.len();
    let [nx, ny] = domain.counts();
    let [hx, hy] = domain.spacing();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let (ix, iy) = domain.index(i);
        let cx = 1.0 / (hx * hx);
        a[(i, i)] += 2.0 * cx;
        if ix > 0 {
            a[(i, i - 1)] = -cx;
        }
        if ix + 1 < nx {
            a[(i, i + 1)] = -cx;
        }
        if domain.dim() == 2 {
            let cy = 1.0 / (hy * hy);
            a[(i, i)] += 2.0 * cy;
            if iy > 0 {
                a[(i, i - nx)] = -cy;
            }
            if iy + 1 < ny {
                a[(i, i + nx)] = -cy;
            }
        }
    }
    let basis = SineBasis::new(domain);
    let eigenvalues = basis.eigenvalues().to_vec();
    let eigenvectors = basis.eigenvector_matrix();
    let green = spectral_green(&eigenvectors, &eigenvalues);
    let symbol_grid = basis.grid_eigenvalues();
    Ok(DiscreteOperator {
        domain: domain.clone(),
        family: OperatorFamily::Laplacian,
        order: 1.0,
        gamma: 1.0,
        matrix: a,
        eigenvalues,
        eigenvectors,
        green,
        fast: Some(SpectralApply { basis, symbol_grid }),
    })
}

/// `A = sum_k lambda_k^s phi_k phi_k^T W`, with boundary exponent `gamma = s`.
pub fn build_spectral_power(domain: &Domain, s: f64) -> Result<DiscreteOperator> {
    OperatorFamily::SpectralPower { s }.validate()?;
    let mut op = build_spectral_function(domain, |l| l.powf(s), s, s)?;
    op.family = OperatorFamily::SpectralPower { s };
    Ok(op)
}

/// `A = sum_k g(lambda_k) phi_k phi_k^T W` for a positive nondecreasing `g`.
///
/// `order` is the growth exponent of `g` (it sets the kernel singularity
/// `|x-y|^{-(N-2 order)}`) and `gamma` the declared boundary exponent.
pub fn build_spectral_function(
    domain: &Domain,
    g: impl Fn(f64) -> f64,
    order: f64,
    gamma: f64,
) -> Result<DiscreteOperator> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Config(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    let basis = SineBasis::new(domain);
    let lam = basis.eigenvalues();
    let values: Vec<f64> = lam.iter().map(|&l| g(l)).collect();
    if let Some((k, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::Construction(format!(
            "spectral symbol must be positive on the spectrum; g(lambda_{k}) = {v}"
        )));
    }
    if values.windows(2).any(|w| w[1] < w[0] * (1.0 - 1e-12)) {
        return Err(Error::Construction("spectral symbol must be nondecreasing on the spectrum".into()));
    }
    let phi = basis.eigenvector_matrix();
    let w = domain.weight();
    let mut scaled = phi.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col *= values[k] * w;
    }
    let mut a = &scaled * phi.transpose();
    symmetrize(&mut a);
    let green = spectral_green(&phi, &values);
    let grid_lam = basis.grid_eigenvalues();
    let symbol_grid = grid_lam.iter().map(|&l| g(l)).collect();
    Ok(DiscreteOperator {
        domain: domain.clone(),
        family: OperatorFamily::SpectralFunction {
            symbol: SpectralSymbol::PowerSum {
                terms: vec![PowerTerm { coeff: 1.0, power: order }],
            },
            gamma: Some(gamma),
        },
        order,
        gamma,
        matrix: a,
        eigenvalues: values,
        eigenvectors: phi,
        green,
        fast: Some(SpectralApply { basis, symbol_grid }),
    })
}

fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// `K = Phi diag(1/g) Phi^T`, so that `(A^{-1} f)_i = sum_j K_ij f_j w`.
fn spectral_green(phi: &DMatrix<f64>, values: &[f64]) -> DMatrix<f64> {
    let mut scaled = phi.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col /= values[k];
    }
    let mut k = &scaled * phi.transpose();
    symmetrize(&mut k);
    k
}

impl DiscreteOperator {
    /// Wrap a symmetric positive definite matrix, diagonalising it densely.
    pub(crate) fn from_symmetric(
        domain: &Domain,
        family: OperatorFamily,
        order: f64,
        gamma: f64,
        mut a: DMatrix<f64>,
    ) -> Result<Self> {
        symmetrize(&mut a);
        let n = a.nrows();
        let eig = SymmetricEigen::new(a.clone());
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let eigenvalues: Vec<f64> = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
        if !(eigenvalues[0] > 0.0) {
            return Err(Error::Construction(format!(
                "operator is not positive definite (smallest eigenvalue {})",
                eigenvalues[0]
            )));
        }
        let scale = 1.0 / domain.weight().sqrt();
        let mut phi = DMatrix::zeros(n, n);
        for (col, &i) in idx.iter().enumerate() {
            let v = eig.eigenvectors.column(i);
            // Deterministic sign: positive sum, or positive first significant entry.
            let sum: f64 = v.iter().sum();
            let sign = if sum.abs() > 1e-8 {
                sum.signum()
            } else {
                v.iter().find(|x| x.abs() > 1e-8).map(|x| x.signum()).unwrap_or(1.0)
            };
            phi.set_column(col, &(v * (sign * scale)));
        }
        let green = spectral_green(&phi, &eigenvalues);
        Ok(DiscreteOperator {
            domain: domain.clone(),
            family,
            order,
            gamma,
            matrix: a,
            eigenvalues,
            eigenvectors: phi,
            green,
            fast: None,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn family(&self) -> &OperatorFamily {
        &self.family
    }

    /// Differential order `s` (1 for the Laplacian).
    pub fn order(&self) -> f64 {
        self.order
    }

    /// Declared boundary exponent.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn len(&self) -> usize {
        self.domain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domain.is_empty()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Weighted-orthonormal eigenvectors as columns, sorted by eigenvalue.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// Green matrix `K = A^{-1} / w`.
    pub fn green_matrix(&self) -> &DMatrix<f64> {
        &self.green
    }

    /// Smallest eigenvalue and its nonnegative, weighted-normalised eigenfunction.
    pub fn first_eigenpair(&self) -> (f64, Vec<f64>) {
        let col = self.eigenvectors.column(0);
        let sign = if col.iter().sum::<f64>() >= 0.0 { 1.0 } else { -1.0 };
        (self.eigenvalues[0], col.iter().map(|v| (sign * v).max(0.0)).collect())
    }

    /// Range `(min, max)` of `Phi1 / phi` over the nodes.
    pub fn phi1_comparability(&self, weight: &BoundaryWeight) -> (f64, f64) {
        let (_, phi1) = self.first_eigenpair();
        phi1.iter()
            .zip(&weight.values)
            .map(|(a, b)| a / b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)))
    }

    pub fn boundary_weight(&self) -> BoundaryWeight {
        BoundaryWeight::new(&self.domain, self.gamma).expect("gamma validated at construction")
    }

    /// `A v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        match &self.fast {
            Some(f) if v.len() > FAST_APPLY_THRESHOLD => {
                let mut c = f.basis.analyze(v);
                c.iter_mut().zip(&f.symbol_grid).for_each(|(x, g)| *x *= g);
                f.basis.synthesize(&c)
            }
            _ => dense_apply(&self.matrix, v),
        }
    }

    /// `A^{-1} f = K W f`.
    pub fn green_apply(&self, f: &[f64]) -> Vec<f64> {
        match &self.fast {
            Some(s) if f.len() > FAST_APPLY_THRESHOLD => {
                let mut c = s.basis.analyze(f);
                c.iter_mut().zip(&s.symbol_grid).for_each(|(x, g)| *x /= g);
                s.basis.synthesize(&c)
            }
            _ => {
                let mut out = dense_apply(&self.green, f);
                let w = self.domain.weight();
                out.iter_mut().for_each(|x| *x *= w);
                out
            }
        }
    }

    /// Linear flow `e^{-tA} v`, by the eigendecomposition.
    pub fn heat_apply(&self, t: f64, v: &[f64]) -> Vec<f64> {
        let w = self.domain.weight();
        let phi = &self.eigenvectors;
        let x = DVector::from_column_slice(v) * w;
        let mut c = phi.tr_mul(&x);
        c.iter_mut()
            .zip(&self.eigenvalues)
            .for_each(|(ck, l)| *ck *= (-t * l).exp());
        (phi * c).data.into()
    }

    /// `sup_i sum_j K_ij w`.
    pub fn green_row_sum_max(&self) -> f64 {
        let w = self.domain.weight();
        self.green
            .row_iter()
            .map(|r| r.sum() * w)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub(crate) fn dense_apply(a: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    let x = DVector::from_column_slice(v);
    let mut y = DVector::zeros(a.nrows());
    y.gemv(1.0, a, &x, 0.0);
    y.data.into()
}
