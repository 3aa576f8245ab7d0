//! Constants of the a priori estimates and executable checks of the
//! inequalities they enter.
//!
//! Every check compares continuum inequalities against an implicit Euler
//! trajectory, so each carries a slack `ABS_TOL + DT_RATE * dt` unless the
//! inequality is exact for the scheme.

mod pointwise;
mod smoothing;
mod weighted;

pub use pointwise::{check_absolute_bounds, check_monotonicity, check_pointwise_green};
pub use smoothing::{check_f_integrability, check_smoothing, SmoothingMode};
pub use weighted::{check_weak_dual_residual, check_weighted_l1, TimeQuadrature};

use crate::error::{Error, Result};
use crate::nonlinearity::Nonlinearity;
use crate::operators::{smoothing_kernel_constant, DiscreteOperator, Domain, KernelBoundOptions};
use crate::stepper::Trajectory;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const ABS_TOL: f64 = 1e-6;
pub const DT_RATE: f64 = 10.0;

/// Slack allowed for a check run on a trajectory with step `dt`.
pub fn slack(dt: f64) -> f64 {
    ABS_TOL + DT_RATE * dt
}

/// Operator-dependent inputs of the constants, separated so that the
/// formulas can be exercised without building an operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantInputs {
    pub n_dim: usize,
    pub s: f64,
    pub gamma: f64,
    /// `sup_x int K(x,y) dy`.
    pub c2_omega: f64,
    /// Kernel constant of the smoothing proof.
    pub kernel_c1: f64,
    pub c_omega_gamma: f64,
    pub lambda1: f64,
    pub phi_l1: f64,
}

impl ConstantInputs {
    pub fn from_operator(op: &DiscreteOperator) -> Self {
        let domain = op.domain();
        let phi = op.boundary_weight();
        let green_phi = op.green_apply(&phi.values);
        let (lo, hi) = green_phi
            .iter()
            .zip(&phi.values)
            .map(|(g, p)| g / p)
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r), hi.max(r)));
        ConstantInputs {
            n_dim: domain.dim(),
            s: op.order(),
            gamma: op.gamma(),
            c2_omega: op.green_row_sum_max(),
            kernel_c1: smoothing_kernel_constant(op, &KernelBoundOptions::default()),
            c_omega_gamma: hi / lo,
            lambda1: op.eigenvalues()[0],
            phi_l1: domain.integrate(&phi.values),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateConstants {
    pub inputs: ConstantInputs,
    pub k1: f64,
    pub k0_prime: f64,
    pub k0: f64,
    pub k2_second: f64,
    pub k2_prime: f64,
    pub k2: f64,
    pub k6: f64,
    pub k7: f64,
    /// Indexed by regime.
    pub k9: [f64; 2],
    pub theta: [f64; 2],
    /// Order used for the ball integral in the smoothing constant; `N/2`
    /// when the kernel is not singular (`N <= 2s`).
    pub s_eff: f64,
    pub bounded_kernel_fallback: bool,
    /// `t >= (K1 ||phi||_1)^{theta_1 (m1 - 1)}` guarantees the large-time regime.
    pub large_time_threshold: f64,
    /// First sample time with `||u||_inf <= 1`.
    pub tau1_estimate: Option<f64>,
}

impl EstimateConstants {
    /// `K8[u(tau0)]` for regime `i`, given the weighted norm of `u(tau0)`.
    pub fn k8(&self, i: usize, norm: f64, nl: &Nonlinearity) -> f64 {
        let th = self.theta[i];
        self.k9[i] * norm.powf(2.0 * self.inputs.s * (nl.m(i) - 1.0) * th)
    }

    /// Regime index for `t` against the weighted norm of the reference state.
    pub fn regime(&self, t: f64, norm: f64) -> usize {
        if t >= self.regime_threshold(norm) {
            1
        } else {
            0
        }
    }

    /// `||u||^{2s/(N+gamma)}`.
    pub fn regime_threshold(&self, norm: f64) -> f64 {
        norm.powf(2.0 * self.inputs.s / (self.inputs.n_dim as f64 + self.inputs.gamma))
    }
}

pub(crate) fn require_nonlinear(nl: &Nonlinearity, what: &str) -> Result<()> {
    if nl.m0() <= 1.0 || !nl.mu0().is_finite() || nl.mu0() <= 0.0 {
        return Err(Error::Unsupported(format!("{what} needs a degenerate nonlinearity with m0 > 1")));
    }
    Ok(())
}

pub fn compute_constants(
    op: &DiscreteOperator,
    nl: &Nonlinearity,
    traj: Option<&Trajectory>,
) -> Result<EstimateConstants> {
    let mut c = constants_from_inputs(ConstantInputs::from_operator(op), nl)?;
    c.tau1_estimate = traj.and_then(first_time_below_one);
    Ok(c)
}

pub(crate) fn first_time_below_one(traj: &Trajectory) -> Option<f64> {
    traj.times
        .iter()
        .zip(&traj.states)
        .find(|(_, u)| sup(u) <= 1.0)
        .map(|(t, _)| *t)
}

pub fn constants_from_inputs(inputs: ConstantInputs, nl: &Nonlinearity) -> Result<EstimateConstants> {
    require_nonlinear(nl, "estimate constants")?;
    let (m0, m1, mu0) = (nl.m0(), nl.m1(), nl.mu0());
    let nd = inputs.n_dim as f64;
    let (s, gamma) = (inputs.s, inputs.gamma);
    let f1 = nl.f(1.0);
    let kappa_hi = nl.kappa_upper();
    let kappa_lo = nl.kappa_lower();
    let kappa_hi_dual = nl.kappa_upper_dual()?;
    let lower = kappa_lo.min(1.0) * f1;

    let k1 = inputs.c2_omega * 2f64.powf(1.0 / mu0 + 1.0);
    let k0_prime = kappa_hi_dual.max(1.0) * nl.legendre(k1)? / lower;
    let k0 = (0..2)
        .map(|i| k0_prime.powf((nl.m(i) - 1.0) / nl.m(i)))
        .fold(f64::NEG_INFINITY, f64::max);
    let k2_second = (kappa_hi_dual.max(1.0) * nl.legendre(k1 / k0)? / lower).powf(1.0 / m1);
    let k2_prime = k2_second * k0.powf(1.0 / (m1 - 1.0));
    let k2 = k2_prime.max(k0.powf(1.0 / (m0 - 1.0)) * k2_second);

    let bounded_kernel_fallback = nd <= 2.0 * s;
    let s_eff = if bounded_kernel_fallback { nd / 2.0 } else { s };
    let omega = if inputs.n_dim == 1 { 2.0 } else { 2.0 * PI };
    let c1 = inputs.kernel_c1;
    let two_mu = 2f64.powf(1.0 / mu0);
    let far = c1 * 2.0 * two_mu
        * (omega * c1 * two_mu / s_eff).powf((nd - 2.0 * s_eff + gamma) / (2.0 * s_eff))
        * inputs.c_omega_gamma;
    let k6 = kappa_hi_dual.max(1.0) * nl.legendre(1.0)? + far;
    let k7 = ((1.0 + k6) / (kappa_lo * f1).min(1.0)).max(1.0);

    let theta = [nl.theta(0, gamma, inputs.n_dim, s), nl.theta(1, gamma, inputs.n_dim, s)];
    let fk7 = nl.f(k7);
    let k9 = [0, 1].map(|i| inputs.lambda1 * kappa_hi.max(1.0) * fk7 / (2.0 * s * theta[i]));
    let large_time_threshold = (k1 * inputs.phi_l1).powf(theta[1] * (m1 - 1.0));

    let out = EstimateConstants {
        inputs,
        k1,
        k0_prime,
        k0,
        k2_second,
        k2_prime,
        k2,
        k6,
        k7,
        k9,
        theta,
        s_eff,
        bounded_kernel_fallback,
        large_time_threshold,
        tau1_estimate: None,
    };
    for (name, v) in [("K1", k1), ("K0", k0), ("K2", k2), ("K6", k6), ("K7", k7), ("K9", k9[0].max(k9[1]))] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Domain(format!("{name} evaluated to {v}")));
        }
    }
    Ok(out)
}

pub(crate) fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

pub(crate) fn trajectory_domain(traj: &Trajectory) -> Result<Domain> {
    Domain::new(traj.provenance.domain.clone())
}

/// Indices of at most `max` samples with `t > 0`, close to log-spaced.
pub(crate) fn log_subset(times: &[f64], max: usize) -> Vec<usize> {
    let pos: Vec<usize> = (0..times.len()).filter(|&k| times[k] > 0.0).collect();
    if pos.len() <= max {
        return pos;
    }
    let (a, b) = (times[pos[0]].ln(), times[*pos.last().unwrap()].ln());
    let mut out: Vec<usize> = (0..max)
        .map(|q| {
            let target = a + (b - a) * q as f64 / (max - 1) as f64;
            *pos.iter()
                .min_by(|&&x, &&y| (times[x].ln() - target).abs().total_cmp(&(times[y].ln() - target).abs()))
                .unwrap()
        })
        .collect();
    out.dedup();
    out
}
