use super::{log_subset, require_nonlinear, slack, trajectory_domain, EstimateConstants};
use crate::error::{Error, Result};
use crate::nonlinearity::Nonlinearity;
use crate::operators::{BoundaryWeight, DiscreteOperator};
use crate::report::{combine, CheckReport, Location, MarginTracker};
use crate::stepper::Trajectory;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Tolerance for inequalities that the implicit scheme satisfies exactly.
const EXACT_TOL: f64 = 1e-10;
/// Reference times tried for the Hölder estimate.
const HOLDER_SUBSET: usize = 12;
const RANDOM_WEIGHT_SEED: u64 = 0x5eed;

/// Ordered pair `u >= v`: weighted-L1 monotonicity, quasi-monotonicity with
/// `C_{Omega,gamma}`, and the time-Hölder estimate with `K8`.
pub fn check_weighted_l1(
    traj_u: &Trajectory,
    traj_v: &Trajectory,
    op: &DiscreteOperator,
    weight: &BoundaryWeight,
    consts: &EstimateConstants,
    nl: &Nonlinearity,
) -> Result<CheckReport> {
    require_nonlinear(nl, "weighted L1 estimates")?;
    if traj_u.times != traj_v.times || traj_u.dt() != traj_v.dt() {
        return Err(Error::Precondition("ordered pair must share sample times and dt".into()));
    }
    let (Some(u0), Some(v0)) = (traj_u.states.first(), traj_v.states.first()) else {
        return Err(Error::Precondition("empty trajectories".into()));
    };
    if let Some(i) = (0..u0.len()).find(|&i| u0[i] < v0[i]) {
        return Err(Error::Precondition(format!(
            "initial data are not ordered: u0 < v0 at node {i}"
        )));
    }
    let domain = trajectory_domain(traj_u)?;
    let times = &traj_u.times;
    let tol = slack(traj_u.dt());
    let diffs: Vec<Vec<f64>> = traj_u
        .states
        .iter()
        .zip(&traj_v.states)
        .map(|(u, v)| u.iter().zip(v).map(|(a, b)| a - b).collect())
        .collect();

    let (lambda1, phi1) = op.first_eigenpair();
    let mut rng = ChaCha8Rng::seed_from_u64(RANDOM_WEIGHT_SEED);
    let random: Vec<f64> = (0..op.len()).map(|_| rng.gen::<f64>()).collect();
    let tests = [("one", vec![1.0; op.len()]), ("phi1", phi1.clone()), ("random", random)];
    let mut reports = Vec::new();
    for (name, psi) in &tests {
        let g = op.green_apply(psi);
        let vals: Vec<f64> = diffs.iter().map(|d| domain.dot(d, &g)).collect();
        let mut tr = MarginTracker::new(&format!("weighted_l1_dual_{name}"), EXACT_TOL);
        for k in 1..vals.len() {
            tr.record_le(vals[k], vals[k - 1], || Location::at_pair(times[k - 1], times[k], None));
        }
        reports.push(tr.finish());
    }

    let phi_vals: Vec<f64> = diffs.iter().map(|d| domain.dot(d, &weight.values)).collect();
    let mut quasi = MarginTracker::new("weighted_l1_quasi_monotone", tol);
    let mut fitted = 0.0f64;
    for a in 0..phi_vals.len() {
        for b in a..phi_vals.len() {
            if phi_vals[a] > 0.0 {
                fitted = fitted.max(phi_vals[b] / phi_vals[a]);
            }
            quasi.record_le(phi_vals[b], consts.inputs.c_omega_gamma * phi_vals[a], || {
                Location::at_pair(times[a], times[b], None)
            });
        }
    }
    reports.push(
        quasi
            .finish()
            .detail("fitted_constant", fitted)
            .detail("C_Omega_gamma", consts.inputs.c_omega_gamma),
    );

    let phi1_vals: Vec<f64> = diffs.iter().map(|d| domain.dot(d, &phi1)).collect();
    let u_phi1: Vec<f64> = traj_u.states.iter().map(|u| domain.dot(u, &phi1)).collect();
    let mut holder = MarginTracker::new("weighted_l1_holder", tol);
    let mut refs = vec![0];
    refs.extend(log_subset(times, HOLDER_SUBSET));
    refs.dedup();
    let s = consts.inputs.s;
    for &r in &refs {
        let tau0 = times[r];
        let threshold = consts.regime_threshold(u_phi1[r]);
        for a in r..times.len() {
            for b in a..times.len() {
                let (tau, t) = (times[a], times[b]);
                if !((t <= consts.k0) || tau0 >= consts.k0) {
                    holder.skip();
                    continue;
                }
                let i = if t <= threshold {
                    0
                } else if tau >= threshold {
                    1
                } else {
                    holder.skip();
                    continue;
                };
                let k8 = consts.k8(i, u_phi1[r], nl);
                let rhs = k8 * (t - tau).powf(2.0 * s * consts.theta[i]) * phi1_vals[r];
                holder.record_le(phi1_vals[a] - phi1_vals[b], rhs, || {
                    Location::at_pair(tau, t, None).labelled(format!("tau0={tau0}"))
                });
            }
        }
    }
    reports.push(holder.finish().detail("lambda1", lambda1));
    let mut out = combine("weighted_l1", &reports);
    out.details.insert("fitted_constant".into(), fitted);
    out.details.insert("C_Omega_gamma".into(), consts.inputs.c_omega_gamma);
    Ok(out)
}

/// Time quadrature of `int F(u) psi` in the weak dual identity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeQuadrature {
    /// Exact for the implicit scheme: the residual is round-off.
    #[default]
    RightEndpoint,
    /// Compares the piecewise-linear-in-time trajectory with the identity;
    /// first order in `dt`.
    Trapezoid,
}

/// Residual of `int u(t0) A^{-1}psi - int u(t1) A^{-1}psi = int_{t0}^{t1} int F(u) psi`
/// between the first positive sample and the last one. Needs every
/// sub-step on that window.
pub fn check_weak_dual_residual(
    traj: &Trajectory,
    op: &DiscreteOperator,
    nl: &Nonlinearity,
    test_functions: &[Vec<f64>],
    quadrature: TimeQuadrature,
) -> Result<CheckReport> {
    let Some(first) = (0..traj.len()).find(|&k| traj.times[k] > 0.0) else {
        return Err(Error::Precondition("weak dual residual needs samples at t > 0".into()));
    };
    let last = traj.len() - 1;
    if last <= first {
        return Err(Error::Precondition("weak dual residual needs two samples at t > 0".into()));
    }
    if traj.steps[first..=last].windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::Precondition(
            "weak dual residual needs every sub-step between the first and last sample".into(),
        ));
    }
    let domain = op.domain();
    let dt = traj.dt();
    let tol = slack(dt);
    let mut tr = MarginTracker::new("weak_dual_residual", 0.0);
    let mut residual = 0.0f64;
    let mut right = 0.0f64;
    let mut trap = 0.0f64;
    for (p, psi) in test_functions.iter().enumerate() {
        if psi.len() != op.len() || psi.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Precondition(format!("test function {p} must be nonnegative on the grid")));
        }
        let g = op.green_apply(psi);
        let pot = |k: usize| domain.dot(&traj.states[k], &g);
        let flux: Vec<f64> = (first..=last)
            .map(|k| {
                let fu: Vec<f64> = traj.states[k].iter().map(|&v| nl.f(v)).collect();
                domain.dot(&fu, psi)
            })
            .collect();
        let drop = pot(first) - pot(last);
        let sum_right: f64 = flux[1..].iter().sum::<f64>() * dt;
        let sum_trap: f64 = flux.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum::<f64>() * dt;
        let r_right = (drop - sum_right).abs();
        let r_trap = (drop - sum_trap).abs();
        let r = match quadrature {
            TimeQuadrature::RightEndpoint => r_right,
            TimeQuadrature::Trapezoid => r_trap,
        };
        let scale = pot(first).abs() + pot(last).abs() + flux[1..].iter().map(|f| f.abs()).sum::<f64>() * dt;
        residual = residual.max(r);
        right = right.max(r_right);
        trap = trap.max(r_trap);
        tr.record_le(r, tol * scale, || {
            Location::at_pair(traj.times[first], traj.times[last], None).labelled(format!("psi #{p}"))
        });
    }
    Ok(tr
        .finish()
        .detail("residual", residual)
        .detail("residual_right_endpoint", right)
        .detail("residual_trapezoid", trap)
        .detail("slack", tol))
}
