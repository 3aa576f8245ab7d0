use super::{first_time_below_one, log_subset, require_nonlinear, slack, sup, EstimateConstants};
use crate::error::{Error, Result};
use crate::nonlinearity::Nonlinearity;
use crate::operators::DiscreteOperator;
use crate::report::{CheckReport, Location, MarginTracker};
use crate::stepper::Trajectory;

/// Samples examined by the triple-time Green check.
const GREEN_SUBSET: usize = 16;

fn positive_samples(traj: &Trajectory) -> Vec<usize> {
    (0..traj.len()).filter(|&k| traj.times[k] > 0.0).collect()
}

/// `t^{1/mu0} F(u)` and `t^{1/(m0-1)} u` nondecreasing at every node.
pub fn check_monotonicity(traj: &Trajectory, nl: &Nonlinearity) -> Result<CheckReport> {
    require_nonlinear(nl, "monotonicity")?;
    let idx = positive_samples(traj);
    if idx.len() < 2 {
        return Err(Error::Precondition("monotonicity needs two samples at t > 0".into()));
    }
    let p = 1.0 / nl.mu0();
    let q = (1.0 - nl.mu0()) / nl.mu0();
    let mut tr = MarginTracker::new("monotonicity", slack(traj.dt()));
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (ta, tb) = (traj.times[a], traj.times[b]);
        let (ua, ub) = (&traj.states[a], &traj.states[b]);
        for i in 0..ua.len() {
            let at = || Location::at_pair(ta, tb, Some(i));
            tr.record_le(ta.powf(p) * nl.f(ua[i]), tb.powf(p) * nl.f(ub[i]), at);
            tr.record_le(ta.powf(q) * ua[i], tb.powf(q) * ub[i], at);
        }
    }
    Ok(tr.finish().detail("rate", super::DT_RATE))
}

/// Two-sided bound on `sum_j [u(t0) - u(t1)]_j K(x_j, x0) w` for sampled
/// `t0 <= t1 <= t`, and decay of `A^{-1} u(t)` at every node.
pub fn check_pointwise_green(traj: &Trajectory, op: &DiscreteOperator, nl: &Nonlinearity) -> Result<CheckReport> {
    require_nonlinear(nl, "pointwise Green estimate")?;
    let idx = log_subset(&traj.times, GREEN_SUBSET);
    if idx.len() < 3 {
        return Err(Error::Precondition("pointwise Green estimate needs three samples at t > 0".into()));
    }
    let mu0 = nl.mu0();
    let m0 = nl.m0();
    let potentials: Vec<Vec<f64>> = idx.iter().map(|&k| op.green_apply(&traj.states[k])).collect();
    let tol = slack(traj.dt());
    let mut decay = MarginTracker::new("green_potential_decay", tol);
    let mut two_sided = MarginTracker::new("pointwise_green", tol);
    let n = op.len();
    for (a, &ka) in idx.iter().enumerate() {
        let t0 = traj.times[ka];
        let u0 = &traj.states[ka];
        if a + 1 < idx.len() {
            let t_next = traj.times[idx[a + 1]];
            for x in 0..n {
                decay.record_le(potentials[a + 1][x], potentials[a][x], || {
                    Location::at_pair(t0, t_next, Some(x))
                });
            }
        }
        for b in a..idx.len() {
            let t1 = traj.times[idx[b]];
            let lower_factor = (t0 / t1).powf(1.0 / mu0) * (t1 - t0);
            for c in b..idx.len() {
                let t = traj.times[idx[c]];
                let ut = &traj.states[idx[c]];
                let upper_factor = (m0 - 1.0) * t.powf(1.0 / mu0) * t0.powf(-(1.0 - mu0) / mu0);
                for x in 0..n {
                    let mid = potentials[a][x] - potentials[b][x];
                    let at = || Location::at_pair(t0, t, Some(x)).labelled(format!("t1={t1}"));
                    two_sided.record_le(lower_factor * nl.f(u0[x]), mid, at);
                    two_sided.record_le(mid, upper_factor * nl.f(ut[x]), at);
                }
            }
        }
    }
    let mut r = crate::report::combine("pointwise_green", &[two_sided.finish(), decay.finish()]);
    r.tolerance = tol;
    Ok(r.detail("subset", idx.len() as f64))
}

/// Data-independent bounds `F(||u||) <= F*(K1/t)` and
/// `||u|| <= K2 t^{-1/(m_i-1)}`, plus `tau1 <= K0`.
pub fn check_absolute_bounds(traj: &Trajectory, nl: &Nonlinearity, consts: &EstimateConstants) -> Result<CheckReport> {
    require_nonlinear(nl, "absolute bounds")?;
    let mut tr = MarginTracker::new("absolute_bounds", slack(traj.dt()));
    let mut worst_power_ratio = 0.0f64;
    for (k, &t) in traj.times.iter().enumerate() {
        if t <= 0.0 {
            continue;
        }
        let norm = sup(&traj.states[k]);
        let fstar = nl.legendre(consts.k1 / t)?;
        tr.record_le(nl.f(norm), fstar, || Location::at_sample(t, None).labelled("F(||u||) <= F*(K1/t)"));
        let i = if t <= consts.k0 { 0 } else { 1 };
        let bound = consts.k2 * t.powf(-1.0 / (nl.m(i) - 1.0));
        worst_power_ratio = worst_power_ratio.max(norm / bound);
        tr.record_le(norm, bound, || Location::at_sample(t, None).labelled("||u|| <= K2 t^{-1/(m_i-1)}"));
    }
    let tau1 = consts.tau1_estimate.or_else(|| first_time_below_one(traj));
    let mut r = match tau1 {
        Some(tau1) => {
            tr.record_le(tau1, consts.k0, || Location::at_sample(tau1, None).labelled("tau1 <= K0"));
            tr.finish().detail("tau1", tau1)
        }
        None => {
            tr.skip();
            tr.finish().note("||u||_inf stays above 1 on the sampled window; tau1 not observed")
        }
    };
    r = r.detail("K0", consts.k0).detail("K2", consts.k2).detail("max_ratio_to_K2_bound", worst_power_ratio);
    Ok(r)
}
