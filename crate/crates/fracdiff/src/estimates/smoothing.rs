use super::{require_nonlinear, slack, sup, trajectory_domain, EstimateConstants};
use crate::error::Result;
use crate::nonlinearity::Nonlinearity;
use crate::operators::BoundaryWeight;
use crate::report::{CheckReport, Location, MarginTracker};
use crate::stepper::Trajectory;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingMode {
    /// `F(||u(t)||) <= K6 ...` for every sampled `t0 <= t`.
    Instantaneous,
    /// `||u(t)|| <= K7 ...` with the small-time exponents.
    Small,
    /// Same with the large-time exponents.
    Large,
    /// `||u(t)||` against the weighted norm of the later state `u(t+h)`.
    Backward,
}

impl SmoothingMode {
    pub fn name(self) -> &'static str {
        match self {
            SmoothingMode::Instantaneous => "smoothing_instantaneous",
            SmoothingMode::Small => "smoothing_small",
            SmoothingMode::Large => "smoothing_large",
            SmoothingMode::Backward => "smoothing_backward",
        }
    }
}

pub fn check_smoothing(
    traj: &Trajectory,
    nl: &Nonlinearity,
    weight: &BoundaryWeight,
    consts: &EstimateConstants,
    mode: SmoothingMode,
) -> Result<CheckReport> {
    require_nonlinear(nl, "smoothing")?;
    let domain = trajectory_domain(traj)?;
    let nd = consts.inputs.n_dim as f64;
    let (s, gamma) = (consts.inputs.s, consts.inputs.gamma);
    let norms: Vec<f64> = traj.states.iter().map(|u| weight.l1(&domain, u)).collect();
    let sups: Vec<f64> = traj.states.iter().map(|u| sup(u)).collect();
    let times = &traj.times;
    let mut tr = MarginTracker::new(mode.name(), slack(traj.dt()));
    let mut worst_ratio = 0.0f64;
    let th = consts.theta;
    let n = times.len();
    for a in 0..n {
        for b in a..n {
            let (t0, t) = (times[a], times[b]);
            let at = || Location::at_pair(t0, t, None);
            match mode {
                SmoothingMode::Instantaneous => {
                    if t <= 0.0 {
                        continue;
                    }
                    let i = consts.regime(t, norms[a]);
                    let m = nl.m(i);
                    let rhs = consts.k6 * norms[a].powf(2.0 * s * m * th[i]) / t.powf(m * (nd + gamma) * th[i]);
                    tr.record_le(nl.f(sups[b]), rhs, at);
                }
                SmoothingMode::Small | SmoothingMode::Large => {
                    if t <= 0.0 {
                        continue;
                    }
                    let i = consts.regime(t, norms[a]);
                    if (mode == SmoothingMode::Small) != (i == 0) {
                        tr.skip();
                        continue;
                    }
                    let profile = norms[a].powf(2.0 * s * th[i]) / t.powf((nd + gamma) * th[i]);
                    if profile > 0.0 {
                        worst_ratio = worst_ratio.max(sups[b] / profile);
                    }
                    tr.record_le(sups[b], consts.k7 * profile, at);
                }
                SmoothingMode::Backward => {
                    if t0 <= 0.0 || b == a {
                        continue;
                    }
                    let h = t - t0;
                    let i = consts.regime(t0, norms[a]);
                    let rhs = backward_bound(consts, nl, i, t0, h, norms[b]);
                    tr.record_le(sups[a], rhs, || Location::at_pair(t, t0, None).labelled(format!("h={h}")));
                }
            }
        }
    }
    let mut r = tr.finish().detail("K6", consts.k6).detail("K7", consts.k7);
    if matches!(mode, SmoothingMode::Small | SmoothingMode::Large) {
        r = r.detail("max_ratio", worst_ratio);
    }
    if consts.bounded_kernel_fallback {
        r = r.note(format!(
            "N <= 2s: smoothing constant built with the bounded-kernel order s_eff = {}",
            consts.s_eff
        ));
    }
    Ok(r)
}

/// Bound on `||u(t)||` from the weighted norm of `u(t+h)` in regime `i`.
fn backward_bound(consts: &EstimateConstants, nl: &Nonlinearity, i: usize, t: f64, h: f64, later_norm: f64) -> f64 {
    let nd = consts.inputs.n_dim as f64;
    let (s, gamma) = (consts.inputs.s, consts.inputs.gamma);
    let th = consts.theta[i];
    let e = 2.0 * s * th / (nl.m0() - 1.0);
    // ((t+h)/t)^e <= 2^max(e,1) (1 v h/t)^e.
    let c = 2f64.powf(e.max(1.0)) * consts.k7;
    c * (h / t).max(1.0).powf(e) * later_norm.powf(2.0 * s * th) / t.powf((nd + gamma) * th)
}

/// Sample-wise domination of `int F(u(t)) phi` by the smoothing bound for
/// `t < K0` and by `K1^{m1} ||phi||_1 t^{-m1/(m1-1)}` for `t >= K0`.
pub fn check_f_integrability(
    traj: &Trajectory,
    nl: &Nonlinearity,
    weight: &BoundaryWeight,
    consts: &EstimateConstants,
) -> Result<CheckReport> {
    require_nonlinear(nl, "integrability")?;
    let domain = trajectory_domain(traj)?;
    let nd = consts.inputs.n_dim as f64;
    let (s, gamma) = (consts.inputs.s, consts.inputs.gamma);
    let phi_l1 = consts.inputs.phi_l1;
    let m1 = nl.m1();
    let tail_exponent = m1 / (m1 - 1.0);
    let norm0 = traj.states.first().map(|u| weight.l1(&domain, u)).unwrap_or(0.0);
    let integrals: Vec<f64> = traj
        .states
        .iter()
        .map(|u| {
            let fu: Vec<f64> = u.iter().map(|&v| nl.f(v)).collect();
            weight.l1(&domain, &fu)
        })
        .collect();
    let mut tr = MarginTracker::new("f_integrability", slack(traj.dt()));
    for (k, &t) in traj.times.iter().enumerate() {
        if t <= 0.0 {
            continue;
        }
        let at = || Location::at_sample(t, None);
        if t >= consts.k0 {
            let bound = consts.k1.powf(m1) * phi_l1 * t.powf(-tail_exponent);
            tr.record_le(integrals[k], bound, || at().labelled("tail"));
        } else {
            let i = consts.regime(t, norm0);
            let m = nl.m(i);
            let th = consts.theta[i];
            let bound = phi_l1 * consts.k6 * norm0.powf(2.0 * s * m * th) / t.powf(m * (nd + gamma) * th);
            tr.record_le(integrals[k], bound, || at().labelled("small time"));
        }
    }
    let total: f64 = traj
        .times
        .windows(2)
        .zip(integrals.windows(2))
        .map(|(t, f)| 0.5 * (t[1] - t[0]) * (f[0] + f[1]))
        .sum();
    let mut r = tr.finish().detail("total", total).detail("tail_exponent", tail_exponent);
    if !total.is_finite() {
        r.pass = false;
        r = r.note("time integral is not finite");
    }
    Ok(r)
}
