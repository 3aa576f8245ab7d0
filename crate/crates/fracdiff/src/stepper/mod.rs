//! Implicit Euler time stepping `u_{k+1} + h A F(u_{k+1}) = u_k`.

mod linear;

pub(crate) use linear::solve_shifted;

use crate::error::{Error, Result};
use crate::nonlinearity::{Nonlinearity, NonlinearityKind};
use crate::operators::{DiscreteOperator, DomainSpec, OperatorFamily};
use serde::{Deserialize, Serialize};

/// Entries below `-UNDERSHOOT_TOL` abort a step; smaller undershoots are
/// clamped to zero.
pub const UNDERSHOOT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepperConfig {
    pub dt: f64,
    /// Target for `||R||_inf / (1 + ||u_k||_inf)`.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    /// Added to `F'(u)` in the Jacobian.
    pub jacobian_regularization: f64,
    pub backtrack_factor: f64,
    pub max_halvings: usize,
    pub max_fixed_point_iters: usize,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            dt: 1e-2,
            newton_tol: 1e-11,
            max_newton_iters: 50,
            jacobian_regularization: 1e-12,
            backtrack_factor: 0.5,
            max_halvings: 30,
            max_fixed_point_iters: 2000,
        }
    }
}

impl StepperConfig {
    pub fn with_dt(dt: f64) -> Self {
        StepperConfig {
            dt,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("dt", self.dt)?;
        positive("newton_tol", self.newton_tol)?;
        positive("jacobian_regularization", self.jacobian_regularization)?;
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::Config(format!(
                "backtrack_factor must lie in (0, 1), got {}",
                self.backtrack_factor
            )));
        }
        if self.max_newton_iters == 0 {
            return Err(Error::Config("max_newton_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub newton_iterations: usize,
    /// Final `||R||_inf`.
    pub residual: f64,
    pub fixed_point_fallback: bool,
    /// Conjugate-gradient iterations summed over the Newton solves.
    #[serde(default)]
    pub cg_iterations: usize,
    /// Newton solves that fell back to the dense factorization.
    #[serde(default)]
    pub direct_solves: usize,
    /// Largest magnitude clamped to zero.
    pub clamped: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub domain: DomainSpec,
    pub operator: OperatorFamily,
    pub nonlinearity: NonlinearityKind,
    pub initial: String,
    pub dt: f64,
}

/// Samples of the implicit Euler flow at the requested output times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Output times, snapped to multiples of `dt`.
    pub times: Vec<f64>,
    /// Step index of every sample.
    pub steps: Vec<usize>,
    pub states: Vec<Vec<f64>>,
    /// One entry per sub-step.
    pub stats: Vec<StepStats>,
    pub provenance: Provenance,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.provenance.dt
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.states.last().map(Vec::as_slice)
    }

    /// State at the sample closest to `t`.
    pub fn nearest(&self, t: f64) -> Option<(f64, &[f64])> {
        let k = (0..self.len()).min_by(|&a, &b| (self.times[a] - t).abs().total_cmp(&(self.times[b] - t).abs()))?;
        Some((self.times[k], &self.states[k]))
    }

    pub fn max_newton_iterations(&self) -> usize {
        self.stats.iter().map(|s| s.newton_iterations).max().unwrap_or(0)
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

struct StepContext<'a> {
    op: &'a DiscreteOperator,
    nl: &'a Nonlinearity,
    h: f64,
    cfg: &'a StepperConfig,
    /// `max_i sum_j |A_ij|`, for the rounding floor of the residual.
    abs_row_sum: f64,
}

impl StepContext<'_> {
    fn residual(&self, u: &[f64], uk: &[f64]) -> (Vec<f64>, f64) {
        let fu: Vec<f64> = u.iter().map(|&v| self.nl.f(v)).collect();
        let afu = self.op.apply(&fu);
        let r: Vec<f64> = (0..u.len()).map(|i| u[i] + self.h * afu[i] - uk[i]).collect();
        let norm = sup(&r);
        (r, norm)
    }

    /// Residual level reachable in floating point.
    fn floor(&self, u: &[f64], uk: &[f64]) -> f64 {
        let fmax = u.iter().fold(0.0f64, |a, &v| a.max(self.nl.f(v).abs()));
        64.0 * f64::EPSILON * (sup(uk) + sup(u) + self.h * self.abs_row_sum * fmax)
    }

    fn target(&self, u: &[f64], uk: &[f64]) -> f64 {
        (self.cfg.newton_tol * (1.0 + sup(uk))).max(self.floor(u, uk))
    }

    fn newton(&self, uk: &[f64], stats: &mut StepStats) -> Option<Vec<f64>> {
        let eps = self.cfg.jacobian_regularization;
        let mut u = uk.to_vec();
        let (mut r, mut rnorm) = self.residual(&u, uk);
        for it in 0..self.cfg.max_newton_iters {
            stats.newton_iterations = it;
            stats.residual = rnorm;
            if rnorm <= self.target(&u, uk) {
                return Some(u);
            }
            let d: Vec<f64> = u.iter().map(|&v| self.nl.fprime(v) + eps).collect();
            let (delta, info) = solve_shifted(self.op, self.h, &d, &r);
            stats.cg_iterations += info.iterations;
            stats.direct_solves += info.used_direct as usize;
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..=self.cfg.max_halvings {
                let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, b)| a - alpha * b).collect();
                let (rt, nt) = self.residual(&trial, uk);
                if nt < rnorm {
                    u = trial;
                    r = rt;
                    rnorm = nt;
                    accepted = true;
                    break;
                }
                alpha *= self.cfg.backtrack_factor;
            }
            if !accepted {
                return None;
            }
        }
        stats.newton_iterations = self.cfg.max_newton_iters;
        stats.residual = rnorm;
        (rnorm <= self.target(&u, uk)).then_some(u)
    }

    /// Picard iteration `u <- (I + h A diag(F(u)/u))^{-1} u_k`.
    fn fixed_point(&self, uk: &[f64], start: Vec<f64>, stats: &mut StepStats) -> Option<Vec<f64>> {
        let eps = self.cfg.jacobian_regularization;
        let mut u: Vec<f64> = start.into_iter().map(|v| v.max(0.0)).collect();
        for _ in 0..self.cfg.max_fixed_point_iters {
            let c: Vec<f64> = u.iter().map(|&v| self.nl.f(v.max(eps)) / v.max(eps)).collect();
            u = solve_shifted(self.op, self.h, &c, uk).0;
            let (_, rnorm) = self.residual(&u, uk);
            stats.residual = rnorm;
            if rnorm <= self.target(&u, uk) {
                return Some(u);
            }
        }
        None
    }

    fn step(&self, index: usize, uk: &[f64]) -> Result<(Vec<f64>, StepStats)> {
        let mut stats = StepStats::default();
        let mut u = match self.newton(uk, &mut stats) {
            Some(u) => u,
            None => {
                stats.fixed_point_fallback = true;
                let start = uk.to_vec();
                self.fixed_point(uk, start, &mut stats).ok_or_else(|| Error::Step {
                    step: index,
                    reason: "Newton and fixed-point iterations did not converge".into(),
                    residual: stats.residual,
                })?
            }
        };
        for v in u.iter_mut() {
            if *v < -UNDERSHOOT_TOL {
                return Err(Error::Step {
                    step: index,
                    reason: format!("negative undershoot {v:.3e}"),
                    residual: stats.residual,
                });
            }
            if *v < 0.0 {
                stats.clamped = stats.clamped.max(-*v);
                *v = 0.0;
            }
        }
        Ok((u, stats))
    }
}

fn context<'a>(op: &'a DiscreteOperator, nl: &'a Nonlinearity, h: f64, cfg: &'a StepperConfig) -> StepContext<'a> {
    let abs_row_sum = op
        .matrix()
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    StepContext {
        op,
        nl,
        h,
        cfg,
        abs_row_sum,
    }
}

fn check_state(op: &DiscreteOperator, u: &[f64]) -> Result<()> {
    if u.len() != op.len() {
        return Err(Error::Precondition(format!(
            "state has {} entries but the grid has {}",
            u.len(),
            op.len()
        )));
    }
    if let Some(v) = u.iter().find(|v| !(v.is_finite() && **v >= -UNDERSHOOT_TOL)) {
        return Err(Error::Precondition(format!("data must be finite and nonnegative, found {v}")));
    }
    Ok(())
}

/// One implicit Euler step of size `h`.
pub fn implicit_step(
    op: &DiscreteOperator,
    nl: &Nonlinearity,
    uk: &[f64],
    h: f64,
    cfg: &StepperConfig,
) -> Result<Vec<f64>> {
    implicit_step_with_stats(op, nl, uk, h, cfg).map(|(u, _)| u)
}

pub fn implicit_step_with_stats(
    op: &DiscreteOperator,
    nl: &Nonlinearity,
    uk: &[f64],
    h: f64,
    cfg: &StepperConfig,
) -> Result<(Vec<f64>, StepStats)> {
    cfg.validate()?;
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Config(format!("step size must be positive, got {h}")));
    }
    check_state(op, uk)?;
    context(op, nl, h, cfg).step(0, uk)
}

/// Step index nearest to `t` on the grid of spacing `dt`.
pub fn snap(t: f64, dt: f64) -> usize {
    (t / dt).round() as usize
}

/// Sample the implicit Euler flow with uniform step `cfg.dt` at `times`.
///
/// Times are snapped to the step grid; samples that snap to the same step
/// are merged.
pub fn evolve(
    op: &DiscreteOperator,
    nl: &Nonlinearity,
    u0: &[f64],
    times: &[f64],
    cfg: &StepperConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    check_state(op, u0)?;
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("output times must be nonnegative and increasing".into()));
    }
    let dt = cfg.dt;
    let mut steps: Vec<usize> = times.iter().map(|&t| snap(t, dt)).collect();
    steps.dedup();
    let ctx = context(op, nl, dt, cfg);
    let mut u: Vec<f64> = u0.iter().map(|v| v.max(0.0)).collect();
    let mut k = 0;
    let mut states = Vec::with_capacity(steps.len());
    let mut stats = Vec::new();
    for &target in &steps {
        while k < target {
            let (next, st) = ctx.step(k + 1, &u)?;
            u = next;
            stats.push(st);
            k += 1;
        }
        states.push(u.clone());
    }
    Ok(Trajectory {
        times: steps.iter().map(|&s| s as f64 * dt).collect(),
        steps,
        states,
        stats,
        provenance: Provenance {
            domain: op.domain().spec().clone(),
            operator: op.family().clone(),
            nonlinearity: nl.kind().clone(),
            initial: "custom".into(),
            dt,
        },
    })
}

/// Final states on three nested uniform partitions of `[0, T]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub steps: [usize; 3],
    /// `||u_n - u_2n||_{L1}` and `||u_2n - u_4n||_{L1}`.
    pub differences: [f64; 2],
    pub ratio: f64,
    /// `log2(ratio)`.
    pub order: f64,
    pub monotone: bool,
    /// Set when `n` is too small for the ratio to mean anything.
    pub pre_asymptotic: bool,
}

pub fn crandall_liggett_refine(
    op: &DiscreteOperator,
    nl: &Nonlinearity,
    u0: &[f64],
    t_final: f64,
    n: usize,
    cfg: &StepperConfig,
) -> Result<RefinementReport> {
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(Error::Config(format!("final time must be positive, got {t_final}")));
    }
    if n == 0 {
        return Err(Error::Config("partition needs at least one step".into()));
    }
    let steps = [n, 2 * n, 4 * n];
    let mut finals = Vec::with_capacity(3);
    for &m in &steps {
        let c = StepperConfig {
            dt: t_final / m as f64,
            ..cfg.clone()
        };
        let traj = evolve(op, nl, u0, &[t_final], &c)?;
        finals.push(traj.states.into_iter().next().unwrap_or_default());
    }
    let domain = op.domain();
    let diff = |a: &[f64], b: &[f64]| {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        domain.l1_norm(&d)
    };
    let differences = [diff(&finals[0], &finals[1]), diff(&finals[1], &finals[2])];
    let ratio = differences[0] / differences[1];
    Ok(RefinementReport {
        steps,
        differences,
        ratio,
        order: ratio.log2(),
        monotone: differences[1] <= differences[0],
        pre_asymptotic: n < 4,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{build_laplacian, build_spectral_power, Domain};
    use nalgebra::{DMatrix, DVector};

    fn bump(d: &Domain) -> Vec<f64> {
        d.points()
            .iter()
            .map(|p| {
                let x = 2.0 * p[0] - 1.0;
                if x.abs() < 0.5 {
                    (1.0 / (1.0 - 4.0 * x * x)).mul_add(-1.0, 1.0).exp()
                } else {
                    0.0
                }
            })
            .collect()
    }

    #[test]
    fn linear_step_matches_direct_solve() {
        let d = Domain::interval(1.0, 64).unwrap();
        let op = build_spectral_power(&d, 0.5).unwrap();
        let u0 = bump(&d);
        let h = 0.01;
        let u = implicit_step(&op, &Nonlinearity::linear(), &u0, h, &StepperConfig::default()).unwrap();
        let m = DMatrix::identity(64, 64) + op.matrix() * h;
        let exact = m.lu().solve(&DVector::from_column_slice(&u0)).unwrap();
        for (a, b) in u.iter().zip(exact.iter()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let d = Domain::interval(1.0, 16).unwrap();
        let op = build_laplacian(&d).unwrap();
        let nl = Nonlinearity::power(2.0).unwrap();
        let u = implicit_step(&op, &nl, &[0.0; 16], 0.1, &StepperConfig::default()).unwrap();
        assert!(u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn porous_medium_step_converges_fast() {
        let d = Domain::interval(1.0, 128).unwrap();
        let op = build_spectral_power(&d, 0.5).unwrap();
        let nl = Nonlinearity::power(2.0).unwrap();
        let u0 = bump(&d);
        let cfg = StepperConfig::default();
        let (u, st) = implicit_step_with_stats(&op, &nl, &u0, 1e-3, &cfg).unwrap();
        assert!(st.newton_iterations <= 15, "{st:?}");
        assert!(!st.fixed_point_fallback);
        // Recompute the residual independently.
        let fu: Vec<f64> = u.iter().map(|v| v * v).collect();
        let afu = op.matrix() * DVector::from_column_slice(&fu);
        let res = (0..128).map(|i| (u[i] + 1e-3 * afu[i] - u0[i]).abs()).fold(0.0, f64::max);
        assert!(res < 1e-11, "{res}");
    }

    #[test]
    fn negative_data_is_rejected() {
        let d = Domain::interval(1.0, 8).unwrap();
        let op = build_laplacian(&d).unwrap();
        let mut u = vec![0.1; 8];
        u[3] = -1e-3;
        let r = implicit_step(&op, &Nonlinearity::linear(), &u, 0.1, &StepperConfig::default());
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn evolve_snaps_and_merges_times() {
        let d = Domain::interval(1.0, 16).unwrap();
        let op = build_laplacian(&d).unwrap();
        let cfg = StepperConfig::with_dt(0.1);
        let tr = evolve(&op, &Nonlinearity::linear(), &bump(&d), &[0.0, 0.04, 0.06, 0.31], &cfg).unwrap();
        assert_eq!(tr.steps, vec![0, 1, 3]);
        assert_eq!(tr.stats.len(), 3);
        assert!((tr.times[2] - 0.3).abs() < 1e-15);
        assert_eq!(tr.states[0], bump(&d));
    }

    #[test]
    fn refinement_of_linear_flow_is_first_order() {
        let d = Domain::interval(1.0, 32).unwrap();
        let op = build_laplacian(&d).unwrap();
        let r = crandall_liggett_refine(&op, &Nonlinearity::linear(), &bump(&d), 0.1, 16, &StepperConfig::default())
            .unwrap();
        assert!(r.monotone && !r.pre_asymptotic);
        assert!((r.order - 1.0).abs() < 0.15, "{r:?}");
        let tiny = crandall_liggett_refine(&op, &Nonlinearity::linear(), &bump(&d), 0.1, 1, &StepperConfig::default())
            .unwrap();
        assert!(tiny.pre_asymptotic);
    }
}
