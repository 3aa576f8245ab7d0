use super::{make_initial, CheckKind, ExperimentConfig, SweepSummary};
use crate::error::{Error, Result};
use crate::estimates::{
    check_absolute_bounds, check_f_integrability, check_monotonicity, check_pointwise_green, check_smoothing,
    check_weak_dual_residual, check_weighted_l1, compute_constants, log_subset, sup, EstimateConstants,
    SmoothingMode,
};
use crate::nonlinearity::Nonlinearity;
use crate::operators::{build, check_kernel_bounds, DiscreteOperator, Domain, Hypothesis, KernelBoundReport};
use crate::report::{mark_converged, CheckReport, MarginTracker};
use crate::stepper::{evolve, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// Samples kept in a manifest's time series.
const SERIES_POINTS: usize = 256;

/// Sup and weighted-L1 norms on a log-spaced subset of the samples.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub t: Vec<f64>,
    pub sup: Vec<f64>,
    pub l1_phi: Vec<f64>,
}

impl Series {
    fn from_trajectory(traj: &Trajectory, op: &DiscreteOperator) -> Self {
        let mut idx = vec![0];
        idx.extend(log_subset(&traj.times, SERIES_POINTS - 1));
        idx.dedup();
        let phi = op.boundary_weight();
        Series {
            t: idx.iter().map(|&k| traj.times[k]).collect(),
            sup: idx.iter().map(|&k| sup(&traj.states[k])).collect(),
            l1_phi: idx.iter().map(|&k| phi.l1(op.domain(), &traj.states[k])).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub key: String,
    pub config: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<EstimateConstants>,
    pub checks: Vec<CheckReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kernels: Vec<KernelBoundReport>,
    #[serde(default)]
    pub series: Series,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunRecord {
    pub fn pass(&self) -> bool {
        self.error.is_none() && self.checks.iter().all(|c| c.pass)
    }

    pub(crate) fn failed(key: String, config: ExperimentConfig, err: &Error) -> Self {
        RunRecord {
            key,
            config,
            constants: None,
            checks: Vec::new(),
            kernels: Vec::new(),
            series: Series::default(),
            error: Some(err.to_string()),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub runs: Vec<RunRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<SweepSummary>,
}

impl Manifest {
    pub fn pass(&self) -> bool {
        self.runs.iter().all(RunRecord::pass)
    }
}

pub struct RunOutput {
    pub trajectory: Trajectory,
    pub reports: Vec<CheckReport>,
    pub constants: Option<EstimateConstants>,
    pub kernels: Vec<KernelBoundReport>,
    pub record: RunRecord,
}

fn with_context(name: &str, err: Error) -> Error {
    let tag = |m: String| format!("run '{name}': {m}");
    match err {
        Error::Domain(m) => Error::Domain(tag(m)),
        Error::Config(m) => Error::Config(tag(m)),
        Error::Unsupported(m) => Error::Unsupported(tag(m)),
        Error::Construction(m) => Error::Construction(tag(m)),
        Error::Precondition(m) => Error::Precondition(tag(m)),
        Error::Step { step, reason, residual } => Error::Step {
            step,
            reason: tag(reason),
            residual,
        },
        other => other,
    }
}

/// Build the operator, evolve, run the requested checks and write the
/// artifacts when `cfg.output` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    run_experiment_with_halving(cfg, 0)
}

/// As [`run_experiment`], rerunning at `dt/2, ..., dt/2^levels` to fill in
/// the `converged` flags.
pub fn run_experiment_with_halving(cfg: &ExperimentConfig, levels: usize) -> Result<RunOutput> {
    cfg.validate().map_err(|e| with_context(&cfg.name, e))?;
    let domain = Domain::new(cfg.domain.clone())?;
    let op = build(&domain, &cfg.operator).map_err(|e| with_context(&cfg.name, e))?;
    let out = run_ladder(cfg, &op, levels)?;
    if let Some(dir) = &cfg.output {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_trajectory_csv(&dir.join("trajectory.csv"), &out.trajectory, &domain)?;
        let manifest = Manifest {
            runs: vec![out.record.clone()],
            summary: None,
        };
        write_manifest(&dir.join("manifest.json"), &manifest)?;
    }
    Ok(out)
}

pub(crate) fn run_ladder(cfg: &ExperimentConfig, op: &DiscreteOperator, levels: usize) -> Result<RunOutput> {
    let mut out = run_with_operator(cfg, op)?;
    let mut fine_cfg = cfg.clone();
    for level in 1..=levels {
        fine_cfg.stepper.dt = cfg.stepper.dt / 2f64.powi(level as i32);
        let fine = run_with_operator(&fine_cfg, op)?;
        mark_converged(&mut out.reports, &fine.reports);
        if level == 1 {
            for r in out.reports.iter_mut().filter(|r| r.check == "weak_dual_residual") {
                let fine_res = fine
                    .reports
                    .iter()
                    .find(|f| f.check == r.check)
                    .and_then(|f| f.details.get("residual").copied());
                if let (Some(c), Some(f)) = (r.details.get("residual").copied(), fine_res) {
                    if f > 0.0 {
                        r.details.insert("halving_factor".into(), c / f);
                    }
                }
            }
        }
    }
    out.record.checks = out.reports.clone();
    Ok(out)
}

fn window(traj: &Trajectory, t_min: f64) -> Trajectory {
    if t_min <= 0.0 {
        return traj.clone();
    }
    let keep: Vec<usize> = (0..traj.len()).filter(|&k| traj.times[k] >= t_min - 1e-12).collect();
    Trajectory {
        times: keep.iter().map(|&k| traj.times[k]).collect(),
        steps: keep.iter().map(|&k| traj.steps[k]).collect(),
        states: keep.iter().map(|&k| traj.states[k].clone()).collect(),
        stats: traj.stats.clone(),
        provenance: traj.provenance.clone(),
    }
}

fn not_applicable(kind: CheckKind) -> CheckReport {
    let name = serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    let mut t = MarginTracker::new(&name, 0.0);
    t.skip();
    t.finish().note("not applicable: needs a degenerate nonlinearity (m0 > 1)")
}

fn kernel_report(r: &KernelBoundReport) -> CheckReport {
    let name = match r.hypothesis {
        Hypothesis::K1 => "kernel_bounds_k1",
        Hypothesis::K2 => "kernel_bounds_k2",
    };
    let mut t = MarginTracker::new(name, 0.0);
    t.record(if r.pass { 0.0 } else { -1.0 }, Default::default);
    let mut out = t.finish().detail("c1", r.c1).detail("exponent", r.exponent).detail("pairs", r.pairs as f64);
    if let Some(c0) = r.c0 {
        out = out.detail("c0", c0);
    }
    if r.bounded_kernel_fallback {
        out = out.note("N <= 2s: bounded-kernel fit");
    }
    out
}

/// Evolve and check with a prebuilt operator. Writes nothing.
pub fn run_with_operator(cfg: &ExperimentConfig, op: &DiscreteOperator) -> Result<RunOutput> {
    let ctx = |e| with_context(&cfg.name, e);
    cfg.validate().map_err(ctx)?;
    let nl = Nonlinearity::new(cfg.nonlinearity.clone()).map_err(ctx)?;
    let u0 = make_initial(op.domain(), &cfg.initial).map_err(ctx)?;
    let times = cfg.time.times(cfg.stepper.dt);
    let mut traj = evolve(op, &nl, &u0, &times, &cfg.stepper).map_err(ctx)?;
    traj.provenance.initial = cfg.initial.label();
    let degenerate = nl.m0() > 1.0;
    let constants = if degenerate {
        Some(compute_constants(op, &nl, Some(&traj)).map_err(ctx)?)
    } else {
        None
    };
    let weight = op.boundary_weight();
    let windowed = window(&traj, cfg.checks.t_min);
    let mut reports = Vec::new();
    let mut kernels = Vec::new();
    for &kind in &cfg.checks.list {
        if !kind.needs_degenerate() {
            reports.push(run_linear_check(kind, cfg, op, &nl, &traj, &windowed, &mut kernels)?);
            continue;
        }
        let Some(c) = constants.as_ref() else {
            reports.push(not_applicable(kind));
            continue;
        };
        let r = match kind {
            CheckKind::Monotonicity => check_monotonicity(&windowed, &nl),
            CheckKind::PointwiseGreen => check_pointwise_green(&windowed, op, &nl),
            CheckKind::AbsoluteBounds => check_absolute_bounds(&traj, &nl, c),
            CheckKind::SmoothingInstantaneous => check_smoothing(&traj, &nl, &weight, c, SmoothingMode::Instantaneous),
            CheckKind::SmoothingSmall => check_smoothing(&traj, &nl, &weight, c, SmoothingMode::Small),
            CheckKind::SmoothingLarge => check_smoothing(&traj, &nl, &weight, c, SmoothingMode::Large),
            CheckKind::SmoothingBackward => check_smoothing(&traj, &nl, &weight, c, SmoothingMode::Backward),
            CheckKind::FIntegrability => check_f_integrability(&traj, &nl, &weight, c),
            CheckKind::WeightedL1 => {
                let v0: Vec<f64> = u0.iter().map(|v| v * cfg.checks.pair_factor).collect();
                let tv = evolve(op, &nl, &v0, &times, &cfg.stepper).map_err(ctx)?;
                check_weighted_l1(&traj, &tv, op, &weight, c, &nl)
            }
            CheckKind::WeakDual | CheckKind::KernelBounds => unreachable!("handled above"),
        };
        reports.push(r.map_err(ctx)?);
    }
    let record = RunRecord {
        key: cfg.name.clone(),
        config: cfg.clone(),
        constants: constants.clone(),
        checks: reports.clone(),
        kernels: kernels.clone(),
        series: Series::from_trajectory(&traj, op),
        error: None,
    };
    Ok(RunOutput {
        trajectory: traj,
        reports,
        constants,
        kernels,
        record,
    })
}

/// Checks that make sense for any nonlinearity.
fn run_linear_check(
    kind: CheckKind,
    cfg: &ExperimentConfig,
    op: &DiscreteOperator,
    nl: &Nonlinearity,
    traj: &Trajectory,
    windowed: &Trajectory,
    kernels: &mut Vec<KernelBoundReport>,
) -> Result<CheckReport> {
    let ctx = |e| with_context(&cfg.name, e);
    match kind {
        CheckKind::KernelBounds => {
            let opts = Default::default();
            let k1 = check_kernel_bounds(op, Hypothesis::K1, &opts).map_err(ctx)?;
            let k2 = check_kernel_bounds(op, Hypothesis::K2, &opts).map_err(ctx)?;
            let reports = [kernel_report(&k1), kernel_report(&k2)];
            kernels.extend([k1, k2]);
            let mut r = crate::report::combine("kernel_bounds", &reports);
            for k in &reports {
                for (key, v) in &k.details {
                    r.details.insert(format!("{}.{key}", k.check), *v);
                }
            }
            Ok(r)
        }
        CheckKind::WeakDual => {
            let (_, phi1) = op.first_eigenpair();
            let mut psis = vec![phi1];
            for &seed in &cfg.checks.test_function_seeds {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                psis.push((0..op.len()).map(|_| rng.gen::<f64>()).collect());
            }
            let dense = windowed.steps.windows(2).all(|w| w[1] == w[0] + 1);
            let r = if dense {
                check_weak_dual_residual(windowed, op, nl, &psis, cfg.checks.quadrature)
            } else {
                let dt = cfg.stepper.dt;
                let start = crate::stepper::snap(cfg.checks.t_min, dt);
                let end = crate::stepper::snap(cfg.time.t_end, dt);
                let times: Vec<f64> = (0..=end).map(|k| k as f64 * dt).collect();
                let full = evolve(op, nl, &traj.states[0], &times, &cfg.stepper).map_err(ctx)?;
                let keep = if start == 0 { full } else { window(&full, start as f64 * dt) };
                check_weak_dual_residual(&keep, op, nl, &psis, cfg.checks.quadrature)
            };
            r.map_err(ctx)
        }
        _ => Err(Error::Unsupported(format!("{kind:?} is not defined for linear F"))),
    }
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory, domain: &Domain) -> Result<()> {
    let two_d = domain.dim() == 2;
    let mut out = String::from(if two_d { "t,i,x,y,u\n" } else { "t,i,x,u\n" });
    let points = domain.points();
    for (t, u) in traj.times.iter().zip(&traj.states) {
        for (i, v) in u.iter().enumerate() {
            let p = points[i];
            if two_d {
                let _ = writeln!(out, "{t},{i},{},{},{v}", p[0], p[1]);
            } else {
                let _ = writeln!(out, "{t},{i},{},{v}", p[0]);
            }
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Error::Serialization(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))
}

/// Least-squares slope of `ln sup` against `ln t` over `[t_lo, t_hi]`;
/// `None` with fewer than three usable points.
pub fn fit_decay_slope(series: &Series, t_lo: f64, t_hi: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = series
        .t
        .iter()
        .zip(&series.sup)
        .filter(|(t, u)| **t >= t_lo && **t <= t_hi && **t > 0.0 && **u > 0.0)
        .map(|(t, u)| (t.ln(), u.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let (sxy, sxx) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_power_law() {
        let t: Vec<f64> = (1..=20).map(|k| k as f64 * 0.5).collect();
        let series = Series {
            sup: t.iter().map(|x| 3.0 * x.powf(-0.5)).collect(),
            l1_phi: vec![0.0; t.len()],
            t,
        };
        assert!((fit_decay_slope(&series, 1.0, 10.0).unwrap() + 0.5).abs() < 1e-12);
        assert!(fit_decay_slope(&series, 100.0, 200.0).is_none());
    }

    #[test]
    fn context_is_attached() {
        let e = with_context("std", Error::Config("bad".into()));
        assert!(e.to_string().contains("run 'std'"));
        assert!(e.is_config_or_io());
    }
}
