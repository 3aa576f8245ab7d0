use super::run::{run_ladder, write_manifest, write_trajectory_csv, RunRecord};
use super::{fit_decay_slope, ExperimentConfig, Manifest};
use crate::error::{Error, Result};
use crate::nonlinearity::Nonlinearity;
use crate::operators::{build, DiscreteOperator, Domain};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const MAX_SWEEP_RUNS: usize = 256;

/// One sweep axis: a dotted path into the experiment config and the values
/// it takes, e.g. `operator.s = [0.25, 0.4]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub path: String,
    pub values: Vec<Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: ExperimentConfig,
    #[serde(default)]
    pub axes: Vec<Axis>,
    /// Worker threads; all cores when unset.
    #[serde(default)]
    pub parallelism: Option<usize>,
    /// Halving levels run for every point of the sweep.
    #[serde(default)]
    pub dt_halving: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub key: String,
    pub pass: bool,
    /// Fitted slope of `ln ||u||_inf` over `[K0, 10 K0]`, when sampled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay_slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_slope: Option<f64>,
    /// Largest `||u(t)|| t^{(N+gamma) theta} / ||u0||^{2 s theta}` seen by the
    /// small- and large-time smoothing checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothing_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_sup: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub runs: usize,
    pub failed_runs: usize,
    /// Check name to `[passed, total]`.
    pub check_passes: BTreeMap<String, [usize; 2]>,
    pub per_run: Vec<RunSummary>,
}

impl SweepSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: SweepSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.expand()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn size(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    /// The cross product as `(key, config)` pairs, validated.
    pub fn expand(&self) -> Result<Vec<(String, ExperimentConfig)>> {
        if self.axes.iter().any(|a| a.values.is_empty()) {
            return Err(Error::Config("sweep axes must have at least one value".into()));
        }
        let size = self.size();
        if size > MAX_SWEEP_RUNS {
            return Err(Error::Config(format!("sweep has {size} runs, limit is {MAX_SWEEP_RUNS}")));
        }
        let base = serde_json::to_value(&self.base).map_err(|e| Error::Serialization(e.to_string()))?;
        let mut out = Vec::with_capacity(size);
        for flat in 0..size {
            let mut value = base.clone();
            let mut labels = Vec::new();
            let mut rem = flat;
            for axis in self.axes.iter().rev() {
                let v = &axis.values[rem % axis.values.len()];
                rem /= axis.values.len();
                set_path(&mut value, &axis.path, v.clone())?;
                labels.push(format!("{}={}", axis.path, v));
            }
            labels.reverse();
            let key = if labels.is_empty() {
                self.base.name.clone()
            } else {
                format!("{}[{}]", self.base.name, labels.join(","))
            };
            let mut cfg: ExperimentConfig =
                serde_json::from_value(value).map_err(|e| Error::Config(format!("{key}: {e}")))?;
            cfg.name = key.clone();
            cfg.output = None;
            cfg.validate()?;
            out.push((key, cfg));
        }
        Ok(out)
    }
}

fn set_path(root: &mut Value, path: &str, v: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (k, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("sweep path '{path}' does not name a config field")))?;
        if k + 1 == parts.len() {
            if !obj.contains_key(*part) {
                return Err(Error::Config(format!("sweep path '{path}' does not name a config field")));
            }
            obj.insert(part.to_string(), v);
            return Ok(());
        }
        cur = obj
            .get_mut(*part)
            .ok_or_else(|| Error::Config(format!("sweep path '{path}' does not name a config field")))?;
    }
    Ok(())
}

fn operator_key(cfg: &ExperimentConfig) -> String {
    serde_json::to_string(&(&cfg.domain, &cfg.operator)).unwrap_or_default()
}

/// Run every point of the sweep in parallel and merge the records in key
/// order. Failed runs are recorded and do not stop the sweep.
pub fn run_sweep(spec: &SweepSpec) -> Result<Manifest> {
    let points = spec.expand()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.parallelism.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut unique: BTreeMap<String, &ExperimentConfig> = BTreeMap::new();
    for (_, cfg) in &points {
        unique.entry(operator_key(cfg)).or_insert(cfg);
    }
    let operators: BTreeMap<String, std::result::Result<Arc<DiscreteOperator>, String>> = pool.install(|| {
        unique
            .par_iter()
            .map(|(k, cfg)| {
                let op = Domain::new(cfg.domain.clone())
                    .and_then(|d| build(&d, &cfg.operator))
                    .map(Arc::new)
                    .map_err(|e| e.to_string());
                (k.clone(), op)
            })
            .collect()
    });
    let mut records: Vec<(RunRecord, Option<crate::stepper::Trajectory>)> = pool.install(|| {
        points
            .par_iter()
            .map(|(key, cfg)| match &operators[&operator_key(cfg)] {
                Ok(op) => match run_ladder(cfg, op, spec.dt_halving) {
                    Ok(mut out) => {
                        out.record.key = key.clone();
                        (out.record, Some(out.trajectory))
                    }
                    Err(e) => (RunRecord::failed(key.clone(), cfg.clone(), &e), None),
                },
                Err(msg) => (
                    RunRecord::failed(key.clone(), cfg.clone(), &Error::Construction(msg.clone())),
                    None,
                ),
            })
            .collect()
    });
    records.sort_by(|a, b| a.0.key.cmp(&b.0.key));
    if let Some(dir) = &spec.output {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (rec, traj) in &records {
            if let Some(traj) = traj {
                let sub = dir.join(sanitize(&rec.key));
                std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
                let domain = Domain::new(rec.config.domain.clone())?;
                write_trajectory_csv(&sub.join("trajectory.csv"), traj, &domain)?;
            }
        }
    }
    let runs: Vec<RunRecord> = records.into_iter().map(|(r, _)| r).collect();
    let summary = summarize(&runs);
    let manifest = Manifest {
        runs,
        summary: Some(summary),
    };
    if let Some(dir) = &spec.output {
        write_manifest(&dir.join("manifest.json"), &manifest)?;
    }
    Ok(manifest)
}

/// Directory-safe version of a run key.
pub(crate) fn sanitize(key: &str) -> String {
    key.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

pub(crate) fn summarize(runs: &[RunRecord]) -> SweepSummary {
    let mut check_passes: BTreeMap<String, [usize; 2]> = BTreeMap::new();
    let mut per_run = Vec::new();
    for r in runs {
        for c in &r.checks {
            let e = check_passes.entry(c.check.clone()).or_insert([0, 0]);
            e[0] += c.pass as usize;
            e[1] += 1;
        }
        let m1 = Nonlinearity::new(r.config.nonlinearity.clone()).ok().map(|n| n.m1());
        let predicted_slope = m1.filter(|m| *m > 1.0).map(|m| -1.0 / (m - 1.0));
        let decay_slope = r
            .constants
            .as_ref()
            .and_then(|c| fit_decay_slope(&r.series, c.k0, 10.0 * c.k0));
        let smoothing_ratio = r
            .checks
            .iter()
            .filter(|c| c.check == "smoothing_small" || c.check == "smoothing_large")
            .filter_map(|c| c.details.get("max_ratio").copied())
            .reduce(f64::max);
        per_run.push(RunSummary {
            key: r.key.clone(),
            pass: r.pass(),
            decay_slope,
            predicted_slope,
            smoothing_ratio,
            theta: r.constants.as_ref().map(|c| c.theta),
            final_sup: r.series.sup.last().copied(),
        });
    }
    SweepSummary {
        runs: runs.len(),
        failed_runs: runs.iter().filter(|r| r.error.is_some()).count(),
        check_passes,
        per_run,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{CheckKind, ChecksConfig, InitialDatum, Spacing, TimeGrid};
    use crate::nonlinearity::NonlinearityKind;
    use crate::operators::{DomainSpec, OperatorFamily};

    fn base() -> ExperimentConfig {
        ExperimentConfig {
            name: "base".into(),
            domain: DomainSpec::Interval { length: 1.0, n: 24 },
            operator: OperatorFamily::SpectralPower { s: 0.5 },
            nonlinearity: NonlinearityKind::Power { m: 2.0 },
            initial: InitialDatum::Scaled {
                base: Box::new(InitialDatum::Bump {
                    center: vec![0.5],
                    width: 0.3,
                    height: 1.0,
                }),
                factor: 1.0,
            },
            time: TimeGrid {
                t_end: 0.5,
                spacing: Spacing::Uniform { count: 10 },
            },
            stepper: crate::stepper::StepperConfig::with_dt(0.01),
            checks: ChecksConfig {
                list: vec![CheckKind::AbsoluteBounds, CheckKind::SmoothingSmall],
                ..Default::default()
            },
            output: None,
        }
    }

    #[test]
    fn expansion_and_limits() {
        let mut spec = SweepSpec {
            base: base(),
            axes: vec![
                Axis {
                    path: "initial.factor".into(),
                    values: vec![1.0.into(), 10.0.into()],
                },
                Axis {
                    path: "operator.s".into(),
                    values: vec![0.25.into(), 0.4.into(), 0.5.into()],
                },
            ],
            parallelism: Some(2),
            dt_halving: 0,
            output: None,
        };
        let pts = spec.expand().unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[1].0, "base[initial.factor=1.0,operator.s=0.4]");
        spec.axes[0].path = "initial.nope".into();
        assert!(matches!(spec.expand(), Err(Error::Config(_))));
        spec.axes[0] = Axis {
            path: "initial.factor".into(),
            values: (0..100).map(|k| Value::from(k as f64)).collect(),
        };
        assert!(matches!(spec.expand(), Err(Error::Config(_))));
    }

    #[test]
    fn single_point_matches_run_experiment_and_merge_is_ordered() {
        let spec = SweepSpec {
            base: base(),
            axes: vec![],
            parallelism: Some(1),
            dt_halving: 0,
            output: None,
        };
        let m = run_sweep(&spec).unwrap();
        let direct = crate::experiments::run_experiment(&base()).unwrap();
        assert_eq!(m.runs.len(), 1);
        assert_eq!(m.runs[0], direct.record);

        let spec = SweepSpec {
            axes: vec![Axis {
                path: "initial.factor".into(),
                values: vec![100.0.into(), 1.0.into(), 10.0.into()],
            }],
            parallelism: Some(3),
            ..spec
        };
        let a = run_sweep(&spec).unwrap();
        let b = run_sweep(&SweepSpec {
            parallelism: Some(1),
            ..spec.clone()
        })
        .unwrap();
        assert_eq!(a, b);
        let keys: Vec<&str> = a.runs.iter().map(|r| r.key.as_str()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert_eq!(a.summary.as_ref().unwrap().check_passes["absolute_bounds"], [3, 3]);
    }

    #[test]
    fn failed_runs_are_recorded() {
        let spec = SweepSpec {
            base: base(),
            axes: vec![Axis {
                path: "stepper.max_newton_iters".into(),
                values: vec![1.into(), 50.into()],
            }],
            parallelism: Some(2),
            dt_halving: 0,
            output: None,
        };
        let m = run_sweep(&spec).unwrap();
        assert_eq!(m.runs.len(), 2);
        assert!(m.runs.iter().any(|r| r.error.is_none()));
    }
}
