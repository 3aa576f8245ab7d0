//! Config-driven runs: initial data, trajectories, checks, artifacts,
//! sweeps and plots.

mod plot;
mod run;
mod sweep;

pub use plot::{emit_plots, PlotOutput};
pub use run::{
    fit_decay_slope, read_manifest, run_experiment, run_experiment_with_halving, run_with_operator,
    write_manifest, write_trajectory_csv, Manifest, RunOutput, RunRecord, Series,
};
pub use sweep::{run_sweep, Axis, RunSummary, SweepSpec, SweepSummary, MAX_SWEEP_RUNS};

use crate::error::{Error, Result};
use crate::estimates::TimeQuadrature;
use crate::nonlinearity::{Nonlinearity, NonlinearityKind};
use crate::operators::{Domain, DomainSpec, OperatorFamily};
use crate::stepper::StepperConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialDatum {
    /// `height * exp(1 - 1/(1 - (r/width)^2))` for `r < width`, else 0.
    Bump { center: Vec<f64>, width: f64, height: f64 },
    /// `height` on the box `[lower, upper]`.
    Indicator {
        lower: Vec<f64>,
        upper: Vec<f64>,
        #[serde(default = "one")]
        height: f64,
    },
    /// Independent uniform values in `[0, amplitude]`.
    Random { seed: u64, amplitude: f64 },
    Scaled { base: Box<InitialDatum>, factor: f64 },
}

fn one() -> f64 {
    1.0
}

impl InitialDatum {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        let coords = |name: &str, v: &[f64]| {
            if v.len() == dim && v.iter().all(|x| x.is_finite()) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} needs {dim} finite coordinates, got {v:?}")))
            }
        };
        match self {
            InitialDatum::Bump { center, width, height } => {
                coords("bump center", center)?;
                nonneg("bump height", *height)?;
                if !(width.is_finite() && *width > 0.0) {
                    return Err(Error::Config(format!("bump width must be > 0, got {width}")));
                }
                Ok(())
            }
            InitialDatum::Indicator { lower, upper, height } => {
                coords("indicator lower corner", lower)?;
                coords("indicator upper corner", upper)?;
                nonneg("indicator height", *height)?;
                if lower.iter().zip(upper).any(|(a, b)| a > b) {
                    return Err(Error::Config("indicator lower corner exceeds upper corner".into()));
                }
                Ok(())
            }
            InitialDatum::Random { amplitude, .. } => nonneg("random amplitude", *amplitude),
            InitialDatum::Scaled { base, factor } => {
                nonneg("scale factor", *factor)?;
                base.validate(dim)
            }
        }
    }

    /// Short label for provenance records.
    pub fn label(&self) -> String {
        match self {
            InitialDatum::Bump { height, .. } => format!("bump(height={height})"),
            InitialDatum::Indicator { height, .. } => format!("indicator(height={height})"),
            InitialDatum::Random { seed, amplitude } => format!("random(seed={seed}, amplitude={amplitude})"),
            InitialDatum::Scaled { base, factor } => format!("{factor} x {}", base.label()),
        }
    }
}

/// Nonnegative grid function described by `datum`.
pub fn make_initial(domain: &Domain, datum: &InitialDatum) -> Result<Vec<f64>> {
    datum.validate(domain.dim())?;
    Ok(match datum {
        InitialDatum::Bump { center, width, height } => (0..domain.len())
            .map(|i| {
                let p = domain.point(i);
                let r2: f64 = center.iter().enumerate().map(|(k, c)| (p[k] - c).powi(2)).sum();
                let q = r2 / (width * width);
                if q < 1.0 {
                    height * (1.0 - 1.0 / (1.0 - q)).exp()
                } else {
                    0.0
                }
            })
            .collect(),
        InitialDatum::Indicator { lower, upper, height } => (0..domain.len())
            .map(|i| {
                let p = domain.point(i);
                let inside = (0..lower.len()).all(|k| p[k] >= lower[k] && p[k] <= upper[k]);
                if inside {
                    *height
                } else {
                    0.0
                }
            })
            .collect(),
        InitialDatum::Random { seed, amplitude } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            (0..domain.len()).map(|_| amplitude * rng.gen::<f64>()).collect()
        }
        InitialDatum::Scaled { base, factor } => make_initial(domain, base)?.into_iter().map(|v| v * factor).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Spacing {
    /// Every step of the scheme.
    EveryStep,
    Uniform { count: usize },
    /// `count` log-spaced times in `[t_min, t_end]`, plus `t = 0`.
    Log { count: usize, t_min: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_end: f64,
    pub spacing: Spacing,
}

impl TimeGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::Config(format!("t_end must be > 0, got {}", self.t_end)));
        }
        match self.spacing {
            Spacing::Uniform { count } | Spacing::Log { count, .. } if count < 2 => {
                Err(Error::Config("time grid needs at least 2 samples".into()))
            }
            Spacing::Log { t_min, .. } if !(t_min > 0.0 && t_min < self.t_end) => {
                Err(Error::Config(format!("log grid needs 0 < t_min < t_end, got {t_min}")))
            }
            _ => Ok(()),
        }
    }

    /// Output times including `t = 0`.
    pub fn times(&self, dt: f64) -> Vec<f64> {
        let mut out = vec![0.0];
        match self.spacing {
            Spacing::EveryStep => {
                let n = (self.t_end / dt).round() as usize;
                out.extend((1..=n).map(|k| k as f64 * dt));
            }
            Spacing::Uniform { count } => {
                out.extend((1..=count).map(|k| self.t_end * k as f64 / count as f64));
            }
            Spacing::Log { count, t_min } => {
                let (a, b) = (t_min.ln(), self.t_end.ln());
                out.extend((0..count).map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp()));
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Monotonicity,
    PointwiseGreen,
    AbsoluteBounds,
    SmoothingInstantaneous,
    SmoothingSmall,
    SmoothingLarge,
    SmoothingBackward,
    WeightedL1,
    WeakDual,
    FIntegrability,
    KernelBounds,
}

impl CheckKind {
    pub const ALL: [CheckKind; 11] = [
        CheckKind::Monotonicity,
        CheckKind::PointwiseGreen,
        CheckKind::AbsoluteBounds,
        CheckKind::SmoothingInstantaneous,
        CheckKind::SmoothingSmall,
        CheckKind::SmoothingLarge,
        CheckKind::SmoothingBackward,
        CheckKind::WeightedL1,
        CheckKind::WeakDual,
        CheckKind::FIntegrability,
        CheckKind::KernelBounds,
    ];

    pub fn parse(name: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(name.trim().to_string()))
            .map_err(|_| Error::Config(format!("unknown check '{name}'")))
    }

    /// Checks that need `m0 > 1`.
    pub fn needs_degenerate(self) -> bool {
        !matches!(self, CheckKind::WeakDual | CheckKind::KernelBounds)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChecksConfig {
    pub list: Vec<CheckKind>,
    /// Samples before this time are ignored by the monotonicity, pointwise
    /// Green and weak dual checks.
    pub t_min: f64,
    /// The weighted L1 check pairs `u0` with `pair_factor * u0`.
    pub pair_factor: f64,
    pub quadrature: TimeQuadrature,
    /// Seeds of the random test functions of the weak dual check.
    pub test_function_seeds: Vec<u64>,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        ChecksConfig {
            list: CheckKind::ALL.to_vec(),
            t_min: 0.0,
            pair_factor: 0.5,
            quadrature: TimeQuadrature::Trapezoid,
            test_function_seeds: vec![1, 2],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub domain: DomainSpec,
    pub operator: OperatorFamily,
    pub nonlinearity: NonlinearityKind,
    pub initial: InitialDatum,
    pub time: TimeGrid,
    #[serde(default)]
    pub stepper: StepperConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Validate every sub-config without building the operator.
    pub fn validate(&self) -> Result<()> {
        let domain = Domain::new(self.domain.clone())?;
        self.operator.validate()?;
        Nonlinearity::new(self.nonlinearity.clone())?;
        self.initial.validate(domain.dim())?;
        self.time.validate()?;
        self.stepper.validate()?;
        if !(self.checks.pair_factor >= 0.0 && self.checks.pair_factor <= 1.0) {
            return Err(Error::Config(format!(
                "pair_factor must lie in [0, 1], got {}",
                self.checks.pair_factor
            )));
        }
        if !(self.checks.t_min >= 0.0 && self.checks.t_min < self.time.t_end) {
            return Err(Error::Config(format!("checks.t_min must lie in [0, t_end), got {}", self.checks.t_min)));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval() -> Domain {
        Domain::interval(1.0, 64).unwrap()
    }

    fn bump(height: f64) -> InitialDatum {
        InitialDatum::Bump {
            center: vec![0.5],
            width: 0.25,
            height,
        }
    }

    #[test]
    fn zero_height_bump_is_zero() {
        assert!(make_initial(&interval(), &bump(0.0)).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scaled_copy_is_exact() {
        let d = interval();
        let base = make_initial(&d, &bump(1.5)).unwrap();
        let scaled = make_initial(
            &d,
            &InitialDatum::Scaled {
                base: Box::new(bump(1.5)),
                factor: 10.0,
            },
        )
        .unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            assert_eq!(10.0 * a, *b);
        }
    }

    #[test]
    fn random_is_deterministic_and_bounded() {
        let d = interval();
        let r = InitialDatum::Random { seed: 42, amplitude: 2.0 };
        let a = make_initial(&d, &r).unwrap();
        assert_eq!(a, make_initial(&d, &r).unwrap());
        assert!(a.iter().all(|&v| (0.0..=2.0).contains(&v)));
        let other = make_initial(&d, &InitialDatum::Random { seed: 43, amplitude: 2.0 }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn negative_amplitude_is_a_config_error() {
        let r = InitialDatum::Random { seed: 1, amplitude: -1.0 };
        assert!(matches!(make_initial(&interval(), &r), Err(Error::Config(_))));
        assert!(matches!(make_initial(&interval(), &bump(-1.0)), Err(Error::Config(_))));
    }

    #[test]
    fn indicator_on_rectangle() {
        let d = Domain::rectangle(1.0, 1.0, 9, 9).unwrap();
        let ind = InitialDatum::Indicator {
            lower: vec![0.25, 0.25],
            upper: vec![0.55, 0.75],
            height: 2.0,
        };
        let u = make_initial(&d, &ind).unwrap();
        // x in {0.3, 0.4, 0.5}, y in {0.3, ..., 0.7}.
        assert_eq!(u.iter().filter(|&&v| v == 2.0).count(), 15);
        assert!(make_initial(&d, &bump(1.0)).is_err());
    }

    #[test]
    fn time_grids() {
        let g = TimeGrid {
            t_end: 1.0,
            spacing: Spacing::EveryStep,
        };
        assert_eq!(g.times(0.25), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = TimeGrid {
            t_end: 1.0,
            spacing: Spacing::Log { count: 3, t_min: 0.01 },
        };
        let t = g.times(0.01);
        assert_eq!(t.len(), 4);
        assert!((t[2] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn check_names_parse() {
        assert_eq!(CheckKind::parse("weak_dual").unwrap(), CheckKind::WeakDual);
        assert!(CheckKind::parse("nope").is_err());
    }
}
