use clap::{Args, Parser, Subcommand};
use fracdiff::experiments::{
    emit_plots, read_manifest, run_experiment_with_halving, run_sweep, CheckKind, ExperimentConfig, Manifest,
    SweepSpec,
};
use fracdiff::{CheckReport, Error};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "fracdiff", version, about = "Nonlinear fractional diffusion solver and estimate checker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evolve the configured problem and write the trajectory; no checks.
    Solve(RunArgs),
    /// Evolve and run the configured checks.
    Verify(RunArgs),
    /// Certify the kernel bounds of the configured operator.
    Kernels(RunArgs),
    /// Run a parameter sweep.
    Sweep(RunArgs),
    /// Render SVG figures from a manifest.
    Plot(PlotArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the one in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
    /// Rerun at dt/2, ..., dt/2^k and report convergence.
    #[arg(long, default_value_t = 0)]
    dt_halving: usize,
    /// Comma-separated check names, replacing the configured list.
    #[arg(long, value_delimiter = ',')]
    checks: Option<Vec<String>>,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// Manifest written by `verify` or `sweep`.
    #[arg(long, visible_alias = "config")]
    manifest: PathBuf,
    /// Defaults to a `plots` directory next to the manifest.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

enum Outcome {
    Pass,
    ChecksFailed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = dispatch(cli.command);
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    ExitCode::from(exit_code(&result))
}

/// 0 when every check passed, 1 for check failures and numerical errors, 2
/// for configuration and I/O errors.
fn exit_code(result: &Result<Outcome, Error>) -> u8 {
    match result {
        Ok(Outcome::Pass) => 0,
        Ok(Outcome::ChecksFailed) => 1,
        Err(e) if e.is_config_or_io() => 2,
        Err(_) => 1,
    }
}

fn dispatch(cmd: Command) -> Result<Outcome, Error> {
    match cmd {
        Command::Solve(a) => {
            let mut cfg = load_config(&a)?;
            cfg.checks.list.clear();
            let out = run_experiment_with_halving(&cfg, 0)?;
            if !a.quiet {
                let last = out.trajectory.states.last().map(|u| sup(u)).unwrap_or(0.0);
                println!(
                    "{}: {} samples up to t = {}, final sup {last:.6e}",
                    cfg.name,
                    out.trajectory.len(),
                    out.trajectory.times.last().copied().unwrap_or(0.0)
                );
                print_written(cfg.output.as_deref());
            }
            Ok(Outcome::Pass)
        }
        Command::Verify(a) => {
            let cfg = load_config(&a)?;
            let out = run_experiment_with_halving(&cfg, a.dt_halving)?;
            if !a.quiet {
                println!("{}", cfg.name);
                print_checks(&out.reports);
                print_written(cfg.output.as_deref());
            }
            Ok(verdict(&out.reports))
        }
        Command::Kernels(a) => {
            let mut cfg = load_config(&a)?;
            cfg.checks.list = vec![CheckKind::KernelBounds];
            let out = run_experiment_with_halving(&cfg, 0)?;
            let json = serde_json::to_string_pretty(&out.kernels).map_err(|e| Error::Serialization(e.to_string()))?;
            if let Some(dir) = &cfg.output {
                let path = dir.join("kernels.json");
                std::fs::write(&path, &json).map_err(|e| Error::Io {
                    path: path.display().to_string(),
                    source: e,
                })?;
            }
            if !a.quiet {
                // A closed pipe on stdout is not an error here.
                let _ = writeln!(std::io::stdout().lock(), "{json}");
            }
            Ok(verdict(&out.reports))
        }
        Command::Sweep(a) => {
            let mut spec = SweepSpec::load(&a.config)?;
            if let Some(out) = &a.out {
                spec.output = Some(out.clone());
            }
            if let Some(list) = &a.checks {
                spec.base.checks.list = parse_checks(list)?;
            }
            spec.dt_halving = a.dt_halving;
            let m = run_sweep(&spec)?;
            if !a.quiet {
                print_sweep(&m);
                print_written(spec.output.as_deref());
            }
            Ok(if m.pass() { Outcome::Pass } else { Outcome::ChecksFailed })
        }
        Command::Plot(a) => {
            let m = read_manifest(&a.manifest)?;
            let dir = a.out.clone().unwrap_or_else(|| {
                a.manifest.parent().map(|p| p.join("plots")).unwrap_or_else(|| PathBuf::from("plots"))
            });
            let out = emit_plots(&m, &dir)?;
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            if !a.quiet {
                for f in &out.files {
                    println!("wrote {}", f.display());
                }
            }
            Ok(Outcome::Pass)
        }
    }
}

fn load_config(a: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(out) = &a.out {
        cfg.output = Some(out.clone());
    }
    if let Some(list) = &a.checks {
        cfg.checks.list = parse_checks(list)?;
    }
    Ok(cfg)
}

fn parse_checks(list: &[String]) -> Result<Vec<CheckKind>, Error> {
    list.iter().filter(|s| !s.trim().is_empty()).map(|s| CheckKind::parse(s)).collect()
}

fn verdict(reports: &[CheckReport]) -> Outcome {
    if reports.iter().all(|r| r.pass) {
        Outcome::Pass
    } else {
        Outcome::ChecksFailed
    }
}

fn sup(u: &[f64]) -> f64 {
    u.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

fn print_checks(reports: &[CheckReport]) {
    for r in reports {
        let conv = match r.converged {
            Some(true) => " converged",
            Some(false) => " not converged",
            None => "",
        };
        println!(
            "  {:<26} {}  margin {:+.3e}  samples {}{conv}",
            r.check,
            if r.pass { "PASS" } else { "FAIL" },
            r.worst_margin,
            r.samples
        );
    }
}

fn print_sweep(m: &Manifest) {
    for r in &m.runs {
        match &r.error {
            Some(e) => println!("{}  ERROR  {e}", r.key),
            None => println!("{}  {}", r.key, if r.pass() { "PASS" } else { "FAIL" }),
        }
    }
    if let Some(s) = &m.summary {
        println!("{} runs, {} failed to run", s.runs, s.failed_runs);
        for (check, [pass, total]) in &s.check_passes {
            println!("  {check:<26} {pass}/{total}");
        }
    }
}

fn print_written(dir: Option<&Path>) {
    if let Some(d) = dir {
        println!("artifacts in {}", d.display());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(pass: bool) -> CheckReport {
        serde_json::from_value(serde_json::json!({
            "check": "monotonicity",
            "pass": pass,
            "worst_margin": if pass { 0.0 } else { -1.0 },
            "location": {},
            "tolerance": 1e-6,
            "samples": 1
        }))
        .unwrap()
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Ok(verdict(&[report(true), report(true)]))), 0);
        assert_eq!(exit_code(&Ok(verdict(&[report(true), report(false)]))), 1);
        assert_eq!(exit_code(&Err(Error::Config("x".into()))), 2);
        assert_eq!(exit_code(&Err(Error::Unsupported("x".into()))), 2);
        assert_eq!(exit_code(&Err(Error::Precondition("x".into()))), 1);
        assert_eq!(
            exit_code(&Err(Error::Step {
                step: 3,
                reason: "x".into(),
                residual: 1.0
            })),
            1
        );
    }

    #[test]
    fn check_lists_parse() {
        let list = parse_checks(&["monotonicity".into(), " weak_dual ".into(), "".into()]).unwrap();
        assert_eq!(list, vec![CheckKind::Monotonicity, CheckKind::WeakDual]);
        assert!(parse_checks(&["bogus".into()]).is_err());
    }
}
