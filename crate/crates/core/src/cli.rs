//! `relcollapse <subcommand> --config FILE [--output-dir DIR] [--seed-override N] [--threads N]`
//!
//! Exit codes: 0 success, 2 invalid input, 3 integral not converged or
//! white-noise divergence, 4 internal/I-O failure.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use thiserror::Error;

use crate::config::{Command, ConfigError, LoadedConfig, RunConfig};
use crate::diagnostics::{
    default_probe_grid, energy_rate, energy_rate_scan, microcausality_residual, nr_sector_verdict,
    particle_creation_element, require_finite, DiagnosticsError, EnergyRateRequest,
    MicrocausalityRequest, NamedScan, NrVerdictKind, ScalarResult, Verdict,
};
use crate::evolve::{self, EvolveError, Generator};
use crate::kinematics::{invariant_interval, SpacetimePoint, ThreeMomentum};
use crate::noise::NoiseError;
use crate::quadrature::{IntegralResult, QuadratureError};
use crate::report::{emit_plot_data, Report, Series};
use crate::states::StateError;

/// Relative boost deviation below which a correlator counts as invariant.
pub const INVARIANCE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(
    name = "relcollapse",
    version,
    about = "Diagnostics for relativistic collapse-model noise"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Directory for reports and CSV files (default: current directory).
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Replaces the seed given in the config.
    #[arg(long)]
    pub seed_override: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Energy rate at the configured cutoff, plus a cutoff scan if `cutoffs` is set.
    EnergyRate(Common),
    /// Energy-rate cutoff scan and its plateau/diverging verdict.
    ScanDivergence(Common),
    /// Collapse correction to the field commutator.
    Microcausality(Common),
    /// Generator leakage out of the non-relativistic sector.
    NrLeakage(Common),
    /// First-order steps on a momentum lattice.
    Evolve(Common),
    /// Boost invariance of the noise correlator.
    CheckCovariance(Common),
    /// CSV files from an existing report.
    EmitPlotData(Common),
}

impl Sub {
    pub fn split(&self) -> (Command, &Common) {
        match self {
            Sub::EnergyRate(c) => (Command::EnergyRate, c),
            Sub::ScanDivergence(c) => (Command::ScanDivergence, c),
            Sub::Microcausality(c) => (Command::Microcausality, c),
            Sub::NrLeakage(c) => (Command::NrLeakage, c),
            Sub::Evolve(c) => (Command::Evolve, c),
            Sub::CheckCovariance(c) => (Command::CheckCovariance, c),
            Sub::EmitPlotData(c) => (Command::EmitPlotData, c),
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    NotConverged(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::NotConverged(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Validation(e.to_string())
    }
}

fn from_quadrature(e: QuadratureError) -> CliError {
    match e {
        QuadratureError::NotConverged { .. } => CliError::NotConverged(e.to_string()),
        _ => CliError::Validation(e.to_string()),
    }
}

fn from_noise(e: NoiseError) -> CliError {
    match e {
        NoiseError::NumericalFourierFailure(q) => from_quadrature(q),
        NoiseError::Io(_) => CliError::Internal(e.to_string()),
        _ => CliError::Validation(e.to_string()),
    }
}

fn from_state(e: StateError) -> CliError {
    match e {
        StateError::Io(_) => CliError::Internal(e.to_string()),
        _ => CliError::Validation(e.to_string()),
    }
}

impl From<DiagnosticsError> for CliError {
    fn from(e: DiagnosticsError) -> Self {
        match e {
            DiagnosticsError::Quadrature(q) => from_quadrature(q),
            DiagnosticsError::Noise(n) => from_noise(n),
            DiagnosticsError::State(s) => from_state(s),
            DiagnosticsError::WhiteNoiseDivergent { .. } => CliError::NotConverged(e.to_string()),
            DiagnosticsError::InvalidRequest(_) | DiagnosticsError::Unsupported(_) => {
                CliError::Validation(e.to_string())
            }
        }
    }
}

impl From<EvolveError> for CliError {
    fn from(e: EvolveError) -> Self {
        match e {
            EvolveError::Quadrature(q) => from_quadrature(q),
            EvolveError::Noise(n) => from_noise(n),
            EvolveError::State(s) => from_state(s),
            EvolveError::Invalid(m) => CliError::Validation(m),
        }
    }
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Internal(format!("{}: {e}", path.display()))
}

/// Files written by one invocation.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Option<PathBuf>,
    pub files: Vec<PathBuf>,
}

/// Parses, validates, computes and writes artifacts; nothing is written
/// unless validation and computation both succeed.
pub fn execute(sub: &Sub) -> Result<Outcome, CliError> {
    let (cmd, common) = sub.split();
    let mut loaded = LoadedConfig::from_path(&common.config)?;
    if let Some(s) = common.seed_override {
        loaded.config.seed = Some(s);
    }
    loaded.config.validate(cmd, &loaded)?;

    if cmd == Command::EmitPlotData {
        let path = loaded.resolve(loaded.config.report.as_ref().expect("validated"));
        let report = Report::read(&path).map_err(CliError::Validation)?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("report")
            .to_string();
        let out = common
            .output_dir
            .clone()
            .unwrap_or_else(|| path.parent().map(Path::to_path_buf).unwrap_or_default());
        std::fs::create_dir_all(&out).map_err(io(&out))?;
        let files = emit_plot_data(&report, &stem, &out).map_err(io(&out))?;
        return Ok(Outcome {
            report: None,
            files,
        });
    }

    let threads = common.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let start = Instant::now();
    let (report, extra) = pool.install(|| compute(cmd, &loaded))?;
    let elapsed = start.elapsed().as_secs_f64();

    let out = common
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out).map_err(io(&out))?;
    let path = out.join(format!("{}.json", loaded.stem));
    report.write(&path).map_err(io(&path))?;
    let mut files = emit_plot_data(&report, &loaded.stem, &out).map_err(io(&out))?;
    if let Some(state) = extra {
        let p = out.join(format!("{}.final_state.csv", loaded.stem));
        state.save(&p, loaded.config.mass()?).map_err(from_state)?;
        files.push(p);
    }
    let timing = out.join(format!("{}.timing.json", loaded.stem));
    let t =
        serde_json::json!({ "wall_clock_seconds": elapsed, "threads": pool.current_num_threads() });
    std::fs::write(&timing, format!("{t:#}\n")).map_err(io(&timing))?;
    files.push(timing);
    Ok(Outcome {
        report: Some(path),
        files,
    })
}

/// Runs the CLI and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match execute(&cli.command) {
        Ok(out) => {
            if let Some(r) = out.report {
                log::info!("report written to {}", r.display());
            }
            0
        }
        Err(e) => {
            eprintln!("relcollapse: {e}");
            e.exit_code()
        }
    }
}

fn request_echo(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null)
}

fn complex(name: &str, r: &IntegralResult<Complex64>) -> ScalarResult {
    ScalarResult::complex(name, r)
}

fn plain(name: &str, v: f64) -> ScalarResult {
    ScalarResult {
        name: name.into(),
        value: v,
        imag: None,
        error: 0.0,
        converged: true,
    }
}

fn verdict(name: &str, v: &str, metric: Option<f64>) -> Verdict {
    Verdict {
        name: name.into(),
        verdict: v.into(),
        metric,
    }
}

fn compute(
    cmd: Command,
    loaded: &LoadedConfig,
) -> Result<(Report, Option<crate::states::LatticeKernel>), CliError> {
    let c = &loaded.config;
    let mut report = Report::new(cmd.name(), request_echo(c), c.seed(), &loaded.raw);
    let cfg = c.quadrature();
    let noise = c.noise()?.clone();
    let mut extra = None;
    match cmd {
        Command::EnergyRate | Command::ScanDivergence => {
            let req = EnergyRateRequest {
                state: c.build_state(loaded)?,
                noise: noise.clone(),
                coupling: c.coupling()?,
                horizon: c.horizon()?,
                cfg,
            };
            if cmd == Command::EnergyRate {
                let r = energy_rate(&req)?;
                report.results.push(ScalarResult::real("energy_rate", &r));
            }
            if cmd == Command::ScanDivergence || c.cutoffs.is_some() {
                let scan = energy_rate_scan(&req, c.cutoffs()?, &c.scan_thresholds)?;
                let v = serde_json::to_value(scan.verdict)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from));
                report.verdicts.push(verdict(
                    "energy_rate_scan",
                    v.as_deref().unwrap_or("unknown"),
                    Some(scan.last_relative_change()),
                ));
                if cmd == Command::EnergyRate {
                    require_finite(&noise, &scan)?;
                } else {
                    let n = scan.values.len();
                    report.results.push(ScalarResult {
                        name: "energy_rate_at_max_cutoff".into(),
                        value: scan.values[n - 1],
                        imag: None,
                        error: scan.errors[n - 1],
                        converged: true,
                    });
                }
                report.scans.push(NamedScan {
                    name: "energy_rate".into(),
                    record: scan,
                });
            }
        }
        Command::Microcausality => {
            let spec = c.microcausality.as_ref().expect("validated");
            let req = MicrocausalityRequest {
                z1: SpacetimePoint::new(spec.t, spec.z1),
                z2: SpacetimePoint::new(0.0, spec.z2),
                t: spec.t,
                noise,
                coupling: c.coupling()?,
                mass: c.mass()?,
                cfg,
            };
            let out = microcausality_residual(&req)?;
            report.results.push(complex("residual", &out.residual));
            report
                .results
                .push(complex("free_commutator", &out.free_commutator));
            report.results.push(plain(
                "invariant_interval",
                invariant_interval(&req.z1, &req.z2),
            ));
            let (v, e) = (out.residual.value.norm(), out.residual.error_estimate);
            let ratio = if e > 0.0 {
                v / e
            } else if v > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            let label = if v <= 3.0 * e {
                "consistent_with_zero"
            } else if v > 5.0 * e {
                "violated"
            } else {
                "inconclusive"
            };
            report.verdicts.push(verdict(
                "microcausality",
                label,
                ratio.is_finite().then_some(ratio),
            ));
        }
        Command::NrLeakage => {
            let state = c.build_state(loaded)?;
            let kappa = c.kappa()?;
            let probes: Vec<ThreeMomentum> = match c.nr.as_ref().and_then(|n| n.probes.clone()) {
                Some(p) => p.into_iter().map(ThreeMomentum).collect(),
                None => default_probe_grid(kappa, state.mass),
            };
            let v = nr_sector_verdict(&state, &noise, kappa, c.horizon()?, &probes, &cfg)?;
            report.results.push(ScalarResult {
                name: "max_leakage".into(),
                value: v.max_leakage,
                imag: None,
                error: v.leakage_error,
                converged: true,
            });
            report
                .results
                .push(plain("diagonal_scale", v.diagonal_scale));
            report.results.push(plain("leakage_ratio", v.ratio));
            let pc = particle_creation_element(
                &state,
                &noise,
                [ThreeMomentum::along_x(kappa.value()), ThreeMomentum::ZERO],
                c.horizon()?,
            );
            report.results.push(ScalarResult {
                name: "particle_creation".into(),
                value: pc.re,
                imag: Some(pc.im),
                error: 0.0,
                converged: true,
            });
            let label = match v.verdict {
                NrVerdictKind::WellBehaved => "well_behaved",
                NrVerdictKind::Leaking => "leaking",
            };
            report
                .verdicts
                .push(verdict("nr_sector", label, Some(v.ratio)));
        }
        Command::Evolve => {
            let spec = c.evolve.as_ref().expect("validated");
            let rho = c.build_lattice_state(loaded)?;
            let labels = spec
                .blocks
                .clone()
                .unwrap_or_else(|| evolve::sign_blocks(&rho.lattice));
            let gen = Generator::new(rho.lattice, c.mass()?, &noise, c.horizon()?, &cfg)?;
            let run = evolve::run(&rho, &gen, c.coupling()?, spec.steps, &labels)?;
            let drift = run
                .history
                .iter()
                .map(|h| (h.trace - 1.0).abs())
                .fold(0.0, f64::max);
            report.results.push(plain("max_trace_drift", drift));
            report.results.push(plain(
                "final_off_diagonal_norm",
                run.history
                    .last()
                    .map(|h| h.off_diagonal_norm)
                    .unwrap_or(0.0),
            ));
            report
                .results
                .push(plain("max_perturbativity", run.max_perturbativity));
            report.results.push(ScalarResult {
                name: "generator_time_error".into(),
                value: gen.error_estimate,
                imag: None,
                error: 0.0,
                converged: true,
            });
            let monotone = run
                .history
                .windows(2)
                .all(|w| w[1].off_diagonal_norm < w[0].off_diagonal_norm);
            report.verdicts.push(verdict(
                "decoherence",
                if monotone { "monotone" } else { "non_monotone" },
                None,
            ));
            report.verdicts.push(verdict(
                "perturbative",
                if run.warnings == 0 { "ok" } else { "warning" },
                Some(run.max_perturbativity),
            ));
            report.series.push(Series {
                name: "history".into(),
                columns: ["step", "trace", "off_diagonal_norm", "min_eigenvalue"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
                rows: run
                    .history
                    .iter()
                    .map(|h| {
                        vec![
                            h.step as f64,
                            h.trace,
                            h.off_diagonal_norm,
                            h.min_eigenvalue,
                        ]
                    })
                    .collect(),
            });
            if spec.save_final_state {
                extra = Some(run.final_state);
            }
        }
        Command::CheckCovariance => {
            let pairs = c.covariance_pairs();
            let boosts = c.boosts();
            let r = noise
                .check_invariance(&pairs, &boosts)
                .map_err(from_noise)?;
            report.results.push(plain("max_deviation", r.max_deviation));
            report
                .results
                .push(plain("relative_deviation", r.relative_deviation));
            report.results.push(plain("correlator_scale", r.scale));
            let label = if r.relative_deviation < INVARIANCE_TOLERANCE {
                "invariant"
            } else {
                "frame_dependent"
            };
            report
                .verdicts
                .push(verdict("covariance", label, Some(r.relative_deviation)));
        }
        Command::EmitPlotData => unreachable!("handled before compute"),
    }
    Ok((report, extra))
}
