//! JSON run configuration (`"schema": 1`).
//!
//! One file describes one run. Sections not needed by the chosen
//! subcommand may be present and are ignored; unknown keys are rejected.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{Boost, Mass, SpacetimePoint, ThreeMomentum};
use crate::noise::NoiseCorrelator;
use crate::quadrature::{QuadratureConfig, ScanThresholds};
use crate::states::{LatticeKernel, MomentumLattice, NrThreshold, SingleParticleState};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {msg}")]
    Read { path: String, msg: String },
    #[error("config does not parse: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    EnergyRate,
    ScanDivergence,
    Microcausality,
    NrLeakage,
    Evolve,
    CheckCovariance,
    EmitPlotData,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::EnergyRate => "energy-rate",
            Command::ScanDivergence => "scan-divergence",
            Command::Microcausality => "microcausality",
            Command::NrLeakage => "nr-leakage",
            Command::Evolve => "evolve",
            Command::CheckCovariance => "check-covariance",
            Command::EmitPlotData => "emit-plot-data",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    Gaussian {
        center: [f64; 3],
        sigma: f64,
    },
    TwoPacket {
        centers: [[f64; 3]; 2],
        sigma: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Kernel saved by [`LatticeKernel::save`]; the path is relative to the config file.
    LatticeFile {
        path: PathBuf,
    },
    /// Superposition of two Gaussians sampled on a 1D lattice along x.
    LatticeTwoPacket {
        n: usize,
        spacing: f64,
        centers: [f64; 2],
        sigma: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl StateSpec {
    fn is_lattice(&self) -> bool {
        matches!(
            self,
            StateSpec::LatticeFile { .. } | StateSpec::LatticeTwoPacket { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicrocausalitySpec {
    /// Position of the evolved point z₁.
    pub z1: [f64; 3],
    /// Position of the reference point z₂ (time 0).
    #[serde(default)]
    pub z2: [f64; 3],
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NrSpec {
    /// Probe momenta; defaults to 12 log-spaced points in [κm, 10κm] along x.
    #[serde(default)]
    pub probes: Option<Vec<[f64; 3]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveSpec {
    pub steps: usize,
    /// Block label per lattice site for the off-diagonal norm; default splits at p = 0.
    #[serde(default)]
    pub blocks: Option<Vec<usize>>,
    #[serde(default)]
    pub save_final_state: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceSpec {
    #[serde(default = "default_rapidities")]
    pub rapidities: Vec<f64>,
    /// Explicit (t, x, y, z) pairs; otherwise `sample_pairs` are drawn from the seed.
    #[serde(default)]
    pub pairs: Option<Vec<[[f64; 4]; 2]>>,
    #[serde(default = "default_sample_pairs")]
    pub sample_pairs: usize,
}

fn default_rapidities() -> Vec<f64> {
    vec![0.5]
}

fn default_sample_pairs() -> usize {
    16
}

fn default_mass() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    /// When present, must agree with the subcommand on the command line.
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_mass")]
    pub mass: f64,
    #[serde(default)]
    pub noise: Option<NoiseCorrelator>,
    #[serde(default)]
    pub state: Option<StateSpec>,
    #[serde(default)]
    pub coupling: Option<f64>,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub cutoffs: Option<Vec<f64>>,
    #[serde(default)]
    pub scan_thresholds: ScanThresholds,
    #[serde(default)]
    pub microcausality: Option<MicrocausalitySpec>,
    #[serde(default)]
    pub nr: Option<NrSpec>,
    #[serde(default)]
    pub evolve: Option<EvolveSpec>,
    #[serde(default)]
    pub covariance: Option<CovarianceSpec>,
    /// Report to convert (emit-plot-data), relative to the config file.
    #[serde(default)]
    pub report: Option<PathBuf>,
}

/// Raw bytes plus the parsed config and the directory it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub raw: Vec<u8>,
    pub config: RunConfig,
    pub base_dir: PathBuf,
    pub stem: String,
}

impl LoadedConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        let config: RunConfig =
            serde_json::from_slice(&raw).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("report")
            .to_string();
        Ok(LoadedConfig {
            raw,
            config,
            base_dir,
            stem,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

fn positive(name: &str, v: Option<f64>) -> Result<f64, ConfigError> {
    match v {
        Some(x) if x > 0.0 && x.is_finite() => Ok(x),
        Some(x) => invalid(format!("{name} must be positive, got {x}")),
        None => invalid(format!("{name} is required")),
    }
}

impl RunConfig {
    pub fn mass(&self) -> Result<Mass, ConfigError> {
        Mass::new(self.mass).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn noise(&self) -> Result<&NoiseCorrelator, ConfigError> {
        match &self.noise {
            Some(n) => Ok(n),
            None => invalid("noise section is required"),
        }
    }

    pub fn coupling(&self) -> Result<f64, ConfigError> {
        positive("coupling", self.coupling)
    }

    pub fn horizon(&self) -> Result<f64, ConfigError> {
        positive("horizon", self.horizon)
    }

    pub fn kappa(&self) -> Result<NrThreshold, ConfigError> {
        match self.kappa {
            None => Ok(NrThreshold::default()),
            Some(k) => NrThreshold::new(k).map_err(|e| ConfigError::Invalid(e.to_string())),
        }
    }

    /// Quadrature settings with the seed override applied.
    pub fn quadrature(&self) -> QuadratureConfig {
        let mut q = self.quadrature;
        if let Some(s) = self.seed {
            q.rng_seed = s;
        }
        q
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.quadrature.rng_seed)
    }

    pub fn cutoffs(&self) -> Result<&[f64], ConfigError> {
        match &self.cutoffs {
            Some(c) if c.len() >= 4 && c.windows(2).all(|w| w[1] > w[0]) && c[0] > 0.0 => Ok(c),
            Some(_) => invalid("cutoffs need at least 4 strictly increasing positive values"),
            None => invalid("cutoffs are required"),
        }
    }

    /// Cross-field checks for `cmd`; runs before any computation or output.
    pub fn validate(&self, cmd: Command, loaded: &LoadedConfig) -> Result<(), ConfigError> {
        if self.schema != SCHEMA_VERSION {
            return invalid(format!(
                "unsupported schema {} (expected {SCHEMA_VERSION})",
                self.schema
            ));
        }
        if let Some(c) = self.command {
            if c != cmd {
                return invalid(format!(
                    "config is for `{}`, invoked as `{}`",
                    c.name(),
                    cmd.name()
                ));
            }
        }
        if cmd == Command::EmitPlotData {
            return match &self.report {
                Some(_) => Ok(()),
                None => invalid("emit-plot-data needs a `report` path"),
            };
        }
        self.mass()?;
        self.quadrature()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Some(c) = self.coupling {
            if !(c > 0.0 && c.is_finite()) {
                return invalid(format!("coupling must be positive, got {c}"));
            }
        }
        let noise = self.noise()?;
        noise
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        match cmd {
            Command::EnergyRate | Command::ScanDivergence => {
                self.coupling()?;
                self.horizon()?;
                self.build_state(loaded)?;
                if cmd == Command::ScanDivergence {
                    self.cutoffs()?;
                } else if self.cutoffs.is_some() {
                    self.cutoffs()?;
                }
            }
            Command::Microcausality => {
                self.coupling()?;
                let m = match &self.microcausality {
                    Some(m) => m,
                    None => return invalid("microcausality section is required"),
                };
                if !(m.t >= 0.0 && m.t.is_finite()) {
                    return invalid("microcausality.t must be ≥ 0");
                }
            }
            Command::NrLeakage => {
                self.horizon()?;
                self.kappa()?;
                let s = self.build_state(loaded)?;
                if matches!(self.state, Some(ref st) if st.is_lattice()) {
                    return invalid("nr-leakage needs a packet state");
                }
                if !s.is_nonrelativistic(self.kappa()?).nonrelativistic {
                    return invalid(
                        "state is not in the non-relativistic sector at the given kappa",
                    );
                }
            }
            Command::Evolve => {
                self.coupling()?;
                self.horizon()?;
                let e = match &self.evolve {
                    Some(e) => e,
                    None => return invalid("evolve section is required"),
                };
                let k = self.build_lattice_state(loaded)?;
                if let Some(b) = &e.blocks {
                    if b.len() != k.lattice.n {
                        return invalid(format!(
                            "evolve.blocks has {} labels for {} sites",
                            b.len(),
                            k.lattice.n
                        ));
                    }
                }
            }
            Command::CheckCovariance => {
                if noise.is_white() {
                    return invalid("white noise has no pointwise value to compare across frames");
                }
                let c = self.covariance_spec();
                if c.rapidities.is_empty() || c.rapidities.iter().any(|r| !r.is_finite()) {
                    return invalid(
                        "covariance.rapidities must be a non-empty list of finite values",
                    );
                }
                if c.pairs.is_none() && c.sample_pairs == 0 {
                    return invalid("covariance needs pairs or sample_pairs > 0");
                }
            }
            Command::EmitPlotData => unreachable!(),
        }
        Ok(())
    }

    pub fn build_state(&self, loaded: &LoadedConfig) -> Result<SingleParticleState, ConfigError> {
        let m = self.mass()?;
        let bad = |e: crate::states::StateError| ConfigError::Invalid(e.to_string());
        let tm = |c: [f64; 3]| {
            ThreeMomentum::try_new(c).map_err(|e| ConfigError::Invalid(e.to_string()))
        };
        match &self.state {
            None => invalid("state section is required"),
            Some(StateSpec::Gaussian { center, sigma }) => {
                SingleParticleState::gaussian(m, tm(*center)?, *sigma).map_err(bad)
            }
            Some(StateSpec::TwoPacket {
                centers,
                sigma,
                phase,
            }) => SingleParticleState::two_packet(
                m,
                [tm(centers[0])?, tm(centers[1])?],
                *sigma,
                *phase,
            )
            .map_err(bad),
            Some(_) => Ok(SingleParticleState::lattice(
                m,
                self.build_lattice_state(loaded)?,
            )),
        }
    }

    pub fn build_lattice_state(&self, loaded: &LoadedConfig) -> Result<LatticeKernel, ConfigError> {
        let bad = |e: crate::states::StateError| ConfigError::Invalid(e.to_string());
        match &self.state {
            Some(StateSpec::LatticeFile { path }) => {
                let (k, mass) = LatticeKernel::load(&loaded.resolve(path)).map_err(bad)?;
                if (mass.value() - self.mass).abs() > 1e-12 * self.mass {
                    return invalid(format!(
                        "lattice file mass {} differs from config mass {}",
                        mass.value(),
                        self.mass
                    ));
                }
                Ok(k)
            }
            Some(StateSpec::LatticeTwoPacket {
                n,
                spacing,
                centers,
                sigma,
                phase,
            }) => {
                if !(*sigma > 0.0 && sigma.is_finite()) {
                    return invalid("lattice packet sigma must be positive");
                }
                let lat = MomentumLattice::new(*n, *spacing).map_err(bad)?;
                let (c0, c1, s, ph) = (centers[0], centers[1], *sigma, *phase);
                LatticeKernel::pure(lat, move |p| {
                    let g = |c: f64| (-(p - c) * (p - c) / (4.0 * s * s)).exp();
                    Complex64::new(g(c0), 0.0) + Complex64::from_polar(g(c1), ph)
                })
                .map_err(bad)
            }
            _ => invalid("this command needs a lattice state (lattice_file or lattice_two_packet)"),
        }
    }

    pub fn covariance_spec(&self) -> CovarianceSpec {
        self.covariance.clone().unwrap_or(CovarianceSpec {
            rapidities: default_rapidities(),
            pairs: None,
            sample_pairs: default_sample_pairs(),
        })
    }

    /// Explicit pairs, or pairs drawn uniformly from [−2, 2]⁴ with the run seed.
    pub fn covariance_pairs(&self) -> Vec<(SpacetimePoint, SpacetimePoint)> {
        let spec = self.covariance_spec();
        let pt = |v: [f64; 4]| SpacetimePoint::new(v[0], [v[1], v[2], v[3]]);
        match spec.pairs {
            Some(p) => p.iter().map(|[a, b]| (pt(*a), pt(*b))).collect(),
            None => {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed());
                let mut draw = || {
                    let mut v = [0.0; 4];
                    for x in &mut v {
                        *x = rng.gen_range(-2.0..2.0);
                    }
                    pt(v)
                };
                (0..spec.sample_pairs).map(|_| (draw(), draw())).collect()
            }
        }
    }

    pub fn boosts(&self) -> Vec<Boost> {
        self.covariance_spec()
            .rapidities
            .iter()
            .map(|r| Boost::along_x(*r))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loaded(json: &str) -> LoadedConfig {
        LoadedConfig {
            raw: json.as_bytes().to_vec(),
            config: serde_json::from_str(json).unwrap(),
            base_dir: PathBuf::new(),
            stem: "t".into(),
        }
    }

    const WHITE: &str = r#"{
        "schema": 1,
        "noise": {"kind": "white_noise", "strength": 1.0},
        "state": {"kind": "gaussian", "center": [0,0,0], "sigma": 0.05},
        "coupling": 0.01, "horizon": 1.0, "cutoffs": [5, 10, 20, 40]
    }"#;

    #[test]
    fn parses_and_validates() {
        let l = loaded(WHITE);
        l.config.validate(Command::ScanDivergence, &l).unwrap();
        l.config.validate(Command::EnergyRate, &l).unwrap();
    }

    #[test]
    fn rejects_negative_coupling() {
        let l = loaded(&WHITE.replace("0.01", "-0.01"));
        assert!(matches!(
            l.config.validate(Command::EnergyRate, &l),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(serde_json::from_str::<RunConfig>(
            &WHITE.replace("\"schema\"", "\"bogus\": 1, \"schema\"")
        )
        .is_err());
    }

    #[test]
    fn white_noise_cannot_be_checked_pointwise() {
        let l = loaded(WHITE);
        assert!(l.config.validate(Command::CheckCovariance, &l).is_err());
    }

    #[test]
    fn command_mismatch_is_rejected() {
        let l = loaded(&WHITE.replace("\"schema\": 1,", "\"schema\": 1, \"command\": \"evolve\","));
        assert!(l.config.validate(Command::EnergyRate, &l).is_err());
    }

    #[test]
    fn seeded_pairs_are_reproducible() {
        let l = loaded(&WHITE.replace("\"schema\": 1,", "\"schema\": 1, \"seed\": 7,"));
        assert_eq!(l.config.covariance_pairs(), l.config.covariance_pairs());
        assert_eq!(l.config.quadrature().rng_seed, 7);
    }
}
