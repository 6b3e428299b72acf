//! TOML run configuration. Relative paths resolve against the directory of
//! the config file.

use std::fs;
use std::path::{Path, PathBuf};

use ddgate_core::bath::BathSpec;
use ddgate_core::io::{from_json, BathFile, DesignFile, SequenceFile, SystemParamsFile};
use ddgate_core::linalg::{ONE, ZERO};
use ddgate_core::{GateKind, OptimizerConfig, PulseSequence, SystemParameters};
use num_complex::Complex64 as C64;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::failure::{CliResult, Failure};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    /// Inline parameters; the experimental register when absent.
    pub params: Option<SystemParamsFile>,
    pub params_file: Option<PathBuf>,
    pub design: Option<DesignSection>,
    pub sweep: Option<SweepSection>,
    pub bath: Option<BathSection>,
    pub coherence: Option<CoherenceSection>,
    pub trajectory: Option<TrajectorySection>,
    pub verify: Option<VerifySection>,
}

/// Optimizer overrides; unset fields keep the library defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub step_size: Option<f64>,
    pub max_iters: Option<usize>,
    pub grad_tolerance: Option<f64>,
    pub n_starts: Option<usize>,
    pub min_delay: Option<f64>,
    pub max_total_time: Option<f64>,
    pub init_total_window: Option<[f64; 2]>,
    pub max_init_attempts: Option<usize>,
    pub target_fidelity: Option<f64>,
    /// Set to 1 for a single round of starts.
    pub max_rounds: Option<usize>,
}

impl OptimizerSection {
    pub fn build(&self, n_pulses: usize, seed: u64) -> OptimizerConfig {
        let d = OptimizerConfig::default();
        OptimizerConfig {
            n_pulses,
            step_size: self.step_size.unwrap_or(d.step_size),
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            grad_tolerance: self.grad_tolerance.unwrap_or(d.grad_tolerance),
            n_starts: self.n_starts.unwrap_or(d.n_starts),
            min_delay: self.min_delay.unwrap_or(d.min_delay),
            max_total_time: self.max_total_time.unwrap_or(d.max_total_time),
            init_total_window: self.init_total_window.unwrap_or(d.init_total_window),
            max_init_attempts: self.max_init_attempts.unwrap_or(d.max_init_attempts),
            rng_seed: seed,
            target_fidelity: self.target_fidelity.or(d.target_fidelity),
            max_rounds: self.max_rounds.unwrap_or(d.max_rounds),
        }
    }
}

fn default_order() -> u8 {
    2
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub gate: GateKind,
    pub n_pulses: usize,
    #[serde(default = "default_order")]
    pub order: u8,
    #[serde(default)]
    pub optimizer: OptimizerSection,
}

fn default_state_bath() -> BathSpec {
    BathSpec::small()
}

fn default_coherence_bath() -> BathSpec {
    BathSpec::large()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub gates: Vec<GateKind>,
    pub n_pulses: Vec<usize>,
    #[serde(default = "default_order")]
    pub order: u8,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    /// Bath for the state-fidelity column (dense engine).
    #[serde(default = "default_state_bath")]
    pub state_bath: BathSpec,
    /// Bath for the doubled-gate coherence column (CCE-2).
    #[serde(default = "default_coherence_bath")]
    pub coherence_bath: BathSpec,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSection {
    #[serde(default)]
    pub spec: BathSpec,
    /// Run T2* selection; otherwise write the first generated bath.
    #[serde(default = "yes")]
    pub select: bool,
    pub fid_t_max_us: Option<f64>,
    pub fid_dt_us: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    Named(String),
    /// `[[re, im], [re, im]]` in the basis up, down.
    Amplitudes([[f64; 2]; 2]),
}

impl Default for StateSpec {
    fn default() -> Self {
        StateSpec::Named("down".into())
    }
}

impl StateSpec {
    pub fn resolve(&self) -> CliResult<[C64; 2]> {
        match self {
            StateSpec::Named(n) if n == "up" => Ok([ONE, ZERO]),
            StateSpec::Named(n) if n == "down" => Ok([ZERO, ONE]),
            StateSpec::Named(n) => Err(Failure::Config(format!("unknown state {n:?}, expected \"up\" or \"down\""))),
            StateSpec::Amplitudes(a) => Ok([C64::new(a[0][0], a[0][1]), C64::new(a[1][0], a[1][1])]),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherenceSection {
    pub design: Option<PathBuf>,
    pub sequence: Option<PathBuf>,
    pub bath: PathBuf,
    pub repeats: Vec<usize>,
    #[serde(default)]
    pub allow_odd: bool,
    /// Multiply in the target-spin factor for `target_state`.
    #[serde(default)]
    pub include_target: bool,
    #[serde(default)]
    pub target_state: StateSpec,
}

fn default_dt() -> f64 {
    0.01
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySection {
    pub design: Option<PathBuf>,
    pub sequence: Option<PathBuf>,
    pub branch: usize,
    #[serde(default)]
    pub psi0: StateSpec,
    #[serde(default = "default_dt")]
    pub dt_us: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub design: PathBuf,
}

/// A parsed config with its source location and content hash.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub dir: PathBuf,
    pub sha256: String,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = fs::read(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| Failure::Config(format!("{}: not valid UTF-8", path.display())))?;
        let config: RunConfig =
            toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self {
            config,
            dir,
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.dir.join(p)
        }
    }

    pub fn params(&self) -> CliResult<SystemParameters> {
        let file = match (&self.config.params, &self.config.params_file) {
            (Some(_), Some(_)) => {
                return Err(Failure::Config("set either params or params_file, not both".into()));
            }
            (Some(p), None) => p.clone(),
            (None, Some(f)) => read_json::<SystemParamsFile>(&self.resolve(f))?,
            (None, None) => return Ok(SystemParameters::experimental()),
        };
        file.to_params().map_err(|e| Failure::input("params", e))
    }

    pub fn section<'a, T>(&self, s: &'a Option<T>, name: &str) -> CliResult<&'a T> {
        s.as_ref()
            .ok_or_else(|| Failure::Config(format!("missing [{name}] section")))
    }

    /// Sequence from either a design file or a sequence file, plus the
    /// design's parameters when a design file was given.
    pub fn sequence_input(
        &self,
        design: &Option<PathBuf>,
        sequence: &Option<PathBuf>,
    ) -> CliResult<(PulseSequence, Option<SystemParameters>)> {
        match (design, sequence) {
            (Some(d), None) => {
                let path = self.resolve(d);
                let file = read_json::<DesignFile>(&path)?;
                let seq = file
                    .sequence
                    .to_sequence()
                    .map_err(|e| Failure::input(&path.display().to_string(), e))?;
                file.params
                    .validate()
                    .map_err(|e| Failure::input(&path.display().to_string(), e))?;
                Ok((seq, Some(file.params)))
            }
            (None, Some(s)) => {
                let path = self.resolve(s);
                let seq = read_json::<SequenceFile>(&path)?
                    .to_sequence()
                    .map_err(|e| Failure::input(&path.display().to_string(), e))?;
                Ok((seq, None))
            }
            _ => Err(Failure::Config("set exactly one of design or sequence".into())),
        }
    }

    pub fn bath_file(&self, p: &Path) -> CliResult<BathFile> {
        let path = self.resolve(p);
        let file = read_json::<BathFile>(&path)?;
        file.to_bath()
            .map_err(|e| Failure::input(&path.display().to_string(), e))?;
        Ok(file)
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    from_json(&text).map_err(|e| Failure::input(&path.display().to_string(), e))
}
