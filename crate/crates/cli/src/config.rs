//! Run configuration: one TOML file, unknown keys rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use neurofield::dynamics::{Scheme, SimConfig};
use neurofield::fixedpoint::NewtonOptions;
use neurofield::model::{FiringSpec, KernelSpec, ModelParams};
use neurofield::pipeline::{ModelSpec, Resolution};
use neurofield::spectral::SpectralOptions;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kernel: KernelSection,
    pub firing: FiringSection,
    pub model: ModelSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub spectral: SpectralSection,
    #[serde(default)]
    pub dynamics: DynamicsSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSection {
    Exponential,
    Gaussian,
    MexicanHat {
        #[serde(rename = "K")]
        exc_amplitude: f64,
        #[serde(rename = "k")]
        exc_rate: f64,
        #[serde(rename = "M")]
        inh_amplitude: f64,
        #[serde(rename = "m")]
        inh_rate: f64,
    },
    /// Two-column `x, ω(x)` CSV, relative paths resolved against the config file.
    Tabulated { file: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiringSection {
    pub p: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub h: f64,
    /// Optional restatement of `firing.tau`; must agree with it.
    #[serde(default)]
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub n_per_unit: f64,
    /// Total subintervals on `[-d, d]`; wins over `n_per_unit`.
    pub n: Option<usize>,
    #[serde(alias = "L_override")]
    pub l_override: Option<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            n_per_unit: 257.0,
            n: None,
            l_override: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub newton_tol: f64,
    pub max_iter: usize,
    pub degeneracy_threshold: f64,
    /// Count distinct fixed points over all Newton starts.
    pub probe_alternatives: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let n = NewtonOptions::default();
        Self {
            newton_tol: n.tol,
            max_iter: n.max_iter,
            degeneracy_threshold: n.degeneracy_fraction,
            probe_alternatives: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSection {
    pub power_tol: f64,
    pub top_k: usize,
    pub max_iter: usize,
}

impl Default for SpectralSection {
    fn default() -> Self {
        let s = SpectralOptions::default();
        Self {
            power_tol: s.power_tol,
            top_k: s.top_k,
            max_iter: s.max_iter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSection {
    pub dt: f64,
    pub t_end: f64,
    pub delta: f64,
    /// Defaults to `0.05 ‖ũ‖∞`.
    pub epsilon_ball: Option<f64>,
    pub scheme: Scheme,
    pub record_every: usize,
    pub snapshot_every: Option<usize>,
    /// Length of the unperturbed run used for the drift check. By default
    /// the time over which `e^{(λ-1)t}` keeps the residual of `ũ` a hundred
    /// times below the drift tolerance, capped at 10.
    pub drift_t_end: Option<f64>,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        let s = SimConfig::default();
        Self {
            dt: s.dt,
            t_end: s.t_end,
            delta: 1e-3,
            epsilon_ball: None,
            scheme: s.scheme,
            record_every: s.record_every,
            snapshot_every: None,
            drift_t_end: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    /// Significant digits of every CSV number.
    pub precision: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            precision: 17,
        }
    }
}

/// A parsed config with the kernel table loaded.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub kernel: KernelSpec,
}

impl Loaded {
    pub fn model(&self) -> ModelSpec {
        ModelSpec {
            kernel: self.kernel.clone(),
            firing: FiringSpec::RatioFamily {
                p: self.config.firing.p,
                tau: self.config.firing.tau,
            },
            params: ModelParams {
                h: self.config.model.h,
                tau: self.config.firing.tau,
            },
        }
    }

    pub fn resolution(&self) -> Resolution {
        match self.config.grid.n {
            Some(n) => Resolution::Total(n),
            None => Resolution::PerUnit(self.config.grid.n_per_unit),
        }
    }

    pub fn newton(&self) -> NewtonOptions {
        let s = &self.config.solver;
        NewtonOptions {
            tol: s.newton_tol,
            max_iter: s.max_iter,
            degeneracy_fraction: s.degeneracy_threshold,
            probe_alternatives: s.probe_alternatives,
            ..NewtonOptions::default()
        }
    }

    pub fn spectral(&self) -> SpectralOptions {
        let s = &self.config.spectral;
        SpectralOptions {
            power_tol: s.power_tol,
            max_iter: s.max_iter,
            top_k: s.top_k,
        }
    }

    pub fn sim(&self, t_end: f64) -> SimConfig {
        let d = &self.config.dynamics;
        SimConfig {
            dt: d.dt,
            t_end,
            scheme: d.scheme,
            record_every: d.record_every,
            snapshot_every: d.snapshot_every,
        }
    }
}

pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    validate(&config)?;
    Ok(config)
}

fn validate(c: &RunConfig) -> Result<(), CliError> {
    let bad = |msg: String| Err(CliError::Config(msg));
    if let Some(t) = c.model.tau {
        if t != c.firing.tau {
            return bad(format!("model.tau = {t} disagrees with firing.tau = {}", c.firing.tau));
        }
    }
    if !(c.grid.n_per_unit > 0.0 && c.grid.n_per_unit.is_finite()) {
        return bad(format!("grid.n_per_unit = {} must be positive", c.grid.n_per_unit));
    }
    if c.grid.n == Some(0) {
        return bad("grid.n must be positive".into());
    }
    if !(1..=17).contains(&c.output.precision) {
        return bad(format!("output.precision = {} must lie in 1..=17", c.output.precision));
    }
    let d = &c.dynamics;
    if let Some(t) = d.drift_t_end {
        if !(t > 0.0 && t.is_finite()) {
            return bad(format!("dynamics.drift_t_end = {t} must be positive"));
        }
    }
    if d.delta == 0.0 || !d.delta.is_finite() {
        return bad(format!("dynamics.delta = {} must be nonzero", d.delta));
    }
    Ok(())
}

/// Reads and validates `path`; `grid_n` overrides `grid.n`.
pub fn load(path: &Path, grid_n: Option<usize>) -> Result<Loaded, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut config =
        parse(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
    if let Some(n) = grid_n {
        if n == 0 {
            return Err(CliError::Usage("--grid-n must be positive".into()));
        }
        config.grid.n = Some(n);
    }
    let kernel = match &config.kernel {
        KernelSection::Exponential => KernelSpec::Exponential,
        KernelSection::Gaussian => KernelSpec::Gaussian,
        KernelSection::MexicanHat {
            exc_amplitude,
            exc_rate,
            inh_amplitude,
            inh_rate,
        } => KernelSpec::mexican_hat(*exc_amplitude, *exc_rate, *inh_amplitude, *inh_rate)?,
        KernelSection::Tabulated { file } => {
            let full = path.parent().unwrap_or(Path::new(".")).join(file);
            let text =
                fs::read_to_string(&full).map_err(|e| CliError::Io(format!("{}: {e}", full.display())))?;
            KernelSpec::from_csv_str(&text)?
        }
    };
    Ok(Loaded { config, kernel })
}
