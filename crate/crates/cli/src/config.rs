//! Run configuration: a JSON file whose every field is optional, overlaid by
//! command-line flags.

use std::path::{Path, PathBuf};

use coolsim::analysis::{NuConvention, OutputSpec};
use coolsim::meanfield::bare_detuning_for_target;
use coolsim::{KappaSchedule, PhysicalParams, SimError, TimeGrid};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Run,
    Ncl,
    Scan,
    Qswitch,
    OracleCompare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub dt: f64,
    pub t_max: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { dt: 5e-3, t_max: 40.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Time between rows of the emitted series.
    pub spacing: f64,
    pub min_window: Option<(f64, f64)>,
    pub nu_i_convention: NuConvention,
}

impl Default for OutputConfig {
    fn default() -> Self {
        let spec = OutputSpec::default();
        OutputConfig { spacing: spec.spacing, min_window: spec.min_window, nu_i_convention: spec.convention }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub c1_values: Vec<Complex64>,
    pub c2_values: Vec<Complex64>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        let vals = [0.0, 50.0, 100.0].map(|x| Complex64::new(x, 0.0)).to_vec();
        ScanConfig { c1_values: vals, c2_values: vec![Complex64::new(0.0, 0.0)] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QSwitchConfig {
    pub t_switch: f64,
    pub kappa_hi: f64,
}

impl Default for QSwitchConfig {
    fn default() -> Self {
        QSwitchConfig { t_switch: 17.15, kappa_hi: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub modes: usize,
    /// Highest bath frequency in units of `omega_l`.
    pub omega_max_over_omega_l: f64,
    /// Largest accepted `|N_kernel - N_oracle| / |N_oracle|`.
    pub tolerance: f64,
    pub max_phase_step: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { modes: 600, omega_max_over_omega_l: 40.0, tolerance: 0.02, max_phase_step: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub params: PhysicalParams,
    /// When set, the bare detuning is re-derived so that the steady-state
    /// effective detuning equals this value at the base decay rate.
    pub target_detuning: Option<f64>,
    pub schedule: KappaSchedule,
    pub grid: GridConfig,
    pub output: OutputConfig,
    pub scan: ScanConfig,
    pub qswitch: QSwitchConfig,
    pub oracle: OracleConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Run,
            params: PhysicalParams::fig2(),
            target_detuning: None,
            schedule: KappaSchedule::constant(coolsim::model::FIG2_KAPPA),
            grid: GridConfig::default(),
            output: OutputConfig::default(),
            scan: ScanConfig::default(),
            qswitch: QSwitchConfig::default(),
            oracle: OracleConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config file {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Invalid(#[from] SimError),
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub dt: Option<f64>,
    pub t_max: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub convention: Option<NuConvention>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            None => RunConfig::default(),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
                serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })?
            }
        };
        cfg.apply(overrides);
        cfg.resolve()?;
        Ok(cfg)
    }

    fn apply(&mut self, o: &Overrides) {
        if let Some(m) = o.mode {
            self.mode = m;
        }
        if let Some(dt) = o.dt {
            self.grid.dt = dt;
        }
        if let Some(t) = o.t_max {
            self.grid.t_max = t;
        }
        if let Some(c1) = o.c1 {
            self.params.c1 = Complex64::new(c1, 0.0);
        }
        if let Some(c2) = o.c2 {
            self.params.c2 = Complex64::new(c2, 0.0);
        }
        if let Some(conv) = o.convention {
            self.output.nu_i_convention = conv;
        }
    }

    /// Materializes derived values and checks the parts not covered by the
    /// library's own validation.
    fn resolve(&mut self) -> Result<(), SimError> {
        self.schedule = KappaSchedule::new(self.schedule.segments().to_vec())?;
        if let Some(target) = self.target_detuning {
            self.params.delta_c = bare_detuning_for_target(&self.params, target, self.schedule.base());
            self.target_detuning = None;
        }
        let mut problems = Vec::new();
        if !(self.output.spacing > 0.0) {
            problems.push("output.spacing > 0".to_string());
        }
        if self.mode == Mode::Scan && (self.scan.c1_values.is_empty() || self.scan.c2_values.is_empty()) {
            problems.push("scan needs non-empty c1_values and c2_values".to_string());
        }
        if self.mode == Mode::Qswitch && !(self.qswitch.kappa_hi >= 0.0) {
            problems.push("qswitch.kappa_hi >= 0".to_string());
        }
        if self.mode == Mode::OracleCompare && (self.oracle.modes == 0 || !(self.oracle.omega_max_over_omega_l > 0.0)) {
            problems.push("oracle needs modes >= 1 and omega_max_over_omega_l > 0".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(SimError::Invalid(problems))
        }
    }

    pub fn time_grid(&self) -> Result<TimeGrid, SimError> {
        TimeGrid::covering(self.grid.dt, self.grid.t_max)
    }

    pub fn output_spec(&self) -> OutputSpec {
        OutputSpec {
            spacing: self.output.spacing,
            min_window: self.output.min_window,
            convention: self.output.nu_i_convention,
        }
    }
}
