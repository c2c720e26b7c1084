//! The run configuration document (TOML).
//!
//! Relative paths are resolved against the directory of the config file.
//! `SEAFLOW_FLOWS`, `SEAFLOW_DISTANCES`, `SEAFLOW_OUTPUT` and `SEAFLOW_SEED`
//! override the corresponding entries; nothing else can be overridden.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use seaflow_core::equilibrium::FixedPointConfig;
use seaflow_core::inference::{CalibrationConfig, CrowdednessConfig, InferenceConfig};
use seaflow_core::synthetic::{SimulationMode, SyntheticSpec};
use seaflow_core::{CostParameters, GoodValues, Kernel, PortNetwork};
use serde::{Deserialize, Serialize};

use crate::distances::load_distances;
use crate::error::{CliError, Result};
use crate::flows::{date_to_day, day_to_date, parse_date};

pub const ENV_FLOWS: &str = "SEAFLOW_FLOWS";
pub const ENV_DISTANCES: &str = "SEAFLOW_DISTANCES";
pub const ENV_OUTPUT: &str = "SEAFLOW_OUTPUT";
pub const ENV_SEED: &str = "SEAFLOW_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub paths: PathsConfig,
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub inference: InferenceSection,
    pub synthetic: Option<SyntheticSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub flows: Option<PathBuf>,
    pub distances: Option<PathBuf>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("output")
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            flows: None,
            distances: None,
            output: default_output(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    Linear,
    Power,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Port order of every per-port vector below; defaults to the order of
    /// the distance file.
    pub ports: Option<Vec<String>>,
    #[serde(default = "default_kernel")]
    pub kernel: KernelChoice,
    /// Exponent of the power kernel.
    pub kernel_exponent: Option<f64>,
    /// Per-pair kernel values in the distance-file format.
    pub kernel_table: Option<PathBuf>,
    /// Congestion and transport costs are quadratic; only 2 is accepted.
    #[serde(default = "default_cost_exponent")]
    pub cost_exponent: f64,
    pub goods: Vec<String>,
    pub capacities: Vec<f64>,
    pub transport: Vec<f64>,
    pub congestion: Vec<f64>,
    /// One row of per-port values per good.
    pub values: Vec<Vec<f64>>,
}

fn default_kernel() -> KernelChoice {
    KernelChoice::Linear
}

fn default_cost_exponent() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub adaptive_damping: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = FixedPointConfig::default();
        Self {
            damping: d.damping,
            tol: d.tol,
            max_iter: d.max_iter,
            adaptive_damping: d.adaptive_damping,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceSection {
    pub shift_days: usize,
    pub window_days: usize,
    /// Inclusive date window, `YYYY-MM-DD`.
    pub start: Option<String>,
    pub end: Option<String>,
    pub ridge: f64,
    pub import_window: usize,
    pub r_bar: f64,
    pub r_min: f64,
    pub starts: usize,
    pub max_iter: usize,
}

impl Default for InferenceSection {
    fn default() -> Self {
        let c = CrowdednessConfig::default();
        let i = InferenceConfig::default();
        let cal = CalibrationConfig::default();
        Self {
            shift_days: c.shift_days,
            window_days: c.window_days,
            start: None,
            end: None,
            ridge: i.ridge,
            import_window: i.import_window,
            r_bar: cal.r_bar,
            r_min: cal.r_min,
            starts: cal.starts,
            max_iter: cal.max_iter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeChoice {
    RegressionExact,
    EquilibriumConsistent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSection {
    pub ports: usize,
    pub goods: usize,
    pub horizon_days: usize,
    pub noise_sigma: f64,
    pub mode: ModeChoice,
    pub congestion_range: [f64; 2],
    pub transport_range: [f64; 2],
    pub value_range: [f64; 2],
    pub travel_cost_range: [f64; 2],
    pub capacity_range: [f64; 2],
    pub r_bar: f64,
    pub start_date: String,
    pub inflow_variation: f64,
    pub flow_margin: f64,
    pub persistence: f64,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        let s = SyntheticSpec::default();
        let pair = |(a, b): (f64, f64)| [a, b];
        Self {
            ports: s.ports,
            goods: s.goods,
            horizon_days: s.horizon_days,
            noise_sigma: s.noise_sigma,
            mode: ModeChoice::RegressionExact,
            congestion_range: pair(s.congestion_range),
            transport_range: pair(s.transport_range),
            value_range: pair(s.value_range),
            travel_cost_range: pair(s.travel_cost_range),
            capacity_range: pair(s.capacity_range),
            r_bar: s.r_bar,
            start_date: day_to_date(s.start_day).to_string(),
            inflow_variation: s.inflow_variation,
            flow_margin: s.flow_margin,
            persistence: s.persistence,
        }
    }
}

/// A parsed config together with the bytes it was read from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub path: PathBuf,
    pub source: Vec<u8>,
    /// Environment overrides that were applied, as `(variable, value)`.
    pub overrides: Vec<(String, String)>,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with_env(path, |k| std::env::var(k).ok())
    }

    pub fn load_with_env(path: &Path, env: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let source = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        let text = std::str::from_utf8(&source).map_err(|_| CliError::Config(format!("{} is not UTF-8", path.display())))?;
        let mut config: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        config.paths.flows = config.paths.flows.as_deref().map(resolve);
        config.paths.distances = config.paths.distances.as_deref().map(resolve);
        config.paths.output = resolve(&config.paths.output);
        if let Some(model) = config.model.as_mut() {
            model.kernel_table = model.kernel_table.as_deref().map(resolve);
        }

        let mut overrides = Vec::new();
        for var in [ENV_FLOWS, ENV_DISTANCES, ENV_OUTPUT, ENV_SEED] {
            let Some(value) = env(var).filter(|v| !v.is_empty()) else {
                continue;
            };
            match var {
                ENV_FLOWS => config.paths.flows = Some(PathBuf::from(&value)),
                ENV_DISTANCES => config.paths.distances = Some(PathBuf::from(&value)),
                ENV_OUTPUT => config.paths.output = PathBuf::from(&value),
                _ => {
                    config.seed = value
                        .parse()
                        .map_err(|_| CliError::Config(format!("{ENV_SEED}={value:?} is not an unsigned integer")))?
                }
            }
            overrides.push((var.to_string(), value));
        }
        config.validate()?;
        Ok(Self {
            config,
            path: path.to_path_buf(),
            source,
            overrides,
        })
    }
}

fn bad<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Config(msg.into()))
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.solver;
        if !(s.damping > 0.0 && s.damping <= 1.0) {
            return bad(format!("solver.damping = {} must lie in (0, 1]", s.damping));
        }
        if !(s.tol > 0.0) || s.max_iter == 0 {
            return bad("solver.tol and solver.max_iter must be positive");
        }
        let inf = &self.inference;
        if inf.window_days == 0 || inf.import_window == 0 || inf.starts == 0 || inf.max_iter == 0 {
            return bad("inference window_days, import_window, starts and max_iter must be positive");
        }
        if !(inf.ridge >= 0.0) || !(inf.r_bar > 0.0) || !(inf.r_min >= 0.0) {
            return bad("inference ridge and r_min must be nonnegative, r_bar positive");
        }
        if let (Some(a), Some(b)) = self.date_window()? {
            if b < a {
                return bad(format!("inference window {a} .. {b} is reversed"));
            }
        }
        if let Some(m) = &self.model {
            if m.cost_exponent != 2.0 {
                return bad(format!("model.cost_exponent = {}: only quadratic costs (2) are supported", m.cost_exponent));
            }
            if m.kernel == KernelChoice::Power && !m.kernel_exponent.is_some_and(|p| p > 0.0) {
                return bad("power kernel needs a positive model.kernel_exponent");
            }
            if m.kernel == KernelChoice::Table && m.kernel_table.is_none() {
                return bad("table kernel needs model.kernel_table");
            }
            let n = m.goods.len();
            if n == 0 || m.capacities.len() != n || m.transport.len() != n || m.values.len() != n {
                return bad("model.goods, capacities, transport and values must have one entry per good");
            }
        }
        if let Some(syn) = &self.synthetic {
            if parse_date(&syn.start_date).is_none() {
                return bad(format!("synthetic.start_date {:?} is not YYYY-MM-DD", syn.start_date));
            }
        }
        for p in [&self.paths.flows, &self.paths.distances, &self.model.as_ref().and_then(|m| m.kernel_table.clone())]
            .into_iter()
            .flatten()
        {
            if !p.is_file() {
                return bad(format!("referenced file {} does not exist", p.display()));
            }
        }
        Ok(())
    }

    fn date_window(&self) -> Result<(Option<chrono::NaiveDate>, Option<chrono::NaiveDate>)> {
        let parse = |s: &Option<String>| -> Result<Option<chrono::NaiveDate>> {
            match s {
                None => Ok(None),
                Some(text) => parse_date(text)
                    .map(Some)
                    .ok_or_else(|| CliError::Config(format!("date {text:?} is not YYYY-MM-DD"))),
            }
        };
        Ok((parse(&self.inference.start)?, parse(&self.inference.end)?))
    }

    pub fn require_model(&self) -> Result<&ModelConfig> {
        self.model.as_ref().ok_or_else(|| CliError::Config("this command needs a [model] block".into()))
    }

    pub fn require_distances(&self) -> Result<&Path> {
        self.paths
            .distances
            .as_deref()
            .ok_or_else(|| CliError::Config("this command needs paths.distances".into()))
    }

    pub fn require_flows(&self) -> Result<&Path> {
        self.paths.flows.as_deref().ok_or_else(|| CliError::Config("this command needs paths.flows".into()))
    }

    pub fn fixed_point_config(&self) -> FixedPointConfig {
        FixedPointConfig {
            damping: self.solver.damping,
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            adaptive_damping: self.solver.adaptive_damping,
            ..FixedPointConfig::default()
        }
    }

    /// Port network from the distance file, ordered like `model.ports` when given.
    pub fn network(&self) -> Result<PortNetwork> {
        let expected = self.model.as_ref().and_then(|m| m.ports.as_deref());
        let table = load_distances(self.require_distances()?, expected)?;
        let kernel = match self.model.as_ref() {
            None => Kernel::Linear,
            Some(m) => match m.kernel {
                KernelChoice::Linear => Kernel::Linear,
                KernelChoice::Power => Kernel::Power(m.kernel_exponent.unwrap_or(2.0)),
                KernelChoice::Table => {
                    let path = m.kernel_table.as_deref().expect("validated");
                    Kernel::Table(load_distances(path, Some(&table.labels))?.matrix)
                }
            },
        };
        Ok(PortNetwork::new(table.labels, table.matrix, kernel)?)
    }

    /// Cost parameters and values of the model block, checked against `k` ports.
    pub fn model_parameters(&self, k: usize) -> Result<(CostParameters, GoodValues)> {
        let m = self.require_model()?;
        if m.congestion.len() != k || m.values.iter().any(|row| row.len() != k) {
            return bad(format!("model.congestion and every model.values row need {k} entries, one per port"));
        }
        let params = CostParameters::new(m.congestion.clone(), m.transport.clone(), m.capacities.clone())?;
        let values = GoodValues::new(DMatrix::from_fn(m.goods.len(), k, |n, i| m.values[n][i]))?;
        Ok((params, values))
    }

    pub fn inference_config(&self) -> Result<InferenceConfig> {
        let inf = &self.inference;
        let window = match self.date_window()? {
            (None, None) => None,
            (a, b) => Some((
                a.map_or(seaflow_core::series::Day(i32::MIN), date_to_day),
                b.map_or(seaflow_core::series::Day(i32::MAX), date_to_day),
            )),
        };
        Ok(InferenceConfig {
            crowdedness: CrowdednessConfig {
                shift_days: inf.shift_days,
                window_days: inf.window_days,
            },
            import_window: inf.import_window,
            ridge: inf.ridge,
            window,
            calibration: CalibrationConfig {
                r_min: inf.r_min,
                r_bar: inf.r_bar,
                starts: inf.starts,
                seed: self.seed,
                max_iter: inf.max_iter,
                initial_values: None,
            },
        })
    }

    pub fn synthetic_spec(&self) -> Result<SyntheticSpec> {
        let syn = self
            .synthetic
            .as_ref()
            .ok_or_else(|| CliError::Config("this command needs a [synthetic] block".into()))?;
        let pair = |[a, b]: [f64; 2]| (a, b);
        let spec = SyntheticSpec {
            seed: self.seed,
            ports: syn.ports,
            goods: syn.goods,
            horizon_days: syn.horizon_days,
            noise_sigma: syn.noise_sigma,
            mode: match syn.mode {
                ModeChoice::RegressionExact => SimulationMode::RegressionExact,
                ModeChoice::EquilibriumConsistent => SimulationMode::EquilibriumConsistent,
            },
            congestion_range: pair(syn.congestion_range),
            transport_range: pair(syn.transport_range),
            value_range: pair(syn.value_range),
            travel_cost_range: pair(syn.travel_cost_range),
            capacity_range: pair(syn.capacity_range),
            r_bar: syn.r_bar,
            start_day: date_to_day(parse_date(&syn.start_date).expect("validated")),
            inflow_variation: syn.inflow_variation,
            flow_margin: syn.flow_margin,
            persistence: syn.persistence,
            crowdedness: CrowdednessConfig {
                shift_days: self.inference.shift_days,
                window_days: self.inference.window_days,
            },
            import_window: self.inference.import_window,
        };
        spec.validate()?;
        Ok(spec)
    }
}
