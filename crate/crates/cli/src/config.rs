//! Experiment manifest: a TOML file with full defaulting; command-line
//! flags override individual fields after parsing.

use serde::Deserialize;
use std::path::Path;

use arw_core::drift::{BaseSequenceParams, DriftPattern, DriftScenario, ScenarioKind};
use arw_core::experiment::{ExperimentSpec, Method};
use arw_core::quantile::{Variant, WindowGrid};

use crate::error::{CliError, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    pub scenario: ScenarioConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default = "default_train_windows")]
    pub train_windows: Vec<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_delta_prime")]
    pub delta_prime: f64,
    #[serde(default = "default_variant")]
    pub variant: String,
    #[serde(default = "default_grid")]
    pub grid: String,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    /// Output directory; overridden by `--out` and the environment default.
    pub out: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub pattern: String,
    pub periods: usize,
    #[serde(default = "default_pattern_seed")]
    pub pattern_seed: u64,
    /// Optional overrides of the four-regime base sequence.
    pub base: Option<BaseOverrides>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct BaseOverrides {
    pub boundaries: Option<[usize; 3]>,
    pub shift_amplitude: Option<f64>,
    pub shift_dwell: Option<usize>,
    pub sin_amplitude: Option<f64>,
    pub sin_period: Option<f64>,
    pub walk_step: Option<f64>,
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}
fn default_methods() -> Vec<String> {
    vec!["arw".into()]
}
fn default_train_windows() -> Vec<usize> {
    vec![1, 16, 256, 1024]
}
fn default_alpha() -> f64 {
    0.1
}
fn default_delta_prime() -> f64 {
    0.1
}
fn default_variant() -> String {
    "experiment".into()
}
fn default_grid() -> String {
    "dyadic".into()
}
fn default_burn_in() -> usize {
    100
}
fn default_mc_samples() -> usize {
    1000
}
fn default_pattern_seed() -> u64 {
    2024
}

pub fn parse_variant(s: &str) -> Result<Variant> {
    match s {
        "theory" => Ok(Variant::Theory),
        "experiment" => Ok(Variant::Experiment),
        other => Err(CliError::Config(format!(
            "variant must be 'theory' or 'experiment', got '{other}'"
        ))),
    }
}

pub fn parse_grid(s: &str) -> Result<WindowGrid> {
    match s {
        "full" => Ok(WindowGrid::Full),
        "dyadic" => Ok(WindowGrid::Dyadic),
        other => Err(CliError::Config(format!(
            "grid must be 'full' or 'dyadic', got '{other}'"
        ))),
    }
}

pub fn load(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(&format!("reading config '{}'", path.display()), e))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

impl ConfigFile {
    pub fn to_spec(&self) -> Result<ExperimentSpec> {
        let pattern = match self.scenario.pattern.as_str() {
            "stationary" => DriftPattern::Stationary,
            "four-regime" => {
                let mut p = BaseSequenceParams::with_len(self.scenario.periods);
                if let Some(b) = &self.scenario.base {
                    if let Some(v) = b.boundaries {
                        p.boundaries = v;
                    }
                    if let Some(v) = b.shift_amplitude {
                        p.shift_amplitude = v;
                    }
                    if let Some(v) = b.shift_dwell {
                        p.shift_dwell = v;
                    }
                    if let Some(v) = b.sin_amplitude {
                        p.sin_amplitude = v;
                    }
                    if let Some(v) = b.sin_period {
                        p.sin_period = v;
                    }
                    if let Some(v) = b.walk_step {
                        p.walk_step = v;
                    }
                }
                DriftPattern::FourRegime(p)
            }
            other => {
                return Err(CliError::Config(format!(
                    "scenario pattern must be 'stationary' or 'four-regime', got '{other}'"
                )))
            }
        };
        if self.scenario.base.is_some() && self.scenario.pattern == "stationary" {
            return Err(CliError::Config(
                "scenario.base only applies to the four-regime pattern".into(),
            ));
        }
        let scenario = DriftScenario {
            kind: self.scenario.kind,
            pattern,
            periods: self.scenario.periods,
            pattern_seed: self.scenario.pattern_seed,
            seed: 0,
        };
        let methods: Vec<Method> = self
            .methods
            .iter()
            .map(|s| s.parse::<Method>().map_err(CliError::from))
            .collect::<Result<_>>()?;
        let mut spec = ExperimentSpec::new(scenario);
        spec.seeds = self.seeds.clone();
        spec.methods = methods;
        spec.train_windows = self.train_windows.clone();
        spec.alpha = self.alpha;
        spec.delta_prime = self.delta_prime;
        spec.variant = parse_variant(&self.variant)?;
        spec.grid = parse_grid(&self.grid)?;
        spec.burn_in = self.burn_in;
        spec.mc_samples = self.mc_samples;
        spec.validate()?;
        Ok(spec)
    }
}
