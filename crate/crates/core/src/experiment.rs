//! End-to-end synthetic experiment harness: generate a drifting stream, fit
//! rolling predictors, form prediction intervals with every configured
//! method at every period, evaluate true coverage, and aggregate over seeds.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt;
use std::str::FromStr;

use crate::conformal::weighted_threshold_sorted;
use crate::drift::{
    generate_stream, predict_linear, DriftPattern, DriftScenario, PeriodTruth, RollingMean,
    RollingOls, ScenarioKind, Stream, REGRESSION_DIM,
};
use crate::eval::{aggregate_runs, exact_coverage_gaussian, CoverageReport, PeriodRecord};
use crate::quantile::{select_window, QuantileConfig, Variant, WindowGrid, WindowedScores};
use crate::conformal::{MethodTag, PredictionInterval};
use crate::{ArwError, Result};

/// Interval-construction method evaluated by the harness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Arw,
    FixedWindow(usize),
    Weighted(f64),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Arw => write!(f, "ARW"),
            Method::FixedWindow(k) => write!(f, "V_{k}"),
            Method::Weighted(rho) => write!(f, "W_{rho}"),
        }
    }
}

impl FromStr for Method {
    type Err = ArwError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "");
        if norm == "arw" {
            return Ok(Method::Arw);
        }
        if let Some(rest) = norm.strip_prefix('v') {
            let k: usize = rest.parse().map_err(|_| {
                ArwError::InvalidArgument(format!("bad fixed-window method '{s}'"))
            })?;
            if k == 0 {
                return Err(ArwError::InvalidArgument("window must be >= 1".into()));
            }
            return Ok(Method::FixedWindow(k));
        }
        if let Some(rest) = norm.strip_prefix('w') {
            let rho: f64 = rest.parse().map_err(|_| {
                ArwError::InvalidArgument(format!("bad weighted method '{s}'"))
            })?;
            if !(rho > 0.0 && rho <= 1.0) {
                return Err(ArwError::InvalidArgument(format!(
                    "rho must lie in (0,1], got {rho}"
                )));
            }
            return Ok(Method::Weighted(rho));
        }
        Err(ArwError::InvalidArgument(format!(
            "unknown method '{s}' (expected arw, v<k>, or w<rho>)"
        )))
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    /// Scenario template; its `seed` field is replaced by each run's seed.
    pub scenario: DriftScenario,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub train_windows: Vec<usize>,
    pub alpha: f64,
    pub delta_prime: f64,
    pub variant: Variant,
    pub grid: WindowGrid,
    pub burn_in: usize,
    /// Fresh samples per period for the regression coverage oracle.
    pub mc_samples: usize,
}

impl ExperimentSpec {
    pub fn new(scenario: DriftScenario) -> Self {
        Self {
            scenario,
            seeds: vec![0],
            methods: vec![Method::Arw],
            train_windows: vec![1],
            alpha: 0.1,
            delta_prime: 0.1,
            variant: Variant::Experiment,
            grid: WindowGrid::Dyadic,
            burn_in: 100,
            mc_samples: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.seeds.is_empty() || self.methods.is_empty() || self.train_windows.is_empty() {
            return Err(ArwError::InvalidArgument(
                "need at least one seed, one method, and one training window".into(),
            ));
        }
        if self.train_windows.iter().any(|&k| k == 0) {
            return Err(ArwError::InvalidArgument(
                "training windows must be >= 1".into(),
            ));
        }
        if self.scenario.periods <= self.burn_in {
            return Err(ArwError::InvalidArgument(format!(
                "periods ({}) must exceed burn_in ({})",
                self.scenario.periods, self.burn_in
            )));
        }
        if self.mc_samples == 0 {
            return Err(ArwError::InvalidArgument("mc_samples must be >= 1".into()));
        }
        QuantileConfig {
            alpha: self.alpha,
            delta_prime: self.delta_prime,
            variant: self.variant,
            grid: self.grid,
        }
        .validate()
    }

    fn quantile_config(&self) -> QuantileConfig {
        QuantileConfig {
            alpha: self.alpha,
            delta_prime: self.delta_prime,
            variant: self.variant,
            grid: self.grid,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub train_window: usize,
    pub method: Method,
    pub report: CoverageReport,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub alpha: f64,
    pub delta_prime: f64,
    pub burn_in: usize,
    pub periods: usize,
    pub seeds: Vec<u64>,
    pub scenario_kind: ScenarioKind,
    pub stationary: bool,
    pub cells: Vec<CellResult>,
}

impl ExperimentResult {
    pub fn cell(&self, train_window: usize, method: Method) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.train_window == train_window && c.method == method)
    }
}

enum Predictor {
    Mean(RollingMean),
    Ols(RollingOls),
}

enum Fitted {
    Mean(f64),
    Ols(Vec<f64>),
}

impl Fitted {
    fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Fitted::Mean(m) => *m,
            Fitted::Ols(c) => predict_linear(c, x),
        }
    }
}

fn mc_rng(seed: u64, t: usize) -> ChaCha8Rng {
    // decorrelate the fresh-sample stream from the data stream
    let mixed = (seed ^ 0x6d63_7276_6f61_6c75).wrapping_add((t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Evaluate every configured method for one seed and one training window.
fn run_seed(spec: &ExperimentSpec, train_window: usize, seed: u64) -> Result<Vec<CoverageReport>> {
    let mut scenario = spec.scenario.clone();
    scenario.seed = seed;
    let stream: Stream = generate_stream(&scenario)?;
    let t_max = stream.periods.len();
    let qcfg = spec.quantile_config();
    let needs_weighted = spec.methods.iter().any(|m| matches!(m, Method::Weighted(_)));

    let mut predictor = match scenario.kind {
        ScenarioKind::GaussianMean => Predictor::Mean(RollingMean::new(train_window)),
        ScenarioKind::LinearRegression => {
            Predictor::Ols(RollingOls::new(train_window, REGRESSION_DIM))
        }
    };

    let mut records: Vec<Vec<PeriodRecord>> = vec![Vec::with_capacity(t_max); spec.methods.len()];
    let mut scores = WindowedScores::new();
    let mut sorted: Vec<(f64, usize)> = Vec::new();

    for t in 1..=t_max {
        let fitted = match &mut predictor {
            Predictor::Mean(m) => {
                m.push_period(&stream.periods[t - 1].train);
                Fitted::Mean(m.mean()?)
            }
            Predictor::Ols(o) => {
                o.push_period(&stream.periods[t - 1].train);
                Fitted::Ols(o.coeffs()?)
            }
        };

        // conformity scores of all calibration batches under the current model
        scores.clear();
        for j in 1..=t {
            let batch: Vec<f64> = stream.periods[j - 1]
                .calib
                .iter()
                .map(|s| (s.y - fitted.predict(&s.x)).abs())
                .collect();
            scores.push_batch(batch)?;
        }
        if needs_weighted {
            sorted.clear();
            for j in 1..=t {
                sorted.extend(scores.batch(j).iter().map(|&v| (v, j)));
            }
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        }

        let thresholds: Vec<(f64, MethodTag)> = spec
            .methods
            .iter()
            .map(|m| -> Result<(f64, MethodTag)> {
                Ok(match *m {
                    Method::Arw => {
                        let trace = select_window(&scores, &qcfg)?;
                        (trace.chosen_q, MethodTag::Arw { chosen_k: trace.chosen_k })
                    }
                    Method::FixedWindow(k) => {
                        let k = k.min(t);
                        (
                            scores.window_quantile(t, k, spec.alpha)?,
                            MethodTag::FixedWindow(k),
                        )
                    }
                    Method::Weighted(rho) => (
                        weighted_threshold_sorted(&sorted, t, rho, spec.alpha),
                        MethodTag::Weighted(rho),
                    ),
                })
            })
            .collect::<Result<_>>()?;

        match &stream.truth[t - 1] {
            PeriodTruth::Gaussian { mean } => {
                let center = match fitted {
                    Fitted::Mean(m) => m,
                    Fitted::Ols(_) => unreachable!(),
                };
                for (mi, &(q, method)) in thresholds.iter().enumerate() {
                    let iv = PredictionInterval {
                        center,
                        radius: q,
                        threshold: q,
                        method,
                    };
                    let coverage = exact_coverage_gaussian(&iv, *mean)?;
                    records[mi].push(PeriodRecord {
                        t,
                        coverage,
                        width: 2.0 * q,
                    });
                }
            }
            PeriodTruth::Regression { beta } => {
                // score every fresh sample once; methods differ only in the
                // threshold applied to the residuals
                let mut rng = mc_rng(seed, t);
                let mut residuals = Vec::with_capacity(spec.mc_samples);
                let mut x = vec![0.0; beta.len()];
                for _ in 0..spec.mc_samples {
                    for v in x.iter_mut() {
                        *v = rng.sample(StandardNormal);
                    }
                    let y = predict_linear(beta, &x) + rng.sample::<f64, _>(StandardNormal);
                    residuals.push((y - fitted.predict(&x)).abs());
                }
                for (mi, &(q, _)) in thresholds.iter().enumerate() {
                    let hits = residuals.iter().filter(|&&r| r <= q).count();
                    records[mi].push(PeriodRecord {
                        t,
                        coverage: hits as f64 / spec.mc_samples as f64,
                        width: 2.0 * q,
                    });
                }
            }
        }
    }

    spec.methods
        .iter()
        .zip(records)
        .map(|(m, recs)| {
            CoverageReport::from_run(m.to_string(), train_window, spec.alpha, spec.burn_in, recs)
        })
        .collect()
}

/// Run the full experiment grid, parallelized over seeds.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let mut cells = Vec::new();
    for &tw in &spec.train_windows {
        let per_seed: Vec<Vec<CoverageReport>> = spec
            .seeds
            .par_iter()
            .map(|&seed| run_seed(spec, tw, seed))
            .collect::<Result<_>>()?;
        for (mi, method) in spec.methods.iter().enumerate() {
            let reports: Vec<CoverageReport> =
                per_seed.iter().map(|r| r[mi].clone()).collect();
            cells.push(CellResult {
                train_window: tw,
                method: *method,
                report: aggregate_runs(&reports)?,
            });
        }
    }
    Ok(ExperimentResult {
        alpha: spec.alpha,
        delta_prime: spec.delta_prime,
        burn_in: spec.burn_in,
        periods: spec.scenario.periods,
        seeds: spec.seeds.clone(),
        scenario_kind: spec.scenario.kind,
        stationary: matches!(spec.scenario.pattern, DriftPattern::Stationary),
        cells,
    })
}

#[derive(Serialize)]
struct SummaryCell<'a> {
    train_window: usize,
    method: &'a str,
    /// MAE of coverage in percent, rounded to 2 decimal places.
    mae_percent: f64,
    mae_se_percent: f64,
    mean_width: f64,
    capped_periods: usize,
}

#[derive(Serialize)]
struct Summary<'a> {
    scenario: &'a str,
    stationary: bool,
    periods: usize,
    alpha: f64,
    delta_prime: f64,
    burn_in: usize,
    n_seeds: usize,
    seeds: &'a [u64],
    cells: Vec<SummaryCell<'a>>,
}

fn pct2(x: f64) -> f64 {
    (x * 10_000.0).round() / 100.0
}

/// Deterministic summary document: the method-by-training-window MAE matrix.
pub fn summary_json(result: &ExperimentResult) -> String {
    let methods: Vec<String> = result.cells.iter().map(|c| c.report.method.clone()).collect();
    let summary = Summary {
        scenario: match result.scenario_kind {
            ScenarioKind::GaussianMean => "gaussian-mean",
            ScenarioKind::LinearRegression => "linear-regression",
        },
        stationary: result.stationary,
        periods: result.periods,
        alpha: result.alpha,
        delta_prime: result.delta_prime,
        burn_in: result.burn_in,
        n_seeds: result.seeds.len(),
        seeds: &result.seeds,
        cells: result
            .cells
            .iter()
            .zip(&methods)
            .map(|(c, m)| SummaryCell {
                train_window: c.train_window,
                method: m,
                mae_percent: pct2(c.report.mae),
                mae_se_percent: pct2(c.report.mae_se),
                mean_width: c.report.mean_width,
                capped_periods: c.report.capped_periods,
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&summary).expect("summary serialization");
    s.push('\n');
    s
}

/// Per-period CSV of seed-averaged coverage and width.
pub fn per_period_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("t,train_window,method,coverage,width\n");
    for cell in &result.cells {
        for rec in &cell.report.per_period {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                rec.t, cell.train_window, cell.report.method, rec.coverage, rec.width
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::BaseSequenceParams;

    fn small_spec() -> ExperimentSpec {
        let scenario = DriftScenario {
            kind: ScenarioKind::GaussianMean,
            pattern: DriftPattern::Stationary,
            periods: 120,
            pattern_seed: 2024,
            seed: 0,
        };
        let mut spec = ExperimentSpec::new(scenario);
        spec.seeds = vec![1, 2, 3];
        spec.methods = vec![Method::Arw, Method::FixedWindow(1024)];
        spec.train_windows = vec![1, 16];
        spec
    }

    #[test]
    fn method_parsing_round_trips() {
        assert_eq!("arw".parse::<Method>().unwrap(), Method::Arw);
        assert_eq!("V_16".parse::<Method>().unwrap(), Method::FixedWindow(16));
        assert_eq!("v1024".parse::<Method>().unwrap(), Method::FixedWindow(1024));
        assert_eq!("w0.99".parse::<Method>().unwrap(), Method::Weighted(0.99));
        assert_eq!("W_0.25".parse::<Method>().unwrap(), Method::Weighted(0.25));
        assert!("x3".parse::<Method>().is_err());
        assert!("w1.5".parse::<Method>().is_err());
        assert_eq!(Method::FixedWindow(16).to_string(), "V_16");
        assert_eq!(Method::Weighted(0.99).to_string(), "W_0.99");
    }

    #[test]
    fn summary_has_matrix_shape() {
        let result = run_experiment(&small_spec()).unwrap();
        // 2 training windows x 2 methods
        assert_eq!(result.cells.len(), 4);
        let json = summary_json(&result);
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed["cells"].as_array().unwrap().len(), 4);
        assert_eq!(parsed["n_seeds"], 3);
    }

    #[test]
    fn rerun_is_byte_identical() {
        let spec = small_spec();
        let a = summary_json(&run_experiment(&spec).unwrap());
        let b = summary_json(&run_experiment(&spec).unwrap());
        assert_eq!(a, b);
        let ca = per_period_csv(&run_experiment(&spec).unwrap());
        let cb = per_period_csv(&run_experiment(&spec).unwrap());
        assert_eq!(ca, cb);
    }

    #[test]
    fn spec_validation() {
        let mut spec = small_spec();
        spec.seeds.clear();
        assert!(run_experiment(&spec).is_err());

        let mut spec = small_spec();
        spec.burn_in = 200;
        assert!(run_experiment(&spec).is_err());

        let mut spec = small_spec();
        spec.scenario.pattern = DriftPattern::FourRegime(BaseSequenceParams::with_len(64));
        assert!(spec.validate().is_err(), "length mismatch must be rejected");
    }

    #[test]
    fn regression_pipeline_runs() {
        let scenario = DriftScenario {
            kind: ScenarioKind::LinearRegression,
            pattern: DriftPattern::Stationary,
            periods: 110,
            pattern_seed: 2024,
            seed: 0,
        };
        let mut spec = ExperimentSpec::new(scenario);
        spec.seeds = vec![4];
        spec.mc_samples = 200;
        spec.methods = vec![Method::Arw, Method::Weighted(0.9)];
        let result = run_experiment(&spec).unwrap();
        let arw = &result.cell(1, Method::Arw).unwrap().report;
        assert!(arw.mae >= 0.0 && arw.mae <= 1.0);
        assert!(arw.per_period.len() == 110);
    }
}
