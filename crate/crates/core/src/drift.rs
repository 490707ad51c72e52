//! Synthetic non-stationary streams and rolling point predictors.
//!
//! The four-regime base sequence drives the drifting mean / regression
//! coefficient paths. All randomness comes from ChaCha8 seeded with 64-bit
//! seeds, so identical scenarios reproduce identical streams across runs
//! and platforms.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::{ArwError, Result};

/// Covariate dimension of the regression scenarios.
pub const REGRESSION_DIM: usize = 5;

/// Parameters of the four-regime base sequence: large shifts, a sinusoid,
/// a flat stretch, then a scaled +/-1 random walk.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BaseSequenceParams {
    pub len: usize,
    /// Ends (exclusive) of regimes 1..3; regime 4 runs to `len`.
    pub boundaries: [usize; 3],
    /// Level of the regime-1 square wave.
    pub shift_amplitude: f64,
    /// Periods between regime-1 level switches.
    pub shift_dwell: usize,
    pub sin_amplitude: f64,
    pub sin_period: f64,
    /// Step size of the regime-4 random walk.
    pub walk_step: f64,
}

impl BaseSequenceParams {
    /// Defaults for a sequence of `len` periods: quarter-length regimes,
    /// a unit-level first regime whose large shift lands at the regime
    /// boundary, sinusoid amplitude 0.1 over half a cycle, walk step 0.005.
    pub fn with_len(len: usize) -> Self {
        Self {
            len,
            boundaries: [len / 4, len / 2, 3 * len / 4],
            shift_amplitude: 1.0,
            shift_dwell: (len / 4).max(1),
            sin_amplitude: 0.1,
            sin_period: (len as f64 / 2.0).max(2.0),
            walk_step: 0.005,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [b1, b2, b3] = self.boundaries;
        if self.len < 4 || !(b1 >= 1 && b1 < b2 && b2 < b3 && b3 < self.len) {
            return Err(ArwError::InvalidArgument(format!(
                "invalid segmentation: len={} boundaries={:?}",
                self.len, self.boundaries
            )));
        }
        if self.shift_dwell == 0 || !(self.sin_period > 0.0) {
            return Err(ArwError::InvalidArgument(
                "shift_dwell must be >= 1 and sin_period > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Generate the base sequence. Only regime 4 consumes randomness.
pub fn generate_base_sequence(params: &BaseSequenceParams, seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    let [b1, b2, b3] = params.boundaries;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = Vec::with_capacity(params.len);
    for t in 0..b1 {
        let level = if (t / params.shift_dwell) % 2 == 0 {
            params.shift_amplitude
        } else {
            -params.shift_amplitude
        };
        u.push(level);
    }
    for t in b1..b2 {
        let phase = 2.0 * std::f64::consts::PI * (t - b1) as f64 / params.sin_period;
        u.push(params.sin_amplitude * phase.sin());
    }
    for _ in b2..b3 {
        u.push(0.0);
    }
    let mut walk = 0.0;
    for _ in b3..params.len {
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        walk += sign * params.walk_step;
        u.push(walk);
    }
    Ok(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    GaussianMean,
    LinearRegression,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum DriftPattern {
    Stationary,
    FourRegime(BaseSequenceParams),
}

/// Specification of a synthetic stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftScenario {
    pub kind: ScenarioKind,
    pub pattern: DriftPattern,
    pub periods: usize,
    /// Seed of the drift path; shared across runs so that only the data vary.
    pub pattern_seed: u64,
    /// Seed of the sampled data.
    pub seed: u64,
}

impl DriftScenario {
    pub fn validate(&self) -> Result<()> {
        if self.periods == 0 {
            return Err(ArwError::InvalidArgument("periods must be >= 1".into()));
        }
        if let DriftPattern::FourRegime(p) = &self.pattern {
            if p.len != self.periods {
                return Err(ArwError::InvalidArgument(format!(
                    "base sequence length {} does not match periods {}",
                    p.len, self.periods
                )));
            }
            p.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Sample {
    /// Covariates; empty for mean estimation.
    pub x: Vec<f64>,
    pub y: f64,
}

#[derive(Debug, Clone)]
pub struct PeriodData {
    pub train: Vec<Sample>,
    pub calib: Vec<Sample>,
}

/// Ground truth of one period, enough to evaluate exact or Monte-Carlo
/// coverage. Noise standard deviation is 1 in both cases.
#[derive(Debug, Clone)]
pub enum PeriodTruth {
    Gaussian { mean: f64 },
    Regression { beta: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct Stream {
    pub periods: Vec<PeriodData>,
    pub truth: Vec<PeriodTruth>,
}

/// Scalar drift path underlying the scenario: `mu_t` for mean estimation
/// (5x the base sequence) or the coefficient multiplier for regression
/// (2x the base sequence; every coordinate of beta equals it).
pub fn drift_path(scenario: &DriftScenario) -> Result<Vec<f64>> {
    scenario.validate()?;
    match (&scenario.pattern, scenario.kind) {
        (DriftPattern::Stationary, ScenarioKind::GaussianMean) => {
            Ok(vec![0.0; scenario.periods])
        }
        (DriftPattern::Stationary, ScenarioKind::LinearRegression) => {
            Ok(vec![1.0 / REGRESSION_DIM as f64; scenario.periods])
        }
        (DriftPattern::FourRegime(p), kind) => {
            let base = generate_base_sequence(p, scenario.pattern_seed)?;
            let factor = match kind {
                ScenarioKind::GaussianMean => 5.0,
                ScenarioKind::LinearRegression => 2.0,
            };
            Ok(base.into_iter().map(|u| factor * u).collect())
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Generate training and calibration batches plus the per-period truth.
///
/// Gaussian mean: `|train| ~ U{1..9}`, `|calib| = |train|`, samples
/// `N(mu_t, 1)`. Linear regression: `|calib| ~ U{1..9}`, `|train| = 3|calib|`,
/// `x ~ N(0, I_5)`, `y = x . beta_t + N(0, 1)`.
pub fn generate_stream(scenario: &DriftScenario) -> Result<Stream> {
    let path = drift_path(scenario)?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut periods = Vec::with_capacity(scenario.periods);
    let mut truth = Vec::with_capacity(scenario.periods);
    for &level in &path {
        match scenario.kind {
            ScenarioKind::GaussianMean => {
                let n_tr = rng.gen_range(1..=9usize);
                let draw = |rng: &mut ChaCha8Rng| Sample {
                    x: Vec::new(),
                    y: level + normal(rng),
                };
                let train = (0..n_tr).map(|_| draw(&mut rng)).collect();
                let calib = (0..n_tr).map(|_| draw(&mut rng)).collect();
                periods.push(PeriodData { train, calib });
                truth.push(PeriodTruth::Gaussian { mean: level });
            }
            ScenarioKind::LinearRegression => {
                let beta = vec![level; REGRESSION_DIM];
                let n_ca = rng.gen_range(1..=9usize);
                let n_tr = 3 * n_ca;
                let draw = |rng: &mut ChaCha8Rng| {
                    let x: Vec<f64> = (0..REGRESSION_DIM).map(|_| normal(rng)).collect();
                    let mean: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
                    Sample {
                        x,
                        y: mean + normal(rng),
                    }
                };
                let train = (0..n_tr).map(|_| draw(&mut rng)).collect();
                let calib = (0..n_ca).map(|_| draw(&mut rng)).collect();
                periods.push(PeriodData { train, calib });
                truth.push(PeriodTruth::Regression { beta });
            }
        }
    }
    Ok(Stream { periods, truth })
}

fn window_range(t: usize, k: usize) -> std::ops::Range<usize> {
    (t - k.min(t))..t
}

/// Pooled mean of training samples from the last `k` periods.
pub fn fit_moving_average(periods: &[PeriodData], t: usize, k: usize) -> Result<f64> {
    if t < 1 || t > periods.len() {
        return Err(ArwError::WindowOutOfRange(format!(
            "period t={} outside history of {} periods",
            t,
            periods.len()
        )));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for j in window_range(t, k) {
        for s in &periods[j].train {
            sum += s.y;
            n += 1;
        }
    }
    if n == 0 {
        return Err(ArwError::InvalidArgument(
            "no training samples in window".into(),
        ));
    }
    Ok(sum / n as f64)
}

fn solve_ols(gram: &DMatrix<f64>, xty: &DVector<f64>) -> Vec<f64> {
    // SVD with a relative cutoff gives the minimum-norm solution for
    // rank-deficient windows.
    let svd = gram.clone().svd(true, true);
    let eps = 1e-10 * svd.singular_values.max().max(1.0);
    svd.solve(xty, eps)
        .expect("SVD solve on square system")
        .iter()
        .copied()
        .collect()
}

/// Ordinary least squares (no intercept) over the pooled training window.
pub fn fit_ols(periods: &[PeriodData], t: usize, k: usize) -> Result<Vec<f64>> {
    if t < 1 || t > periods.len() {
        return Err(ArwError::WindowOutOfRange(format!(
            "period t={} outside history of {} periods",
            t,
            periods.len()
        )));
    }
    let mut rows: Vec<&Sample> = Vec::new();
    for j in window_range(t, k) {
        rows.extend(periods[j].train.iter());
    }
    let first = rows
        .first()
        .ok_or_else(|| ArwError::InvalidArgument("no training samples in window".into()))?;
    let dim = first.x.len();
    let mut gram = DMatrix::zeros(dim, dim);
    let mut xty = DVector::zeros(dim);
    for s in &rows {
        for a in 0..dim {
            xty[a] += s.x[a] * s.y;
            for b in 0..dim {
                gram[(a, b)] += s.x[a] * s.x[b];
            }
        }
    }
    Ok(solve_ols(&gram, &xty))
}

pub fn predict_linear(coeffs: &[f64], x: &[f64]) -> f64 {
    coeffs.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Rolling moving-average accumulator: push one period at a time, read the
/// mean of the last `k` pushed periods.
#[derive(Debug)]
pub struct RollingMean {
    k: usize,
    window: VecDeque<(f64, usize)>,
    sum: f64,
    count: usize,
}

impl RollingMean {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            window: VecDeque::new(),
            sum: 0.0,
            count: 0,
        }
    }

    pub fn push_period(&mut self, samples: &[Sample]) {
        let s: f64 = samples.iter().map(|v| v.y).sum();
        self.sum += s;
        self.count += samples.len();
        self.window.push_back((s, samples.len()));
        if self.window.len() > self.k {
            let (old_s, old_n) = self.window.pop_front().unwrap();
            self.sum -= old_s;
            self.count -= old_n;
        }
    }

    pub fn mean(&self) -> Result<f64> {
        if self.count == 0 {
            return Err(ArwError::InvalidArgument(
                "no training samples in window".into(),
            ));
        }
        Ok(self.sum / self.count as f64)
    }
}

/// Rolling OLS accumulator keeping per-period Gram contributions so the
/// trailing period can be subtracted when it leaves the window.
#[derive(Debug)]
pub struct RollingOls {
    k: usize,
    dim: usize,
    window: VecDeque<(DMatrix<f64>, DVector<f64>, usize)>,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    n: usize,
}

impl RollingOls {
    pub fn new(k: usize, dim: usize) -> Self {
        Self {
            k,
            dim,
            window: VecDeque::new(),
            gram: DMatrix::zeros(dim, dim),
            xty: DVector::zeros(dim),
            n: 0,
        }
    }

    pub fn push_period(&mut self, samples: &[Sample]) {
        let mut g = DMatrix::zeros(self.dim, self.dim);
        let mut v = DVector::zeros(self.dim);
        for s in samples {
            for a in 0..self.dim {
                v[a] += s.x[a] * s.y;
                for b in 0..self.dim {
                    g[(a, b)] += s.x[a] * s.x[b];
                }
            }
        }
        self.gram += &g;
        self.xty += &v;
        self.n += samples.len();
        self.window.push_back((g, v, samples.len()));
        if self.window.len() > self.k {
            let (og, ov, on) = self.window.pop_front().unwrap();
            self.gram -= &og;
            self.xty -= &ov;
            self.n -= on;
        }
    }

    pub fn coeffs(&self) -> Result<Vec<f64>> {
        if self.n == 0 {
            return Err(ArwError::InvalidArgument(
                "no training samples in window".into(),
            ));
        }
        Ok(solve_ols(&self.gram, &self.xty))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(kind: ScenarioKind, pattern: DriftPattern, periods: usize, seed: u64) -> DriftScenario {
        DriftScenario {
            kind,
            pattern,
            periods,
            pattern_seed: 2024,
            seed,
        }
    }

    #[test]
    fn base_sequence_deterministic() {
        let p = BaseSequenceParams::with_len(128);
        let a = generate_base_sequence(&p, 42).unwrap();
        let b = generate_base_sequence(&p, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_base_sequence(&p, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn base_sequence_regimes() {
        let mut p = BaseSequenceParams::with_len(160);
        p.shift_dwell = 10;
        let u = generate_base_sequence(&p, 7).unwrap();
        let [b1, b2, b3] = p.boundaries;
        // regime 1 takes only +/- amplitude values and switches every dwell
        let r1 = &u[..b1];
        assert!(r1.iter().all(|&v| v == p.shift_amplitude || v == -p.shift_amplitude));
        assert!(r1.iter().any(|&v| v == p.shift_amplitude));
        assert!(r1.iter().any(|&v| v == -p.shift_amplitude));
        assert_eq!(u[9], p.shift_amplitude);
        assert_eq!(u[10], -p.shift_amplitude);
        // regime 3 has zero variance
        assert!(u[b2..b3].iter().all(|&v| v == u[b2]));
        // regime 4 increments are exactly +/- walk_step
        let mut prev = 0.0;
        for &v in &u[b3..] {
            let inc = v - prev;
            assert!((inc.abs() - p.walk_step).abs() < 1e-12);
            prev = v;
        }
    }

    #[test]
    fn base_sequence_rejects_bad_segmentation() {
        let mut p = BaseSequenceParams::with_len(16);
        p.boundaries = [8, 4, 12];
        assert!(generate_base_sequence(&p, 0).is_err());
    }

    #[test]
    fn stationary_path_is_constant() {
        let s = scenario(ScenarioKind::GaussianMean, DriftPattern::Stationary, 50, 1);
        let path = drift_path(&s).unwrap();
        assert!(path.iter().all(|&v| v == path[0]));
    }

    #[test]
    fn stream_batch_law_gaussian() {
        let s = scenario(ScenarioKind::GaussianMean, DriftPattern::Stationary, 200, 3);
        let stream = generate_stream(&s).unwrap();
        for p in &stream.periods {
            assert!((1..=9).contains(&p.train.len()));
            assert_eq!(p.train.len(), p.calib.len());
            assert!(p.train.iter().all(|s| s.x.is_empty()));
        }
    }

    #[test]
    fn stream_batch_law_regression() {
        let s = scenario(ScenarioKind::LinearRegression, DriftPattern::Stationary, 200, 3);
        let stream = generate_stream(&s).unwrap();
        for p in &stream.periods {
            assert!((1..=9).contains(&p.calib.len()));
            assert_eq!(p.train.len(), 3 * p.calib.len());
            assert!(p.train.iter().all(|s| s.x.len() == REGRESSION_DIM));
        }
    }

    #[test]
    fn stream_deterministic() {
        let s = scenario(ScenarioKind::LinearRegression, DriftPattern::Stationary, 30, 9);
        let a = generate_stream(&s).unwrap();
        let b = generate_stream(&s).unwrap();
        for (pa, pb) in a.periods.iter().zip(&b.periods) {
            for (sa, sb) in pa.train.iter().zip(&pb.train) {
                assert_eq!(sa.y, sb.y);
                assert_eq!(sa.x, sb.x);
            }
        }
    }

    #[test]
    fn stream_mean_matches_target() {
        // law of large numbers on the pooled stationary stream
        let s = scenario(ScenarioKind::GaussianMean, DriftPattern::Stationary, 20_000, 5);
        let stream = generate_stream(&s).unwrap();
        let (mut sum, mut n) = (0.0, 0usize);
        for p in &stream.periods {
            for smp in p.train.iter().chain(&p.calib) {
                sum += smp.y;
                n += 1;
            }
        }
        assert!(n > 100_000);
        let mean = sum / n as f64;
        assert!(mean.abs() < 3.0 / (n as f64).sqrt() * 1.5, "mean={mean}");
    }

    #[test]
    fn covariates_have_identity_covariance() {
        let s = scenario(ScenarioKind::LinearRegression, DriftPattern::Stationary, 5000, 11);
        let stream = generate_stream(&s).unwrap();
        let mut cov = [[0.0f64; REGRESSION_DIM]; REGRESSION_DIM];
        let mut n = 0usize;
        for p in &stream.periods {
            for smp in &p.train {
                for a in 0..REGRESSION_DIM {
                    for b in 0..REGRESSION_DIM {
                        cov[a][b] += smp.x[a] * smp.x[b];
                    }
                }
                n += 1;
            }
        }
        for a in 0..REGRESSION_DIM {
            for b in 0..REGRESSION_DIM {
                let v = cov[a][b] / n as f64;
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 0.05, "cov[{a}][{b}]={v}");
            }
        }
    }

    #[test]
    fn moving_average_examples() {
        let mk = |ys: &[f64]| PeriodData {
            train: ys.iter().map(|&y| Sample { x: vec![], y }).collect(),
            calib: vec![],
        };
        let periods = vec![mk(&[5.0])];
        assert_eq!(fit_moving_average(&periods, 1, 1).unwrap(), 5.0);
        let periods = vec![mk(&[1.0, 2.0]), mk(&[3.0])];
        assert_eq!(fit_moving_average(&periods, 2, 2).unwrap(), 2.0);
        assert_eq!(fit_moving_average(&periods, 2, 100).unwrap(), 2.0);
        assert!(fit_moving_average(&periods, 3, 1).is_err());
    }

    #[test]
    fn rolling_mean_matches_oneshot() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let periods: Vec<PeriodData> = (0..60)
            .map(|_| PeriodData {
                train: (0..rng.gen_range(1..=9))
                    .map(|_| Sample {
                        x: vec![],
                        y: rng.gen::<f64>(),
                    })
                    .collect(),
                calib: vec![],
            })
            .collect();
        for k in [1usize, 4, 16, 100] {
            let mut roll = RollingMean::new(k);
            for t in 1..=periods.len() {
                roll.push_period(&periods[t - 1].train);
                let a = roll.mean().unwrap();
                let b = fit_moving_average(&periods, t, k).unwrap();
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ols_recovers_noiseless_coefficients() {
        let beta = [1.0, -2.0, 0.5, 3.0, -0.25];
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let train: Vec<Sample> = (0..40)
            .map(|_| {
                let x: Vec<f64> = (0..5).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let y = predict_linear(&beta, &x);
                Sample { x, y }
            })
            .collect();
        let periods = vec![PeriodData { train, calib: vec![] }];
        let fitted = fit_ols(&periods, 1, 1).unwrap();
        for (a, b) in fitted.iter().zip(&beta) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn ols_single_sample_minimum_norm() {
        let x = vec![1.0, 2.0, 0.0, -1.0, 3.0];
        let y = 4.0;
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        let expect: Vec<f64> = x.iter().map(|v| v * y / norm2).collect();
        let periods = vec![PeriodData {
            train: vec![Sample { x, y }],
            calib: vec![],
        }];
        let fitted = fit_ols(&periods, 1, 1).unwrap();
        for (a, b) in fitted.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-8, "{fitted:?} vs {expect:?}");
        }
    }

    #[test]
    fn ols_matches_normal_equations_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..20 {
            let n = rng.gen_range(10..40);
            let train: Vec<Sample> = (0..n)
                .map(|_| {
                    let x: Vec<f64> =
                        (0..5).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                    let y = rng.sample::<f64, _>(StandardNormal);
                    Sample { x, y }
                })
                .collect();
            // oracle: explicit pseudo-inverse of the design matrix
            let xm = DMatrix::from_fn(n, 5, |r, c| train[r].x[c]);
            let yv = DVector::from_fn(n, |r, _| train[r].y);
            let oracle = xm
                .clone()
                .svd(true, true)
                .solve(&yv, 1e-12)
                .unwrap();
            let periods = vec![PeriodData { train, calib: vec![] }];
            let fitted = fit_ols(&periods, 1, 1).unwrap();
            for (a, b) in fitted.iter().zip(oracle.iter()) {
                assert!((a - b).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn rolling_ols_matches_oneshot() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let periods: Vec<PeriodData> = (0..40)
            .map(|_| PeriodData {
                train: (0..rng.gen_range(3..=12))
                    .map(|_| {
                        let x: Vec<f64> =
                            (0..5).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                        let y = rng.sample::<f64, _>(StandardNormal);
                        Sample { x, y }
                    })
                    .collect(),
                calib: vec![],
            })
            .collect();
        for k in [1usize, 8, 100] {
            let mut roll = RollingOls::new(k, 5);
            for t in 1..=periods.len() {
                roll.push_period(&periods[t - 1].train);
                let a = roll.coeffs().unwrap();
                let b = fit_ols(&periods, t, k).unwrap();
                for (u, v) in a.iter().zip(&b) {
                    assert!((u - v).abs() < 1e-6);
                }
            }
        }
    }
}
