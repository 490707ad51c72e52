//! Coverage oracles, the MAE-of-coverage metric, and multi-seed aggregation.

use rand::prelude::*;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::conformal::PredictionInterval;
use crate::drift::predict_linear;
use crate::{ArwError, Result};

/// Standard normal CDF via the complementary error function
/// (absolute error well below 1e-12).
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Exact coverage of an interval under `N(mu, 1)`:
/// `Phi(upper - mu) - Phi(lower - mu)`.
pub fn exact_coverage_gaussian(interval: &PredictionInterval, mu: f64) -> Result<f64> {
    if interval.radius.is_nan() || interval.radius < 0.0 {
        return Err(ArwError::InvalidArgument(format!(
            "radius must be non-negative, got {}",
            interval.radius
        )));
    }
    if interval.radius.is_infinite() {
        return Ok(1.0);
    }
    Ok(normal_cdf(interval.upper() - mu) - normal_cdf(interval.lower() - mu))
}

/// Monte-Carlo coverage of an interval rule under the regression model
/// `x ~ N(0, I)`, `y = x . beta + N(0, 1)`: the fraction of `n_mc` fresh
/// pairs with `y` inside `rule(x)`.
pub fn mc_coverage_regression<R, F>(beta: &[f64], n_mc: usize, rng: &mut R, rule: F) -> f64
where
    R: Rng,
    F: Fn(&[f64]) -> (f64, f64),
{
    let mut hits = 0usize;
    let mut x = vec![0.0; beta.len()];
    for _ in 0..n_mc {
        for v in x.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let y = predict_linear(beta, &x) + rng.sample::<f64, _>(StandardNormal);
        let (lo, hi) = rule(&x);
        if y >= lo && y <= hi {
            hits += 1;
        }
    }
    hits as f64 / n_mc as f64
}

/// Mean absolute deviation of per-period coverage from `1 - alpha` after
/// the burn-in. `coverages[i]` is the coverage of period `i + 1`.
pub fn mae_of_coverage(coverages: &[f64], alpha: f64, burn_in: usize) -> Result<f64> {
    let t = coverages.len();
    if t <= burn_in {
        return Err(ArwError::InvalidArgument(format!(
            "need more than burn_in={} periods, got {}",
            burn_in, t
        )));
    }
    let post = &coverages[burn_in..];
    Ok(post.iter().map(|c| (c - (1.0 - alpha)).abs()).sum::<f64>() / post.len() as f64)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PeriodRecord {
    pub t: usize,
    pub coverage: f64,
    pub width: f64,
}

/// Per-method coverage results, either for one seed or aggregated.
#[derive(Debug, Clone, Serialize)]
pub struct CoverageReport {
    pub method: String,
    pub train_window: usize,
    pub alpha: f64,
    pub burn_in: usize,
    pub n_seeds: usize,
    /// Mean over seeds of the per-seed MAE, as a fraction (not percent).
    pub mae: f64,
    /// Standard error of the per-seed MAEs (0 for a single seed).
    pub mae_se: f64,
    /// Mean post-burn-in interval width over periods with finite width.
    pub mean_width: f64,
    /// Post-burn-in periods whose threshold landed on the infinity atom.
    pub capped_periods: usize,
    pub per_period: Vec<PeriodRecord>,
}

impl CoverageReport {
    /// Build a single-seed report from per-period coverages and widths.
    pub fn from_run(
        method: String,
        train_window: usize,
        alpha: f64,
        burn_in: usize,
        records: Vec<PeriodRecord>,
    ) -> Result<Self> {
        let coverages: Vec<f64> = records.iter().map(|r| r.coverage).collect();
        if let Some(bad) = coverages.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(ArwError::InvalidArgument(format!(
                "coverage {bad} outside [0,1]"
            )));
        }
        let mae = mae_of_coverage(&coverages, alpha, burn_in)?;
        let post = &records[burn_in..];
        let capped = post.iter().filter(|r| r.width.is_infinite()).count();
        let finite: Vec<f64> = post
            .iter()
            .map(|r| r.width)
            .filter(|w| w.is_finite())
            .collect();
        let mean_width = if finite.is_empty() {
            f64::INFINITY
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        };
        Ok(Self {
            method,
            train_window,
            alpha,
            burn_in,
            n_seeds: 1,
            mae,
            mae_se: 0.0,
            mean_width,
            capped_periods: capped,
            per_period: records,
        })
    }
}

/// Average per-seed reports of the same cell: MAEs and widths are averaged,
/// dispersion recorded as the standard error of the per-seed MAEs.
pub fn aggregate_runs(reports: &[CoverageReport]) -> Result<CoverageReport> {
    let first = reports
        .first()
        .ok_or_else(|| ArwError::InvalidArgument("no reports to aggregate".into()))?;
    for r in reports {
        if r.method != first.method
            || r.train_window != first.train_window
            || r.alpha != first.alpha
            || r.burn_in != first.burn_in
            || r.per_period.len() != first.per_period.len()
        {
            return Err(ArwError::Inconsistent(
                "reports disagree on method/window/alpha/burn-in/periods".into(),
            ));
        }
    }
    let n = reports.len() as f64;
    let maes: Vec<f64> = reports.iter().map(|r| r.mae).collect();
    let mae = maes.iter().sum::<f64>() / n;
    let mae_se = if reports.len() > 1 {
        let var = maes.iter().map(|m| (m - mae).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    let mean_width = reports.iter().map(|r| r.mean_width).sum::<f64>() / n;
    let capped = reports.iter().map(|r| r.capped_periods).sum();
    let per_period = (0..first.per_period.len())
        .map(|i| PeriodRecord {
            t: first.per_period[i].t,
            coverage: reports.iter().map(|r| r.per_period[i].coverage).sum::<f64>() / n,
            width: reports.iter().map(|r| r.per_period[i].width).sum::<f64>() / n,
        })
        .collect();
    Ok(CoverageReport {
        method: first.method.clone(),
        train_window: first.train_window,
        alpha: first.alpha,
        burn_in: first.burn_in,
        n_seeds: reports.iter().map(|r| r.n_seeds).sum(),
        mae,
        mae_se,
        mean_width,
        capped_periods: capped,
        per_period,
    })
}
