//! Rolling-window empirical CDFs, left/right quantiles, and adaptive window
//! selection.
//!
//! Scores arrive in per-period batches. For a window of the last `k` periods,
//! the pooled empirical quantile is a candidate estimate of the current
//! population quantile. Window selection trades off an estimated drift bias
//! (`bias_proxy`) against a stochastic error bound (`psi`), choosing the
//! window minimizing their sum.

use serde::Serialize;

use crate::{ArwError, Result};

/// Which constant set to use in the stochastic error bound and bias proxy.
///
/// `Theory` carries the constants from the high-probability analysis;
/// `Experiment` is the simplified variant with smaller constants used for
/// practical runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Variant {
    Theory,
    Experiment,
}

/// Candidate window grid for selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WindowGrid {
    /// All windows `k = 1..=t`.
    Full,
    /// Powers of two `1, 2, 4, ...` plus `t` itself.
    Dyadic,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct QuantileConfig {
    /// Miscoverage level in (0, 1).
    pub alpha: f64,
    /// Confidence hyperparameter in (0, 1).
    pub delta_prime: f64,
    pub variant: Variant,
    pub grid: WindowGrid,
}

impl QuantileConfig {
    /// Experiment-variant config on the dyadic grid (the practical default).
    pub fn experiment(alpha: f64, delta_prime: f64) -> Self {
        Self {
            alpha,
            delta_prime,
            variant: Variant::Experiment,
            grid: WindowGrid::Dyadic,
        }
    }

    /// Theory-variant config on the full grid.
    pub fn theory(alpha: f64, delta_prime: f64) -> Self {
        Self {
            alpha,
            delta_prime,
            variant: Variant::Theory,
            grid: WindowGrid::Full,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ArwError::InvalidArgument(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if !(self.delta_prime > 0.0 && self.delta_prime < 1.0) {
            return Err(ArwError::InvalidArgument(format!(
                "delta_prime must lie in (0,1), got {}",
                self.delta_prime
            )));
        }
        Ok(())
    }
}

/// Append-only log of per-period score batches with prefix-summed sizes.
///
/// Batches are stored sorted internally; a batch is a multiset, so the
/// arrival order within a period carries no information.
#[derive(Debug, Clone, Default)]
pub struct WindowedScores {
    batches: Vec<Vec<f64>>,
    prefix: Vec<usize>,
}

impl WindowedScores {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_batches<I, B>(batches: I) -> Result<Self>
    where
        I: IntoIterator<Item = B>,
        B: Into<Vec<f64>>,
    {
        let mut s = Self::new();
        for b in batches {
            s.push_batch(b.into())?;
        }
        Ok(s)
    }

    /// Append one period's scores. The batch must be non-empty and finite.
    pub fn push_batch(&mut self, mut batch: Vec<f64>) -> Result<()> {
        if batch.is_empty() {
            return Err(ArwError::InvalidArgument(
                "score batch must be non-empty".into(),
            ));
        }
        if batch.iter().any(|v| !v.is_finite()) {
            return Err(ArwError::InvalidArgument(
                "score batch contains a non-finite value".into(),
            ));
        }
        batch.sort_unstable_by(f64::total_cmp);
        let total = self.total() + batch.len();
        self.batches.push(batch);
        self.prefix.push(total);
        Ok(())
    }

    /// Drop all batches while keeping allocations.
    pub fn clear(&mut self) {
        self.batches.clear();
        self.prefix.clear();
    }

    /// Number of periods `t` recorded so far.
    pub fn periods(&self) -> usize {
        self.batches.len()
    }

    /// Total number of scores across all periods.
    pub fn total(&self) -> usize {
        self.prefix.last().copied().unwrap_or(0)
    }

    /// Sorted scores of period `j` (1-based).
    pub fn batch(&self, j: usize) -> &[f64] {
        &self.batches[j - 1]
    }

    fn check_window(&self, t: usize, k: usize) -> Result<()> {
        if t < 1 || t > self.periods() {
            return Err(ArwError::WindowOutOfRange(format!(
                "period t={} outside recorded history of {} periods",
                t,
                self.periods()
            )));
        }
        if k < 1 || k > t {
            return Err(ArwError::WindowOutOfRange(format!(
                "window k={} must satisfy 1 <= k <= t={}",
                k, t
            )));
        }
        Ok(())
    }

    /// Pooled sample count over the last `k` periods ending at `t`.
    pub fn window_count(&self, t: usize, k: usize) -> Result<usize> {
        self.check_window(t, k)?;
        let hi = self.prefix[t - 1];
        let lo = if t - k == 0 { 0 } else { self.prefix[t - k - 1] };
        Ok(hi - lo)
    }

    /// Empirical CDF of the pooled window at `x`: the fraction of scores
    /// in periods `(t-k, t]` that are `<= x`.
    pub fn window_cdf(&self, t: usize, k: usize, x: f64) -> Result<f64> {
        let count = self.window_count(t, k)?;
        let mut leq = 0usize;
        for j in (t - k)..t {
            leq += self.batches[j].partition_point(|&v| v <= x);
        }
        Ok(leq as f64 / count as f64)
    }

    fn collect_window(&self, t: usize, k: usize, buf: &mut Vec<f64>) {
        buf.clear();
        for j in (t - k)..t {
            buf.extend_from_slice(&self.batches[j]);
        }
    }

    /// Left `(1 - alpha)`-quantile of the pooled window.
    pub fn window_quantile(&self, t: usize, k: usize, alpha: f64) -> Result<f64> {
        self.check_window(t, k)?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(ArwError::InvalidArgument(format!(
                "alpha must lie in (0,1), got {alpha}"
            )));
        }
        let mut buf = Vec::new();
        self.collect_window(t, k, &mut buf);
        left_quantile(&buf, 1.0 - alpha)
    }
}

fn order_statistic(values: &[f64], r: usize) -> f64 {
    debug_assert!(r >= 1 && r <= values.len());
    let mut buf = values.to_vec();
    let (_, v, _) = buf.select_nth_unstable_by(r - 1, f64::total_cmp);
    *v
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(ArwError::InvalidArgument(format!(
            "gamma must lie in (0,1), got {gamma}"
        )));
    }
    Ok(())
}

/// Smallest rank `r` in `[1, n]` with `r / n >= gamma`, evaluating the ratio
/// exactly as the empirical CDF does. Starting from `ceil(gamma * n)` alone is
/// not enough: the product can round across an integer (e.g. 0.55 * 100), so
/// the candidate is nudged until it agrees with the CDF comparison.
fn left_rank(gamma: f64, n: usize) -> usize {
    let nf = n as f64;
    let mut r = ((gamma * nf).ceil() as usize).clamp(1, n);
    while r > 1 && (r - 1) as f64 / nf >= gamma {
        r -= 1;
    }
    while r < n && (r as f64 / nf) < gamma {
        r += 1;
    }
    r
}

/// Smallest rank `r` in `[1, n]` with `r / n > gamma`, capped at `n`.
fn right_rank(gamma: f64, n: usize) -> usize {
    let nf = n as f64;
    let mut r = ((gamma * nf).floor() as usize + 1).clamp(1, n);
    while r > 1 && (r - 1) as f64 / nf > gamma {
        r -= 1;
    }
    while r < n && (r as f64 / nf) <= gamma {
        r += 1;
    }
    r
}

/// Left `gamma`-quantile of a multiset: `inf {x : F_hat(x) >= gamma}`,
/// i.e. the `ceil(gamma * n)`-th order statistic.
pub fn left_quantile(values: &[f64], gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if values.is_empty() {
        return Err(ArwError::InvalidArgument(
            "quantile of an empty multiset".into(),
        ));
    }
    Ok(order_statistic(values, left_rank(gamma, values.len())))
}

/// Right `gamma`-quantile of a multiset: `inf {x : F_hat(x) > gamma}`,
/// i.e. the `(floor(gamma * n) + 1)`-th order statistic, capped at the max.
pub fn right_quantile(values: &[f64], gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if values.is_empty() {
        return Err(ArwError::InvalidArgument(
            "quantile of an empty multiset".into(),
        ));
    }
    Ok(order_statistic(values, right_rank(gamma, values.len())))
}

/// Stochastic error bound for a pooled window with `count` samples.
///
/// Strictly decreasing in `count`; the `Theory` variant carries larger
/// constants than the `Experiment` variant.
pub fn psi(alpha: f64, delta: f64, count: usize, variant: Variant) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ArwError::InvalidArgument(format!(
            "delta must lie in (0,1), got {delta}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ArwError::InvalidArgument(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    if count == 0 {
        return Err(ArwError::InvalidArgument("empty window".into()));
    }
    let b = count as f64;
    let v = alpha * (1.0 - alpha);
    Ok(match variant {
        Variant::Theory => {
            let l = (2.0 / delta).ln();
            1.25 * (2.0 * v * l / b).sqrt() + 4.0 * l / b
        }
        Variant::Experiment => {
            let l = (1.0 / delta).ln();
            (v * l / b).sqrt() + 1.0 / b
        }
    })
}

fn inner_windows(t: usize, k: usize, grid: WindowGrid) -> Vec<usize> {
    match grid {
        WindowGrid::Full => (1..=k).collect(),
        WindowGrid::Dyadic => dyadic_grid(t).into_iter().filter(|&i| i <= k).collect(),
    }
}

/// Candidate windows `1, 2, 4, ..., 2^(m-2), t` for the dyadic grid.
pub fn dyadic_grid(t: usize) -> Vec<usize> {
    let mut grid = Vec::new();
    let mut k = 1usize;
    while k < t {
        grid.push(k);
        k *= 2;
    }
    grid.push(t);
    grid
}

/// Data-driven estimate of the drift bias of window `k` at time `t`.
///
/// Evaluates how far shorter windows' empirical CDFs sit from the target
/// level at the window-`k` quantile, after subtracting the stochastic error
/// of both windows. Always non-negative by the positive-part clamp.
pub fn bias_proxy(
    scores: &WindowedScores,
    t: usize,
    k: usize,
    alpha: f64,
    delta: f64,
    variant: Variant,
    grid: WindowGrid,
) -> Result<f64> {
    scores.check_window(t, k)?;
    let q_hat = scores.window_quantile(t, k, alpha)?;
    bias_proxy_at(scores, t, k, q_hat, alpha, delta, variant, grid)
}

/// Same as [`bias_proxy`] but with the window-`k` quantile precomputed.
#[allow(clippy::too_many_arguments)]
fn bias_proxy_at(
    scores: &WindowedScores,
    t: usize,
    k: usize,
    q_hat: f64,
    alpha: f64,
    delta: f64,
    variant: Variant,
    grid: WindowGrid,
) -> Result<f64> {
    let count_k = scores.window_count(t, k)?;
    let (psi_k, half) = match variant {
        Variant::Theory => (psi(alpha, delta / 2.0, count_k, variant)?, delta / 2.0),
        Variant::Experiment => (psi(alpha, delta, count_k, variant)?, delta),
    };

    let mut max_excess = 0.0f64;
    let mut leq = 0usize;
    let mut covered = 0usize; // periods already counted, scanning backwards from t
    for i in inner_windows(t, k, grid) {
        while covered < i {
            leq += scores.batches[t - 1 - covered].partition_point(|&v| v <= q_hat);
            covered += 1;
        }
        let count_i = scores.window_count(t, i)?;
        let f_i = leq as f64 / count_i as f64;
        let psi_i = psi(alpha, half, count_i, variant)?;
        let threshold = match variant {
            Variant::Theory => 1.2 * psi_k + 0.8 * psi_i,
            Variant::Experiment => psi_k + psi_i,
        };
        let excess = ((f_i - (1.0 - alpha)).abs() - threshold).max(0.0);
        max_excess = max_excess.max(excess);
    }
    Ok(5.0 / 12.0 * max_excess)
}

/// Per-window diagnostics produced by [`select_window`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WindowEval {
    pub k: usize,
    pub count: usize,
    pub q_hat: f64,
    pub psi: f64,
    pub phi_hat: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionTrace {
    pub entries: Vec<WindowEval>,
    pub chosen_k: usize,
    pub chosen_q: f64,
}

/// Evaluate every candidate window at the latest period and choose the one
/// minimizing estimated bias plus stochastic error. Ties break toward the
/// smallest window, so the result is deterministic.
pub fn select_window(scores: &WindowedScores, config: &QuantileConfig) -> Result<SelectionTrace> {
    config.validate()?;
    let t = scores.periods();
    if t == 0 {
        return Err(ArwError::InvalidArgument(
            "cannot select a window from empty history".into(),
        ));
    }
    let grid = match config.grid {
        WindowGrid::Full => (1..=t).collect::<Vec<_>>(),
        WindowGrid::Dyadic => dyadic_grid(t),
    };

    let mut entries = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, usize, f64)> = None;
    for k in grid {
        let count = scores.window_count(t, k)?;
        let q_hat = scores.window_quantile(t, k, config.alpha)?;
        let psi_k = psi(config.alpha, config.delta_prime, count, config.variant)?;
        let phi_hat = bias_proxy_at(
            scores,
            t,
            k,
            q_hat,
            config.alpha,
            config.delta_prime,
            config.variant,
            config.grid,
        )?;
        let objective = phi_hat + psi_k;
        entries.push(WindowEval {
            k,
            count,
            q_hat,
            psi: psi_k,
            phi_hat,
            objective,
        });
        if best.map_or(true, |(obj, _, _)| objective < obj) {
            best = Some((objective, k, q_hat));
        }
    }
    let (_, chosen_k, chosen_q) = best.unwrap();
    Ok(SelectionTrace {
        entries,
        chosen_k,
        chosen_q,
    })
}
