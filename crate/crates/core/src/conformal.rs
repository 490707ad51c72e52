//! Conformity scores and prediction-interval construction.
//!
//! Three interval families share the same calibration-score log: the adaptive
//! rolling window (threshold from [`select_window`]), fixed windows, and the
//! exponentially-weighted nonexchangeable split-conformal baseline.

use serde::Serialize;

use crate::quantile::{select_window, QuantileConfig, SelectionTrace, WindowedScores};
use crate::{ArwError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    AbsoluteResidual,
    Studentized,
}

/// Conformity score `s(x, y)` built from a point predictor and an optional
/// positive scale function.
pub struct ConformityScore<'a, X: ?Sized> {
    predictor: &'a (dyn Fn(&X) -> f64 + Sync),
    scale: Option<&'a (dyn Fn(&X) -> f64 + Sync)>,
}

impl<'a, X: ?Sized> ConformityScore<'a, X> {
    /// `s(x, y) = |y - mu_hat(x)|`.
    pub fn absolute_residual(predictor: &'a (dyn Fn(&X) -> f64 + Sync)) -> Self {
        Self {
            predictor,
            scale: None,
        }
    }

    /// `s(x, y) = |y - mu_hat(x)| / sigma_hat(x)` with `sigma_hat > 0`.
    pub fn studentized(
        predictor: &'a (dyn Fn(&X) -> f64 + Sync),
        scale: &'a (dyn Fn(&X) -> f64 + Sync),
    ) -> Self {
        Self {
            predictor,
            scale: Some(scale),
        }
    }

    pub fn kind(&self) -> ScoreKind {
        if self.scale.is_some() {
            ScoreKind::Studentized
        } else {
            ScoreKind::AbsoluteResidual
        }
    }

    pub fn predict(&self, x: &X) -> f64 {
        (self.predictor)(x)
    }

    /// Scale at `x`; identically 1 for the absolute-residual score.
    pub fn scale_at(&self, x: &X) -> Result<f64> {
        match self.scale {
            None => Ok(1.0),
            Some(s) => {
                let v = s(x);
                if v > 0.0 {
                    Ok(v)
                } else {
                    Err(ArwError::InvalidArgument(format!(
                        "scale must be strictly positive, got {v}"
                    )))
                }
            }
        }
    }

    pub fn score(&self, x: &X, y: f64) -> Result<f64> {
        let r = (y - self.predict(x)).abs();
        Ok(r / self.scale_at(x)?)
    }
}

/// Score every `(x, y)` pair of a batch.
pub fn score_batch<X>(score: &ConformityScore<'_, X>, batch: &[(X, f64)]) -> Result<Vec<f64>> {
    batch.iter().map(|(x, y)| score.score(x, *y)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum MethodTag {
    Arw { chosen_k: usize },
    FixedWindow(usize),
    Weighted(f64),
}

/// Interval `[center - radius, center + radius]` with the score threshold
/// that produced it. An infinite threshold means the whole space is covered.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PredictionInterval {
    pub center: f64,
    pub radius: f64,
    pub threshold: f64,
    pub method: MethodTag,
}

impl PredictionInterval {
    pub fn lower(&self) -> f64 {
        self.center - self.radius
    }

    pub fn upper(&self) -> f64 {
        self.center + self.radius
    }

    /// Exact membership test at the score level: `s <= threshold`.
    pub fn contains_score(&self, score: f64) -> bool {
        score <= self.threshold
    }

    pub fn contains(&self, y: f64) -> bool {
        y >= self.lower() && y <= self.upper()
    }

    /// True when the threshold landed on the virtual infinity atom.
    pub fn is_unbounded(&self) -> bool {
        self.threshold.is_infinite()
    }
}

fn interval(center: f64, scale: f64, threshold: f64, method: MethodTag) -> Result<PredictionInterval> {
    if !(scale > 0.0) {
        return Err(ArwError::InvalidArgument(format!(
            "scale must be strictly positive, got {scale}"
        )));
    }
    Ok(PredictionInterval {
        center,
        radius: threshold * scale,
        threshold,
        method,
    })
}

/// Adaptive rolling-window interval: selects the window, then uses its
/// quantile as the score threshold. `scale` is 1 for absolute residuals.
pub fn arw_interval(
    calibration: &WindowedScores,
    config: &QuantileConfig,
    center: f64,
    scale: f64,
) -> Result<(PredictionInterval, SelectionTrace)> {
    let trace = select_window(calibration, config)?;
    let iv = interval(
        center,
        scale,
        trace.chosen_q,
        MethodTag::Arw {
            chosen_k: trace.chosen_k,
        },
    )?;
    Ok((iv, trace))
}

/// Fixed-window interval; the window is truncated to the available history.
pub fn fixed_window_interval(
    calibration: &WindowedScores,
    k: usize,
    alpha: f64,
    center: f64,
    scale: f64,
) -> Result<PredictionInterval> {
    if k < 1 {
        return Err(ArwError::InvalidArgument("window k must be >= 1".into()));
    }
    let t = calibration.periods();
    if t == 0 {
        return Err(ArwError::InvalidArgument("empty calibration history".into()));
    }
    let k = k.min(t);
    let q = calibration.window_quantile(t, k, alpha)?;
    interval(center, scale, q, MethodTag::FixedWindow(k))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct WeightedBaselineConfig {
    /// Geometric decay rate in (0, 1].
    pub rho: f64,
    pub alpha: f64,
}

impl WeightedBaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(ArwError::InvalidArgument(format!(
                "rho must lie in (0,1], got {}",
                self.rho
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ArwError::InvalidArgument(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Weighted threshold over pre-sorted `(score, period)` pairs.
///
/// Every score from period `j` carries weight `rho^(t-j)`; a virtual
/// infinity atom of weight 1 stands in for the test point. Returns the left
/// `(1-alpha)`-quantile of the normalized weighted distribution, which is
/// `+inf` when the atom is needed.
pub fn weighted_threshold_sorted(
    sorted: &[(f64, usize)],
    t: usize,
    rho: f64,
    alpha: f64,
) -> f64 {
    let mut pow = vec![1.0f64; t];
    for d in 1..t {
        pow[d] = pow[d - 1] * rho;
    }
    let total: f64 = sorted.iter().map(|&(_, j)| pow[t - j]).sum::<f64>() + 1.0;
    let target = (1.0 - alpha) * total;
    let mut cum = 0.0;
    for &(score, j) in sorted {
        cum += pow[t - j];
        if cum >= target {
            return score;
        }
    }
    f64::INFINITY
}

/// Weighted split-conformal threshold over the full calibration history.
pub fn weighted_threshold(
    calibration: &WindowedScores,
    config: &WeightedBaselineConfig,
) -> Result<f64> {
    config.validate()?;
    let t = calibration.periods();
    if t == 0 {
        return Err(ArwError::InvalidArgument("empty calibration history".into()));
    }
    let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(calibration.total());
    for j in 1..=t {
        pairs.extend(calibration.batch(j).iter().map(|&v| (v, j)));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(weighted_threshold_sorted(&pairs, t, config.rho, config.alpha))
}

pub fn weighted_interval(
    calibration: &WindowedScores,
    config: &WeightedBaselineConfig,
    center: f64,
    scale: f64,
) -> Result<PredictionInterval> {
    let q = weighted_threshold(calibration, config)?;
    interval(center, scale, q, MethodTag::Weighted(config.rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ws(batches: &[&[f64]]) -> WindowedScores {
        WindowedScores::from_batches(batches.iter().map(|b| b.to_vec())).unwrap()
    }

    #[test]
    fn score_batch_examples() {
        let zero = |_: &f64| 0.0;
        let s = ConformityScore::absolute_residual(&zero);
        assert_eq!(s.score(&0.0, 3.0).unwrap(), 3.0);
        assert_eq!(s.kind(), ScoreKind::AbsoluteResidual);

        let perfect = |x: &f64| *x;
        let s = ConformityScore::absolute_residual(&perfect);
        let scores = score_batch(&s, &[(1.0, 1.0), (2.0, 2.0)]).unwrap();
        assert!(scores.iter().all(|&v| v == 0.0));

        let two = |_: &f64| 2.0;
        let s = ConformityScore::studentized(&zero, &two);
        assert_eq!(s.score(&0.0, 3.0).unwrap(), 1.5);
        assert_eq!(s.kind(), ScoreKind::Studentized);
    }

    #[test]
    fn studentized_rejects_nonpositive_scale() {
        let zero = |_: &f64| 0.0;
        let bad = |_: &f64| -1.0;
        let s = ConformityScore::studentized(&zero, &bad);
        assert!(s.score(&0.0, 1.0).is_err());
    }

    #[test]
    fn arw_forced_window_threshold() {
        let cal = ws(&[&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]]);
        let cfg = QuantileConfig::experiment(0.1, 0.1);
        let (iv, trace) = arw_interval(&cal, &cfg, 0.0, 1.0).unwrap();
        assert_eq!(trace.chosen_k, 1);
        assert_eq!(iv.threshold, 9.0);
        assert_eq!(iv.radius, 9.0);
    }

    #[test]
    fn arw_degenerate_scores_give_exact_radius() {
        let cal = ws(&[&[2.5; 6], &[2.5; 3]]);
        let cfg = QuantileConfig::experiment(0.1, 0.1);
        let (iv, _) = arw_interval(&cal, &cfg, 1.0, 1.0).unwrap();
        assert_eq!(iv.radius, 2.5);
        assert_eq!(iv.lower(), -1.5);
        assert_eq!(iv.upper(), 3.5);
    }

    #[test]
    fn fixed_window_truncates_to_history() {
        let cal = ws(&[&[1.0, 5.0], &[2.0], &[3.0, 4.0]]);
        let all = fixed_window_interval(&cal, 100, 0.1, 0.0, 1.0).unwrap();
        let pooled = fixed_window_interval(&cal, 3, 0.1, 0.0, 1.0).unwrap();
        assert_eq!(all.threshold, pooled.threshold);
        assert_eq!(all.method, MethodTag::FixedWindow(3));

        let latest = fixed_window_interval(&cal, 1, 0.5, 0.0, 1.0).unwrap();
        assert_eq!(latest.threshold, 3.0);
    }

    #[test]
    fn weighted_rho_one_single_period_is_split_conformal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let n = rng.gen_range(1..=40);
            let alpha = rng.gen_range(0.05..0.5);
            let batch: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let mut sorted = batch.clone();
            sorted.sort_by(f64::total_cmp);
            let r = ((1.0 - alpha) * (n + 1) as f64).ceil() as usize;
            let expect = if r > n { f64::INFINITY } else { sorted[r - 1] };
            let cal = WindowedScores::from_batches(vec![batch]).unwrap();
            let q = weighted_threshold(&cal, &WeightedBaselineConfig { rho: 1.0, alpha }).unwrap();
            assert_eq!(q, expect);
        }
    }

    #[test]
    fn weighted_small_rho_follows_latest_batch() {
        // old period's weights vanish; the threshold sits inside the new
        // batch (the batch is large enough that the atom is not needed)
        let latest: Vec<f64> = (1..=19).map(f64::from).collect();
        let cal = WindowedScores::from_batches(vec![vec![100.0; 9], latest]).unwrap();
        let q = weighted_threshold(
            &cal,
            &WeightedBaselineConfig {
                rho: 1e-9,
                alpha: 0.1,
            },
        )
        .unwrap();
        assert!(q <= 19.0, "threshold {q} should come from the latest batch");
    }

    #[test]
    fn weighted_matches_per_sample_scan_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let t = rng.gen_range(1..=6);
            let rho: f64 = rng.gen_range(0.1..=1.0);
            let alpha = rng.gen_range(0.05..0.5);
            let batches: Vec<Vec<f64>> = (0..t)
                .map(|_| (0..rng.gen_range(1..=7)).map(|_| rng.gen::<f64>()).collect())
                .collect();

            // independent oracle: explicit per-sample weight list plus atom
            let mut weighted: Vec<(f64, f64)> = Vec::new();
            for (j, b) in batches.iter().enumerate() {
                let w = rho.powi((t - 1 - j) as i32);
                weighted.extend(b.iter().map(|&v| (v, w)));
            }
            weighted.push((f64::INFINITY, 1.0));
            weighted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let total: f64 = weighted.iter().map(|p| p.1).sum();
            let mut cum = 0.0;
            let mut expect = f64::INFINITY;
            for &(v, w) in &weighted {
                cum += w;
                if cum / total >= 1.0 - alpha {
                    expect = v;
                    break;
                }
            }

            let cal = WindowedScores::from_batches(batches).unwrap();
            let q = weighted_threshold(&cal, &WeightedBaselineConfig { rho, alpha }).unwrap();
            assert_eq!(q, expect);
        }
    }

    #[test]
    fn weighted_uniform_at_least_unweighted_pooled() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let t = rng.gen_range(1..=5);
            let n = rng.gen_range(1..=6);
            let batches: Vec<Vec<f64>> = (0..t)
                .map(|_| (0..n).map(|_| rng.gen::<f64>()).collect())
                .collect();
            let cal = WindowedScores::from_batches(batches).unwrap();
            let q_w = weighted_threshold(
                &cal,
                &WeightedBaselineConfig {
                    rho: 1.0,
                    alpha: 0.1,
                },
            )
            .unwrap();
            let q_u = cal.window_quantile(t, t, 0.1).unwrap();
            assert!(q_w >= q_u);
        }
    }

    #[test]
    fn membership_matches_score_comparison() {
        let cal = ws(&[&[0.5, 1.5, 2.5, 3.5]]);
        let iv = fixed_window_interval(&cal, 1, 0.25, 10.0, 1.0).unwrap();
        for y in [7.0, 8.0, 9.0, 10.0, 11.0, 12.5, 13.0] {
            let score = (y - iv.center).abs();
            assert_eq!(iv.contains(y), iv.contains_score(score));
        }
    }

    #[test]
    fn translation_equivariance() {
        // dyadic values keep the float sums exact
        let residuals = [0.25, 1.5, 0.75, 2.0, 0.5];
        let mu = 4.0;
        let shift = 128.0;
        let scores_a: Vec<f64> = residuals.iter().map(|r| (mu + r - mu) as f64).collect();
        let scores_b: Vec<f64> = residuals
            .iter()
            .map(|r| ((mu + shift + r) - (mu + shift)) as f64)
            .collect();
        let cal_a = WindowedScores::from_batches(vec![scores_a]).unwrap();
        let cal_b = WindowedScores::from_batches(vec![scores_b]).unwrap();
        let a = fixed_window_interval(&cal_a, 1, 0.2, mu, 1.0).unwrap();
        let b = fixed_window_interval(&cal_b, 1, 0.2, mu + shift, 1.0).unwrap();
        assert_eq!(a.radius, b.radius);
    }

    proptest! {
        #[test]
        fn thresholds_monotone_in_alpha(
            batches in proptest::collection::vec(
                proptest::collection::vec(-10.0f64..10.0, 1..9), 1..8),
            a1 in 0.05f64..0.45,
            bump in 0.0f64..0.4,
            rho in 0.2f64..1.0,
        ) {
            let a2 = a1 + bump; // a1 <= a2 so threshold(a1) >= threshold(a2)
            let t = batches.len();
            let cal = WindowedScores::from_batches(batches).unwrap();

            let f1 = fixed_window_interval(&cal, t, a1, 0.0, 1.0).unwrap().threshold;
            let f2 = fixed_window_interval(&cal, t, a2, 0.0, 1.0).unwrap().threshold;
            prop_assert!(f1 >= f2);

            let w1 = weighted_threshold(&cal, &WeightedBaselineConfig { rho, alpha: a1 }).unwrap();
            let w2 = weighted_threshold(&cal, &WeightedBaselineConfig { rho, alpha: a2 }).unwrap();
            prop_assert!(w1 >= w2);

            let c1 = QuantileConfig::experiment(a1, 0.1);
            let c2 = QuantileConfig::experiment(a2, 0.1);
            let q1 = arw_interval(&cal, &c1, 0.0, 1.0).unwrap().0.threshold;
            let q2 = arw_interval(&cal, &c2, 0.0, 1.0).unwrap().0.threshold;
            prop_assert!(q1 >= q2);
            for k in 1..=t {
                let qa = cal.window_quantile(t, k, a1).unwrap();
                let qb = cal.window_quantile(t, k, a2).unwrap();
                prop_assert!(qa >= qb);
            }
        }
    }
}
