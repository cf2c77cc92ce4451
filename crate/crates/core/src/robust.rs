//! Robust mean estimation by spectral filtering, and the fixed-design robust
//! least-squares estimator built on top of it.
//!
//! Regression reduces to mean estimation through the points
//! `X_i = M_n^{-1/2} a_i y_i`, whose mean is `M_n^{-1/2} sum_i a_i y_i / n`. The
//! filtered mean `w` is mapped back with `theta = n M_n^{-1/2} w`, so on clean data
//! (no removals) the estimate coincides with ordinary least squares.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, RangeEigen};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDiagnostics {
    pub removed_count: usize,
    /// Top eigenvalue of the covariance of the points that were kept.
    pub final_top_eigenvalue: f64,
    /// Number of eigenpair computations (removals + 1).
    pub iterations: usize,
    /// Indices of removed points, in removal order.
    pub removed: Vec<usize>,
}

/// Empirical mean, accumulated in index order.
pub fn empirical_mean(points: &[DVector<f64>]) -> DVector<f64> {
    let p = points.first().map_or(0, |x| x.len());
    let mut sum = DVector::zeros(p);
    for x in points {
        sum += x;
    }
    sum / points.len() as f64
}

fn mean_of(points: &[DVector<f64>], active: &[usize]) -> DVector<f64> {
    let mut sum = DVector::zeros(points[0].len());
    for &i in active {
        sum += &points[i];
    }
    sum / active.len() as f64
}

fn covariance_of(points: &[DVector<f64>], active: &[usize], mean: &DVector<f64>) -> DMatrix<f64> {
    let p = mean.len();
    let mut cov = DMatrix::zeros(p, p);
    for &i in active {
        let c = &points[i] - mean;
        cov.ger(1.0, &c, &c, 1.0);
    }
    cov / active.len() as f64
}

/// Largest number of points the filter may remove from a set of `n`.
pub fn removal_cap(n: usize) -> usize {
    n.div_ceil(2).min(n.saturating_sub(1))
}

/// Randomised spectral filter.
///
/// While the top eigenvalue `mu` of the empirical covariance is at least
/// `4 * lambda`, removes one point sampled with probability proportional to its
/// squared projection on the top eigenvector. Gives up with
/// [`Error::TooManyRemoved`] once more than [`removal_cap`] removals would be needed.
pub fn filter<R: Rng + ?Sized>(
    points: &[DVector<f64>],
    lambda: f64,
    rng: &mut R,
) -> Result<(DVector<f64>, FilterDiagnostics)> {
    let n = points.len();
    if n == 0 {
        return Err(Error::InvalidInput("filter needs at least one point".into()));
    }
    let p = points[0].len();
    if points.iter().any(|x| x.len() != p) {
        return Err(Error::InvalidInput("filter points have mixed dimensions".into()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidInput(format!("filter threshold must be nonnegative, got {lambda}")));
    }
    let cap = removal_cap(n);
    let mut active: Vec<usize> = (0..n).collect();
    let mut removed = Vec::new();
    let mut mean = empirical_mean(points);
    let mut cov = covariance_of(points, &active, &mean);
    // Running sums, populated once the first removal happens.
    let mut sums: Option<(DVector<f64>, DMatrix<f64>)> = None;

    loop {
        let (mu, v) = linalg::top_eigenpair(&cov);
        let scores: Vec<f64> = active
            .iter()
            .map(|&i| {
                let t = v.dot(&(&points[i] - &mean));
                t * t
            })
            .collect();
        let total: f64 = scores.iter().sum();

        if mu < 4.0 * lambda || mu <= 0.0 || total <= 0.0 {
            let diagnostics = FilterDiagnostics {
                removed_count: removed.len(),
                final_top_eigenvalue: mu,
                iterations: removed.len() + 1,
                removed,
            };
            return Ok((mean, diagnostics));
        }
        if removed.len() >= cap {
            return Err(Error::TooManyRemoved { cap, n });
        }

        let pick = WeightedIndex::new(&scores)
            .map_err(|e| Error::InvalidInput(format!("outlier scores: {e}")))?
            .sample(rng);
        let gone = active.remove(pick);
        removed.push(gone);

        if removed.len() % RESYNC_EVERY == 0 {
            mean = mean_of(points, &active);
            cov = covariance_of(points, &active, &mean);
            sums = None;
        } else {
            let (s1, s2) = sums.get_or_insert_with(|| {
                let mut s1 = DVector::zeros(p);
                let mut s2 = DMatrix::zeros(p, p);
                for &i in active.iter().chain(std::iter::once(&gone)) {
                    s1 += &points[i];
                    s2.ger(1.0, &points[i], &points[i], 1.0);
                }
                (s1, s2)
            });
            let x = &points[gone];
            *s1 -= x;
            s2.ger(-1.0, x, x, 1.0);
            let m = active.len() as f64;
            mean = &*s1 / m;
            cov = &*s2 / m;
            cov.ger(-1.0, &mean, &mean, 1.0);
        }
    }
}

/// Exact recomputation interval for the filter's running moments.
const RESYNC_EVERY: usize = 64;

/// How the filter threshold's second-moment factor is estimated from rewards.
///
/// The threshold is `lambda = max_a ||a||^2_{M_n^{-1}} * s`, where `s` estimates the
/// mean square of the clean rewards. `AllRewards` uses every reported reward,
/// which lets the corrupted rewards inflate `lambda`; the other rules bound their
/// influence.
///
/// The default, `AlphaTrimmed`, discards the largest `2 alpha` share of squared
/// rewards, where `alpha` is the corruption rate the estimator is configured for.
/// With `alpha = 0` it coincides with `AllRewards`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum LambdaRule {
    /// `s = sum_i y_i^2 / n`.
    AllRewards,
    /// `s = sum_i min(y_i^2, c^2) / n`.
    Clipped { magnitude: f64 },
    /// Mean of `y_i^2` after discarding the largest `ceil(fraction * n)` of them.
    Trimmed { fraction: f64 },
    /// `Trimmed` with `fraction = min(2 alpha, 0.49)`.
    AlphaTrimmed,
}

/// Upper limit on the trimmed share of rewards.
pub const MAX_TRIM: f64 = 0.49;

impl LambdaRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LambdaRule::AllRewards | LambdaRule::AlphaTrimmed => Ok(()),
            LambdaRule::Clipped { magnitude } if magnitude > 0.0 && magnitude.is_finite() => Ok(()),
            LambdaRule::Trimmed { fraction } if (0.0..0.5).contains(&fraction) => Ok(()),
            other => Err(Error::config("estimator.lambda_rule", format!("invalid rule {other:?}"))),
        }
    }

    /// The second-moment factor `s` for the given rewards, with `alpha` the assumed
    /// corruption rate.
    pub fn second_moment(&self, rewards: &[f64], alpha: f64) -> f64 {
        let n = rewards.len() as f64;
        match *self {
            LambdaRule::AlphaTrimmed => LambdaRule::Trimmed {
                fraction: (2.0 * alpha).clamp(0.0, MAX_TRIM),
            }
            .second_moment(rewards, alpha),
            LambdaRule::AllRewards => rewards.iter().map(|y| y * y).sum::<f64>() / n,
            LambdaRule::Clipped { magnitude } => {
                let c2 = magnitude * magnitude;
                rewards.iter().map(|y| (y * y).min(c2)).sum::<f64>() / n
            }
            LambdaRule::Trimmed { fraction } => {
                let mut sq: Vec<f64> = rewards.iter().map(|y| y * y).collect();
                sq.sort_by(f64::total_cmp);
                let drop = ((fraction * n).ceil() as usize).min(sq.len().saturating_sub(1));
                let kept = &sq[..sq.len() - drop];
                kept.iter().sum::<f64>() / kept.len() as f64
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustOptions {
    pub lambda_rule: LambdaRule,
    /// Corruption rate assumed by [`LambdaRule::AlphaTrimmed`]. The policy overrides
    /// this with its own `alpha`.
    pub alpha: f64,
}

impl Default for RobustOptions {
    fn default() -> Self {
        RobustOptions {
            lambda_rule: LambdaRule::AlphaTrimmed,
            alpha: 0.0,
        }
    }
}

impl RobustOptions {
    pub fn with_rule(lambda_rule: LambdaRule) -> Self {
        RobustOptions {
            lambda_rule,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.25).contains(&self.alpha) {
            return Err(Error::config("estimator.alpha", format!("must lie in [0, 1/4), got {}", self.alpha)));
        }
        self.lambda_rule.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustEstimate {
    #[serde(with = "crate::serde_util::vector")]
    pub theta: DVector<f64>,
    pub diagnostics: FilterDiagnostics,
    pub lambda_used: f64,
    #[serde(with = "crate::serde_util::matrix")]
    pub gram: DMatrix<f64>,
}

fn check_regression_input(actions: &[DVector<f64>], rewards: &[f64]) -> Result<usize> {
    if actions.is_empty() {
        return Err(Error::InvalidInput("regression needs at least one observation".into()));
    }
    if actions.len() != rewards.len() {
        return Err(Error::InvalidInput(format!(
            "{} actions but {} rewards",
            actions.len(),
            rewards.len()
        )));
    }
    let d = actions[0].len();
    if actions.iter().any(|a| a.len() != d) {
        return Err(Error::InvalidInput("actions have mixed dimensions".into()));
    }
    if rewards.iter().any(|y| !y.is_finite()) {
        return Err(Error::InvalidInput("rewards must be finite".into()));
    }
    Ok(d)
}

/// `max_{a in query} ||a||^2_{M^+}`; every query direction must lie in the range.
pub fn max_weighted_norm_sq(eig: &RangeEigen, query: &[DVector<f64>]) -> Result<f64> {
    if eig.rank() == 0 {
        return Err(Error::SingularGram);
    }
    let mut best = 0.0_f64;
    for a in query {
        let q = eig.pinv_quad(a).map_err(|_| Error::SingularGram)?;
        best = best.max(q);
    }
    Ok(best)
}

/// Robust fixed-design least squares.
///
/// `query` is the set of directions the estimate will be evaluated on (the active
/// action set); it enters the filter threshold through `max_a ||a||^2_{M_n^{-1}}`
/// and must lie in the span of `actions`. An empty `query` means "the observed
/// actions themselves".
pub fn robust_least_squares<R: Rng + ?Sized>(
    actions: &[DVector<f64>],
    rewards: &[f64],
    query: &[DVector<f64>],
    opts: &RobustOptions,
    rng: &mut R,
) -> Result<RobustEstimate> {
    let d = check_regression_input(actions, rewards)?;
    opts.validate()?;
    let n = actions.len();
    let gram = linalg::gram(actions, d);
    let eig = RangeEigen::new(&gram);
    let query = if query.is_empty() { actions } else { query };
    let mu = max_weighted_norm_sq(&eig, query)?;
    let lambda = mu * opts.lambda_rule.second_moment(rewards, opts.alpha);

    let points = actions
        .iter()
        .zip(rewards)
        .map(|(a, &y)| eig.inv_sqrt_apply(a).map(|x| x * y))
        .collect::<Result<Vec<_>>>()?;
    let (w, diagnostics) = filter(&points, lambda, rng)?;
    let theta = eig.inv_sqrt_apply(&w)? * n as f64;

    Ok(RobustEstimate {
        theta,
        diagnostics,
        lambda_used: lambda,
        gram,
    })
}

/// Ordinary least squares `M_n^+ sum_i a_i y_i`, restricted to the span of the actions.
pub fn vanilla_least_squares(actions: &[DVector<f64>], rewards: &[f64]) -> Result<DVector<f64>> {
    let d = check_regression_input(actions, rewards)?;
    let gram = linalg::gram(actions, d);
    let eig = RangeEigen::new(&gram);
    if eig.rank() == 0 {
        return Err(Error::SingularGram);
    }
    let mut b = DVector::zeros(d);
    for (a, &y) in actions.iter().zip(rewards) {
        b.axpy(y, a, 1.0);
    }
    eig.pinv_apply(&b).map_err(|_| Error::SingularGram)
}

/// Explicit form of the robust confidence width:
/// `mu ||y|| [sqrt(n) (alpha + log(1/delta)/n)^{1/2} + sqrt(alpha log(1/delta))] + alpha`.
///
/// The noise cross-term `sum_i e_i <a, M^{-1} a_i>` is not included; the policy's
/// thresholds account for it.
pub fn confidence_radius(mu: f64, y_norm: f64, n: usize, alpha: f64, delta: f64) -> Result<f64> {
    if !(0.0..0.25).contains(&alpha) {
        return Err(Error::InvalidInput(format!("alpha must lie in [0, 1/4), got {alpha}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta must lie in (0, 1), got {delta}")));
    }
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    let log_inv = (1.0 / delta).ln();
    let n_f = n as f64;
    let sampling = n_f.sqrt() * (alpha + log_inv / n_f).sqrt();
    let contamination = (alpha * log_inv).sqrt();
    Ok(mu * y_norm * (sampling + contamination) + alpha)
}

/// [`confidence_radius`] evaluated on observed data, with
/// `mu = max_i ||a_i||^2_{M_n^{-1}}`.
pub fn confidence_radius_bound(
    actions: &[DVector<f64>],
    rewards: &[f64],
    alpha: f64,
    delta: f64,
) -> Result<f64> {
    let d = check_regression_input(actions, rewards)?;
    let eig = RangeEigen::new(&linalg::gram(actions, d));
    let mu = max_weighted_norm_sq(&eig, actions)?;
    let y_norm = rewards.iter().map(|y| y * y).sum::<f64>().sqrt();
    confidence_radius(mu, y_norm, actions.len(), alpha, delta)
}
