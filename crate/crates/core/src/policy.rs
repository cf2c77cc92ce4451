//! Batched robust arm elimination.
//!
//! Round `i = 1..B-1` computes an approximate G-optimal design on the active arms,
//! plays its coreset, fits a robust least-squares estimate and discards every arm
//! whose estimated reward trails the leader by more than `2 gamma_i`. The last
//! round plays the empirically best surviving arm for the rest of the budget.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::design::{build_coreset, compute_design_with, ClientModel, DesignOptions};
use crate::env::{BanditEnv, Environment, PlaySegment};
use crate::error::{Error, Result};
use crate::privacy::PrivacyParams;
use crate::rng::SeedTree;
use crate::robust::{self, FilterDiagnostics, RobustOptions};

/// Geometric batch schedule with `q = T^{1/B}` and nominal round budgets `ceil(q^i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub horizon: u64,
    pub batches: usize,
    pub q: f64,
    /// `ceil(q^i)` for the exploration rounds `i = 1..B-1`.
    pub round_budgets: Vec<u64>,
}

impl Schedule {
    pub fn new(horizon: u64, batches: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::config("schedule.horizon", "must be positive"));
        }
        if batches < 2 {
            return Err(Error::config("schedule.batches", format!("must be at least 2, got {batches}")));
        }
        let q = (horizon as f64).powf(1.0 / batches as f64);
        let round_budgets = (1..batches)
            .map(|i| {
                let v = q.powi(i as i32);
                let r = v.round();
                if (v - r).abs() <= 1e-9 * r.max(1.0) {
                    r as u64
                } else {
                    v.ceil() as u64
                }
            })
            .collect();
        Ok(Schedule {
            horizon,
            batches,
            q,
            round_budgets,
        })
    }

    /// `B = max(2, ceil(ln T))`.
    pub fn default_batches(horizon: u64) -> usize {
        ((horizon as f64).ln().ceil() as usize).max(2)
    }

    pub fn with_default_batches(horizon: u64) -> Result<Self> {
        Self::new(horizon, Self::default_batches(horizon))
    }

    /// `q^i`.
    pub fn q_pow(&self, i: usize) -> f64 {
        self.q.powi(i as i32)
    }

    /// Nominal budget `m_i` of exploration round `i` (1-based).
    pub fn budget(&self, i: usize) -> u64 {
        self.round_budgets[i - 1]
    }
}

/// Which power of `q` the M1 threshold uses in round `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdIndex {
    /// `q^i`, as in the algorithm listing.
    #[default]
    Current,
    /// `q^{i-1}`, the indexing used in the regret proof.
    Lagged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdConfig {
    /// Stand-in for the suppressed universal constants.
    pub c_gamma: f64,
    pub delta: f64,
    /// Corruption rate assumed by the learner.
    pub alpha: f64,
    /// M2 truncation `nu`.
    pub nu: f64,
    pub model: ClientModel,
    pub index: ThresholdIndex,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            c_gamma: 1.0,
            delta: 0.05,
            alpha: 0.0,
            nu: 0.01,
            model: ClientModel::M1,
            index: ThresholdIndex::Current,
        }
    }
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_gamma > 0.0 && self.c_gamma.is_finite()) {
            return Err(Error::config("threshold.c_gamma", "must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config("threshold.delta", "must lie in (0, 1)"));
        }
        if !(0.0..0.25).contains(&self.alpha) {
            return Err(Error::config("threshold.alpha", "must lie in [0, 1/4)"));
        }
        if self.model == ClientModel::M2 && !(self.nu > 0.0 && self.nu < 1.0) {
            return Err(Error::config("threshold.nu", "M2 needs 0 < nu < 1"));
        }
        Ok(())
    }
}

/// `1/eps`, or zero when privacy is off.
fn inv_eps(privacy: &PrivacyParams) -> f64 {
    if privacy.enabled {
        1.0 / privacy.epsilon
    } else {
        0.0
    }
}

/// M1 elimination threshold at batch scale `qi = q^i`:
///
/// `c [ sqrt(d) (sqrt(L) + L/eps)(sqrt(alpha) + alpha sqrt(d)) + alpha
///      + sqrt(d log(1/delta) / qi) (1 + sqrt(log(1/delta)) / eps) ]`, `L = log(qi/delta)`.
pub fn threshold_m1_at(qi: f64, cfg: &ThresholdConfig, d: usize, privacy: &PrivacyParams) -> f64 {
    let d = d as f64;
    let ie = inv_eps(privacy);
    let l = (qi / cfg.delta).ln();
    let log_inv = (1.0 / cfg.delta).ln();
    let corruption = d.sqrt() * (l.sqrt() + l * ie) * (cfg.alpha.sqrt() + cfg.alpha * d.sqrt());
    let sampling = (d * log_inv / qi).sqrt() * (1.0 + log_inv.sqrt() * ie);
    cfg.c_gamma * (corruption + cfg.alpha + sampling)
}

pub fn threshold_m1(i: usize, schedule: &Schedule, cfg: &ThresholdConfig, d: usize, privacy: &PrivacyParams) -> f64 {
    let exponent = match cfg.index {
        ThresholdIndex::Current => i,
        ThresholdIndex::Lagged => i.saturating_sub(1),
    };
    threshold_m1_at(schedule.q_pow(exponent), cfg, d, privacy)
}

/// M2 elimination threshold for round budget `m` and support size `k`:
///
/// `c [ sqrt(d log(1/delta)/(nu m)) (1 + sqrt(log(1/delta)/(nu m))/eps)
///      + 2d (1 + sqrt(log(k/delta)/(nu m)) + log(k/delta)/(nu m eps))
///           (sqrt(k alpha) + sqrt(alpha log(1/delta))) + alpha ]`.
pub fn threshold_m2_at(m: f64, cfg: &ThresholdConfig, d: usize, k: usize, privacy: &PrivacyParams) -> f64 {
    let d = d as f64;
    let k = k.max(1) as f64;
    let ie = inv_eps(privacy);
    let num = cfg.nu * m;
    let log_inv = (1.0 / cfg.delta).ln();
    let log_k = (k / cfg.delta).ln();
    let sampling = (d * log_inv / num).sqrt() * (1.0 + (log_inv / num).sqrt() * ie);
    let corruption = 2.0
        * d
        * (1.0 + (log_k / num).sqrt() + log_k / num * ie)
        * ((k * cfg.alpha).sqrt() + (cfg.alpha * log_inv).sqrt());
    cfg.c_gamma * (sampling + corruption + cfg.alpha)
}

pub fn threshold_m2(
    i: usize,
    schedule: &Schedule,
    cfg: &ThresholdConfig,
    d: usize,
    k: usize,
    privacy: &PrivacyParams,
) -> f64 {
    threshold_m2_at(schedule.budget(i) as f64, cfg, d, k, privacy)
}

/// How each round's parameter estimate is produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Estimator {
    /// Spectral-filtering robust least squares.
    Robust(RobustOptions),
    /// Ordinary least squares.
    Vanilla,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub schedule: Schedule,
    pub threshold: ThresholdConfig,
    pub estimator: Estimator,
    pub design: DesignOptions,
    /// Privacy setting the learner assumes when sizing thresholds.
    pub privacy: PrivacyParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundKind {
    Explore,
    Exploit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub kind: RoundKind,
    pub active_before: Vec<usize>,
    pub active_after: Vec<usize>,
    /// Nominal budget `m_i` (exploration rounds only).
    pub budget: Option<u64>,
    /// Plays made in this round.
    pub batch_size: u64,
    pub support_size: usize,
    pub design_gvalue: Option<f64>,
    pub gamma: Option<f64>,
    pub estimate: Option<Vec<f64>>,
    pub filter: Option<FilterDiagnostics>,
    pub lambda: Option<f64>,
    /// Set when the robust estimator failed and the round fell back to least squares.
    pub fallback: Option<String>,
    /// Action played in the exploitation round.
    pub played: Option<usize>,
    pub cumulative_plays: u64,
    pub cumulative_regret: f64,
}

/// Everything recorded about one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub rounds: Vec<RoundRecord>,
    /// Per-play regret, run-length encoded in play order.
    pub segments: Vec<PlaySegment>,
    /// Cumulative regret at the end of each round.
    pub cumulative_regret: Vec<f64>,
    pub total_plays: u64,
    pub optimal_arm: usize,
    /// Round in which the optimal arm was eliminated, if it was.
    pub optimal_eliminated_in: Option<usize>,
}

impl RegretTrace {
    pub fn final_regret(&self) -> f64 {
        self.cumulative_regret.last().copied().unwrap_or(0.0)
    }

    /// Per-round summary: round, budget, gamma, active arms, cumulative regret and
    /// filter removals. Empty fields mark values a round does not have.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["round", "budget", "gamma", "active", "cumulative_regret", "filter_removals"])
            .expect("in-memory write");
        for r in &self.rounds {
            let opt = |v: Option<String>| v.unwrap_or_default();
            w.write_record([
                r.round.to_string(),
                opt(r.budget.map(|b| b.to_string())),
                opt(r.gamma.map(|g| g.to_string())),
                r.active_before.len().to_string(),
                r.cumulative_regret.to_string(),
                opt(r.filter.as_ref().map(|f| f.removed_count.to_string())),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    /// Cumulative regret after the first `plays` plays.
    pub fn cumulative_at(&self, plays: u64) -> Result<f64> {
        if plays == 0 || plays > self.total_plays {
            return Err(Error::CheckpointOutOfRange {
                checkpoint: plays,
                max: self.total_plays,
            });
        }
        let mut left = plays;
        let mut total = 0.0;
        for s in &self.segments {
            let take = s.count.min(left);
            total += take as f64 * s.regret_per_play;
            left -= take;
            if left == 0 {
                break;
            }
        }
        Ok(total)
    }
}

fn argmax_score(active: &[usize], scores: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..active.len() {
        if scores[j] > scores[best] {
            best = j;
        }
    }
    active[best]
}

/// Arms of `active` whose score is within `2 gamma` of the best.
pub fn eliminate(active: &[usize], scores: &[f64], gamma: f64) -> Vec<usize> {
    let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    active
        .iter()
        .zip(scores)
        .filter(|(_, &s)| s >= top - 2.0 * gamma)
        .map(|(&a, _)| a)
        .collect()
}

/// The learner side of the policy: sees the environment only through [`BanditEnv`].
pub fn learn<E: BanditEnv>(env: &mut E, cfg: &PolicyConfig, seeds: &SeedTree) -> Result<Vec<RoundRecord>> {
    cfg.threshold.validate()?;
    cfg.privacy.validate()?;
    if let Estimator::Robust(o) = &cfg.estimator {
        o.lambda_rule.validate()?;
    }
    let robust_opts = match cfg.estimator {
        Estimator::Robust(o) => RobustOptions {
            alpha: cfg.threshold.alpha,
            ..o
        },
        Estimator::Vanilla => RobustOptions::default(),
    };
    let model = cfg.threshold.model;
    let schedule = &cfg.schedule;
    let actions = env.action_set().clone();
    let mut active: Vec<usize> = (0..actions.len()).collect();
    let mut used = 0u64;
    let mut records = Vec::new();
    let mut last_estimate: Option<DVector<f64>> = None;

    for i in 1..schedule.batches {
        if active.len() == 1 {
            break;
        }
        let sub = actions.subset(&active)?;
        let design = compute_design_with(&sub, &cfg.design)?;
        let local = build_coreset(&design, schedule.budget(i), model, cfg.threshold.nu)?;
        if used + local.total > schedule.horizon {
            break;
        }
        let mut coreset = local.clone();
        for e in coreset.entries.iter_mut() {
            e.0 = active[e.0];
        }
        let reports = env.observe(&coreset, i)?;
        used += coreset.total;

        let xs: Vec<DVector<f64>> = reports
            .iter()
            .map(|r| actions.get(r.action_index).clone())
            .collect();
        let ys: Vec<f64> = reports.iter().map(|r| r.reward).collect();
        let query = sub.actions();

        let (theta, filter, lambda, fallback) = match &cfg.estimator {
            Estimator::Robust(_) => {
                let mut rng = seeds.child("filter", i as u64).rng(0);
                match robust::robust_least_squares(&xs, &ys, query, &robust_opts, &mut rng) {
                    Ok(est) => (est.theta, Some(est.diagnostics), Some(est.lambda_used), None),
                    Err(e @ Error::TooManyRemoved { .. }) => {
                        log::warn!("round {i}: {e}; falling back to least squares");
                        (robust::vanilla_least_squares(&xs, &ys)?, None, None, Some(e.to_string()))
                    }
                    Err(e) => return Err(e),
                }
            }
            Estimator::Vanilla => (robust::vanilla_least_squares(&xs, &ys)?, None, None, None),
        };

        let d = design.effective_dim;
        let tcfg = cfg.threshold;
        let gamma = match model {
            ClientModel::M1 => threshold_m1(i, schedule, &tcfg, d, &cfg.privacy),
            ClientModel::M2 => threshold_m2(i, schedule, &tcfg, d, design.support_len(), &cfg.privacy),
        };

        let scores: Vec<f64> = active.iter().map(|&a| actions.get(a).dot(&theta)).collect();
        let after = eliminate(&active, &scores, gamma);

        records.push(RoundRecord {
            round: i,
            kind: RoundKind::Explore,
            active_before: active.clone(),
            active_after: after.clone(),
            budget: Some(schedule.budget(i)),
            batch_size: coreset.total,
            support_size: coreset.support_len(),
            design_gvalue: Some(design.gvalue),
            gamma: Some(gamma),
            estimate: Some(theta.as_slice().to_vec()),
            filter,
            lambda,
            fallback,
            played: None,
            cumulative_plays: used,
            cumulative_regret: 0.0,
        });
        active = after;
        last_estimate = Some(theta);
    }

    let best = match &last_estimate {
        Some(theta) => {
            let scores: Vec<f64> = active.iter().map(|&a| actions.get(a).dot(theta)).collect();
            argmax_score(&active, &scores)
        }
        None => active[0],
    };
    let remaining = schedule.horizon - used;
    env.commit(best, remaining, schedule.batches)?;
    used += remaining;
    records.push(RoundRecord {
        round: schedule.batches,
        kind: RoundKind::Exploit,
        active_before: active.clone(),
        active_after: active,
        budget: None,
        batch_size: remaining,
        support_size: 1,
        design_gvalue: None,
        gamma: None,
        estimate: None,
        filter: None,
        lambda: None,
        fallback: None,
        played: Some(best),
        cumulative_plays: used,
        cumulative_regret: 0.0,
    });
    Ok(records)
}

/// Runs the learner against `env` and attaches the environment's regret accounting.
pub fn run_policy(env: &mut Environment, cfg: &PolicyConfig, seeds: &SeedTree) -> Result<RegretTrace> {
    let mut rounds = learn(env, cfg, seeds)?;
    let segments = env.segments().to_vec();
    let mut cumulative = Vec::with_capacity(rounds.len());
    let mut running = 0.0;
    let mut seg = segments.iter().peekable();
    for r in rounds.iter_mut() {
        while let Some(s) = seg.next_if(|s| s.round <= r.round) {
            running += s.count as f64 * s.regret_per_play;
        }
        r.cumulative_regret = running;
        cumulative.push(running);
    }
    let optimal = env.instance().best_action();
    let optimal_eliminated_in = rounds
        .iter()
        .find(|r| r.active_before.contains(&optimal) && !r.active_after.contains(&optimal))
        .map(|r| r.round);
    Ok(RegretTrace {
        rounds,
        segments,
        cumulative_regret: cumulative,
        total_plays: env.total_plays(),
        optimal_arm: optimal,
        optimal_eliminated_in,
    })
}

/// Robust arm elimination with the spectral filter.
pub fn run_elimination(
    env: &mut Environment,
    schedule: &Schedule,
    threshold: &ThresholdConfig,
    robust: &RobustOptions,
    privacy: &PrivacyParams,
    seeds: &SeedTree,
) -> Result<RegretTrace> {
    let cfg = PolicyConfig {
        schedule: schedule.clone(),
        threshold: *threshold,
        estimator: Estimator::Robust(*robust),
        design: DesignOptions::default(),
        privacy: *privacy,
    };
    run_policy(env, &cfg, seeds)
}

/// Baseline: the same schedule with ordinary least squares and the thresholds'
/// corruption terms zeroed.
pub fn run_vanilla_elimination(
    env: &mut Environment,
    schedule: &Schedule,
    threshold: &ThresholdConfig,
    privacy: &PrivacyParams,
    seeds: &SeedTree,
) -> Result<RegretTrace> {
    let cfg = PolicyConfig {
        schedule: schedule.clone(),
        threshold: ThresholdConfig {
            alpha: 0.0,
            ..*threshold
        },
        estimator: Estimator::Vanilla,
        design: DesignOptions::default(),
        privacy: *privacy,
    };
    run_policy(env, &cfg, seeds)
}
