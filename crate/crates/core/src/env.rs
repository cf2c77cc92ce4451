//! Simulated bandit environment: hidden parameter, sub-Gaussian reward noise,
//! the probabilistic corruption adversary, and the client-side privacy mechanisms.
//!
//! Learners interact through the [`BanditEnv`] trait, which only hands out
//! [`Report`]s. The full [`Observation`] log (with corruption flags) and the hidden
//! parameter are reachable only through [`Environment`]'s inherent methods, which
//! test oracles and the experiment harness use for regret accounting.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::design::{ActionSet, ClientModel, Coreset};
use crate::error::{Error, Result};
use crate::privacy::{privatize_m1, privatize_m2, PrivacyParams};
use crate::rng::{SeedTree, StreamRng};

/// Largest magnitude an adversary may inject.
pub const MAGNITUDE_CAP: f64 = 100.0;

/// Mean-zero reward noise with sub-Gaussian parameter at most one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// Standard normal.
    #[default]
    Gaussian,
    /// Uniform on `[-1, 1]`.
    Uniform,
    Zero,
}

impl NoiseKind {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            NoiseKind::Gaussian => rng.sample(StandardNormal),
            NoiseKind::Uniform => rng.random_range(-1.0..=1.0),
            NoiseKind::Zero => 0.0,
        }
    }
}

/// Where an instance's actions come from in JSON: inline, or a path to an action-set file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ActionsRef {
    Inline(ActionSet),
    File(PathBuf),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    theta_star: Vec<f64>,
    actions: ActionsRef,
    #[serde(default)]
    noise: NoiseKind,
}

/// Hidden parameter, action set and noise law of one bandit problem.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditInstance {
    theta_star: DVector<f64>,
    actions: ActionSet,
    noise: NoiseKind,
    means: Vec<f64>,
    best: usize,
}

impl BanditInstance {
    pub fn new(theta_star: DVector<f64>, actions: ActionSet, noise: NoiseKind) -> Result<Self> {
        if theta_star.len() != actions.dim() {
            return Err(Error::InvalidInput(format!(
                "theta_star has dimension {} but actions have dimension {}",
                theta_star.len(),
                actions.dim()
            )));
        }
        if theta_star.iter().any(|x| !x.is_finite()) || theta_star.norm() > 1.0 + 1e-9 {
            return Err(Error::InvalidInput("theta_star must be finite with norm at most 1".into()));
        }
        let means: Vec<f64> = actions.actions().iter().map(|a| a.dot(&theta_star)).collect();
        let mut best = 0;
        for (i, &m) in means.iter().enumerate() {
            if m > means[best] {
                best = i;
            }
        }
        Ok(BanditInstance {
            theta_star,
            actions,
            noise,
            means,
            best,
        })
    }

    /// Random instance: `arms` actions uniform on the unit sphere and a unit-norm
    /// `theta_star` with uniformly random direction.
    pub fn random<R: Rng + ?Sized>(dim: usize, arms: usize, noise: NoiseKind, rng: &mut R) -> Result<Self> {
        if dim == 0 || arms == 0 {
            return Err(Error::InvalidInput("random instance needs dim >= 1 and arms >= 1".into()));
        }
        let unit = |rng: &mut R| loop {
            let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let n = v.norm();
            if n > 1e-12 {
                return v / n;
            }
        };
        let actions = (0..arms).map(|_| unit(rng)).collect();
        let theta = unit(rng);
        BanditInstance::new(theta, ActionSet::new(dim, actions)?, noise)
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }

    pub fn actions(&self) -> &ActionSet {
        &self.actions
    }

    pub fn noise(&self) -> NoiseKind {
        self.noise
    }

    /// `<a_i, theta*>`.
    pub fn mean_reward(&self, index: usize) -> f64 {
        self.means[index]
    }

    /// Index of an optimal action (lowest index among ties).
    pub fn best_action(&self) -> usize {
        self.best
    }

    /// `<a* - a_i, theta*>`.
    pub fn instantaneous_regret(&self, index: usize) -> f64 {
        self.means[self.best] - self.means[index]
    }

    pub fn to_json(&self) -> String {
        let file = InstanceFile {
            theta_star: self.theta_star.as_slice().to_vec(),
            actions: ActionsRef::Inline(self.actions.clone()),
            noise: self.noise,
        };
        serde_json::to_string_pretty(&file).expect("instance serialises")
    }

    /// Parse an instance; a file-reference `actions` field is resolved against `base_dir`.
    pub fn from_json(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let file: InstanceFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("instance: {e}")))?;
        Self::from_file_repr(file, base_dir)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text, path.parent())
    }

    fn from_file_repr(file: InstanceFile, base_dir: Option<&Path>) -> Result<Self> {
        let actions = match file.actions {
            ActionsRef::Inline(a) => a,
            ActionsRef::File(p) => {
                let full = match base_dir {
                    Some(b) if p.is_relative() => b.join(&p),
                    _ => p,
                };
                ActionSet::load(&full)?
            }
        };
        Self::new(DVector::from_vec(file.theta_star), actions, file.noise)
    }
}

impl Serialize for BanditInstance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        InstanceFile {
            theta_star: self.theta_star.as_slice().to_vec(),
            actions: ActionsRef::Inline(self.actions.clone()),
            noise: self.noise,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BanditInstance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let file = InstanceFile::deserialize(d)?;
        Self::from_file_repr(file, None).map_err(serde::de::Error::custom)
    }
}

/// `instantaneous_regret` as a free function over an instance.
pub fn instantaneous_regret(instance: &BanditInstance, index: usize) -> f64 {
    instance.instantaneous_regret(index)
}

/// What a corrupted observation is replaced with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Strategy {
    #[default]
    None,
    /// Always report `value`.
    Constant { value: f64 },
    /// Always report `+magnitude`.
    LargePositive { magnitude: f64 },
    /// Report the negated clean reward, clamped to the magnitude cap.
    SignFlip,
    /// Report `+magnitude` on the worst arm of the batch and `-magnitude` elsewhere.
    AntiOptimal { magnitude: f64 },
}

impl Strategy {
    fn bound(&self) -> f64 {
        match *self {
            Strategy::None | Strategy::SignFlip => 0.0,
            Strategy::Constant { value } => value.abs(),
            Strategy::LargePositive { magnitude } | Strategy::AntiOptimal { magnitude } => magnitude,
        }
    }

    /// The replacement value for a clean reward `clean` on an arm; `is_worst`
    /// marks the lowest-mean arm in the current batch.
    pub fn replace(&self, clean: f64, is_worst: bool) -> f64 {
        match *self {
            Strategy::None => clean,
            Strategy::Constant { value } => value,
            Strategy::LargePositive { magnitude } => magnitude.abs(),
            Strategy::SignFlip => (-clean).clamp(-MAGNITUDE_CAP, MAGNITUDE_CAP),
            Strategy::AntiOptimal { magnitude } => {
                if is_worst {
                    magnitude
                } else {
                    -magnitude
                }
            }
        }
    }
}

/// Whether corruption hits the reward before or after the client's privacy mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CorruptStage {
    #[default]
    PrePrivacy,
    PostPrivacy,
}

/// Under M2: corrupt each raw draw before aggregation, or the single aggregated report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum M2Target {
    #[default]
    RawDraws,
    Aggregate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryConfig {
    pub alpha: f64,
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default)]
    pub stage: CorruptStage,
    #[serde(default)]
    pub m2_target: M2Target,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        AdversaryConfig::none()
    }
}

impl AdversaryConfig {
    pub fn none() -> Self {
        AdversaryConfig {
            alpha: 0.0,
            strategy: Strategy::None,
            stage: CorruptStage::PrePrivacy,
            m2_target: M2Target::RawDraws,
        }
    }

    pub fn new(alpha: f64, strategy: Strategy) -> Result<Self> {
        let a = AdversaryConfig {
            alpha,
            strategy,
            ..AdversaryConfig::none()
        };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.25).contains(&self.alpha) {
            return Err(Error::config(
                "adversary.alpha",
                format!("must lie in [0, 1/4), got {}", self.alpha),
            ));
        }
        let b = self.strategy.bound();
        if !b.is_finite() || b > MAGNITUDE_CAP {
            return Err(Error::config(
                "adversary.strategy",
                format!("magnitude must be finite and at most {MAGNITUDE_CAP}, got {b}"),
            ));
        }
        Ok(())
    }

    fn active(&self) -> bool {
        self.alpha > 0.0 && self.strategy != Strategy::None
    }

    /// Draws the corruption indicator `1 - Z_i` (true = corrupted).
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        let u: f64 = rng.random();
        self.active() && u < self.alpha
    }
}

/// Full record of one report, including what the learner must not see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub action_index: usize,
    /// Clean reward (M1) or the mean of the client's clean draws (M2).
    pub raw_reward: f64,
    pub corrupted: bool,
    /// What reaches the learner, after corruption and privatisation.
    pub reported_reward: f64,
    /// Number of plays behind this report (1 under M1, `n_a` under M2).
    pub count: u64,
}

impl Observation {
    pub fn report(&self) -> Report {
        Report {
            action_index: self.action_index,
            count: self.count,
            reward: self.reported_reward,
        }
    }
}

/// The learner-facing view of an observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub action_index: usize,
    pub count: u64,
    pub reward: f64,
}

fn worst_in_batch(instance: &BanditInstance, coreset: &Coreset) -> Option<usize> {
    let mut worst: Option<usize> = None;
    for &(i, _) in &coreset.entries {
        if worst.is_none_or(|w| instance.mean_reward(i) < instance.mean_reward(w)) {
            worst = Some(i);
        }
    }
    worst
}

/// One client per play. Client `j` of the round (plays enumerated in coreset
/// order) draws from stream `j` of `round_seeds`.
pub fn observe_batch_m1(
    instance: &BanditInstance,
    coreset: &Coreset,
    adversary: &AdversaryConfig,
    privacy: &PrivacyParams,
    round_seeds: &SeedTree,
) -> Result<Vec<Observation>> {
    if coreset.model != ClientModel::M1 {
        return Err(Error::InvalidInput("observe_batch_m1 needs an M1 coreset".into()));
    }
    check_indices(instance, coreset)?;
    let worst = worst_in_batch(instance, coreset);
    let mut out = Vec::with_capacity(coreset.total as usize);
    let mut client = 0u64;
    for &(index, count) in &coreset.entries {
        let mean = instance.mean_reward(index);
        let is_worst = Some(index) == worst;
        for _ in 0..count {
            let mut rng = round_seeds.rng(client);
            client += 1;
            let clean = mean + instance.noise.sample(&mut rng);
            let corrupted = adversary.draw(&mut rng);
            let fake = adversary.strategy.replace(clean, is_worst);
            let reported = match adversary.stage {
                CorruptStage::PrePrivacy => {
                    privatize_m1(if corrupted { fake } else { clean }, privacy, &mut rng)
                }
                CorruptStage::PostPrivacy => {
                    let private = privatize_m1(clean, privacy, &mut rng);
                    if corrupted {
                        fake
                    } else {
                        private
                    }
                }
            };
            out.push(Observation {
                action_index: index,
                raw_reward: clean,
                corrupted,
                reported_reward: reported,
                count: 1,
            });
        }
    }
    Ok(out)
}

/// One client per support action. Client `j` (the `j`-th coreset entry) draws its
/// `n_a` rewards, averages them and privatises the average with scale
/// `2 / (n_a eps)`.
pub fn observe_batch_m2(
    instance: &BanditInstance,
    coreset: &Coreset,
    adversary: &AdversaryConfig,
    privacy: &PrivacyParams,
    round_seeds: &SeedTree,
) -> Result<Vec<Observation>> {
    if coreset.model != ClientModel::M2 {
        return Err(Error::InvalidInput("observe_batch_m2 needs an M2 coreset".into()));
    }
    check_indices(instance, coreset)?;
    let worst = worst_in_batch(instance, coreset);
    let mut out = Vec::with_capacity(coreset.entries.len());
    for (client, &(index, count)) in coreset.entries.iter().enumerate() {
        let mut rng: StreamRng = round_seeds.rng(client as u64);
        let mean = instance.mean_reward(index);
        let is_worst = Some(index) == worst;
        let n = count.max(1);
        let mut clean_sum = 0.0;
        let mut sent_sum = 0.0;
        let mut any_corrupted = false;
        for _ in 0..n {
            let clean = mean + instance.noise.sample(&mut rng);
            clean_sum += clean;
            let value = match adversary.m2_target {
                M2Target::RawDraws if adversary.draw(&mut rng) => {
                    any_corrupted = true;
                    adversary.strategy.replace(clean, is_worst)
                }
                _ => clean,
            };
            sent_sum += privacy.clip_reward(value);
        }
        let clean_mean = clean_sum / n as f64;
        let sent_mean = sent_sum / n as f64;
        let reported = match adversary.m2_target {
            M2Target::RawDraws => privatize_m2(sent_mean, n, privacy, &mut rng),
            M2Target::Aggregate => {
                let corrupted = adversary.draw(&mut rng);
                any_corrupted = corrupted;
                let fake = adversary.strategy.replace(clean_mean, is_worst);
                match adversary.stage {
                    CorruptStage::PrePrivacy => {
                        privatize_m2(if corrupted { fake } else { sent_mean }, n, privacy, &mut rng)
                    }
                    CorruptStage::PostPrivacy => {
                        let private = privatize_m2(sent_mean, n, privacy, &mut rng);
                        if corrupted {
                            fake
                        } else {
                            private
                        }
                    }
                }
            }
        };
        out.push(Observation {
            action_index: index,
            raw_reward: clean_mean,
            corrupted: any_corrupted,
            reported_reward: reported,
            count: n,
        });
    }
    Ok(out)
}

fn check_indices(instance: &BanditInstance, coreset: &Coreset) -> Result<()> {
    let k = instance.actions().len();
    if let Some(&(i, _)) = coreset.entries.iter().find(|&&(i, _)| i >= k) {
        return Err(Error::InvalidInput(format!("coreset action index {i} out of range")));
    }
    Ok(())
}

/// A run of identical plays, for regret accounting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaySegment {
    pub round: usize,
    pub action_index: usize,
    pub count: u64,
    pub regret_per_play: f64,
}

/// What a learner can do with an environment.
pub trait BanditEnv {
    fn action_set(&self) -> &ActionSet;

    /// Play every action of the coreset and return the client reports: one per
    /// play under M1, one per support action under M2.
    fn observe(&mut self, coreset: &Coreset, round: usize) -> Result<Vec<Report>>;

    /// Play `count` copies of an action without collecting feedback.
    fn commit(&mut self, action_index: usize, count: u64, round: usize) -> Result<()>;
}

/// Simulator owning the hidden instance, adversary and client mechanisms.
#[derive(Debug, Clone)]
pub struct Environment {
    instance: BanditInstance,
    adversary: AdversaryConfig,
    privacy: PrivacyParams,
    seeds: SeedTree,
    observations: Vec<Observation>,
    segments: Vec<PlaySegment>,
    keep_observations: bool,
}

impl Environment {
    pub fn new(
        instance: BanditInstance,
        adversary: AdversaryConfig,
        privacy: PrivacyParams,
        seeds: SeedTree,
    ) -> Result<Self> {
        adversary.validate()?;
        privacy.validate()?;
        Ok(Environment {
            instance,
            adversary,
            privacy,
            seeds,
            observations: Vec::new(),
            segments: Vec::new(),
            keep_observations: true,
        })
    }

    /// Stop retaining the per-report observation log (regret segments are always kept).
    pub fn without_observation_log(mut self) -> Self {
        self.keep_observations = false;
        self
    }

    pub fn instance(&self) -> &BanditInstance {
        &self.instance
    }

    pub fn adversary(&self) -> &AdversaryConfig {
        &self.adversary
    }

    pub fn privacy(&self) -> &PrivacyParams {
        &self.privacy
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn segments(&self) -> &[PlaySegment] {
        &self.segments
    }

    pub fn total_plays(&self) -> u64 {
        self.segments.iter().map(|s| s.count).sum()
    }

    pub fn cumulative_regret(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.count as f64 * s.regret_per_play)
            .sum()
    }

    fn round_seeds(&self, round: usize) -> SeedTree {
        self.seeds.child("round", round as u64)
    }

    fn charge(&mut self, round: usize, action_index: usize, count: u64) {
        if count == 0 {
            return;
        }
        self.segments.push(PlaySegment {
            round,
            action_index,
            count,
            regret_per_play: self.instance.instantaneous_regret(action_index),
        });
    }
}

impl BanditEnv for Environment {
    fn action_set(&self) -> &ActionSet {
        self.instance.actions()
    }

    fn observe(&mut self, coreset: &Coreset, round: usize) -> Result<Vec<Report>> {
        let seeds = self.round_seeds(round);
        let obs = match coreset.model {
            ClientModel::M1 => observe_batch_m1(&self.instance, coreset, &self.adversary, &self.privacy, &seeds)?,
            ClientModel::M2 => observe_batch_m2(&self.instance, coreset, &self.adversary, &self.privacy, &seeds)?,
        };
        for &(i, n) in &coreset.entries {
            self.charge(round, i, n);
        }
        let reports = obs.iter().map(Observation::report).collect();
        if self.keep_observations {
            self.observations.extend(obs);
        }
        Ok(reports)
    }

    fn commit(&mut self, action_index: usize, count: u64, round: usize) -> Result<()> {
        if action_index >= self.instance.actions().len() {
            return Err(Error::InvalidInput(format!("action index {action_index} out of range")));
        }
        self.charge(round, action_index, count);
        Ok(())
    }
}
