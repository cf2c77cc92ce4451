//! Laplace mechanisms for the two client models.
//!
//! Under M1 every reward is privatised by its own client with scale `2 / eps`.
//! Under M2 a client averages its `n_a` rewards first and adds noise of scale
//! `2 / (n_a eps)`. Sensitivity 2 comes from `|<a, theta*>| <= 1`; with clipping
//! enabled, rewards are clamped to `[-clip, clip]` and the sensitivity becomes
//! `2 * clip`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Privacy settings as they appear in experiment configs:
/// `{ "epsilon": float, "enabled": bool, "clip": float|null }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub enabled: bool,
    #[serde(default)]
    pub clip: Option<f64>,
}

impl Default for PrivacyParams {
    fn default() -> Self {
        PrivacyParams::disabled()
    }
}

impl PrivacyParams {
    pub fn new(epsilon: f64) -> Result<Self> {
        let p = PrivacyParams {
            epsilon,
            enabled: true,
            clip: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn disabled() -> Self {
        PrivacyParams {
            epsilon: 1.0,
            enabled: false,
            clip: None,
        }
    }

    pub fn with_clip(mut self, clip: f64) -> Result<Self> {
        self.clip = Some(clip);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.enabled && !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config(
                "privacy.epsilon",
                format!("must be positive when privacy is enabled, got {}", self.epsilon),
            ));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::config("privacy.clip", format!("must be positive, got {c}")));
            }
        }
        Ok(())
    }

    /// Bound on how far one reward can move: 2, or `2 * clip` with clipping.
    pub fn sensitivity(&self) -> f64 {
        2.0 * self.clip.unwrap_or(1.0)
    }

    /// Laplace scale for a single privatised reward.
    pub fn scale_m1(&self) -> f64 {
        self.sensitivity() / self.epsilon
    }

    /// Laplace scale for the average of `n_a` rewards.
    pub fn scale_m2(&self, n_a: u64) -> f64 {
        self.sensitivity() / (n_a as f64 * self.epsilon)
    }

    /// Clamp a reward to `[-clip, clip]` when privacy with clipping is active.
    pub fn clip_reward(&self, reward: f64) -> f64 {
        match (self.enabled, self.clip) {
            (true, Some(c)) => reward.clamp(-c, c),
            _ => reward,
        }
    }
}

/// Inverse CDF of the centred Laplace distribution with the given scale.
pub fn laplace_quantile(u: f64, scale: f64) -> f64 {
    let centred = u - 0.5;
    -scale * centred.signum() * (1.0 - 2.0 * centred.abs()).ln()
}

/// One draw from `Laplace(0, scale)` by inversion of a uniform draw.
pub fn sample_laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    debug_assert!(scale > 0.0);
    loop {
        let u: f64 = rng.random();
        // u = 0 maps to -inf
        if u > 0.0 {
            return laplace_quantile(u, scale);
        }
    }
}

/// Per-reward mechanism (M1): `r + Lap(2 / eps)`; the identity when disabled.
pub fn privatize_m1<R: Rng + ?Sized>(reward: f64, params: &PrivacyParams, rng: &mut R) -> f64 {
    if !params.enabled {
        return reward;
    }
    params.clip_reward(reward) + sample_laplace(params.scale_m1(), rng)
}

/// Aggregated mechanism (M2): `mean + Lap(2 / (n_a eps))`; the identity when disabled.
pub fn privatize_m2<R: Rng + ?Sized>(
    mean_reward: f64,
    n_a: u64,
    params: &PrivacyParams,
    rng: &mut R,
) -> f64 {
    if !params.enabled {
        return mean_reward;
    }
    debug_assert!(n_a >= 1);
    params.clip_reward(mean_reward) + sample_laplace(params.scale_m2(n_a.max(1)), rng)
}
