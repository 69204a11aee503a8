//! Iterative freezing of oscillating latent signs.
//!
//! Every step tracks, per sign, an exponential moving average `f` of the
//! flip indicator and counts how often the sign was positive or negative once
//! it has started oscillating. Every `interval` steps, unfrozen signs whose
//! `f` exceeds a cosine-decayed threshold are frozen to their majority sign.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ssvq::sign;

/// Cosine decay from `start` at step 0 to `end` at step `total_steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSchedule {
    pub start: f64,
    pub end: f64,
    pub total_steps: usize,
}

impl ThresholdSchedule {
    pub fn new(start: f64, end: f64, total_steps: usize) -> Self {
        Self {
            start,
            end,
            total_steps,
        }
    }
}

pub fn cosine_threshold(t: usize, schedule: &ThresholdSchedule) -> Result<f64> {
    if t > schedule.total_steps {
        return Err(Error::OutOfRange {
            value: t as f64,
            lo: 0.0,
            hi: schedule.total_steps as f64,
        });
    }
    let progress = if schedule.total_steps == 0 {
        0.0
    } else {
        t as f64 / schedule.total_steps as f64
    };
    Ok(schedule.end + 0.5 * (schedule.start - schedule.end) * (1.0 + (std::f64::consts::PI * progress).cos()))
}

/// What decides the sign a position is frozen to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FreezeCriterion {
    /// Count of positive vs. negative steps since oscillation began.
    #[default]
    MajorityVote,
    /// Sign of an EMA of the sign itself (the two-EMA baseline).
    SignEma,
}

/// Resolution of a tied vote.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieRule {
    /// Keep whatever sign the position currently has.
    #[default]
    KeepCurrent,
    /// Ties freeze negative, the literal if/else reading.
    Negative,
}

/// `+1` if `pos > neg`, `-1` if `neg > pos`, `current` on a tie.
pub fn majority_vote(pos: u32, neg: u32, current: f64) -> f64 {
    match pos.cmp(&neg) {
        std::cmp::Ordering::Greater => 1.0,
        std::cmp::Ordering::Less => -1.0,
        std::cmp::Ordering::Equal => sign(current),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FreezeConfig {
    pub enabled: bool,
    /// Steps between freezing checks.
    pub interval: usize,
    /// EMA momentum `m` in `(0, 1)`.
    pub momentum: f64,
    pub threshold_start: f64,
    pub threshold_end: f64,
    pub criterion: FreezeCriterion,
    pub tie_rule: TieRule,
}

impl Default for FreezeConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            interval: 500,
            momentum: 0.99,
            threshold_start: 0.04,
            threshold_end: 0.005,
            criterion: FreezeCriterion::MajorityVote,
            tie_rule: TieRule::KeepCurrent,
        }
    }
}

impl FreezeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.interval == 0 {
            return Err(Error::InvalidConfig("freeze interval must be >= 1".into()));
        }
        if !(self.momentum > 0.0 && self.momentum < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "freeze momentum must be in (0, 1), got {}",
                self.momentum
            )));
        }
        for t in [self.threshold_start, self.threshold_end] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidConfig(format!("threshold {t} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn schedule(&self, total_steps: usize) -> ThresholdSchedule {
        ThresholdSchedule::new(self.threshold_start, self.threshold_end, total_steps)
    }
}

/// One freeze decision, written to the freeze log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreezeEvent {
    pub iteration: usize,
    pub position: usize,
    pub frozen_sign: i8,
    pub f: f64,
    pub p_c: u32,
    pub n_c: u32,
}

#[derive(Clone, Debug, Default)]
pub struct StepOutcome {
    /// Unfrozen signs that changed this step.
    pub flips: usize,
    /// Positions frozen this step.
    pub events: Vec<FreezeEvent>,
}

#[derive(Clone, Debug)]
pub struct FreezeState {
    config: FreezeConfig,
    schedule: ThresholdSchedule,
    pub(crate) freq: Vec<f64>,
    pub(crate) pos_votes: Vec<u32>,
    pub(crate) neg_votes: Vec<u32>,
    pub(crate) frozen: Vec<bool>,
    prev_sign: Vec<f64>,
    sign_ema: Vec<f64>,
}

impl FreezeState {
    /// Starts tracking from the initial latent values `Ls^0`.
    pub fn new(config: FreezeConfig, total_steps: usize, initial_latent: &[f64]) -> Result<Self> {
        config.validate()?;
        let n = initial_latent.len();
        let signs: Vec<f64> = initial_latent.iter().map(|&l| sign(l)).collect();
        Ok(Self {
            schedule: config.schedule(total_steps),
            config,
            freq: vec![0.0; n],
            pos_votes: vec![0; n],
            neg_votes: vec![0; n],
            frozen: vec![false; n],
            sign_ema: signs.clone(),
            prev_sign: signs,
        })
    }

    pub fn config(&self) -> &FreezeConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.freq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freq.is_empty()
    }

    pub fn freq(&self) -> &[f64] {
        &self.freq
    }

    pub fn votes(&self, pos: usize) -> (u32, u32) {
        (self.pos_votes[pos], self.neg_votes[pos])
    }

    pub fn frozen(&self) -> &[bool] {
        &self.frozen
    }

    pub fn frozen_count(&self) -> usize {
        self.frozen.iter().filter(|&&f| f).count()
    }

    /// Processes step `t` (1-based) given the latent values after this step's update.
    pub fn step(&mut self, latent: &[f64], t: usize) -> Result<StepOutcome> {
        if latent.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} latents tracked, {} given",
                self.len(),
                latent.len()
            )));
        }
        if t == 0 {
            return Err(Error::InvalidConfig("freeze steps are 1-based".into()));
        }
        let m = self.config.momentum;
        let mut outcome = StepOutcome::default();

        for i in 0..latent.len() {
            let current = sign(latent[i]);
            let flipped = !self.frozen[i] && current != self.prev_sign[i];
            if flipped {
                outcome.flips += 1;
            }
            self.freq[i] = self.freq[i] * m + if flipped { 1.0 - m } else { 0.0 };
            if !self.frozen[i] {
                if self.freq[i] != 0.0 {
                    if current > 0.0 {
                        self.pos_votes[i] += 1;
                    } else {
                        self.neg_votes[i] += 1;
                    }
                }
                self.sign_ema[i] = self.sign_ema[i] * m + current * (1.0 - m);
            }
            self.prev_sign[i] = current;
        }

        if self.config.enabled && t % self.config.interval == 0 {
            let threshold = cosine_threshold(t.min(self.schedule.total_steps), &self.schedule)?;
            for i in 0..latent.len() {
                if self.frozen[i] || self.freq[i] <= threshold {
                    continue;
                }
                let s = self.frozen_sign(i, latent[i]);
                self.frozen[i] = true;
                self.prev_sign[i] = s;
                outcome.events.push(FreezeEvent {
                    iteration: t,
                    position: i,
                    frozen_sign: s as i8,
                    f: self.freq[i],
                    p_c: self.pos_votes[i],
                    n_c: self.neg_votes[i],
                });
            }
        }
        Ok(outcome)
    }

    fn frozen_sign(&self, i: usize, latent: f64) -> f64 {
        match self.config.criterion {
            FreezeCriterion::SignEma => sign(self.sign_ema[i]),
            FreezeCriterion::MajorityVote => {
                let (p, n) = (self.pos_votes[i], self.neg_votes[i]);
                match self.config.tie_rule {
                    TieRule::KeepCurrent => majority_vote(p, n, latent),
                    TieRule::Negative => {
                        if p > n {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                }
            }
        }
    }
}
