use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::{make_schedule, Schedule, ScheduleKind};

/// Reference beta range for a 1000-step chain.
pub const BETA_START: f64 = 1e-4;
pub const BETA_END: f64 = 0.02;
const REFERENCE_STEPS: f64 = 1000.0;
const MAX_BETA: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: u64,
    /// Genes per step.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Fraction of non-zero entries hidden in spot-mask mode.
    pub mask_ratio: f64,
    /// Probability that a training example hides the whole gene.
    pub whole_gene_prob: f64,
    /// Diffusion steps `T`.
    pub steps: usize,
    /// Defaults to the reference range rescaled to `steps`.
    pub beta_start: Option<f64>,
    pub beta_end: Option<f64>,
    pub seed: u64,
    /// Validation cadence in iterations.
    pub eval_every: u64,
    /// Noise draws per validation gene.
    pub val_draws: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 10_000,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            mask_ratio: 0.5,
            whole_gene_prob: 0.5,
            steps: 1000,
            beta_start: None,
            beta_end: None,
            seed: 0,
            eval_every: 100,
            val_draws: 4,
        }
    }
}

impl TrainConfig {
    /// Desk-scale settings: 50 diffusion steps, 8 genes per batch.
    pub fn desk() -> Self {
        TrainConfig {
            iterations: 2000,
            batch_size: 8,
            steps: 50,
            ..Self::default()
        }
    }

    /// Beta range actually used. Without explicit values the reference
    /// range is stretched by `1000/T` (capped at 0.5) so short chains still
    /// end near pure noise.
    pub fn beta_range(&self) -> (f64, f64) {
        let factor = REFERENCE_STEPS / self.steps.max(1) as f64;
        let end = self.beta_end.unwrap_or((BETA_END * factor).min(MAX_BETA));
        let start = self.beta_start.unwrap_or((BETA_START * factor).min(end));
        (start, end)
    }

    pub fn schedule(&self) -> Result<Schedule> {
        let (start, end) = self.beta_range();
        make_schedule(self.steps, start, end, ScheduleKind::Linear)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("train.batch_size", self.batch_size as f64),
            ("train.learning_rate", self.learning_rate),
            ("train.adam_eps", self.adam_eps),
            ("train.steps", self.steps as f64),
            ("train.eval_every", self.eval_every as f64),
            ("train.val_draws", self.val_draws as f64),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        for (name, v) in [
            ("train.beta1", self.beta1),
            ("train.beta2", self.beta2),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1)")));
            }
        }
        for (name, v) in [
            ("train.mask_ratio", self.mask_ratio),
            ("train.whole_gene_prob", self.whole_gene_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1]")));
            }
        }
        self.schedule().map(|_| ())
    }
}
