//! Conditional DDPM training with the masked ε-objective.

mod adam;
mod checkpoint;
mod config;
mod fit;
mod loss;

pub use adam::AdamState;
pub use checkpoint::{Checkpoint, NormStats, RngStates, MAGIC, VERSION};
pub use config::{TrainConfig, BETA_END, BETA_START};
pub use fit::{dataset_loss, fit, log_text, resume, FitResult, LogRow, Trainer};
pub use loss::{batch_loss, draw_example, loss_eps, Example};
