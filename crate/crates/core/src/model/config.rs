use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the scRNA-seq matrix is turned into the condition vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionMode {
    /// Landmark attention over the full SC matrix, mean-pooled.
    #[default]
    Attention,
    /// Condition vector forced to zero.
    Off,
    /// Mean-pooled SC profile through a two-layer MLP (no attention).
    Mlp,
    /// Landmark attention restricted to genes shared with the ST panel.
    SharedGenes,
}

impl std::str::FromStr for ConditionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attention" | "on" => Ok(Self::Attention),
            "off" => Ok(Self::Off),
            "mlp" => Ok(Self::Mlp),
            "shared-genes" => Ok(Self::SharedGenes),
            other => Err(Error::Usage(format!(
                "unknown condition mode {other:?} (attention, off, mlp, shared-genes)"
            ))),
        }
    }
}

/// Architecture hyperparameters. Input widths (`spots`, `cells`) are filled
/// in from the data before initialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// ST vector length `p` (spots).
    pub spots: usize,
    /// SC vector length `q` (cells).
    pub cells: usize,
    pub hidden: usize,
    pub cond_dim: usize,
    pub time_dim: usize,
    pub key_dim: usize,
    pub value_dim: usize,
    pub landmarks: usize,
    /// Attend to every SC gene instead of `landmarks` strided rows.
    pub exact_attention: bool,
    pub blocks: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub condition: ConditionMode,
    /// When false the SC token is replaced by zeros.
    pub concat: bool,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            spots: 0,
            cells: 0,
            hidden: 64,
            cond_dim: 64,
            time_dim: 64,
            key_dim: 32,
            value_dim: 32,
            landmarks: 64,
            exact_attention: false,
            blocks: 4,
            heads: 4,
            mlp_ratio: 4,
            condition: ConditionMode::Attention,
            concat: true,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    /// Small configuration used by desk-scale runs and tests.
    pub fn desk() -> Self {
        ModelConfig {
            hidden: 8,
            cond_dim: 8,
            time_dim: 8,
            key_dim: 8,
            value_dim: 8,
            landmarks: 16,
            blocks: 1,
            heads: 1,
            ..Self::default()
        }
    }

    /// Mid-size configuration for end-to-end runs on synthetic data.
    /// The desk model is too narrow to pick up the SC-to-ST mapping.
    pub fn bench() -> Self {
        ModelConfig {
            hidden: 64,
            cond_dim: 64,
            time_dim: 64,
            key_dim: 64,
            value_dim: 64,
            landmarks: 16,
            blocks: 2,
            heads: 1,
            ..Self::default()
        }
    }

    pub fn with_io(mut self, spots: usize, cells: usize) -> Self {
        self.spots = spots;
        self.cells = cells;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("spots", self.spots),
            ("cells", self.cells),
            ("hidden", self.hidden),
            ("cond_dim", self.cond_dim),
            ("time_dim", self.time_dim),
            ("key_dim", self.key_dim),
            ("value_dim", self.value_dim),
            ("landmarks", self.landmarks),
            ("blocks", self.blocks),
            ("heads", self.heads),
            ("mlp_ratio", self.mlp_ratio),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("model.{name} must be positive")));
        }
        if self.hidden % self.heads != 0 {
            return Err(Error::Config(format!(
                "model.hidden ({}) must be divisible by model.heads ({})",
                self.hidden, self.heads
            )));
        }
        if self.time_dim % 2 != 0 {
            return Err(Error::Config("model.time_dim must be even".into()));
        }
        Ok(())
    }
}
