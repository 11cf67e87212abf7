use std::collections::BTreeMap;

use rand::Rng;

use super::config::{ConditionMode, ModelConfig};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng;

/// All learnable weights, keyed by dotted name. Iteration order is the
/// lexicographic name order, which is also the checkpoint order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    tensors: BTreeMap<String, Tensor>,
}

pub(crate) fn block_prefix(i: usize) -> String {
    format!("blocks.{i:03}")
}

/// Which tensors are zero at initialization (adaLN heads and the decoder).
fn zero_init(name: &str) -> bool {
    name.ends_with(".mod.weight")
        || name.ends_with(".mod.bias")
        || name.starts_with("decoder.")
}

impl ModelParams {
    pub fn from_map(tensors: BTreeMap<String, Tensor>) -> Self {
        ModelParams { tensors }
    }

    /// Shapes of every tensor for `cfg`, in name order.
    pub fn layout(cfg: &ModelConfig) -> BTreeMap<String, Vec<usize>> {
        let (d, dc) = (cfg.hidden, cfg.cond_dim);
        let mut m = BTreeMap::new();
        let mut linear = |name: &str, fan_in: usize, fan_out: usize, bias: bool| {
            m.insert(format!("{name}.weight"), vec![fan_in, fan_out]);
            if bias {
                m.insert(format!("{name}.bias"), vec![1, fan_out]);
            }
        };
        linear("st_proj", cfg.spots, d, true);
        linear("sc_proj", cfg.cells, d, true);
        match cfg.condition {
            ConditionMode::Attention | ConditionMode::SharedGenes => {
                linear("cond.query", cfg.cells, cfg.key_dim, false);
                linear("cond.key", cfg.cells, cfg.key_dim, false);
                linear("cond.value", cfg.cells, cfg.value_dim, false);
                linear("cond.pool", cfg.value_dim, dc, true);
            }
            ConditionMode::Mlp => {
                linear("cond.fc1", cfg.cells, dc, true);
                linear("cond.fc2", dc, dc, true);
            }
            ConditionMode::Off => {}
        }
        linear("t_embed.fc1", cfg.time_dim, dc, true);
        linear("t_embed.fc2", dc, dc, true);
        for i in 0..cfg.blocks {
            let p = block_prefix(i);
            linear(&format!("{p}.mod"), dc, 6 * d, true);
            linear(&format!("{p}.attn.query"), d, d, false);
            linear(&format!("{p}.attn.key"), d, d, false);
            linear(&format!("{p}.attn.value"), d, d, false);
            linear(&format!("{p}.attn.out"), d, d, true);
            linear(&format!("{p}.mlp.fc1"), d, cfg.mlp_ratio * d, true);
            linear(&format!("{p}.mlp.fc2"), cfg.mlp_ratio * d, d, true);
        }
        linear("final.mod", dc, 2 * d, true);
        linear("decoder", d, 2 * cfg.spots, true);
        m
    }

    /// Seeded initialization: uniform ±1/√fan_in for ordinary weights and
    /// biases, exact zeros for modulation heads and the decoder.
    pub fn init(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng::stream(cfg.init_seed, rng::INIT);
        let layout = Self::layout(cfg);
        let mut tensors = BTreeMap::new();
        for (name, shape) in &layout {
            let n: usize = shape.iter().product();
            let data = if zero_init(name) {
                vec![0.0; n]
            } else {
                let fan_in = if name.ends_with(".bias") {
                    // a bias shares the fan-in of its weight
                    let w = name.trim_end_matches(".bias").to_string() + ".weight";
                    layout[&w][0]
                } else {
                    shape[0]
                };
                let bound = 1.0 / (fan_in as f64).sqrt();
                (0..n).map(|_| rng.random_range(-bound..bound)).collect()
            };
            tensors.insert(name.clone(), Tensor::new(shape.clone(), data)?);
        }
        Ok(ModelParams { tensors })
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn insert(&mut self, name: &str, t: Tensor) -> Result<()> {
        match self.tensors.get(name) {
            Some(old) if old.shape() != t.shape() => Err(Error::Shape {
                op: "param insert",
                left: old.shape().to_vec(),
                right: t.shape().to_vec(),
            }),
            _ => {
                self.tensors.insert(name.to_string(), t);
                Ok(())
            }
        }
    }

    /// Checks every tensor against the layout of `cfg`.
    pub fn check_layout(&self, cfg: &ModelConfig) -> Result<()> {
        let layout = Self::layout(cfg);
        if layout.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "parameter count {} does not match configuration ({})",
                self.tensors.len(),
                layout.len()
            )));
        }
        for (name, shape) in layout {
            let t = self.get(&name)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Number of scalar parameters implied by `cfg`.
pub fn parameter_count(cfg: &ModelConfig) -> usize {
    ModelParams::layout(cfg)
        .values()
        .map(|s| s.iter().product::<usize>())
        .sum()
}
