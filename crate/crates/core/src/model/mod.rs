//! The conditional noise predictor.

mod config;
pub mod forward;
mod params;

pub use config::{ConditionMode, ModelConfig};
pub use forward::{landmark_rows, timestep_features, Bound};
pub use params::{parameter_count, ModelParams};

use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor};

/// Configuration plus weights, with tensor-level entry points. Each call
/// builds and discards its own graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    cfg: ModelConfig,
    params: ModelParams,
}

impl Model {
    pub fn new(cfg: ModelConfig, params: ModelParams) -> Result<Self> {
        cfg.validate()?;
        params.check_layout(&cfg)?;
        Ok(Model { cfg, params })
    }

    pub fn init(cfg: ModelConfig) -> Result<Self> {
        let params = ModelParams::init(&cfg)?;
        Ok(Model { cfg, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub fn into_parts(self) -> (ModelConfig, ModelParams) {
        (self.cfg, self.params)
    }

    fn check_len(&self, what: &'static str, v: &[f64], want: usize) -> Result<()> {
        if v.len() != want {
            return Err(Error::Shape {
                op: what,
                left: vec![v.len()],
                right: vec![want],
            });
        }
        Ok(())
    }

    /// `2 × d` tokens for one gene.
    pub fn latent_embed(&self, x_st: &[f64], x_sc: &[f64]) -> Result<Tensor> {
        self.check_len("latent_embed st", x_st, self.cfg.spots)?;
        self.check_len("latent_embed sc", x_sc, self.cfg.cells)?;
        let mut g = Graph::new();
        let b = Bound::new(&mut g, &self.params);
        let st = g.leaf(Tensor::row(x_st.to_vec())?);
        let sc = g.leaf(Tensor::row(x_sc.to_vec())?);
        let out = forward::latent_embed(&mut g, &b, &self.cfg, st, sc)?;
        Ok(g.value(out).clone())
    }

    fn check_sc(&self, x_sc: &Tensor) -> Result<()> {
        if x_sc.cols() != self.cfg.cells {
            return Err(Error::Shape {
                op: "condition_embed",
                left: x_sc.shape().to_vec(),
                right: vec![self.cfg.cells],
            });
        }
        Ok(())
    }

    /// `1 × d_c` summary of an `m × q` SC matrix.
    pub fn condition_embed(&self, x_sc: &Tensor) -> Result<Tensor> {
        self.check_sc(x_sc)?;
        let mut g = Graph::new();
        let b = Bound::new(&mut g, &self.params);
        let x = g.leaf(x_sc.clone());
        let out = forward::condition_embed(&mut g, &b, &self.cfg, x)?;
        Ok(g.value(out).clone())
    }

    /// Landmark attention map (`m × r`) of the condition embedder.
    pub fn condition_attention(&self, x_sc: &Tensor) -> Result<Tensor> {
        self.check_sc(x_sc)?;
        if !matches!(
            self.cfg.condition,
            ConditionMode::Attention | ConditionMode::SharedGenes
        ) {
            return Err(Error::Config("condition mode has no attention map".into()));
        }
        let mut g = Graph::new();
        let b = Bound::new(&mut g, &self.params);
        let x = g.leaf(x_sc.clone());
        let (a, _) = forward::condition_attention(&mut g, &b, &self.cfg, x)?;
        Ok(g.value(a).clone())
    }

    pub fn timestep_embed(&self, t: usize) -> Result<Tensor> {
        let mut g = Graph::new();
        let b = Bound::new(&mut g, &self.params);
        let out = forward::timestep_embed(&mut g, &b, &self.cfg, t)?;
        Ok(g.value(out).clone())
    }

    /// Tokens after the full block stack (before decoding).
    pub fn backbone(&self, tokens: &Tensor, t: usize, cond: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let b = Bound::new(&mut g, &self.params);
        let x = g.leaf(tokens.clone());
        let c = g.leaf(cond.clone());
        let c_act = forward::modulation_input(&mut g, &b, &self.cfg, t, c)?;
        let out = forward::backbone(&mut g, &b, &self.cfg, x, c_act)?;
        Ok(g.value(out).clone())
    }

    /// `(eps_hat, cov_hat)` from a token matrix.
    pub fn denoise(&self, tokens: &Tensor, t: usize, cond: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut g = Graph::new();
        let b = Bound::new(&mut g, &self.params);
        let x = g.leaf(tokens.clone());
        let c = g.leaf(cond.clone());
        let (e, v) = forward::denoise(&mut g, &b, &self.cfg, x, t, c)?;
        Ok((g.value(e).to_vec(), g.value(v).to_vec()))
    }

    /// Noise prediction for a noisy ST vector of one gene.
    pub fn predict_eps(&self, x_t: &[f64], x_sc: &[f64], t: usize, cond: &Tensor) -> Result<Vec<f64>> {
        self.check_len("predict_eps st", x_t, self.cfg.spots)?;
        self.check_len("predict_eps sc", x_sc, self.cfg.cells)?;
        let mut g = Graph::new();
        let b = Bound::new(&mut g, &self.params);
        let st = g.leaf(Tensor::row(x_t.to_vec())?);
        let sc = g.leaf(Tensor::row(x_sc.to_vec())?);
        let c = g.leaf(cond.clone());
        let tokens = forward::latent_embed(&mut g, &b, &self.cfg, st, sc)?;
        let (e, _) = forward::denoise(&mut g, &b, &self.cfg, tokens, t, c)?;
        Ok(g.value(e).to_vec())
    }
}
