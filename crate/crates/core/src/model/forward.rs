//! Differentiable forward pass of the denoiser.
//!
//! Token layout for one gene is a `2 × d` matrix: row 0 is the projected ST
//! vector, row 1 the projected SC vector. The condition vector (timestep
//! embedding plus SC-matrix summary) drives adaLN modulation in every block.

use std::collections::BTreeMap;

use super::config::{ConditionMode, ModelConfig};
use super::params::{block_prefix, ModelParams};
use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor, Var};

pub const NORM_EPS: f64 = 1e-5;

/// Parameters bound as leaves of one graph.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn new(g: &mut Graph, params: &ModelParams) -> Self {
        let vars = params
            .iter()
            .map(|(name, t)| (name.clone(), g.leaf(t.clone())))
            .collect();
        Bound { vars }
    }

    /// Binds names to leaves that already exist on the graph.
    pub fn from_vars(names: impl IntoIterator<Item = String>, vars: &[Var]) -> Self {
        Bound {
            vars: names.into_iter().zip(vars.iter().copied()).collect(),
        }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    fn has(&self, name: &str) -> bool {
        self.vars.contains_key(name)
    }
}

/// `x · W (+ b)` for the linear layer called `name`.
pub fn linear(g: &mut Graph, b: &Bound, name: &str, x: Var) -> Result<Var> {
    let w = b.var(&format!("{name}.weight"))?;
    let y = g.matmul(x, w)?;
    let bias = format!("{name}.bias");
    if b.has(&bias) {
        g.add_row(y, b.var(&bias)?)
    } else {
        Ok(y)
    }
}

/// Uniform-stride landmark rows: `⌊i·m/r⌋` for `i < r`, or every row when
/// `r ≥ m` or exact attention is requested.
pub fn landmark_rows(m: usize, r: usize, exact: bool) -> Vec<usize> {
    if exact || r >= m {
        (0..m).collect()
    } else {
        (0..r).map(|i| i * m / r).collect()
    }
}

/// Interleaved `[sin(t·f_0), cos(t·f_0), sin(t·f_1), …]` with
/// `f_i = 10000^(−2i/d_t)`.
pub fn timestep_features(t: usize, dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(dim);
    for i in 0..dim / 2 {
        let freq = 10000f64.powf(-(2.0 * i as f64) / dim as f64);
        let arg = t as f64 * freq;
        out.push(arg.sin());
        out.push(arg.cos());
    }
    out
}

/// Landmark attention over the SC matrix. Returns `(attention, pooled)`
/// where `attention` is `m × r` and `pooled` is `1 × d_c`.
pub fn condition_attention(
    g: &mut Graph,
    b: &Bound,
    cfg: &ModelConfig,
    x_sc: Var,
) -> Result<(Var, Var)> {
    let m = g.value(x_sc).rows();
    let q = linear(g, b, "cond.query", x_sc)?;
    let k = linear(g, b, "cond.key", x_sc)?;
    let v = linear(g, b, "cond.value", x_sc)?;
    let idx = landmark_rows(m, cfg.landmarks, cfg.exact_attention);
    let kl = g.select_rows(k, &idx)?;
    let vl = g.select_rows(v, &idx)?;
    let scores = g.matmul_nt(q, kl)?;
    let scores = g.scale(scores, 1.0 / (cfg.key_dim as f64).sqrt());
    let attn = g.softmax_rows(scores);
    let ctx = g.matmul(attn, vl)?;
    let pooled = g.mean_rows(ctx);
    let out = linear(g, b, "cond.pool", pooled)?;
    Ok((attn, out))
}

/// Condition vector `1 × d_c` from the (already row-restricted) SC matrix.
pub fn condition_embed(g: &mut Graph, b: &Bound, cfg: &ModelConfig, x_sc: Var) -> Result<Var> {
    if g.value(x_sc).is_empty() {
        return Err(Error::Config("empty SC matrix".into()));
    }
    match cfg.condition {
        ConditionMode::Off => Ok(g.leaf(Tensor::zeros(&[1, cfg.cond_dim]))),
        ConditionMode::Mlp => {
            let pooled = g.mean_rows(x_sc);
            let h = linear(g, b, "cond.fc1", pooled)?;
            let h = g.gelu(h);
            linear(g, b, "cond.fc2", h)
        }
        ConditionMode::Attention | ConditionMode::SharedGenes => {
            Ok(condition_attention(g, b, cfg, x_sc)?.1)
        }
    }
}

pub fn timestep_embed(g: &mut Graph, b: &Bound, cfg: &ModelConfig, t: usize) -> Result<Var> {
    let feats = g.leaf(Tensor::row(timestep_features(t, cfg.time_dim))?);
    let h = linear(g, b, "t_embed.fc1", feats)?;
    let h = g.silu(h);
    linear(g, b, "t_embed.fc2", h)
}

/// `2 × d` token matrix `[ST; SC]` for one gene.
pub fn latent_embed(
    g: &mut Graph,
    b: &Bound,
    cfg: &ModelConfig,
    x_st: Var,
    x_sc: Var,
) -> Result<Var> {
    let st = linear(g, b, "st_proj", x_st)?;
    let sc = if cfg.concat {
        linear(g, b, "sc_proj", x_sc)?
    } else {
        g.leaf(Tensor::zeros(&[1, cfg.hidden]))
    };
    g.concat_rows(&[st, sc])
}

fn modulate(g: &mut Graph, x: Var, shift: Var, scale: Var) -> Result<Var> {
    let d = g.value(x).cols();
    let one = g.leaf(Tensor::ones(&[1, d]));
    let zero = g.leaf(Tensor::zeros(&[1, d]));
    let h = g.layer_norm(x, one, zero, NORM_EPS)?;
    let s = g.add_scalar(scale, 1.0);
    let h = g.mul_row(h, s)?;
    g.add_row(h, shift)
}

fn self_attention(g: &mut Graph, b: &Bound, cfg: &ModelConfig, prefix: &str, x: Var) -> Result<Var> {
    let q = linear(g, b, &format!("{prefix}.attn.query"), x)?;
    let k = linear(g, b, &format!("{prefix}.attn.key"), x)?;
    let v = linear(g, b, &format!("{prefix}.attn.value"), x)?;
    let dh = cfg.hidden / cfg.heads;
    let mut heads = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let (qh, kh, vh) = if cfg.heads == 1 {
            (q, k, v)
        } else {
            (
                g.slice_cols(q, h * dh, dh)?,
                g.slice_cols(k, h * dh, dh)?,
                g.slice_cols(v, h * dh, dh)?,
            )
        };
        let s = g.matmul_nt(qh, kh)?;
        let s = g.scale(s, 1.0 / (dh as f64).sqrt());
        let a = g.softmax_rows(s);
        heads.push(g.matmul(a, vh)?);
    }
    let cat = if heads.len() == 1 {
        heads[0]
    } else {
        g.concat_cols(&heads)?
    };
    linear(g, b, &format!("{prefix}.attn.out"), cat)
}

/// One adaLN-zero block. `c_act` is the SiLU-activated modulation input.
pub fn dit_block(
    g: &mut Graph,
    b: &Bound,
    cfg: &ModelConfig,
    index: usize,
    x: Var,
    c_act: Var,
) -> Result<Var> {
    let prefix = block_prefix(index);
    let d = cfg.hidden;
    let m = linear(g, b, &format!("{prefix}.mod"), c_act)?;
    let chunk = |g: &mut Graph, i: usize| g.slice_cols(m, i * d, d);
    let (shift1, scale1, gate1) = (chunk(g, 0)?, chunk(g, 1)?, chunk(g, 2)?);
    let (shift2, scale2, gate2) = (chunk(g, 3)?, chunk(g, 4)?, chunk(g, 5)?);

    let h = modulate(g, x, shift1, scale1)?;
    let a = self_attention(g, b, cfg, &prefix, h)?;
    let a = g.mul_row(a, gate1)?;
    let x = g.add(x, a)?;

    let h = modulate(g, x, shift2, scale2)?;
    let h = linear(g, b, &format!("{prefix}.mlp.fc1"), h)?;
    let h = g.gelu(h);
    let h = linear(g, b, &format!("{prefix}.mlp.fc2"), h)?;
    let h = g.mul_row(h, gate2)?;
    g.add(x, h)
}

/// Modulation input `SiLU(t_embed(t) + cond)`.
pub fn modulation_input(g: &mut Graph, b: &Bound, cfg: &ModelConfig, t: usize, cond: Var) -> Result<Var> {
    let te = timestep_embed(g, b, cfg, t)?;
    let c = g.add(te, cond)?;
    Ok(g.silu(c))
}

/// Runs every block; returns the final token matrix.
pub fn backbone(g: &mut Graph, b: &Bound, cfg: &ModelConfig, tokens: Var, c_act: Var) -> Result<Var> {
    let mut x = tokens;
    for i in 0..cfg.blocks {
        x = dit_block(g, b, cfg, i, x, c_act)?;
    }
    Ok(x)
}

/// Final modulated norm and linear decoder on the ST token.
/// Returns `(eps_hat, cov_hat)`, each `1 × p`.
pub fn decode(g: &mut Graph, b: &Bound, cfg: &ModelConfig, x: Var, c_act: Var) -> Result<(Var, Var)> {
    let d = cfg.hidden;
    let m = linear(g, b, "final.mod", c_act)?;
    let shift = g.slice_cols(m, 0, d)?;
    let scale = g.slice_cols(m, d, d)?;
    let st = g.select_rows(x, &[0])?;
    let h = modulate(g, st, shift, scale)?;
    let out = linear(g, b, "decoder", h)?;
    let eps = g.slice_cols(out, 0, cfg.spots)?;
    let cov = g.slice_cols(out, cfg.spots, cfg.spots)?;
    Ok((eps, cov))
}

/// Full denoiser: tokens `2 × d`, step `t`, condition `1 × d_c`.
pub fn denoise(
    g: &mut Graph,
    b: &Bound,
    cfg: &ModelConfig,
    tokens: Var,
    t: usize,
    cond: Var,
) -> Result<(Var, Var)> {
    let c_act = modulation_input(g, b, cfg, t, cond)?;
    let x = backbone(g, b, cfg, tokens, c_act)?;
    decode(g, b, cfg, x, c_act)
}
