use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::TrainConfig;
use crate::data::{make_masks, Bundle, MaskMode};
use crate::error::{Error, Result};
use crate::model::forward::{self, Bound};
use crate::model::ModelConfig;
use crate::numerics::{Graph, Tensor, Var};
use crate::schedule::Schedule;

/// Masked squared error: mean of `(ε − ε̂)²` over unknown entries.
pub fn loss_eps(eps: &[f64], eps_hat: &[f64], unknown: &[bool]) -> Result<f64> {
    if eps.len() != eps_hat.len() || eps.len() != unknown.len() {
        return Err(Error::Shape {
            op: "loss_eps",
            left: vec![eps.len(), eps_hat.len()],
            right: vec![unknown.len()],
        });
    }
    let n = unknown.iter().filter(|&&u| u).count();
    if n == 0 {
        return Err(Error::Config("loss over an empty mask".into()));
    }
    let s: f64 = eps
        .iter()
        .zip(eps_hat)
        .zip(unknown)
        .filter(|(_, &u)| u)
        .map(|((a, b), _)| (a - b).powi(2))
        .sum();
    Ok(s / n as f64)
}

/// One noised training pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub gene: String,
    /// Noisy ST vector with known entries clamped to their clean values.
    pub x_in: Vec<f64>,
    /// Standardized SC vector of the gene.
    pub sc: Vec<f64>,
    pub unknown: Vec<bool>,
    pub t: usize,
    pub eps: Vec<f64>,
}

/// Draws masks (from `mask_rng`), a step and noise (from `noise_rng`) for
/// `gene`.
pub fn draw_example<R: Rng + ?Sized>(
    bundle: &Bundle,
    gene: &str,
    cfg: &TrainConfig,
    schedule: &Schedule,
    mask_rng: &mut R,
    noise_rng: &mut R,
) -> Result<Example> {
    let x0 = bundle.st_row(gene)?;
    let sc = bundle.sc_row(gene)?.to_vec();
    let mode = if mask_rng.random::<f64>() < cfg.whole_gene_prob {
        MaskMode::WholeGene
    } else {
        MaskMode::SpotMask
    };
    let mut masks = make_masks(&bundle.mask_source(gene)?, cfg.mask_ratio, mode, mask_rng);
    if masks.unknown_count() == 0 {
        masks.unknown = vec![true; x0.len()];
    }
    let t = noise_rng.random_range(1..=schedule.steps());
    let eps: Vec<f64> = (0..x0.len()).map(|_| StandardNormal.sample(noise_rng)).collect();
    let x_t = schedule.q_sample(x0, t, &eps)?;
    let x_in = x_t
        .iter()
        .zip(x0)
        .zip(&masks.unknown)
        .map(|((n, c), &u)| if u { *n } else { *c })
        .collect();
    Ok(Example {
        gene: gene.to_string(),
        x_in,
        sc,
        unknown: masks.unknown,
        t,
        eps,
    })
}

/// Mean over `examples` of the masked ε-loss, on the tape.
pub fn batch_loss(g: &mut Graph, b: &Bound, cfg: &ModelConfig, examples: &[Example], cond: Var) -> Result<Var> {
    let mut total: Option<Var> = None;
    for ex in examples {
        let n = ex.unknown.iter().filter(|&&u| u).count();
        if n == 0 {
            return Err(Error::Config(format!("empty loss mask for gene {}", ex.gene)));
        }
        let st = g.leaf(Tensor::row(ex.x_in.clone())?);
        let sc = g.leaf(Tensor::row(ex.sc.clone())?);
        let tok = forward::latent_embed(g, b, cfg, st, sc)?;
        let (eps_hat, _) = forward::denoise(g, b, cfg, tok, ex.t, cond)?;
        let target = g.leaf(Tensor::row(ex.eps.clone())?);
        let w = g.leaf(Tensor::row(
            ex.unknown.iter().map(|&u| if u { 1.0 / n as f64 } else { 0.0 }).collect(),
        )?);
        let d = g.sub(eps_hat, target)?;
        let sq = g.mul(d, d)?;
        let sq = g.mul(sq, w)?;
        let s = g.sum_all(sq);
        total = Some(match total {
            None => s,
            Some(acc) => g.add(acc, s)?,
        });
    }
    let total = total.ok_or_else(|| Error::Config("empty batch".into()))?;
    Ok(g.scale(total, 1.0 / examples.len() as f64))
}
