//! Ancestral sampling with clamped known coordinates.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::data::{Bundle, ExpressionMatrix};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::Tensor;
use crate::rng::{self, hash_label};
use crate::schedule::Schedule;
use crate::training::{Checkpoint, NormStats};


/// Noise predictor for one gene: maps `(x_t, t)` to `ε̂`.
pub trait EpsModel {
    fn eps(&self, x_t: &[f64], t: usize) -> Result<Vec<f64>>;
}

/// The trained denoiser bound to one gene's SC vector and the shared
/// condition vector.
pub struct GeneDenoiser<'a> {
    pub model: &'a Model,
    pub sc: &'a [f64],
    pub cond: &'a Tensor,
}

impl EpsModel for GeneDenoiser<'_> {
    fn eps(&self, x_t: &[f64], t: usize) -> Result<Vec<f64>> {
        self.model.predict_eps(x_t, self.sc, t, self.cond)
    }
}

/// Known values to hold fixed during sampling.
#[derive(Clone, Debug, PartialEq)]
pub struct Clamp {
    pub values: Vec<f64>,
    pub known: Vec<bool>,
}

impl Clamp {
    fn apply(&self, x: &mut [f64]) {
        for ((v, c), &k) in x.iter_mut().zip(&self.values).zip(&self.known) {
            if k {
                *v = *c;
            }
        }
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// One reverse chain from `x_T ~ N(0, I)` down to `x_0`. Clamped entries
/// are reset before the denoiser sees the state and after every update.
/// `observe` sees the state after each step (`t` is the step just taken).
pub fn sample_chain<M: EpsModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    schedule: &Schedule,
    p: usize,
    clamp: Option<&Clamp>,
    rng: &mut R,
    observe: &mut dyn FnMut(usize, &[f64]),
) -> Result<Vec<f64>> {
    if let Some(c) = clamp {
        if c.values.len() != p || c.known.len() != p {
            return Err(Error::Request(format!(
                "clamp covers {} spots, model has {p}",
                c.values.len().max(c.known.len())
            )));
        }
    }
    let mut x: Vec<f64> = (0..p).map(|_| normal(rng)).collect();
    for t in (1..=schedule.steps()).rev() {
        if let Some(c) = clamp {
            c.apply(&mut x);
        }
        let eps_hat = model.eps(&x, t)?;
        let (mu, sigma) = schedule.p_mean_sigma(&x, t, &eps_hat)?;
        x = if t > 1 {
            mu.iter()
                .map(|m| m + sigma * normal(rng))
                .collect()
        } else {
            mu
        };
        if let Some(c) = clamp {
            c.apply(&mut x);
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite sample at step {t}")));
        }
        observe(t, &x);
    }
    Ok(x)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleRequest {
    pub gene: String,
    pub clamp: Option<Clamp>,
    pub draws: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleOutput {
    /// Per-spot mean over draws (standardized units).
    pub mean: Vec<f64>,
    pub draws: Vec<Vec<f64>>,
}

/// Averages `draws` chains seeded from `(seed, label)`.
pub fn sample_draws<M: EpsModel + ?Sized>(
    model: &M,
    schedule: &Schedule,
    p: usize,
    clamp: Option<&Clamp>,
    draws: usize,
    seed: u64,
    label: &str,
) -> Result<SampleOutput> {
    if draws == 0 {
        return Err(Error::Request("draw count must be at least 1".into()));
    }
    let mut rng = rng::stream(hash_label(seed, label), rng::SAMPLE);
    let mut out = Vec::with_capacity(draws);
    for _ in 0..draws {
        out.push(sample_chain(model, schedule, p, clamp, &mut rng, &mut |_, _| {})?);
    }
    let mut mean: Vec<f64> = (0..p)
        .map(|j| out.iter().map(|d| d[j]).sum::<f64>() / draws as f64)
        .collect();
    // averaging can perturb the last bit; clamped spots stay exact
    if let Some(c) = clamp {
        c.apply(&mut mean);
    }
    Ok(SampleOutput { mean, draws: out })
}

/// Read-only sampling context: trained model, schedule, SC data and the
/// cached condition vector.
pub struct Sampler<'a> {
    pub model: Model,
    pub schedule: Schedule,
    sc: &'a ExpressionMatrix,
    cond: Tensor,
}

impl<'a> Sampler<'a> {
    pub fn new(ckpt: &Checkpoint, bundle: &'a Bundle) -> Result<Self> {
        let model = ckpt.model()?;
        let cfg = model.config();
        if cfg.spots != bundle.st.n_cols() || cfg.cells != bundle.sc.n_cols() {
            return Err(Error::Checkpoint(format!(
                "checkpoint expects {} spots and {} cells, data has {} and {}",
                cfg.spots,
                cfg.cells,
                bundle.st.n_cols(),
                bundle.sc.n_cols()
            )));
        }
        let cond = model.condition_embed(&bundle.condition_matrix(cfg.condition)?)?;
        Ok(Sampler {
            schedule: ckpt.schedule.clone(),
            model,
            sc: &bundle.sc,
            cond,
        })
    }

    pub fn spots(&self) -> usize {
        self.model.config().spots
    }

    pub fn sample_gene(&self, req: &SampleRequest) -> Result<SampleOutput> {
        let i = self
            .sc
            .position(&req.gene)
            .ok_or_else(|| Error::Request(format!("gene {:?} is not in the SC matrix", req.gene)))?;
        let den = GeneDenoiser {
            model: &self.model,
            sc: self.sc.row(i),
            cond: &self.cond,
        };
        sample_draws(&den, &self.schedule, self.spots(), req.clamp.as_ref(), req.draws, req.seed, &req.gene)
    }

    /// Unclamped predictions for `genes`, gathered in the given order.
    /// Genes run on the current rayon pool.
    pub fn predict(&self, genes: &[String], col_ids: &[String], draws: usize, seed: u64) -> Result<ExpressionMatrix> {
        let rows = genes
            .par_iter()
            .map(|g| {
                self.sample_gene(&SampleRequest {
                    gene: g.clone(),
                    clamp: None,
                    draws,
                    seed,
                })
                .map(|o| o.mean)
            })
            .collect::<Result<Vec<_>>>()?;
        predictions_matrix(genes, col_ids, rows)
    }

    /// Same as [`Sampler::predict`] without the worker pool.
    pub fn predict_serial(&self, genes: &[String], col_ids: &[String], draws: usize, seed: u64) -> Result<ExpressionMatrix> {
        let rows = genes
            .iter()
            .map(|g| {
                self.sample_gene(&SampleRequest {
                    gene: g.clone(),
                    clamp: None,
                    draws,
                    seed,
                })
                .map(|o| o.mean)
            })
            .collect::<Result<Vec<_>>>()?;
        predictions_matrix(genes, col_ids, rows)
    }
}

fn predictions_matrix(genes: &[String], col_ids: &[String], rows: Vec<Vec<f64>>) -> Result<ExpressionMatrix> {
    let p = col_ids.len();
    let data: Vec<f64> = rows.into_iter().flatten().collect();
    ExpressionMatrix::table(genes.to_vec(), col_ids.to_vec(), Tensor::matrix(genes.len(), p, data)?)
}

/// Predictions for the test split, in standardized units.
pub fn predict_testset(ckpt: &Checkpoint, bundle: &Bundle, draws: usize, seed: u64) -> Result<ExpressionMatrix> {
    if bundle.split.test.is_empty() {
        return Err(Error::Data("test split is empty".into()));
    }
    Sampler::new(ckpt, bundle)?.predict(&bundle.split.test, bundle.st.col_ids(), draws, seed)
}

/// Maps standardized predictions back to log1p space with the ST
/// statistics (or to counts via `expm1`, clamped at zero). Genes without ST
/// statistics stay in standardized units.
pub fn destandardize(pred: &ExpressionMatrix, st_norm: &NormStats, counts: bool) -> Result<ExpressionMatrix> {
    let c = pred.n_cols();
    let mut data = Vec::with_capacity(pred.n_genes() * c);
    for (i, g) in pred.gene_ids().iter().enumerate() {
        let s = st_norm.get(g);
        for z in pred.row(i) {
            let v = match s {
                Some(s) => z * s.std + s.mean,
                None => *z,
            };
            data.push(if counts && s.is_some() { v.exp_m1().max(0.0) } else { v });
        }
    }
    ExpressionMatrix::table(
        pred.gene_ids().to_vec(),
        pred.col_ids().to_vec(),
        Tensor::matrix(pred.n_genes(), c, data)?,
    )
}
