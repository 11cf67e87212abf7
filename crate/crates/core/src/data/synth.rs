use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::matrix::ExpressionMatrix;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng;

/// Planted low-rank generator. Gene loadings are shared by both modalities;
/// spot and cell factors are drawn independently.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub genes: usize,
    pub spots: usize,
    pub cells: usize,
    /// Extra genes measured only in the SC matrix.
    pub sc_only_genes: usize,
    pub rank: usize,
    /// Fraction of each rate that is Poisson noise rather than its rounded
    /// expectation.
    pub noise: f64,
    /// Log of the baseline rate.
    pub log_base: f64,
    /// Standard deviation of the log-rate signal.
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            genes: 60,
            spots: 40,
            cells: 50,
            sc_only_genes: 0,
            rank: 3,
            noise: 0.1,
            log_base: 1.5,
            amplitude: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub st: ExpressionMatrix,
    pub sc: ExpressionMatrix,
    /// `genes × rank` loadings of the shared genes.
    pub loadings: Vec<Vec<f64>>,
    /// `rank × spots`.
    pub spot_factors: Vec<Vec<f64>>,
    /// `rank × cells`.
    pub cell_factors: Vec<Vec<f64>>,
}

impl SynthDataset {
    /// Noise-free log-rate signal `L_g · S` of shared gene `g` over spots.
    pub fn st_signal(&self, g: usize) -> Vec<f64> {
        signal(&self.loadings[g], &self.spot_factors)
    }
}

fn signal(loading: &[f64], factors: &[Vec<f64>]) -> Vec<f64> {
    let cols = factors.first().map_or(0, Vec::len);
    (0..cols)
        .map(|j| loading.iter().zip(factors).map(|(l, f)| l * f[j]).sum())
        .collect()
}

fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize, sd: f64) -> Vec<Vec<f64>> {
    let n = Normal::new(0.0, sd).expect("finite sd");
    (0..rows).map(|_| (0..cols).map(|_| n.sample(rng)).collect()).collect()
}

fn counts(
    rng: &mut impl Rng,
    loadings: &[Vec<f64>],
    factors: &[Vec<f64>],
    cols: usize,
    cfg: &SynthConfig,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(loadings.len() * cols);
    for l in loadings {
        let s = if cfg.rank == 0 { vec![0.0; cols] } else { signal(l, factors) };
        for v in s {
            let lambda = (cfg.log_base + cfg.amplitude * v).exp();
            let mut c = ((1.0 - cfg.noise) * lambda).round();
            if cfg.noise > 0.0 {
                c += Poisson::new(cfg.noise * lambda).expect("positive rate").sample(rng);
            }
            out.push(c);
        }
    }
    out
}

pub fn synthesize(cfg: &SynthConfig) -> Result<SynthDataset> {
    if cfg.genes == 0 || cfg.spots == 0 || cfg.cells == 0 {
        return Err(Error::Config("synth sizes must be positive".into()));
    }
    if !(0.0..=1.0).contains(&cfg.noise) {
        return Err(Error::Config(format!("synth noise {} outside [0, 1]", cfg.noise)));
    }
    let mut r = rng::stream(cfg.seed, rng::SYNTH);
    let k = cfg.rank;
    let sd = if k == 0 { 0.0 } else { 1.0 / (k as f64).sqrt() };
    let total = cfg.genes + cfg.sc_only_genes;
    let loadings = gaussian(&mut r, total, k, sd);
    let spot_factors = gaussian(&mut r, k, cfg.spots, 1.0);
    let cell_factors = gaussian(&mut r, k, cfg.cells, 1.0);

    let st_counts = counts(&mut r, &loadings[..cfg.genes], &spot_factors, cfg.spots, cfg);
    let sc_counts = counts(&mut r, &loadings, &cell_factors, cfg.cells, cfg);

    let shared: Vec<String> = (0..cfg.genes).map(|i| format!("gene{i:03}")).collect();
    let mut sc_genes = shared.clone();
    sc_genes.extend((0..cfg.sc_only_genes).map(|i| format!("sconly{i:03}")));
    let st = ExpressionMatrix::new(
        shared,
        (0..cfg.spots).map(|i| format!("spot{i:03}")).collect(),
        Tensor::matrix(cfg.genes, cfg.spots, st_counts)?,
    )?;
    let sc = ExpressionMatrix::new(
        sc_genes,
        (0..cfg.cells).map(|i| format!("cell{i:03}")).collect(),
        Tensor::matrix(total, cfg.cells, sc_counts)?,
    )?;
    let mut loadings = loadings;
    loadings.truncate(cfg.genes);
    Ok(SynthDataset {
        st,
        sc,
        loadings,
        spot_factors,
        cell_factors,
    })
}
