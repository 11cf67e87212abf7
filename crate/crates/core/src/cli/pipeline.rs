//! Library-level pipeline steps shared by the subcommands and tests.

use crate::data::{downsample, load_matrix, Bundle, ExpressionMatrix};
use crate::error::Result;
use crate::evalmetrics::{pcc, robustness_score};
use crate::sampling::{destandardize, Sampler};
use crate::training::Checkpoint;

use super::config::RunConfig;

pub fn load_raw(cfg: &RunConfig) -> Result<(ExpressionMatrix, ExpressionMatrix)> {
    let st_path = cfg.st_path()?;
    let sc_path = cfg.sc_path()?;
    Ok((
        load_matrix(st_path, cfg.data.st_orientation)?,
        load_matrix(sc_path, cfg.data.sc_orientation)?,
    ))
}

pub fn build_bundle(cfg: &RunConfig) -> Result<Bundle> {
    let (st, sc) = load_raw(cfg)?;
    Bundle::build(&st, &sc, cfg.data.st_top_k, cfg.data.sc_top_k, cfg.data.seed)
}

/// Test-split predictions in log1p space.
pub fn predict_test_log1p(ckpt: &Checkpoint, bundle: &Bundle, draws: usize, seed: u64) -> Result<ExpressionMatrix> {
    let sampler = Sampler::new(ckpt, bundle)?;
    let z = sampler.predict(&bundle.split.test, bundle.st.col_ids(), draws, seed)?;
    let stats = crate::training::NormStats {
        genes: bundle.st.gene_ids().to_vec(),
        stats: bundle.st.stats().to_vec(),
    };
    destandardize(&z, &stats, false)
}

/// Per-gene PCC of test predictions against the bundle's log1p truth.
pub fn test_pcc(ckpt: &Checkpoint, bundle: &Bundle, draws: usize, seed: u64) -> Result<Vec<(String, f64)>> {
    let pred = predict_test_log1p(ckpt, bundle, draws, seed)?;
    let truth = bundle.truth_log1p()?;
    Ok(truth
        .gene_ids()
        .iter()
        .enumerate()
        .map(|(i, g)| (g.clone(), pcc(pred.row(i), truth.row(i))))
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobustnessRow {
    pub rate: f64,
    pub rs: f64,
    pub mean_pcc: f64,
}

/// For every rate: thin the raw ST counts, re-standardize them, predict
/// the test genes again with the same checkpoint and seeds, and score the
/// per-gene PCC against the thinned truth.
pub fn robustness_table(
    ckpt: &Checkpoint,
    bundle: &Bundle,
    st_raw: &ExpressionMatrix,
    rates: &[f64],
    draws: usize,
    sample_seed: u64,
    downsample_seed: u64,
    threshold: f64,
) -> Result<Vec<RobustnessRow>> {
    let original = test_pcc(ckpt, bundle, draws, sample_seed)?;
    let mut rows = Vec::with_capacity(rates.len());
    for &rate in rates {
        let thinned = downsample(st_raw, rate, downsample_seed)?;
        let b = bundle.with_st_raw(&thinned)?;
        let down = test_pcc(ckpt, &b, draws, sample_seed)?;
        let mean_pcc = down.iter().map(|(_, v)| v).sum::<f64>() / down.len() as f64;
        rows.push(RobustnessRow {
            rate,
            rs: robustness_score(&original, &down, threshold)?,
            mean_pcc,
        });
    }
    Ok(rows)
}

pub fn robustness_text(rows: &[RobustnessRow]) -> String {
    let mut s = String::from("rate\trs\tmean_pcc\n");
    for r in rows {
        s.push_str(&format!("{}\t{:.6}\t{:.6}\n", r.rate, r.rs, r.mean_pcc));
    }
    s
}
