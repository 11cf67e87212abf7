//! Full model against the variant without the SC condition vector, on a few
//! synthetic seeds.
//!
//!     cargo run --release --example ablation -- [seeds]

use spatial_dit::data::{synthesize, Bundle, SynthConfig};
use spatial_dit::evalmetrics::pcc;
use spatial_dit::model::{ConditionMode, ModelConfig};
use spatial_dit::sampling::predict_testset;
use spatial_dit::training::{fit, TrainConfig};

fn main() -> spatial_dit::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    for seed in 0..seeds {
        let d = synthesize(&SynthConfig { seed, ..Default::default() })?;
        let bundle = Bundle::build(&d.st, &d.sc, usize::MAX, usize::MAX, seed)?;
        let mut line = format!("seed {seed}");
        for mode in [ConditionMode::Attention, ConditionMode::Off] {
            let model = ModelConfig { condition: mode, init_seed: seed, ..ModelConfig::bench() };
            let train = TrainConfig { seed, eval_every: 500, ..TrainConfig::desk() };
            let ckpt = fit(&bundle, &model, &train)?.latest;
            let pred = predict_testset(&ckpt, &bundle, 4, seed)?;
            let mean = pred
                .gene_ids()
                .iter()
                .enumerate()
                .map(|(i, g)| Ok(pcc(pred.row(i), bundle.st_row(g)?)))
                .sum::<spatial_dit::Result<f64>>()?
                / pred.n_genes() as f64;
            line += &format!("  {mode:?} {mean:.3}");
        }
        println!("{line}");
    }
    Ok(())
}
