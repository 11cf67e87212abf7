//! Thin the raw ST counts at several rates and report how many test genes
//! keep a PCC above 0.5.

use spatial_dit::cli::{robustness_table, robustness_text};
use spatial_dit::data::{synthesize, Bundle, SynthConfig};
use spatial_dit::model::ModelConfig;
use spatial_dit::training::{fit, TrainConfig};

fn main() -> spatial_dit::Result<()> {
    let d = synthesize(&SynthConfig::default())?;
    let bundle = Bundle::build(&d.st, &d.sc, usize::MAX, usize::MAX, 0)?;
    let train = TrainConfig { eval_every: 500, ..TrainConfig::desk() };
    let ckpt = fit(&bundle, &ModelConfig::bench(), &train)?.latest;
    let rows = robustness_table(&ckpt, &bundle, &d.st, &[0.1, 0.3, 0.5, 0.7, 1.0], 4, 0, 0, 0.5)?;
    print!("{}", robustness_text(&rows));
    Ok(())
}
