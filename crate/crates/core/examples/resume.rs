//! Split a training run in two through a checkpoint file. The resumed run
//! ends with the same bytes as an uninterrupted one.

use spatial_dit::data::{synthesize, Bundle, SynthConfig};
use spatial_dit::model::ModelConfig;
use spatial_dit::training::{fit, resume, Checkpoint, TrainConfig};

fn main() -> spatial_dit::Result<()> {
    let d = synthesize(&SynthConfig { genes: 20, spots: 16, cells: 12, ..Default::default() })?;
    let bundle = Bundle::build(&d.st, &d.sc, usize::MAX, usize::MAX, 0)?;
    let model = ModelConfig::desk();
    let full = TrainConfig { iterations: 60, eval_every: 20, ..TrainConfig::desk() };
    let half = TrainConfig { iterations: 30, ..full.clone() };

    let path = std::env::temp_dir().join("spatial-dit-half.ckpt");
    fit(&bundle, &model, &half)?.latest.save(&path)?;
    let loaded = Checkpoint::load(&path)?;
    println!("loaded checkpoint at iteration {}", loaded.iteration);

    let resumed = resume(&bundle, &loaded, &full)?.latest.to_bytes()?;
    let straight = fit(&bundle, &model, &full)?.latest.to_bytes()?;
    println!("{} bytes, identical = {}", straight.len(), resumed == straight);
    Ok(())
}
