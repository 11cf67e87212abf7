//! Train the denoiser on the toy pair and write checkpoints plus a loss log.
//!
//!     cargo run --release --example train -- [iterations] [out_dir]

use std::path::{Path, PathBuf};

use spatial_dit::data::{load_matrix, Bundle, Orientation};
use spatial_dit::model::{parameter_count, ModelConfig};
use spatial_dit::training::{fit, log_text, TrainConfig};

fn main() -> spatial_dit::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations = args.next().and_then(|s| s.parse().ok()).unwrap_or(500);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("spatial-dit-train"));

    let toy = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/toy");
    let st = load_matrix(&toy.join("st.tsv"), Orientation::GenesRows)?;
    let sc = load_matrix(&toy.join("sc.tsv"), Orientation::GenesRows)?;
    let bundle = Bundle::build(&st, &sc, 2000, 4000, 0)?;

    let model = ModelConfig::bench();
    let train = TrainConfig { iterations, eval_every: 100, ..TrainConfig::desk() };
    let r = fit(&bundle, &model, &train)?;
    println!("parameters: {}", parameter_count(&r.latest.model));
    print!("{}", log_text(&r.log));
    r.write(&out)?;
    println!("checkpoints in {}", out.display());
    Ok(())
}
