//! Train briefly, then sample test-split genes and one gene measured only in
//! the SC data. Predictions go back to log1p units where ST statistics exist.

use std::path::Path;

use spatial_dit::data::{load_matrix, Bundle, Orientation};
use spatial_dit::evalmetrics::pcc;
use spatial_dit::model::ModelConfig;
use spatial_dit::sampling::{destandardize, Sampler};
use spatial_dit::training::{fit, TrainConfig};

fn main() -> spatial_dit::Result<()> {
    let toy = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/toy");
    let st = load_matrix(&toy.join("st.tsv"), Orientation::GenesRows)?;
    let sc = load_matrix(&toy.join("sc.tsv"), Orientation::GenesRows)?;
    let bundle = Bundle::build(&st, &sc, 2000, 4000, 0)?;
    let train = TrainConfig { iterations: 2000, eval_every: 500, ..TrainConfig::desk() };
    let ckpt = fit(&bundle, &ModelConfig::bench(), &train)?.latest;

    let sampler = Sampler::new(&ckpt, &bundle)?;
    let z = sampler.predict(&bundle.split.test, bundle.st.col_ids(), 4, 0)?;
    let pred = destandardize(&z, &ckpt.st_norm, false)?;
    let truth = bundle.truth_log1p()?;
    for (i, g) in pred.gene_ids().iter().enumerate() {
        println!("{g}\tpcc {:.3}", pcc(pred.row(i), truth.row(i)));
    }

    // no ST measurement: stays in standardized units
    if let Some(g) = bundle.alignment.sc_unique.first() {
        let u = sampler.predict(std::slice::from_ref(g), bundle.st.col_ids(), 4, 0)?;
        let head: Vec<String> = u.row(0).iter().take(5).map(|v| format!("{v:.2}")).collect();
        println!("{g} (sc only)\t{}", head.join(" "));
    }
    Ok(())
}
