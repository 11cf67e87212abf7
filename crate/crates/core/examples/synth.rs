//! Generate a planted low-rank ST/SC pair and check that the ST rows follow
//! the shared gene loadings.
//!
//!     cargo run --example synth -- [seed]

use spatial_dit::data::{synthesize, SynthConfig};
use spatial_dit::evalmetrics::pcc;

fn main() -> spatial_dit::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let cfg = SynthConfig { seed, ..Default::default() };
    let d = synthesize(&cfg)?;
    println!("st {} x {}, sc {} x {}", d.st.n_genes(), d.st.n_cols(), d.sc.n_genes(), d.sc.n_cols());

    let mut total = 0.0;
    for g in 0..cfg.genes {
        let log: Vec<f64> = d.st.row(g).iter().map(|c| c.ln_1p()).collect();
        total += pcc(&log, &d.st_signal(g)).abs();
    }
    println!("mean |pcc(log1p row, planted signal)| = {:.3}", total / cfg.genes as f64);
    Ok(())
}
