//! Load the bundled toy pair, filter and standardize it, align genes and
//! split them 7:2:1.

use std::path::Path;

use spatial_dit::data::{load_matrix, Bundle, Orientation};

fn main() -> spatial_dit::Result<()> {
    let toy = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/toy");
    let st = load_matrix(&toy.join("st.tsv"), Orientation::GenesRows)?;
    let sc = load_matrix(&toy.join("sc.tsv"), Orientation::GenesRows)?;
    let bundle = Bundle::build(&st, &sc, 2000, 4000, 0)?;
    print!("{}", bundle.report.to_text());
    println!("sc-only genes: {:?}", bundle.alignment.sc_unique);
    println!("test genes: {:?}", bundle.split.test);
    Ok(())
}
