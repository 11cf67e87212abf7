//! Average-linkage gene ordering of a matrix, as used for heatmaps.

use spatial_dit::evalmetrics::cluster_order;
use spatial_dit::numerics::Tensor;

fn main() -> spatial_dit::Result<()> {
    let rows = vec![
        vec![0.0, 0.0, 1.0],
        vec![5.0, 5.0, 5.0],
        vec![0.1, 0.0, 1.1],
        vec![5.2, 4.9, 5.0],
        vec![2.5, 2.5, 2.5],
    ];
    let co = cluster_order(&Tensor::from_rows(&rows)?)?;
    println!("leaf order: {:?}", co.order);
    println!("condensed distances: {:.2?}", co.condensed);
    Ok(())
}
