//! Score two prediction sets against a truth matrix and rank them with the
//! accuracy score.

use spatial_dit::data::ExpressionMatrix;
use spatial_dit::evalmetrics::{comparison_text, MetricsReport};
use spatial_dit::numerics::Tensor;

fn matrix(rows: &[Vec<f64>]) -> spatial_dit::Result<ExpressionMatrix> {
    let genes = (0..rows.len()).map(|i| format!("g{i}")).collect();
    let spots = (0..rows[0].len()).map(|j| format!("s{j}")).collect();
    ExpressionMatrix::table(genes, spots, Tensor::from_rows(rows)?)
}

fn main() -> spatial_dit::Result<()> {
    let truth: Vec<Vec<f64>> = (0..5)
        .map(|g| (0..12).map(|s| ((g * 7 + s * 3) % 11) as f64 / 4.0).collect())
        .collect();
    let close: Vec<Vec<f64>> = truth.iter().map(|r| r.iter().map(|v| v * 0.9 + 0.1).collect()).collect();
    let shuffled: Vec<Vec<f64>> = truth.iter().map(|r| r.iter().rev().copied().collect()).collect();

    let t = matrix(&truth)?;
    let reports = vec![
        MetricsReport::evaluate("close", &t, &matrix(&close)?)?,
        MetricsReport::evaluate("reversed", &t, &matrix(&shuffled)?)?,
    ];
    print!("{}", reports[0].to_text());
    print!("{}", comparison_text(&reports)?);
    Ok(())
}
