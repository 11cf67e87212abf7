use super::matrix::{ExpressionMatrix, GeneStats};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Standard deviations below this are clamped before dividing.
pub const STD_FLOOR: f64 = 1e-8;

/// Filters, screens and standardizes a raw count matrix.
///
/// Drops all-zero genes, keeps the `top_k` genes with the highest mean raw
/// expression (ties resolved by file order, survivors kept in file order),
/// then applies `log1p` and a per-gene z-score with sample standard
/// deviation.
pub fn preprocess(x: &ExpressionMatrix, top_k: usize) -> Result<ExpressionMatrix> {
    if x.is_normalized() {
        return Err(Error::Data("matrix is already normalized".into()));
    }
    let expressed: Vec<usize> = (0..x.n_genes())
        .filter(|&i| x.row(i).iter().any(|&v| v != 0.0))
        .collect();
    if expressed.is_empty() || top_k == 0 {
        return Err(Error::Data("no genes left after filtering".into()));
    }

    let mean = |i: usize| x.row(i).iter().sum::<f64>() / x.n_cols() as f64;
    let mut ranked = expressed.clone();
    // stable sort keeps file order among equal means
    ranked.sort_by(|&a, &b| mean(b).total_cmp(&mean(a)));
    ranked.truncate(top_k);
    ranked.sort_unstable();

    let genes: Vec<String> = ranked.iter().map(|&i| x.gene_ids()[i].clone()).collect();
    let c = x.n_cols();
    let mut data = Vec::with_capacity(ranked.len() * c);
    let mut stats = Vec::with_capacity(ranked.len());
    for &i in &ranked {
        let logged: Vec<f64> = x.row(i).iter().map(|v| v.ln_1p()).collect();
        let s = standardize_stats(&logged);
        data.extend(logged.iter().map(|v| (v - s.mean) / s.std));
        stats.push(s);
    }
    ExpressionMatrix::normalized(
        genes,
        x.col_ids().to_vec(),
        Tensor::matrix(ranked.len(), c, data)?,
        stats,
    )
}

/// Mean and sample standard deviation (floored).
pub fn standardize_stats(v: &[f64]) -> GeneStats {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let dof = if v.len() > 1 { n - 1.0 } else { 1.0 };
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / dof;
    GeneStats {
        mean,
        std: var.sqrt().max(STD_FLOOR),
    }
}

/// Fraction of zero entries.
pub fn dropout_rate(x: &ExpressionMatrix) -> f64 {
    let d = x.values().data();
    d.iter().filter(|&&v| v == 0.0).count() as f64 / d.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(rows: &[&[f64]]) -> ExpressionMatrix {
        let genes = (0..rows.len()).map(|i| format!("g{}", i + 1)).collect();
        let cols = (0..rows[0].len()).map(|i| format!("s{i}")).collect();
        let data: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        ExpressionMatrix::new(genes, cols, Tensor::from_rows(&data).unwrap()).unwrap()
    }

    #[test]
    fn drops_all_zero_genes() {
        let m = raw(&[&[1.0, 2.0, 0.0], &[0.0, 0.0, 0.0], &[3.0, 0.0, 1.0]]);
        let p = preprocess(&m, 10).unwrap();
        assert_eq!(p.gene_ids(), &["g1", "g3"]);
    }

    #[test]
    fn keeps_top_k_by_mean() {
        let m = raw(&[&[5.0, 5.0], &[1.0, 1.0], &[3.0, 3.0]]);
        let p = preprocess(&m, 2).unwrap();
        assert_eq!(p.gene_ids(), &["g1", "g3"]);

        let tied = raw(&[&[2.0, 2.0], &[1.0, 1.0], &[2.0, 2.0], &[2.0, 2.0]]);
        assert_eq!(preprocess(&tied, 2).unwrap().gene_ids(), &["g1", "g3"]);
    }

    #[test]
    fn rows_are_standardized() {
        let m = raw(&[&[0.0, 3.0, 10.0, 1.0, 7.0], &[2.0, 2.0, 9.0, 0.0, 1.0]]);
        let p = preprocess(&m, 10).unwrap();
        for i in 0..p.n_genes() {
            let r = p.row(i);
            let mean = r.iter().sum::<f64>() / r.len() as f64;
            let sd = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r.len() - 1) as f64).sqrt();
            assert!(mean.abs() < 1e-9);
            assert!((sd - 1.0).abs() < 1e-6);
        }
        let back = p.to_log1p().unwrap();
        for (a, b) in back.row(0).iter().zip(m.row(0)) {
            assert!((a - b.ln_1p()).abs() < 1e-12);
        }
    }

    #[test]
    fn double_normalization_rejected() {
        let m = raw(&[&[1.0, 2.0]]);
        let p = preprocess(&m, 1).unwrap();
        assert!(matches!(preprocess(&p, 1), Err(Error::Data(_))));
    }

    #[test]
    fn empty_after_filter_is_data_error() {
        let m = raw(&[&[0.0, 0.0]]);
        assert!(matches!(preprocess(&m, 5), Err(Error::Data(_))));
    }

    #[test]
    fn dropout_counts_zeros() {
        assert_eq!(dropout_rate(&raw(&[&[0.0, 1.0], &[2.0, 0.0]])), 0.5);
        assert_eq!(dropout_rate(&raw(&[&[0.0, 0.0]])), 1.0);
    }
}
