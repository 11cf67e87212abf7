use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{js, pcc, rmse, ssim};
use crate::data::ExpressionMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneMetrics {
    pub gene: String,
    pub pcc: f64,
    pub ssim: f64,
    pub rmse: f64,
    pub js: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl Summary {
    fn of(v: impl Iterator<Item = f64> + Clone) -> Self {
        let n = v.clone().count().max(1) as f64;
        let mean = v.clone().sum::<f64>() / n;
        let std = (v.map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        Summary { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub pcc: Summary,
    pub ssim: Summary,
    pub rmse: Summary,
    pub js: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub genes: Vec<GeneMetrics>,
    pub aggregates: Aggregates,
}

impl MetricsReport {
    pub fn from_genes(method: &str, genes: Vec<GeneMetrics>) -> Self {
        let aggregates = Aggregates {
            pcc: Summary::of(genes.iter().map(|g| g.pcc)),
            ssim: Summary::of(genes.iter().map(|g| g.ssim)),
            rmse: Summary::of(genes.iter().map(|g| g.rmse)),
            js: Summary::of(genes.iter().map(|g| g.js)),
        };
        MetricsReport {
            method: method.to_string(),
            genes,
            aggregates,
        }
    }

    /// Scores every truth gene against the prediction row of the same id.
    /// Spot ids must agree exactly; the first gene missing from `pred` is
    /// reported.
    pub fn evaluate(method: &str, truth: &ExpressionMatrix, pred: &ExpressionMatrix) -> Result<Self> {
        if truth.col_ids() != pred.col_ids() {
            let first = truth
                .col_ids()
                .iter()
                .zip(pred.col_ids())
                .find(|(a, b)| a != b)
                .map(|(a, _)| a.clone())
                .unwrap_or_else(|| format!("{} vs {} columns", truth.n_cols(), pred.n_cols()));
            return Err(Error::Data(format!(
                "{method}: spot ids differ from the truth matrix (first mismatch: {first})"
            )));
        }
        if truth.n_cols() < 2 {
            return Err(Error::Data("metrics need at least two spots".into()));
        }
        let index = pred.gene_index();
        let mut genes = Vec::with_capacity(truth.n_genes());
        for (i, g) in truth.gene_ids().iter().enumerate() {
            let &j = index.get(g.as_str()).ok_or_else(|| {
                Error::Data(format!("{method}: gene {g} is missing from the predictions"))
            })?;
            let (p, t) = (pred.row(j), truth.row(i));
            genes.push(GeneMetrics {
                gene: g.clone(),
                pcc: pcc(p, t),
                ssim: ssim(p, t),
                rmse: rmse(p, t),
                js: js(p, t),
            });
        }
        if pred.n_genes() != truth.n_genes() {
            let extra = pred
                .gene_ids()
                .iter()
                .find(|g| truth.position(g).is_none())
                .cloned()
                .unwrap_or_default();
            return Err(Error::Data(format!(
                "{method}: gene {extra} is not in the truth matrix"
            )));
        }
        Ok(Self::from_genes(method, genes))
    }

    pub fn pcc_by_gene(&self) -> Vec<(String, f64)> {
        self.genes.iter().map(|g| (g.gene.clone(), g.pcc)).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("# method\t{}\n", self.method);
        let a = &self.aggregates;
        for (name, m) in [("pcc", a.pcc), ("ssim", a.ssim), ("rmse", a.rmse), ("js", a.js)] {
            let _ = writeln!(s, "# {name}\t{:.6}\t{:.6}", m.mean, m.std);
        }
        s.push_str("gene\tpcc\tssim\trmse\tjs\n");
        for g in &self.genes {
            let _ = writeln!(s, "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}", g.gene, g.pcc, g.ssim, g.rmse, g.js);
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Average 1-based ranks, ascending by `key` (rank 1 = smallest).
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Accuracy score of each method: the mean over the four metrics of
/// `(rank − 1)/(M − 1)`, where rank 1 is the worst aggregate.
pub fn accuracy_score(reports: &[MetricsReport]) -> Result<Vec<f64>> {
    let m = reports.len();
    if m < 2 {
        return Err(Error::Comparison("AS requires >= 2 methods".into()));
    }
    let genes: Vec<&str> = reports[0].genes.iter().map(|g| g.gene.as_str()).collect();
    for r in &reports[1..] {
        if r.genes.iter().map(|g| g.gene.as_str()).collect::<Vec<_>>() != genes {
            return Err(Error::Comparison(format!(
                "{} and {} cover different genes",
                reports[0].method, r.method
            )));
        }
    }
    // negate the lower-is-better metrics so that larger is always better
    let columns: [Vec<f64>; 4] = [
        reports.iter().map(|r| r.aggregates.pcc.mean).collect(),
        reports.iter().map(|r| r.aggregates.ssim.mean).collect(),
        reports.iter().map(|r| -r.aggregates.rmse.mean).collect(),
        reports.iter().map(|r| -r.aggregates.js.mean).collect(),
    ];
    let mut score = vec![0.0; m];
    for col in &columns {
        for (s, r) in score.iter_mut().zip(average_ranks(col)) {
            *s += (r - 1.0) / (m - 1) as f64 / columns.len() as f64;
        }
    }
    Ok(score)
}

/// Table of aggregate means with the accuracy score per method.
pub fn comparison_text(reports: &[MetricsReport]) -> Result<String> {
    let scores = accuracy_score(reports)?;
    let mut s = String::from("method\tpcc\tssim\trmse\tjs\tas\n");
    for (r, a) in reports.iter().zip(scores) {
        let g = &r.aggregates;
        let _ = writeln!(
            s,
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            r.method, g.pcc.mean, g.ssim.mean, g.rmse.mean, g.js.mean, a
        );
    }
    Ok(s)
}

/// Fraction of genes whose PCC exceeds `threshold` in both runs.
pub fn robustness_score(orig: &[(String, f64)], down: &[(String, f64)], threshold: f64) -> Result<f64> {
    let a: BTreeSet<&str> = orig.iter().map(|(g, _)| g.as_str()).collect();
    let b: BTreeSet<&str> = down.iter().map(|(g, _)| g.as_str()).collect();
    if a != b || a.len() != orig.len() || b.len() != down.len() {
        return Err(Error::Comparison("robustness score needs the same gene set in both runs".into()));
    }
    if orig.is_empty() {
        return Err(Error::Comparison("robustness score of an empty gene set".into()));
    }
    let passing: BTreeSet<&str> = down
        .iter()
        .filter(|(_, v)| *v > threshold)
        .map(|(g, _)| g.as_str())
        .collect();
    let both = orig
        .iter()
        .filter(|(g, v)| *v > threshold && passing.contains(g.as_str()))
        .count();
    Ok(both as f64 / orig.len() as f64)
}

#[cfg(test)]
pub(crate) fn synthetic_report(method: &str, agg: [f64; 4]) -> MetricsReport {
    MetricsReport::from_genes(
        method,
        vec![GeneMetrics {
            gene: "g".into(),
            pcc: agg[0],
            ssim: agg[1],
            rmse: agg[2],
            js: agg[3],
        }],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }
}
