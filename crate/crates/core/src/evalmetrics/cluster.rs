use kodama::{linkage, Method};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Leaf order of an average-linkage clustering plus the condensed distance
/// matrix it was built from.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterOrder {
    pub order: Vec<usize>,
    /// Upper triangle of the Euclidean distance matrix, row by row.
    pub condensed: Vec<f64>,
}

pub fn condensed_distances(rows: &Tensor) -> Vec<f64> {
    let n = rows.rows();
    let mut out = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let d: f64 = rows
                .row_slice(i)
                .iter()
                .zip(rows.row_slice(j))
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            out.push(d.sqrt());
        }
    }
    out
}

/// Average-linkage agglomerative clustering of the rows of `matrix`. At
/// each merge the subtree holding the smaller original index is placed
/// first.
pub fn cluster_order(matrix: &Tensor) -> Result<ClusterOrder> {
    let n = matrix.rows();
    if n < 2 {
        return Err(Error::Data("clustering needs at least two genes".into()));
    }
    let condensed = condensed_distances(matrix);
    let mut work = condensed.clone();
    let dend = linkage(&mut work, n, Method::Average);
    // cluster id -> (leaves, min leaf)
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for step in dend.steps() {
        let a = std::mem::take(&mut members[step.cluster1]);
        let b = std::mem::take(&mut members[step.cluster2]);
        let (first, second) = if a.iter().min() < b.iter().min() { (a, b) } else { (b, a) };
        members.push(first.into_iter().chain(second).collect());
    }
    Ok(ClusterOrder {
        order: members.pop().expect("root cluster"),
        condensed,
    })
}
