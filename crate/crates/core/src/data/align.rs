use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::matrix::ExpressionMatrix;
use crate::error::{Error, Result};
use crate::rng;

/// Genes shared by both modalities, and genes only the SC side measures.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneAlignment {
    /// Intersection, in ST order.
    pub shared: Vec<String>,
    /// SC genes absent from ST, in SC order.
    pub sc_unique: Vec<String>,
    /// Row of each shared gene in the ST matrix.
    pub st_rows: Vec<usize>,
    /// Row of each shared gene in the SC matrix.
    pub sc_rows: Vec<usize>,
}

pub fn align(st: &ExpressionMatrix, sc: &ExpressionMatrix) -> Result<GeneAlignment> {
    let sc_index = sc.gene_index();
    let mut shared = Vec::new();
    let mut st_rows = Vec::new();
    let mut sc_rows = Vec::new();
    for (i, g) in st.gene_ids().iter().enumerate() {
        if let Some(&j) = sc_index.get(g.as_str()) {
            shared.push(g.clone());
            st_rows.push(i);
            sc_rows.push(j);
        }
    }
    if shared.is_empty() {
        return Err(Error::Data("no shared genes between ST and SC".into()));
    }
    let in_shared: HashSet<&str> = shared.iter().map(String::as_str).collect();
    let sc_unique = sc
        .gene_ids()
        .iter()
        .filter(|g| !in_shared.contains(g.as_str()))
        .cloned()
        .collect();
    Ok(GeneAlignment {
        shared,
        sc_unique,
        st_rows,
        sc_rows,
    })
}

/// Disjoint train/validation/test partition of the shared genes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

/// Split sizes for `n` genes: 10% test and 20% validation (floored, at
/// least one each), the rest to training.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let test = (n / 10).max(1);
    let val = (n / 5).max(1);
    (n - val - test, val, test)
}

/// Seeded 7:2:1 split.
pub fn split(alignment: &GeneAlignment, seed: u64) -> Result<SplitSpec> {
    let n = alignment.shared.len();
    if n < 3 {
        return Err(Error::Data(format!(
            "need at least 3 shared genes to split, found {n}"
        )));
    }
    let mut genes = alignment.shared.clone();
    genes.shuffle(&mut rng::stream(seed, rng::SPLIT));
    let (n_train, n_val, _) = split_sizes(n);
    let test = genes.split_off(n_train + n_val);
    let val = genes.split_off(n_train);
    Ok(SplitSpec {
        train: genes,
        val,
        test,
        seed,
    })
}
