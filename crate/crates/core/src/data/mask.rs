use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskMode {
    /// Hide every zero entry plus a sampled fraction of non-zero entries.
    SpotMask,
    /// Hide the whole vector.
    WholeGene,
}

/// Zero/non-zero masks for one gene and the resulting set of hidden entries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskPair {
    /// Zero-valued entries.
    pub m1: Vec<bool>,
    /// Masked subset of the non-zero entries.
    pub m2: Vec<bool>,
    /// Entries the model must predict.
    pub unknown: Vec<bool>,
}

impl MaskPair {
    pub fn unknown_count(&self) -> usize {
        self.unknown.iter().filter(|&&u| u).count()
    }
}

/// Builds masks for one ST row. `row` must hold raw or log1p values so that
/// zeros are exact zeros.
pub fn make_masks<R: Rng + ?Sized>(row: &[f64], rho: f64, mode: MaskMode, rng: &mut R) -> MaskPair {
    let rho = rho.clamp(0.0, 1.0);
    let m1: Vec<bool> = row.iter().map(|&v| v == 0.0).collect();
    let nonzero: Vec<usize> = (0..row.len()).filter(|&i| !m1[i]).collect();
    let pick = (rho * nonzero.len() as f64).round() as usize;
    let mut m2 = vec![false; row.len()];
    for k in index::sample(rng, nonzero.len(), pick) {
        m2[nonzero[k]] = true;
    }
    let unknown = match mode {
        MaskMode::SpotMask => m1.iter().zip(&m2).map(|(a, b)| *a || *b).collect(),
        MaskMode::WholeGene => vec![true; row.len()],
    };
    MaskPair { m1, m2, unknown }
}
