use rand::Rng;

use super::matrix::ExpressionMatrix;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng;

/// Binomial thinning of a raw count matrix: each count `c` becomes
/// `Binomial(c, rate)`.
///
/// Every unit of every count consumes one uniform from the seeded stream in
/// a fixed order, so with a common seed the draws at different rates are
/// nested: a lower rate never keeps a molecule a higher rate dropped.
pub fn downsample(x: &ExpressionMatrix, rate: f64, seed: u64) -> Result<ExpressionMatrix> {
    if x.is_normalized() {
        return Err(Error::Data("downsampling needs raw counts".into()));
    }
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Config(format!("downsampling rate {rate} outside [0, 1]")));
    }
    if let Some(v) = x.values().data().iter().find(|v| v.fract() != 0.0) {
        return Err(Error::Data(format!("downsampling needs integer counts, found {v}")));
    }
    let mut rng = rng::stream(seed, rng::DOWNSAMPLE);
    let data: Vec<f64> = x
        .values()
        .data()
        .iter()
        .map(|&c| {
            let n = c as u64;
            let kept = (0..n).filter(|_| rng.random::<f64>() < rate).count();
            kept as f64
        })
        .collect();
    let (r, c) = x.values().dims2();
    ExpressionMatrix::new(
        x.gene_ids().to_vec(),
        x.col_ids().to_vec(),
        Tensor::matrix(r, c, data)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(data: Vec<f64>, r: usize, c: usize) -> ExpressionMatrix {
        ExpressionMatrix::new(
            (0..r).map(|i| format!("g{i}")).collect(),
            (0..c).map(|i| format!("s{i}")).collect(),
            Tensor::matrix(r, c, data).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn unit_rate_is_identity_and_zero_rate_empties() {
        let m = counts(vec![0.0, 3.0, 7.0, 1.0], 2, 2);
        assert_eq!(downsample(&m, 1.0, 4).unwrap(), m);
        let z = downsample(&m, 0.0, 4).unwrap();
        assert!(z.values().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn half_rate_concentrates() {
        // 100 entries of 100 counts: total 10,000
        let m = counts(vec![100.0; 100], 10, 10);
        let total: f64 = downsample(&m, 0.5, 11).unwrap().values().data().iter().sum();
        assert!((4700.0..=5300.0).contains(&total), "{total}");
    }

    #[test]
    fn zeros_stay_and_counts_never_grow() {
        let m = counts(vec![0.0, 5.0, 2.0, 0.0, 9.0, 1.0], 2, 3);
        let mut prev = m.clone();
        for rate in [0.9, 0.7, 0.5, 0.3, 0.1] {
            let d = downsample(&m, rate, 3).unwrap();
            for ((a, b), p) in m.values().data().iter().zip(d.values().data()).zip(prev.values().data()) {
                assert!(b <= a);
                assert!(b <= p, "nested thinning");
                if *a == 0.0 {
                    assert_eq!(*b, 0.0);
                }
            }
            prev = d;
        }
    }

    #[test]
    fn rejects_fractional_counts() {
        let m = counts(vec![1.5], 1, 1);
        assert!(matches!(downsample(&m, 0.5, 0), Err(Error::Data(_))));
    }
}
