use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::report::synthetic_report;
use super::*;
use crate::numerics::Tensor;

#[test]
fn pcc_examples() {
    let a = [1.0, 2.0, 3.0];
    assert!((pcc(&a, &a) - 1.0).abs() < 1e-12);
    assert!((pcc(&a, &[-1.0, -2.0, -3.0]) + 1.0).abs() < 1e-12);
    let want = 9.0 / 84f64.sqrt();
    assert!((pcc(&a, &[1.0, 2.0, 4.0]) - want).abs() < 1e-12);
    assert!((pcc(&a, &[1.0, 2.0, 4.0]) - 0.9820).abs() < 1e-4);
    assert_eq!(pcc(&a, &[2.0, 2.0, 2.0]), 0.0);
}

#[test]
fn ssim_examples() {
    let a = [0.1, 0.7, 0.3, 0.0];
    assert!((ssim(&a, &a) - 1.0).abs() < 1e-12);
    let c1 = 1e-4;
    assert!((ssim(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0]) - c1 / (1.0 + c1)).abs() < 1e-4);
    assert!((ssim(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0]) - 1.0e-4).abs() < 1e-4);
}

#[test]
fn rmse_examples() {
    let a = [0.4, 1.3, -2.0];
    assert_eq!(rmse(&a, &a), 0.0);
    assert!((rmse(&[-1.0, 1.0], &[1.0, -1.0]) - 2.0).abs() < 1e-12);
}

#[test]
fn js_examples() {
    let a = [0.2, 3.0, 1.0];
    assert!(js(&a, &a).abs() < 1e-12);
    assert!((js(&[1.0, 0.0], &[0.0, 1.0]) - 1.0).abs() < 1e-12);
}

#[test]
fn accuracy_score_examples() {
    let a = synthetic_report("a", [0.9, 0.8, 0.5, 0.1]);
    let b = synthetic_report("b", [0.5, 0.4, 0.9, 0.3]);
    assert_eq!(accuracy_score(&[a.clone(), b.clone()]).unwrap(), vec![1.0, 0.0]);

    let c = synthetic_report("c", [0.9, 0.8, 0.9, 0.3]);
    let d = synthetic_report("d", [0.5, 0.4, 0.5, 0.1]);
    assert_eq!(accuracy_score(&[c, d]).unwrap(), vec![0.5, 0.5]);

    let x = synthetic_report("x", [0.5, 0.8, 0.5, 0.1]);
    let y = synthetic_report("y", [0.5, 0.4, 0.9, 0.3]);
    let z = synthetic_report("z", [0.5, 0.6, 0.7, 0.2]);
    let s = accuracy_score(&[x, y, z]).unwrap();
    // pcc fully tied: every method gets rank 2, contributing 0.5/4
    assert!((s[0] - (0.5 + 1.0 + 1.0 + 1.0) / 4.0).abs() < 1e-12);
    assert!((s[1] - 0.5 / 4.0).abs() < 1e-12);
    assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));

    assert!(matches!(accuracy_score(&[a]), Err(crate::Error::Comparison(_))));
}

#[test]
fn accuracy_score_ignores_monotone_rescaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let aggs: Vec<[f64; 4]> = (0..4)
            .map(|_| [rng.random(), rng.random(), rng.random(), rng.random()])
            .collect();
        let base: Vec<_> = aggs.iter().enumerate().map(|(i, a)| synthetic_report(&i.to_string(), *a)).collect();
        let k = rng.random_range(0..4);
        let warped: Vec<_> = aggs
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let mut a = *a;
                a[k] = (3.0 * a[k]).exp() + 1.0;
                synthetic_report(&i.to_string(), a)
            })
            .collect();
        assert_eq!(accuracy_score(&base).unwrap(), accuracy_score(&warped).unwrap());
    }
}

fn named(v: &[f64]) -> Vec<(String, f64)> {
    v.iter().enumerate().map(|(i, x)| (format!("g{i}"), *x)).collect()
}

#[test]
fn robustness_score_examples() {
    let hi = named(&[0.9, 0.8, 0.7, 0.6]);
    let lo = named(&[0.1, 0.2, 0.3, 0.4]);
    assert_eq!(robustness_score(&hi, &hi, 0.5).unwrap(), 1.0);
    assert_eq!(robustness_score(&lo, &lo, 0.5).unwrap(), 0.0);
    let mixed = named(&[0.9, 0.1, 0.7, 0.2]);
    assert_eq!(robustness_score(&hi, &mixed, 0.5).unwrap(), 0.5);
    let other = vec![("x".to_string(), 0.9)];
    assert!(matches!(robustness_score(&hi, &other, 0.5), Err(crate::Error::Comparison(_))));
}

#[test]
fn cluster_order_examples() {
    let two = Tensor::from_rows(&[vec![0.0, 1.0], vec![5.0, 1.0]]).unwrap();
    assert_eq!(cluster_order(&two).unwrap().order, vec![0, 1]);

    // d(a,b)=1, d(a,c)=10, d(b,c)≈10: c listed first so a,b must be moved together
    let three = Tensor::from_rows(&[vec![10.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
    let c = cluster_order(&three).unwrap();
    let pos = |g| c.order.iter().position(|&x| x == g).unwrap();
    assert_eq!((pos(1) as i64 - pos(2) as i64).abs(), 1);
    assert_eq!(c.condensed, vec![10.0, 9.0, 1.0]);

    let dup = Tensor::from_rows(&[vec![3.0], vec![0.0], vec![3.0], vec![7.0]]).unwrap();
    let c = cluster_order(&dup).unwrap();
    let pos = |g| c.order.iter().position(|&x| x == g).unwrap();
    assert_eq!((pos(0) as i64 - pos(2) as i64).abs(), 1);

    let one = Tensor::from_rows(&[vec![1.0]]).unwrap();
    assert!(cluster_order(&one).is_err());
}

fn pair(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2..max).prop_flat_map(|n| {
        (
            proptest::collection::vec(-50.0f64..50.0, n),
            proptest::collection::vec(-50.0f64..50.0, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn metric_axioms((a, b) in pair(24)) {
        let r = pcc(&a, &b);
        prop_assert!((-1.0..=1.0).contains(&r));
        prop_assert!((r - pcc(&b, &a)).abs() < 1e-12);

        let s = ssim(&a, &b);
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert!((s - ssim(&b, &a)).abs() < 1e-12);
        prop_assert!((ssim(&a, &a) - 1.0).abs() < 1e-9);

        let e = rmse(&a, &b);
        prop_assert!(e >= 0.0);
        prop_assert!((e - rmse(&b, &a)).abs() < 1e-12);
        prop_assert!(rmse(&a, &a) == 0.0);

        let j = js(&a, &b);
        prop_assert!((0.0..=1.0).contains(&j));
        prop_assert!((j - js(&b, &a)).abs() < 1e-12);
        prop_assert!(js(&a, &a).abs() < 1e-12);
    }

    #[test]
    fn robustness_monotone_in_threshold(
        v in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..30),
        t1 in -1.0f64..1.0,
        t2 in -1.0f64..1.0,
    ) {
        let a = named(&v.iter().map(|x| x.0).collect::<Vec<_>>());
        let b = named(&v.iter().map(|x| x.1).collect::<Vec<_>>());
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        let r_lo = robustness_score(&a, &b, lo).unwrap();
        let r_hi = robustness_score(&a, &b, hi).unwrap();
        prop_assert!(r_hi <= r_lo);
        prop_assert!((0.0..=1.0).contains(&r_lo));
    }
}
