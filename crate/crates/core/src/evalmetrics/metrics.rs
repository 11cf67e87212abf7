//! Per-gene similarity between a predicted and a true expression vector.

const SSIM_C1: f64 = 1e-4;
const SSIM_C2: f64 = 9e-4;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population variance.
fn var(v: &[f64], m: f64) -> f64 {
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}

fn cov(a: &[f64], ma: f64, b: &[f64], mb: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64
}

/// Pearson correlation. Zero when either vector is constant.
pub fn pcc(pred: &[f64], truth: &[f64]) -> f64 {
    let (ma, mb) = (mean(pred), mean(truth));
    let (va, vb) = (var(pred, ma), var(truth, mb));
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    (cov(pred, ma, truth, mb) / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0)
}

/// Shift to a zero minimum (when negative) and divide by the maximum (when
/// positive).
fn unit_scale(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = if lo < 0.0 { lo } else { 0.0 };
    let hi = v.iter().map(|x| x - shift).fold(f64::NEG_INFINITY, f64::max);
    v.iter()
        .map(|x| if hi > 0.0 { (x - shift) / hi } else { x - shift })
        .collect()
}

/// Global (single window) structural similarity of max-scaled vectors.
pub fn ssim(pred: &[f64], truth: &[f64]) -> f64 {
    let x = unit_scale(pred);
    let y = unit_scale(truth);
    let (mx, my) = (mean(&x), mean(&y));
    let (vx, vy) = (var(&x, mx), var(&y, my));
    let sxy = cov(&x, mx, &y, my);
    let s = ((2.0 * mx * my + SSIM_C1) * (2.0 * sxy + SSIM_C2))
        / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
    s.clamp(-1.0, 1.0)
}

fn zscore(v: &[f64]) -> Vec<f64> {
    let m = mean(v);
    let sd = var(v, m).sqrt();
    v.iter()
        .map(|x| if sd > 0.0 { (x - m) / sd } else { 0.0 })
        .collect()
}

/// Root mean squared error between independently z-scored vectors.
pub fn rmse(pred: &[f64], truth: &[f64]) -> f64 {
    let a = zscore(pred);
    let b = zscore(truth);
    mean(&a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).collect::<Vec<_>>()).sqrt()
}

fn distribution(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = v.iter().map(|x| x - lo.min(0.0)).collect();
    let total: f64 = shifted.iter().sum();
    if total > 0.0 {
        shifted.iter().map(|x| x / total).collect()
    } else {
        vec![1.0 / v.len() as f64; v.len()]
    }
}

fn kl2(p: &[f64], m: &[f64]) -> f64 {
    p.iter()
        .zip(m)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a / b).log2())
        .sum()
}

/// Jensen-Shannon divergence (base 2) of the vectors read as distributions.
pub fn js(pred: &[f64], truth: &[f64]) -> f64 {
    let p = distribution(pred);
    let q = distribution(truth);
    let m: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
    (0.5 * kl2(&p, &m) + 0.5 * kl2(&q, &m)).clamp(0.0, 1.0)
}
