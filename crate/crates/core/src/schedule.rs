//! Closed-form DDPM quantities shared by training and sampling.
//!
//! Steps are 1-based: `t ∈ 1..=T`. `alpha_hat(t) = 1 − β_t` is the per-step
//! signal retention and `alpha_bar(t)` its cumulative product.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    #[default]
    Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    betas: Vec<f64>,
    alpha_hats: Vec<f64>,
    alpha_bars: Vec<f64>,
    posterior_vars: Vec<f64>,
}

pub fn make_schedule(
    steps: usize,
    beta_start: f64,
    beta_end: f64,
    kind: ScheduleKind,
) -> Result<Schedule> {
    if steps == 0 {
        return Err(Error::Config("schedule needs at least one step".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::Config(format!(
            "beta range must satisfy 0 < start <= end < 1, got {beta_start}..{beta_end}"
        )));
    }
    let betas: Vec<f64> = match kind {
        ScheduleKind::Linear if steps == 1 => vec![beta_start],
        ScheduleKind::Linear => (0..steps)
            .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64)
            .collect(),
    };
    Schedule::from_betas(betas)
}

impl Schedule {
    /// Builds every derived array from explicit betas (used when reloading a
    /// checkpoint). Betas must lie in `[0, 1)`.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() || betas.iter().any(|b| !(0.0..1.0).contains(b)) {
            return Err(Error::Config("betas must be non-empty and in [0, 1)".into()));
        }
        let alpha_hats: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(betas.len());
        let mut acc = 1.0;
        for a in &alpha_hats {
            acc *= a;
            alpha_bars.push(acc);
        }
        let posterior_vars = (0..betas.len())
            .map(|i| {
                if i == 0 {
                    betas[0]
                } else {
                    let denom = 1.0 - alpha_bars[i];
                    if denom == 0.0 {
                        0.0
                    } else {
                        (1.0 - alpha_bars[i - 1]) / denom * betas[i]
                    }
                }
            })
            .collect();
        Ok(Schedule {
            betas,
            alpha_hats,
            alpha_bars,
            posterior_vars,
        })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    fn idx(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.steps() {
            return Err(Error::Index {
                what: "diffusion step",
                index: t,
                max: self.steps(),
            });
        }
        Ok(t - 1)
    }

    pub fn beta(&self, t: usize) -> Result<f64> {
        Ok(self.betas[self.idx(t)?])
    }

    pub fn alpha_hat(&self, t: usize) -> Result<f64> {
        Ok(self.alpha_hats[self.idx(t)?])
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        Ok(self.alpha_bars[self.idx(t)?])
    }

    pub fn posterior_var(&self, t: usize) -> Result<f64> {
        Ok(self.posterior_vars[self.idx(t)?])
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_hats(&self) -> &[f64] {
        &self.alpha_hats
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn posterior_vars(&self) -> &[f64] {
        &self.posterior_vars
    }

    /// `√ᾱ_t · x0 + √(1 − ᾱ_t) · eps`.
    pub fn q_sample(&self, x0: &[f64], t: usize, eps: &[f64]) -> Result<Vec<f64>> {
        let ab = self.alpha_bar(t)?;
        check_len("q_sample", x0, eps)?;
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        Ok(x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect())
    }

    /// Reverse-step mean and standard deviation.
    ///
    /// `σ` is `√β̃_t` for `t > 1` and exactly zero at `t = 1`.
    pub fn p_mean_sigma(&self, x_t: &[f64], t: usize, eps_hat: &[f64]) -> Result<(Vec<f64>, f64)> {
        let i = self.idx(t)?;
        check_len("p_mean_sigma", x_t, eps_hat)?;
        let beta = self.betas[i];
        let coef = beta / (1.0 - self.alpha_bars[i]).sqrt();
        let inv = 1.0 / self.alpha_hats[i].sqrt();
        let mu = x_t
            .iter()
            .zip(eps_hat)
            .map(|(x, e)| inv * (x - coef * e))
            .collect();
        let sigma = if t == 1 {
            0.0
        } else {
            self.posterior_vars[i].sqrt()
        };
        Ok((mu, sigma))
    }
}

fn check_len(op: &'static str, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            op,
            left: vec![a.len()],
            right: vec![b.len()],
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn single_step_schedule() {
        let s = make_schedule(1, 0.1, 0.1, ScheduleKind::Linear).unwrap();
        assert_eq!(s.betas(), &[0.1]);
        assert!((s.alpha_bar(1).unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(s.posterior_var(1).unwrap(), 0.1);
    }

    #[test]
    fn four_step_cumulative_product() {
        let s = make_schedule(4, 0.1, 0.4, ScheduleKind::Linear).unwrap();
        let expect_b = [0.1, 0.2, 0.3, 0.4];
        let expect_ab = [0.9, 0.72, 0.504, 0.3024];
        for i in 0..4 {
            assert!((s.betas()[i] - expect_b[i]).abs() < 1e-15);
            assert!((s.alpha_bars()[i] - expect_ab[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_ranges_rejected() {
        assert!(make_schedule(0, 0.1, 0.2, ScheduleKind::Linear).is_err());
        assert!(make_schedule(5, 0.0, 0.2, ScheduleKind::Linear).is_err());
        assert!(make_schedule(5, 0.3, 0.2, ScheduleKind::Linear).is_err());
        assert!(make_schedule(5, 0.1, 1.0, ScheduleKind::Linear).is_err());
    }

    #[test]
    fn structural_invariants() {
        for &t in &[2usize, 10, 50, 1000] {
            let s = make_schedule(t, 1e-4, 0.02, ScheduleKind::Linear).unwrap();
            for i in 1..t {
                assert!(s.betas()[i] > s.betas()[i - 1]);
                assert!(s.alpha_bars()[i] < s.alpha_bars()[i - 1]);
            }
            for i in 0..t {
                assert!(s.posterior_vars()[i] <= s.betas()[i]);
            }
            assert_eq!(s.posterior_vars()[0], s.betas()[0]);
        }
    }

    #[test]
    fn step_out_of_range() {
        let s = make_schedule(4, 0.1, 0.4, ScheduleKind::Linear).unwrap();
        assert!(matches!(s.q_sample(&[0.0], 0, &[0.0]), Err(Error::Index { .. })));
        assert!(matches!(s.q_sample(&[0.0], 5, &[0.0]), Err(Error::Index { .. })));
    }

    #[test]
    fn q_sample_cases() {
        // no-noise prefix: alpha_bar == 1
        let s = Schedule::from_betas(vec![0.0, 0.5]).unwrap();
        assert_eq!(s.q_sample(&[1.5, -2.0], 1, &[3.0, 3.0]).unwrap(), vec![1.5, -2.0]);

        let s = make_schedule(4, 0.1, 0.4, ScheduleKind::Linear).unwrap();
        let out = s.q_sample(&[2.0], 3, &[0.0]).unwrap();
        assert!((out[0] - 2.0 * 0.504f64.sqrt()).abs() < 1e-12);

        // alpha_bar = 0.25 via a single beta of 0.75
        let s = Schedule::from_betas(vec![0.75]).unwrap();
        let out = s.q_sample(&[0.0; 3], 1, &[1.0; 3]).unwrap();
        for v in out {
            assert!((v - 0.75f64.sqrt()).abs() < 1e-15);
            assert!((v - 0.8660).abs() < 1e-4);
        }
    }

    #[test]
    fn reverse_mean_examples() {
        // vanishing beta at a step whose cumulative noise is not itself vanishing
        let s = Schedule::from_betas(vec![0.5, 1e-12]).unwrap();
        let (mu, _) = s.p_mean_sigma(&[0.7, -0.2], 2, &[0.3, 0.9]).unwrap();
        assert!((mu[0] - 0.7).abs() < 1e-9 && (mu[1] + 0.2).abs() < 1e-9);

        let s = make_schedule(1, 0.01, 0.01, ScheduleKind::Linear).unwrap();
        let (mu, _) = s.p_mean_sigma(&[1.0], 1, &[1.0]).unwrap();
        assert!((mu[0] - 0.9 / 0.99f64.sqrt()).abs() < 1e-12);
        assert!((mu[0] - 0.90454).abs() < 1e-5);

        let s = make_schedule(4, 0.1, 0.4, ScheduleKind::Linear).unwrap();
        let (_, sigma) = s.p_mean_sigma(&[0.0], 3, &[0.0]).unwrap();
        assert!((sigma - s.posterior_var(3).unwrap().sqrt()).abs() < 1e-15);
    }

    #[test]
    fn oracle_eps_inverts_forward_at_step_one() {
        let s = make_schedule(1, 0.3, 0.3, ScheduleKind::Linear).unwrap();
        let x0 = [0.4, -1.3, 2.2];
        let eps = [0.1, 0.7, -1.9];
        let xt = s.q_sample(&x0, 1, &eps).unwrap();
        let (mu, sigma) = s.p_mean_sigma(&xt, 1, &eps).unwrap();
        assert_eq!(sigma, 0.0);
        for (a, b) in mu.iter().zip(x0) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn forward_marginal_statistics() {
        let s = make_schedule(50, 0.002, 0.4, ScheduleKind::Linear).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (x0, t, n) = (1.7, 5, 10_000);
        let ab = s.alpha_bar(t).unwrap();
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                s.q_sample(&[x0], t, &[e]).unwrap()[0]
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let true_var = 1.0 - ab;
        let se_mean = (true_var / n as f64).sqrt();
        let se_var = true_var * (2.0 / (n - 1) as f64).sqrt();
        assert!((mean - ab.sqrt() * x0).abs() < 3.0 * se_mean);
        assert!((var - true_var).abs() < 3.0 * se_var);
    }
}
