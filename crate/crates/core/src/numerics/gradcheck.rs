use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Central-difference check of a scalar function of several tensors.
///
/// Returns the maximum over all coordinates of
/// `|analytic − numeric| / (|analytic| + |numeric| + 1e-12)`.
pub fn grad_check_many<F>(f: F, thetas: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |ts: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ts.iter().map(|t| g.leaf(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        let v = g.value(out).data()[0];
        if !v.is_finite() {
            return Err(Error::Numeric(format!("non-finite objective {v}")));
        }
        Ok(v)
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = thetas.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let v0 = g.value(out).data()[0];
    if !v0.is_finite() {
        return Err(Error::Numeric(format!("non-finite objective {v0}")));
    }
    let grads = g.backward(out)?;

    let mut worst: f64 = 0.0;
    let mut work: Vec<Tensor> = thetas.to_vec();
    for (k, theta) in thetas.iter().enumerate() {
        let analytic = grads.get(vars[k]);
        for i in 0..theta.len() {
            let mut plus = theta.to_vec();
            plus[i] += h;
            work[k] = Tensor::new(theta.shape().to_vec(), plus)?;
            let fp = eval(&work)?;
            let mut minus = theta.to_vec();
            minus[i] -= h;
            work[k] = Tensor::new(theta.shape().to_vec(), minus)?;
            let fm = eval(&work)?;
            work[k] = theta.clone();

            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic.data()[i];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs() + 1e-12);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

/// Single-tensor form of [`grad_check_many`].
pub fn grad_check<F>(f: F, theta: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    grad_check_many(|g, vs| f(g, vs[0]), std::slice::from_ref(theta), h)
}
