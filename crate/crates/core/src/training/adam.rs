use std::collections::BTreeMap;

use super::config::TrainConfig;
use crate::error::Result;
use crate::model::ModelParams;
use crate::numerics::Tensor;

/// First and second moment estimates per parameter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros = |t: &Tensor| Tensor::zeros(t.shape());
        AdamState {
            step: 0,
            m: params.iter().map(|(k, t)| (k.clone(), zeros(t))).collect(),
            v: params.iter().map(|(k, t)| (k.clone(), zeros(t))).collect(),
        }
    }

    /// One bias-corrected update. `grads` yields the gradient of each named
    /// parameter.
    pub fn update(
        &mut self,
        params: &mut ModelParams,
        grads: &BTreeMap<String, Tensor>,
        cfg: &TrainConfig,
    ) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let names: Vec<String> = params.names().cloned().collect();
        for name in names {
            let g = &grads[&name];
            let p = params.get(&name)?;
            let m_old = &self.m[&name];
            let v_old = &self.v[&name];
            let n = p.len();
            let (mut m, mut v, mut w) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
            for i in 0..n {
                let gi = g.data()[i];
                let mi = cfg.beta1 * m_old.data()[i] + (1.0 - cfg.beta1) * gi;
                let vi = cfg.beta2 * v_old.data()[i] + (1.0 - cfg.beta2) * gi * gi;
                let step = cfg.learning_rate * (mi / c1) / ((vi / c2).sqrt() + cfg.adam_eps);
                m.push(mi);
                v.push(vi);
                w.push(p.data()[i] - step);
            }
            let shape = p.shape().to_vec();
            params.insert(&name, Tensor::new(shape.clone(), w)?)?;
            self.m.insert(name.clone(), Tensor::new(shape.clone(), m)?);
            self.v.insert(name, Tensor::new(shape, v)?);
        }
        Ok(())
    }
}
