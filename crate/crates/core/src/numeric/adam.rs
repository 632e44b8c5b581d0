use crate::error::{Error, Result};
use crate::numeric::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update with bias correction, using the gradients currently held
/// in `store`. Fails before touching anything if a gradient slot was never
/// populated since the last `zero_grad`.
pub fn adam_step(store: &mut ParamStore, cfg: &AdamConfig) -> Result<()> {
    if let Some(id) = store.ids().find(|&id| !store.grad_populated(id)) {
        return Err(Error::MissingGradient(store.name(id).to_string()));
    }
    store.step += 1;
    let t = store.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let precision = store.precision();
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let grad = store.grad(id).data().to_vec();
        let i = id.index();
        let mut update = vec![0.0; grad.len()];
        {
            let m = &mut store.first_moment[i];
            let v = &mut store.second_moment[i];
            for (k, g) in grad.iter().enumerate() {
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                update[k] = cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        for (p, u) in store.value_mut(id).data_mut().iter_mut().zip(update) {
            *p = precision.round(*p - u);
        }
    }
    Ok(())
}
