use super::{Gradient, ParameterSet, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<F> {
    pub m: ParameterSet<F>,
    pub v: ParameterSet<F>,
    pub t: u64,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(params: &ParameterSet<F>) -> Self {
        Self {
            m: ParameterSet::zeros_like(params),
            v: ParameterSet::zeros_like(params),
            t: 0,
        }
    }
}

pub fn adam_step_in_place<F: Scalar>(
    params: &mut ParameterSet<F>,
    grad: &Gradient<F>,
    state: &mut AdamState<F>,
    lr: f64,
    config: AdamConfig,
) {
    debug_assert!(params.is_congruent(grad));
    state.t += 1;
    let t = state.t as i32;
    let b1 = F::from_f64(config.beta1);
    let b2 = F::from_f64(config.beta2);
    let c1 = F::from_f64(1.0 - config.beta1);
    let c2 = F::from_f64(1.0 - config.beta2);
    let bias1 = F::from_f64(1.0 - config.beta1.powi(t));
    let bias2 = F::from_f64(1.0 - config.beta2.powi(t));
    let lr = F::from_f64(lr);
    let eps = F::from_f64(config.eps);
    let tensors = params
        .values_mut()
        .zip(grad.tensors())
        .zip(state.m.values_mut().zip(state.v.values_mut()));
    for ((p, g), (m, v)) in tensors {
        for i in 0..p.len() {
            let gi = g.data[i];
            m[i] = b1 * m[i] + c1 * gi;
            v[i] = b2 * v[i] + c2 * gi * gi;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            p[i] = p[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// One bias-corrected Adam update, returning new parameters and state.
pub fn adam_step<F: Scalar>(
    params: &ParameterSet<F>,
    grad: &Gradient<F>,
    state: &AdamState<F>,
    lr: f64,
) -> (ParameterSet<F>, AdamState<F>) {
    let mut params = params.clone();
    let mut state = state.clone();
    adam_step_in_place(&mut params, grad, &mut state, lr, AdamConfig::default());
    (params, state)
}

/// `target <- tau * online + (1 - tau) * target`.
pub fn polyak_update_in_place<F: Scalar>(
    target: &mut ParameterSet<F>,
    online: &ParameterSet<F>,
    tau: f64,
) {
    debug_assert!(target.is_congruent(online));
    let tau_f = F::from_f64(tau);
    let keep = F::from_f64(1.0 - tau);
    for (t, o) in target.values_mut().zip(online.tensors()) {
        for (x, y) in t.iter_mut().zip(&o.data) {
            *x = tau_f * *y + keep * *x;
        }
    }
}

pub fn polyak_update<F: Scalar>(
    target: &ParameterSet<F>,
    online: &ParameterSet<F>,
    tau: f64,
) -> ParameterSet<F> {
    let mut out = target.clone();
    polyak_update_in_place(&mut out, online, tau);
    out
}
