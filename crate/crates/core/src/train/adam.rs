use crate::error::{Error, Result};
use crate::nn::{Parameters, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates mirroring the parameter layout.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Parameters<T>,
    pub v: Parameters<T>,
    pub t: u64,
    pub hyper: AdamHyper,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &Parameters<T>) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
            hyper: AdamHyper::default(),
        }
    }
}

/// Bias-corrected Adam update on flat slices, step `t ≥ 1`.
pub fn adam_update<T: Scalar>(
    theta: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    t: u64,
    lr: f64,
    hyper: &AdamHyper,
) {
    let (b1, b2) = (T::of(hyper.beta1), T::of(hyper.beta2));
    let (one_b1, one_b2) = (T::of(1.0 - hyper.beta1), T::of(1.0 - hyper.beta2));
    let c1 = T::of(1.0 - hyper.beta1.powf(t as f64));
    let c2 = T::of(1.0 - hyper.beta2.powf(t as f64));
    let (lr, eps) = (T::of(lr), T::of(hyper.epsilon));
    for i in 0..theta.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + one_b1 * g;
        v[i] = b2 * v[i] + one_b2 * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// One optimizer step. Fails without touching anything when a gradient is
/// not finite.
pub fn adam_step<T: Scalar>(
    params: &mut Parameters<T>,
    grads: &Parameters<T>,
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<()> {
    for (name, g) in grads.names().iter().zip(grads.tensors()) {
        if !g.is_finite() {
            return Err(Error::Invalid(format!("non-finite gradient in {name}")));
        }
    }
    state.t += 1;
    let t = state.t;
    let hyper = state.hyper;
    let p = params.tensors_mut();
    let m = state.m.tensors_mut();
    let v = state.v.tensors_mut();
    for (((p, g), m), v) in p.into_iter().zip(grads.tensors()).zip(m).zip(v) {
        adam_update(p.data_mut(), g.data(), m.data_mut(), v.data_mut(), t, lr, &hyper);
    }
    Ok(())
}
