//! Forward and reverse kernels for the individual layers.

use rand::Rng;

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[inline]
pub fn relu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    None,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => relu(x),
            Activation::Sigmoid => sigmoid(x),
            Activation::None => x,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    pub fn grad_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
            Activation::None => T::one(),
        }
    }
}

/// Valid, stride-1 1-D convolution of `[C_in × L]` into `[C_out × L−K+1]`.
pub fn conv1d_forward<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (&[c_in, len], &[c_out, wc, k]) = (input.shape(), weight.shape()) else {
        return Err(Error::shape(
            "conv1d",
            format!("input {:?} / weight {:?} have wrong rank", input.shape(), weight.shape()),
        ));
    };
    if wc != c_in || bias.len() != c_out {
        return Err(Error::shape(
            "conv1d",
            format!(
                "weight {:?} and bias {:?} do not fit input {:?}",
                weight.shape(),
                bias.shape(),
                input.shape()
            ),
        ));
    }
    if k > len || k == 0 {
        return Err(Error::shape("conv1d", format!("kernel {k} longer than input {len}")));
    }
    let out_len = len - k + 1;
    let mut out = Tensor::zeros(&[c_out, out_len]);
    let (x, w, b) = (input.data(), weight.data(), bias.data());
    let o = out.data_mut();
    for f in 0..c_out {
        let row = &mut o[f * out_len..(f + 1) * out_len];
        row.iter_mut().for_each(|v| *v = b[f]);
        for c in 0..c_in {
            let xc = &x[c * len..(c + 1) * len];
            for kk in 0..k {
                let wv = w[(f * c_in + c) * k + kk];
                for (t, v) in row.iter_mut().enumerate() {
                    *v += wv * xc[t + kk];
                }
            }
        }
    }
    Ok(out)
}

/// Accumulates weight/bias gradients and, when requested, returns the
/// gradient with respect to the input.
pub fn conv1d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    grad_weight: &mut Tensor<T>,
    grad_bias: &mut Tensor<T>,
    want_input_grad: bool,
) -> Option<Tensor<T>> {
    let (c_in, len) = (input.shape()[0], input.shape()[1]);
    let (c_out, k) = (weight.shape()[0], weight.shape()[2]);
    let out_len = grad_out.shape()[1];
    let (x, w, go) = (input.data(), weight.data(), grad_out.data());
    let gw = grad_weight.data_mut();
    let gb = grad_bias.data_mut();
    let mut gx = want_input_grad.then(|| Tensor::zeros(&[c_in, len]));
    for f in 0..c_out {
        let g = &go[f * out_len..(f + 1) * out_len];
        gb[f] += g.iter().copied().sum::<T>();
        for c in 0..c_in {
            let xc = &x[c * len..(c + 1) * len];
            for kk in 0..k {
                let idx = (f * c_in + c) * k + kk;
                let mut acc = T::zero();
                for (t, &gv) in g.iter().enumerate() {
                    acc += gv * xc[t + kk];
                }
                gw[idx] += acc;
                if let Some(gx) = gx.as_mut() {
                    let wv = w[idx];
                    let gxc = &mut gx.data_mut()[c * len..(c + 1) * len];
                    for (t, &gv) in g.iter().enumerate() {
                        gxc[t + kk] += wv * gv;
                    }
                }
            }
        }
    }
    gx
}

/// Non-overlapping max pooling over the last axis of `[C × L]`. A trailing
/// partial window is dropped. Returns the pooled tensor and, per output cell,
/// the flat input index of the (earliest) maximum.
pub fn maxpool1d_forward<T: Scalar>(input: &Tensor<T>, pool: usize) -> Result<(Tensor<T>, Vec<usize>)> {
    let &[c, len] = input.shape() else {
        return Err(Error::shape("maxpool1d", format!("expected rank 2, got {:?}", input.shape())));
    };
    if pool == 0 || len < pool {
        return Err(Error::shape("maxpool1d", format!("length {len} shorter than pool {pool}")));
    }
    let out_len = len / pool;
    let mut out = Tensor::zeros(&[c, out_len]);
    let mut argmax = Vec::with_capacity(c * out_len);
    let x = input.data();
    let o = out.data_mut();
    for ch in 0..c {
        for t in 0..out_len {
            let start = ch * len + t * pool;
            let mut best = start;
            for i in start + 1..start + pool {
                if x[i] > x[best] {
                    best = i;
                }
            }
            o[ch * out_len + t] = x[best];
            argmax.push(best);
        }
    }
    Ok((out, argmax))
}

pub fn maxpool1d_backward<T: Scalar>(grad_out: &Tensor<T>, argmax: &[usize], input_shape: &[usize]) -> Tensor<T> {
    let mut gx = Tensor::zeros(input_shape);
    let g = gx.data_mut();
    for (&idx, &v) in argmax.iter().zip(grad_out.data()) {
        g[idx] += v;
    }
    gx
}

/// Inverted dropout. In training mode returns the output and the applied
/// mask (0 or `1/(1−rate)` per unit); in inference mode the input unchanged.
pub fn dropout_apply<T: Scalar, R: Rng + ?Sized>(
    input: &Tensor<T>,
    rate: f64,
    rng: &mut R,
    training: bool,
) -> Result<(Tensor<T>, Option<Vec<T>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok((input.clone(), None));
    }
    let scale = T::of(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..input.len())
        .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { scale })
        .collect();
    let mut out = input.clone();
    for (x, &m) in out.data_mut().iter_mut().zip(&mask) {
        *x *= m;
    }
    Ok((out, Some(mask)))
}

/// `act(W·x + b)` for a single input vector.
pub fn dense_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    act: Activation,
) -> Result<Tensor<T>> {
    let &[units, d] = weight.shape() else {
        return Err(Error::shape("dense", format!("weight must be rank 2, got {:?}", weight.shape())));
    };
    if input.len() != d || bias.len() != units {
        return Err(Error::shape(
            "dense",
            format!(
                "weight {:?}, bias {:?}, input {:?}",
                weight.shape(),
                bias.shape(),
                input.shape()
            ),
        ));
    }
    let (x, w, b) = (input.data(), weight.data(), bias.data());
    let out = (0..units)
        .map(|u| {
            let mut acc = T::zero();
            for (wv, xv) in w[u * d..(u + 1) * d].iter().zip(x) {
                acc += *wv * *xv;
            }
            act.apply(acc + b[u])
        })
        .collect();
    Tensor::from_vec(&[units], out)
}

/// Given the layer output `y` and `dL/dy`, accumulates weight/bias gradients
/// and returns `dL/dx`.
pub fn dense_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    output: &Tensor<T>,
    grad_out: &[T],
    act: Activation,
    grad_weight: &mut Tensor<T>,
    grad_bias: &mut Tensor<T>,
) -> Vec<T> {
    let (units, d) = (weight.shape()[0], weight.shape()[1]);
    let (x, w) = (input.data(), weight.data());
    let gw = grad_weight.data_mut();
    let gb = grad_bias.data_mut();
    let mut gx = vec![T::zero(); d];
    for u in 0..units {
        let dz = grad_out[u] * act.grad_from_output(output.data()[u]);
        gb[u] += dz;
        for j in 0..d {
            gw[u * d + j] += dz * x[j];
            gx[j] += dz * w[u * d + j];
        }
    }
    gx
}
