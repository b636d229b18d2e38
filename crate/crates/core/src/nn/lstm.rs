//! Single-layer LSTM returning the final hidden state.
//!
//! For step `t` and gate row `r` the pre-activation is accumulated as
//! `Σ_d W[r,d]·x_t[d]`, then `+ Σ_j U[r,j]·h_{t−1}[j]`, then `+ b[r]`, in
//! that order, starting from zero. Rows `0..H` are the input gate, `H..2H`
//! forget, `2H..3H` the tanh candidate and `3H..4H` the output gate.

use super::layers::sigmoid;
use super::params::LstmParams;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Values saved by [`lstm_forward`] for the reverse pass.
#[derive(Clone, Debug)]
pub struct LstmCache<T> {
    pub input: Tensor<T>,
    /// Activated gates per step, `[T × 4H]` (i, f, g, o).
    pub gates: Vec<T>,
    /// Cell states `c_0..c_T`, `[(T+1) × H]`.
    pub cells: Vec<T>,
    /// Hidden states `h_0..h_T`, `[(T+1) × H]`.
    pub hidden: Vec<T>,
    /// `tanh(c_t)` for `t = 1..T`, `[T × H]`.
    pub tanh_cells: Vec<T>,
}

pub fn lstm_forward<T: Scalar>(sequence: &Tensor<T>, params: &LstmParams<T>) -> Result<(Tensor<T>, LstmCache<T>)> {
    let &[steps, d] = sequence.shape() else {
        return Err(Error::shape("lstm", format!("sequence must be [T × D], got {:?}", sequence.shape())));
    };
    let h = params.hidden();
    if steps == 0 {
        return Err(Error::shape("lstm", "sequence has no timesteps"));
    }
    if params.input_dim() != d || params.w.shape()[0] != 4 * h || params.b.len() != 4 * h {
        return Err(Error::shape(
            "lstm",
            format!(
                "W {:?}, U {:?}, b {:?} do not fit input width {d}",
                params.w.shape(),
                params.u.shape(),
                params.b.shape()
            ),
        ));
    }
    let (w, u, b) = (params.w.data(), params.u.data(), params.b.data());
    let x = sequence.data();
    let mut gates = vec![T::zero(); steps * 4 * h];
    let mut cells = vec![T::zero(); (steps + 1) * h];
    let mut hidden = vec![T::zero(); (steps + 1) * h];
    let mut tanh_cells = vec![T::zero(); steps * h];

    for t in 0..steps {
        let xt = &x[t * d..(t + 1) * d];
        let h_prev = &hidden[t * h..(t + 1) * h];
        let g = &mut gates[t * 4 * h..(t + 1) * 4 * h];
        for r in 0..4 * h {
            let mut acc = T::zero();
            for (wv, xv) in w[r * d..(r + 1) * d].iter().zip(xt) {
                acc += *wv * *xv;
            }
            for (uv, hv) in u[r * h..(r + 1) * h].iter().zip(h_prev) {
                acc += *uv * *hv;
            }
            acc += b[r];
            g[r] = if (2 * h..3 * h).contains(&r) {
                acc.tanh()
            } else {
                sigmoid(acc)
            };
        }
        for j in 0..h {
            let (i_g, f_g, c_g, o_g) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
            let c = f_g * cells[t * h + j] + i_g * c_g;
            let tc = c.tanh();
            cells[(t + 1) * h + j] = c;
            tanh_cells[t * h + j] = tc;
            hidden[(t + 1) * h + j] = o_g * tc;
        }
    }
    let out = Tensor::from_vec(&[h], hidden[steps * h..].to_vec())?;
    Ok((
        out,
        LstmCache {
            input: sequence.clone(),
            gates,
            cells,
            hidden,
            tanh_cells,
        },
    ))
}

/// Backpropagation through time from `dL/dh_T`. Accumulates into `grads`
/// and returns `dL/dx` as `[T × D]`.
pub fn lstm_backward<T: Scalar>(
    params: &LstmParams<T>,
    cache: &LstmCache<T>,
    grad_h_last: &[T],
    grads: &mut LstmParams<T>,
) -> Tensor<T> {
    let (steps, d) = (cache.input.shape()[0], cache.input.shape()[1]);
    let h = params.hidden();
    let (w, u) = (params.w.data(), params.u.data());
    let x = cache.input.data();
    let mut gx = Tensor::zeros(&[steps, d]);
    let mut dh = grad_h_last.to_vec();
    let mut dc = vec![T::zero(); h];
    let mut dz = vec![T::zero(); 4 * h];
    let one = T::one();

    for t in (0..steps).rev() {
        let g = &cache.gates[t * 4 * h..(t + 1) * 4 * h];
        let c_prev = &cache.cells[t * h..(t + 1) * h];
        let tc = &cache.tanh_cells[t * h..(t + 1) * h];
        for j in 0..h {
            let (i_g, f_g, c_g, o_g) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
            let d_o = dh[j] * tc[j];
            let dcj = dc[j] + dh[j] * o_g * (one - tc[j] * tc[j]);
            let d_i = dcj * c_g;
            let d_g = dcj * i_g;
            let d_f = dcj * c_prev[j];
            dc[j] = dcj * f_g;
            dz[j] = d_i * i_g * (one - i_g);
            dz[h + j] = d_f * f_g * (one - f_g);
            dz[2 * h + j] = d_g * (one - c_g * c_g);
            dz[3 * h + j] = d_o * o_g * (one - o_g);
        }
        let xt = &x[t * d..(t + 1) * d];
        let h_prev = &cache.hidden[t * h..(t + 1) * h];
        let gw = grads.w.data_mut();
        for r in 0..4 * h {
            let z = dz[r];
            for k in 0..d {
                gw[r * d + k] += z * xt[k];
            }
        }
        let gu = grads.u.data_mut();
        for r in 0..4 * h {
            let z = dz[r];
            for k in 0..h {
                gu[r * h + k] += z * h_prev[k];
            }
        }
        for (gb, &z) in grads.b.data_mut().iter_mut().zip(&dz) {
            *gb += z;
        }
        let gxt = &mut gx.data_mut()[t * d..(t + 1) * d];
        for r in 0..4 * h {
            let z = dz[r];
            for k in 0..d {
                gxt[k] += w[r * d + k] * z;
            }
        }
        dh.iter_mut().for_each(|v| *v = T::zero());
        for r in 0..4 * h {
            let z = dz[r];
            for k in 0..h {
                dh[k] += u[r * h + k] * z;
            }
        }
    }
    gx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(d: usize, h: usize) -> LstmParams<f64> {
        LstmParams {
            w: Tensor::zeros(&[4 * h, d]),
            u: Tensor::zeros(&[4 * h, h]),
            b: Tensor::zeros(&[4 * h]),
        }
    }

    #[test]
    fn zero_weights_give_zero_state() {
        let p = params(3, 2);
        let seq = Tensor::from_vec(&[4, 3], (0..12).map(|i| i as f64 - 5.0).collect()).unwrap();
        let (h, cache) = lstm_forward(&seq, &p).unwrap();
        assert_eq!(h.data(), &[0.0, 0.0]);
        for t in 0..4 {
            let g = &cache.gates[t * 8..(t + 1) * 8];
            assert_eq!(&g[..2], &[0.5, 0.5]);
            assert_eq!(&g[4..6], &[0.0, 0.0]);
        }
        assert!(cache.cells.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn saturated_gates_hold_cell_state() {
        let (d, h) = (2, 3);
        let mut p = params(d, h);
        for (r, b) in p.b.data_mut().iter_mut().enumerate() {
            *b = match r / h {
                0 => -50.0,
                1 => 50.0,
                2 => 1.0,
                _ => 0.0,
            };
        }
        let seq = Tensor::from_vec(&[5, d], vec![0.3; 10]).unwrap();
        let (_, cache) = lstm_forward(&seq, &p).unwrap();
        let c_last = &cache.cells[5 * h..];
        assert!(c_last.iter().all(|c| c.abs() < 1e-9), "{c_last:?}");
    }

    #[test]
    fn rejects_mismatched_width() {
        let p = params(3, 2);
        let seq = Tensor::from_vec(&[2, 4], vec![0.0; 8]).unwrap();
        assert!(lstm_forward(&seq, &p).is_err());
    }
}
