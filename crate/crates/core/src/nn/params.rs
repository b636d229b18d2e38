use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, ShapePlan};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<T> {
    /// `[filters × in_channels × kernel]`
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Gate blocks are packed in the order input, forget, candidate, output.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams<T> {
    /// `[4H × D]`
    pub w: Tensor<T>,
    /// `[4H × H]`
    pub u: Tensor<T>,
    /// `[4H]`
    pub b: Tensor<T>,
}

impl<T: Scalar> LstmParams<T> {
    pub fn hidden(&self) -> usize {
        self.u.shape()[1]
    }

    pub fn input_dim(&self) -> usize {
        self.w.shape()[1]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseParams<T> {
    /// `[units × inputs]`
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// All learnable weights. Gradients use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters<T> {
    pub conv: Vec<ConvParams<T>>,
    pub lstm: LstmParams<T>,
    pub dense: DenseParams<T>,
    pub output: DenseParams<T>,
}

impl<T: Scalar> Parameters<T> {
    pub fn zeros(plan: &ShapePlan) -> Self {
        let shapes = plan.parameter_shapes();
        let mut tensors = shapes.iter().map(|(_, s)| Tensor::zeros(s));
        let conv = plan
            .blocks
            .iter()
            .map(|_| ConvParams {
                weight: tensors.next().expect("conv weight"),
                bias: tensors.next().expect("conv bias"),
            })
            .collect();
        let mut next = || tensors.next().expect("parameter");
        let lstm = LstmParams {
            w: next(),
            u: next(),
            b: next(),
        };
        let dense = DenseParams {
            weight: next(),
            bias: next(),
        };
        let output = DenseParams {
            weight: next(),
            bias: next(),
        };
        Parameters {
            conv,
            lstm,
            dense,
            output,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.fill(T::zero()));
        z
    }

    /// Tensors in storage order: conv blocks (weight, bias) by depth, LSTM
    /// (w, u, b), dense (weight, bias), output (weight, bias).
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut v = Vec::with_capacity(2 * self.conv.len() + 7);
        for c in &self.conv {
            v.push(&c.weight);
            v.push(&c.bias);
        }
        v.extend([
            &self.lstm.w,
            &self.lstm.u,
            &self.lstm.b,
            &self.dense.weight,
            &self.dense.bias,
            &self.output.weight,
            &self.output.bias,
        ]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = Vec::with_capacity(2 * self.conv.len() + 7);
        for c in &mut self.conv {
            v.push(&mut c.weight);
            v.push(&mut c.bias);
        }
        v.extend([
            &mut self.lstm.w,
            &mut self.lstm.u,
            &mut self.lstm.b,
            &mut self.dense.weight,
            &mut self.dense.bias,
            &mut self.output.weight,
            &mut self.output.bias,
        ]);
        v
    }

    pub fn names(&self) -> Vec<String> {
        let mut v = Vec::new();
        for i in 0..self.conv.len() {
            v.push(format!("conv{i}.weight"));
            v.push(format!("conv{i}.bias"));
        }
        for n in [
            "lstm.w",
            "lstm.u",
            "lstm.b",
            "dense.weight",
            "dense.bias",
            "output.weight",
            "output.bias",
        ] {
            v.push(n.to_string());
        }
        v
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.count());
        for t in self.tensors() {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// Fills every tensor from `flat` in storage order.
    pub fn load_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.count() {
            return Err(Error::shape(
                "parameters",
                format!("expected {} values, got {}", self.count(), flat.len()),
            ));
        }
        let mut off = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Parameters<T>) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Parameters<U> {
        Parameters {
            conv: self
                .conv
                .iter()
                .map(|c| ConvParams {
                    weight: c.weight.cast(),
                    bias: c.bias.cast(),
                })
                .collect(),
            lstm: LstmParams {
                w: self.lstm.w.cast(),
                u: self.lstm.u.cast(),
                b: self.lstm.b.cast(),
            },
            dense: DenseParams {
                weight: self.dense.weight.cast(),
                bias: self.dense.bias.cast(),
            },
            output: DenseParams {
                weight: self.output.weight.cast(),
                bias: self.output.bias.cast(),
            },
        }
    }

    /// Checks that every tensor matches the shape plan of `config`.
    pub fn check_against(&self, config: &ModelConfig) -> Result<()> {
        let plan = config.shapes()?;
        let expected = plan.parameter_shapes();
        let actual = self.tensors();
        if expected.len() != actual.len() {
            return Err(Error::shape(
                "parameters",
                format!("expected {} tensors, got {}", expected.len(), actual.len()),
            ));
        }
        for ((name, shape), t) in expected.iter().zip(actual) {
            if t.shape() != shape.as_slice() {
                return Err(Error::shape(
                    name.clone(),
                    format!("expected {shape:?}, got {:?}", t.shape()),
                ));
            }
        }
        Ok(())
    }
}

fn uniform<T: Scalar>(t: &mut Tensor<T>, limit: f64, rng: &mut ChaCha8Rng) {
    for x in t.data_mut() {
        *x = T::of(rng.gen_range(-limit..limit));
    }
}

fn he_limit(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// He-uniform for conv and the ReLU dense layer, Glorot-uniform for LSTM and
/// the sigmoid output. Biases start at zero except the LSTM forget gate (1.0).
pub fn init_params<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<Parameters<T>> {
    let plan = config.shapes()?;
    let mut p = Parameters::zeros(&plan);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (c, b) in p.conv.iter_mut().zip(&plan.blocks) {
        uniform(&mut c.weight, he_limit(b.in_channels * b.kernel), &mut rng);
    }
    let (h, d) = (plan.hidden, plan.seq_dim);
    uniform(&mut p.lstm.w, glorot_limit(d, 4 * h), &mut rng);
    uniform(&mut p.lstm.u, glorot_limit(h, 4 * h), &mut rng);
    for x in &mut p.lstm.b.data_mut()[h..2 * h] {
        *x = T::one();
    }
    uniform(&mut p.dense.weight, he_limit(h), &mut rng);
    uniform(&mut p.output.weight, glorot_limit(plan.dense, 1), &mut rng);
    Ok(p)
}
