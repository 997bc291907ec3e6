//! Small dense multi-layer perceptrons and their optimizer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{kernels, Tape, ValueId};
use crate::error::{Error, Result};

/// Negative slope of the hidden-layer activation.
pub const LEAKY_SLOPE: f64 = 0.01;

/// A dense value buffer with an explicit shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu,
    Linear,
}

/// One affine layer with its activation tag.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Layer {
    /// Row-major `out_dim x in_dim` weights.
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl Layer {
    pub fn out_dim(&self) -> usize {
        self.bias.len()
    }

    pub fn in_dim(&self) -> usize {
        self.weight.len() / self.out_dim()
    }
}

/// Parameters of one MLP: hidden layers use leaky-ReLU, the output layer is
/// linear.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    /// Kaiming-uniform initialization (`U(-sqrt(6/fan_in), sqrt(6/fan_in))`),
    /// zero biases.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least one layer");
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for k in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[k], dims[k + 1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            let mut weight = Tensor::zeros(vec![fan_out, fan_in]);
            for v in &mut weight.data {
                *v = rng.gen_range(-bound..bound);
            }
            let activation = if k + 2 == dims.len() {
                Activation::Linear
            } else {
                Activation::LeakyRelu
            };
            layers.push(Layer {
                weight,
                bias: Tensor::zeros(vec![fan_out]),
                activation,
            });
        }
        MlpParams { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim())
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim())
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.in_dim()];
        dims.extend(self.layers.iter().map(|l| l.out_dim()));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Zeroes the final layer's weights and pins its bias, so the net
    /// initially outputs exactly `bias` regardless of input.
    pub fn pin_output(&mut self, bias: &[f64]) {
        let last = self.layers.last_mut().expect("non-empty MLP");
        last.weight.data.fill(0.0);
        last.bias.data.copy_from_slice(bias);
    }

    /// Checks dimension chaining and value finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidConfig("MLP has no layers".to_string()));
        }
        for (k, pair) in self.layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::ShapeMismatch {
                    expected: format!("layer {} input dim {}", k + 1, pair[0].out_dim()),
                    got: format!("{}", pair[1].in_dim()),
                });
            }
        }
        for l in &self.layers {
            if l.weight.len() != l.in_dim() * l.out_dim() || l.bias.len() != l.out_dim() {
                return Err(Error::ShapeMismatch {
                    expected: "consistent layer shapes".to_string(),
                    got: format!("{:?}/{:?}", l.weight.shape, l.bias.shape),
                });
            }
            if l.weight.data.iter().chain(&l.bias.data).any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig("non-finite MLP parameter".to_string()));
            }
        }
        Ok(())
    }

    /// Untaped forward pass; uses the same kernels as the taped path.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.in_dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("input dim {}", self.in_dim()),
                got: format!("{}", input.len()),
            });
        }
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        for l in &self.layers {
            next.resize(l.out_dim(), 0.0);
            kernels::affine(&l.weight.data, &l.bias.data, &cur, &mut next);
            if l.activation == Activation::LeakyRelu {
                let pre = next.clone();
                kernels::leaky_relu(&pre, LEAKY_SLOPE, &mut next);
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Registers the parameters as tape leaves (once per tape) for taped
    /// forward passes.
    pub fn register(&self, tape: &mut Tape) -> TapedMlp {
        TapedMlp {
            layers: self
                .layers
                .iter()
                .map(|l| (tape.leaf(&l.weight.data), tape.leaf(&l.bias.data), l.activation))
                .collect(),
        }
    }
}

/// Tape-resident handles of one registered MLP.
pub struct TapedMlp {
    layers: Vec<(ValueId, ValueId, Activation)>,
}

impl TapedMlp {
    pub fn forward(&self, tape: &mut Tape, x: ValueId) -> Result<ValueId> {
        let mut cur = x;
        for &(w, b, act) in &self.layers {
            cur = tape.affine(w, b, cur)?;
            if act == Activation::LeakyRelu {
                cur = tape.leaky_relu(cur, LEAKY_SLOPE);
            }
        }
        Ok(cur)
    }

    /// Parameter leaf ids in optimizer order (weight, bias per layer).
    pub fn param_ids(&self) -> Vec<ValueId> {
        self.layers.iter().flat_map(|&(w, b, _)| [w, b]).collect()
    }
}

/// Softmax over a non-empty logit set; stabilized by max subtraction.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut out = logits.to_vec();
    kernels::softmax_in_place(&mut out);
    Ok(out)
}

/// Adam optimizer state over a fixed tensor ordering.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    pub fn for_sizes(sizes: &[usize]) -> Self {
        AdamState {
            step: 0,
            m: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            v: sizes.iter().map(|&s| vec![0.0; s]).collect(),
        }
    }
}

/// One Adam update over parallel tensors and gradients.
pub fn adam_step(
    state: &mut AdamState,
    tensors: &mut [&mut Tensor],
    grads: &[&[f64]],
    lr: f64,
) -> Result<()> {
    if tensors.len() != grads.len() || tensors.len() != state.m.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} tensors", state.m.len()),
            got: format!("{}/{}", tensors.len(), grads.len()),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    for ((tensor, grad), (m, v)) in tensors
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        if tensor.len() != grad.len() || tensor.len() != m.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values", tensor.len()),
                got: format!("{}", grad.len()),
            });
        }
        for j in 0..grad.len() {
            let g = grad[j];
            m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g;
            v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            tensor.data[j] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let mut mlp = MlpParams::new(&[3, 5, 2], &mut ChaCha8Rng::seed_from_u64(0));
        for l in &mut mlp.layers {
            l.weight.data.fill(0.0);
            l.bias.data.fill(0.0);
        }
        assert_eq!(mlp.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut mlp = MlpParams::new(&[3, 3], &mut ChaCha8Rng::seed_from_u64(0));
        mlp.layers[0].weight.data = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        mlp.layers[0].bias.data.fill(0.0);
        let x = vec![0.5, -7.0, 2.25];
        assert_eq!(mlp.forward(&x).unwrap(), x);
    }

    #[test]
    fn forward_matches_triple_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mlp = MlpParams::new(&[12, 64, 32], &mut rng);
        let input: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let got = mlp.forward(&input).unwrap();

        // Independent oracle: naive per-layer loops.
        let mut cur = input.clone();
        for l in &mlp.layers {
            let (rows, cols) = (l.out_dim(), l.in_dim());
            let mut next = vec![0.0; rows];
            for r in 0..rows {
                let mut acc = 0.0;
                for c in 0..cols {
                    acc += l.weight.data[r * cols + c] * cur[c];
                }
                acc += l.bias.data[r];
                next[r] = if l.activation == Activation::LeakyRelu && acc <= 0.0 {
                    LEAKY_SLOPE * acc
                } else {
                    acc
                };
            }
            cur = next;
        }
        for (a, b) in got.iter().zip(&cur) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_rejects_wrong_input_dim() {
        let mlp = MlpParams::new(&[4, 2], &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(
            mlp.forward(&[1.0, 2.0]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn taped_forward_is_bit_identical_to_untaped() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mlp = MlpParams::new(&[6, 16, 4], &mut rng);
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let untaped = mlp.forward(&x).unwrap();
        let mut tape = Tape::new();
        let taped = mlp.register(&mut tape);
        let xi = tape.leaf(&x);
        let y = taped.forward(&mut tape, xi).unwrap();
        assert_eq!(tape.value(y), untaped.as_slice());
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let mut t = Tensor::zeros(vec![3]);
        t.data = vec![1.0, -2.0, 0.5];
        let before = t.data.clone();
        let mut state = AdamState::for_sizes(&[3]);
        adam_step(&mut state, &mut [&mut t], &[&[0.0, 0.0, 0.0]], 0.1).unwrap();
        assert_eq!(t.data, before);
    }

    #[test]
    fn adam_first_step_is_signed_unit_move() {
        let mut t = Tensor::zeros(vec![2]);
        t.data = vec![1.0, 1.0];
        let mut state = AdamState::for_sizes(&[2]);
        let g = [0.3, -0.001];
        adam_step(&mut state, &mut [&mut t], &[&g], 0.01).unwrap();
        for (j, &gj) in g.iter().enumerate() {
            let expect = 1.0 - 0.01 * gj / (gj.abs() + ADAM_EPS);
            assert!((t.data[j] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_matches_scalar_reference() {
        // Hand-rolled scalar Adam as the oracle.
        let mut p = 0.7;
        let (mut m, mut v) = (0.0, 0.0);
        let grads = [0.5, -0.25];
        for (step, g) in grads.iter().enumerate() {
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(step as i32 + 1));
            let vh = v / (1.0 - 0.999f64.powi(step as i32 + 1));
            p -= 0.05 * mh / (vh.sqrt() + 1e-8);
        }

        let mut t = Tensor::zeros(vec![1]);
        t.data = vec![0.7];
        let mut state = AdamState::for_sizes(&[1]);
        for g in grads {
            adam_step(&mut state, &mut [&mut t], &[&[g]], 0.05).unwrap();
        }
        assert!((t.data[0] - p).abs() < 1e-12);
    }

    #[test]
    fn softmax_helper_matches_examples() {
        assert_eq!(softmax(&[0.0; 4]).unwrap(), vec![0.25; 4]);
        assert_eq!(softmax(&[42.0]).unwrap(), vec![1.0]);
        assert!(matches!(softmax(&[]), Err(Error::EmptySet)));
    }
}
