//! Minimal dense network with reverse-mode differentiation, plus Adam.
//!
//! Parameters live in one flat `Vec<f64>` laid out `[w0, b0, w1, b1, ...]`
//! (weights row-major, `out x in`). Hidden layers are tanh, the output
//! layer is linear. The flat layout keeps the optimizer, checkpoints and
//! finite-difference checks trivial.

use rand::Rng;

/// Feed-forward network with tanh hidden layers and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    params: Vec<f64>,
}

/// Activations cached by `forward` for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    /// Post-activation outputs per layer (last entry is the network output).
    outputs: Vec<Vec<f64>>,
}

impl Mlp {
    /// Parameter count for a layer stack.
    pub fn param_count(dims: &[usize]) -> usize {
        dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Random init: weights uniform in ±1/sqrt(fan_in), zero biases. The
    /// final layer is additionally scaled by `final_scale` (policy heads
    /// start near zero so early actions stay close to hover).
    pub fn new<R: Rng>(dims: &[usize], final_scale: f64, rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "network needs at least input and output");
        let mut params = Vec::with_capacity(Self::param_count(dims));
        let layers = dims.len() - 1;
        for (li, w) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = (1.0 / fan_in as f64).sqrt()
                * if li + 1 == layers { final_scale } else { 1.0 };
            for _ in 0..fan_in * fan_out {
                params.push(rng.gen_range(-scale..=scale));
            }
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Self {
            dims: dims.to_vec(),
            params,
        }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self {
            dims: dims.to_vec(),
            params: vec![0.0; Self::param_count(dims)],
        }
    }

    pub fn from_params(dims: &[usize], params: Vec<f64>) -> Option<Self> {
        (params.len() == Self::param_count(dims)).then(|| Self {
            dims: dims.to_vec(),
            params,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_offsets(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        // (offset, in_dim, out_dim) per layer
        let mut offset = 0;
        self.dims.windows(2).map(move |w| {
            let entry = (offset, w[0], w[1]);
            offset += w[0] * w[1] + w[1];
            entry
        })
    }

    /// Forward pass; activations land in `cache`, the return is the output.
    pub fn forward<'c>(&self, input: &[f64], cache: &'c mut ForwardCache) -> &'c [f64] {
        assert_eq!(input.len(), self.input_dim());
        let layers = self.dims.len() - 1;
        cache.outputs.resize(layers, Vec::new());
        for (li, (offset, in_dim, out_dim)) in self.layer_offsets().enumerate() {
            let (w, b) = self.layer_slices(offset, in_dim, out_dim);
            let hidden = li + 1 < layers;
            let (prev, rest) = cache.outputs.split_at_mut(li);
            let current: &[f64] = if li == 0 { input } else { &prev[li - 1] };
            let out = &mut rest[0];
            out.clear();
            out.reserve(out_dim);
            for o in 0..out_dim {
                let row = &w[o * in_dim..(o + 1) * in_dim];
                let mut z = b[o];
                for (wi, xi) in row.iter().zip(current.iter()) {
                    z += wi * xi;
                }
                out.push(if hidden { z.tanh() } else { z });
            }
        }
        &cache.outputs[layers - 1]
    }

    fn layer_slices(&self, offset: usize, in_dim: usize, out_dim: usize) -> (&[f64], &[f64]) {
        let w_end = offset + in_dim * out_dim;
        (&self.params[offset..w_end], &self.params[w_end..w_end + out_dim])
    }

    /// Reverse pass for one sample: accumulate dL/dparams into `grads`
    /// given dL/doutput. `cache` must come from a `forward` on `input`.
    pub fn backward(
        &self,
        input: &[f64],
        cache: &ForwardCache,
        d_output: &[f64],
        grads: &mut [f64],
    ) {
        assert_eq!(d_output.len(), self.output_dim());
        assert_eq!(grads.len(), self.params.len());
        let layers = self.dims.len() - 1;
        let offsets: Vec<(usize, usize, usize)> = self.layer_offsets().collect();

        let mut d_out: Vec<f64> = d_output.to_vec();
        for li in (0..layers).rev() {
            let (offset, in_dim, out_dim) = offsets[li];
            let (w, _) = self.layer_slices(offset, in_dim, out_dim);
            let layer_input: &[f64] = if li == 0 {
                input
            } else {
                &cache.outputs[li - 1]
            };
            // dL/dz: tanh layers fold the activation derivative in.
            let mut d_z = d_out;
            if li + 1 < layers {
                let y = &cache.outputs[li];
                for (dz, yi) in d_z.iter_mut().zip(y.iter()) {
                    *dz *= 1.0 - yi * yi;
                }
            }
            let mut d_in = vec![0.0; in_dim];
            for o in 0..out_dim {
                let dz = d_z[o];
                let row = o * in_dim;
                for i in 0..in_dim {
                    grads[offset + row + i] += dz * layer_input[i];
                    d_in[i] += dz * w[row + i];
                }
                grads[offset + in_dim * out_dim + o] += dz;
            }
            d_out = d_in;
        }
    }
}

/// Adam with bias correction over one flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Adam {
    pub fn new(param_count: usize, learning_rate: f64) -> Self {
        Self {
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn apply(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.first_moment.len());
        assert_eq!(params.len(), grads.len());
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.first_moment[i] = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            self.second_moment[i] =
                self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.first_moment[i] / c1;
            let v_hat = self.second_moment[i] / c2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}
