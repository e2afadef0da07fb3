//! Reverse-mode autodiff tape and the fully connected network used by
//! the PINN problems.

mod tape;

pub use tape::{AutodiffError, NodeId, Tape};

use crate::vecmath::Vector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Derivative of `output` with respect to one input leaf, built as new
/// tape nodes so later parameter gradients flow through it.
/// `order` 1 gives du/dx, 2 gives d2u/dx2.
pub fn grad_wrt_inputs(
    tape: &mut Tape,
    output: NodeId,
    input: NodeId,
    order: u8,
) -> Result<NodeId, AutodiffError> {
    match order {
        1 => Ok(tape.grad(output, &[input])[0]),
        2 => {
            let first = tape.grad(output, &[input])[0];
            Ok(tape.grad(first, &[input])[0])
        }
        other => Err(AutodiffError::UnsupportedOrder(other)),
    }
}

/// Exact reverse-mode gradient of a scalar loss node with respect to
/// the given parameter leaves. One call is one backprop tick.
pub fn grad_wrt_params(tape: &mut Tape, loss: NodeId, params: &[NodeId]) -> Vector {
    Vector::from_vec(tape.backward(loss, params))
}

/// Fully connected network shape: `hidden_layers` tanh layers of
/// `hidden_width` units between a linear input and output map.
/// `hidden_layers = 0` degenerates to a single linear layer.
#[derive(Debug, Clone, Copy)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub output_dim: usize,
}

impl MlpConfig {
    /// (fan_in, fan_out) per affine layer, in forward order.
    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::new();
        let mut prev = self.input_dim;
        for _ in 0..self.hidden_layers {
            dims.push((prev, self.hidden_width));
            prev = self.hidden_width;
        }
        dims.push((prev, self.output_dim));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|(fi, fo)| fi * fo + fo)
            .sum()
    }
}

/// A tanh MLP whose weights live on a [`Tape`] as parameter leaves.
///
/// The flattened parameter order is fixed: layers in forward order,
/// each contributing its weight matrix row-major (`[out][in]`) and
/// then its bias vector. Gradient vectors from
/// [`grad_wrt_params`] align with this order.
pub struct Mlp {
    cfg: MlpConfig,
    params: Vec<NodeId>,
}

impl Mlp {
    /// Xavier-uniform initialization (gain 1): weights are uniform on
    /// `[-sqrt(6/(fan_in+fan_out)), +..]`, biases zero.
    pub fn new(tape: &mut Tape, cfg: MlpConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(cfg.param_count());
        for (fan_in, fan_out) in cfg.layer_dims() {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(tape.param(rng.gen_range(-limit..limit)));
            }
            for _ in 0..fan_out {
                params.push(tape.param(0.0));
            }
        }
        Self { cfg, params }
    }

    pub fn config(&self) -> MlpConfig {
        self.cfg
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn param_nodes(&self) -> &[NodeId] {
        &self.params
    }

    /// Build the forward graph over one group of input nodes (all of
    /// the same lane count). May be called several times per tape to
    /// share weights across sample groups.
    pub fn forward(&self, tape: &mut Tape, inputs: &[NodeId]) -> Vec<NodeId> {
        assert_eq!(inputs.len(), self.cfg.input_dim, "input arity mismatch");
        let mut offset = 0;
        let mut current: Vec<NodeId> = inputs.to_vec();
        let dims = self.cfg.layer_dims();
        let n_layers = dims.len();
        for (layer, (fan_in, fan_out)) in dims.into_iter().enumerate() {
            let mut next = Vec::with_capacity(fan_out);
            let bias_base = offset + fan_in * fan_out;
            for j in 0..fan_out {
                let terms: Vec<(NodeId, NodeId)> = (0..fan_in)
                    .map(|i| (self.params[offset + j * fan_in + i], current[i]))
                    .collect();
                let pre = tape.dot(&terms, Some(self.params[bias_base + j]));
                if layer + 1 < n_layers {
                    next.push(tape.tanh(pre));
                } else {
                    next.push(pre);
                }
            }
            offset = bias_base + fan_out;
            current = next;
        }
        current
    }

    pub fn get_params(&self, tape: &Tape) -> Vector {
        Vector::from_vec(self.params.iter().map(|&p| tape.param_value(p)).collect())
    }

    pub fn set_params(&self, tape: &mut Tape, values: &Vector) {
        assert_eq!(values.dim(), self.params.len());
        for (&node, &v) in self.params.iter().zip(values.as_slice()) {
            tape.set_param(node, v);
        }
    }

    /// Plain numeric forward pass from a flat parameter snapshot,
    /// for evaluation points that never need gradients.
    pub fn eval(&self, params: &[f64], input: &[f64]) -> Vec<f64> {
        assert_eq!(params.len(), self.params.len());
        assert_eq!(input.len(), self.cfg.input_dim);
        let mut offset = 0;
        let mut current = input.to_vec();
        let dims = self.cfg.layer_dims();
        let n_layers = dims.len();
        for (layer, (fan_in, fan_out)) in dims.into_iter().enumerate() {
            let bias_base = offset + fan_in * fan_out;
            let mut next = Vec::with_capacity(fan_out);
            for j in 0..fan_out {
                let mut acc = params[bias_base + j];
                let row = &params[offset + j * fan_in..offset + (j + 1) * fan_in];
                for (w, x) in row.iter().zip(&current) {
                    acc += w * x;
                }
                next.push(if layer + 1 < n_layers { acc.tanh() } else { acc });
            }
            offset = bias_base + fan_out;
            current = next;
        }
        current
    }
}
