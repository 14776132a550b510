use super::{AngleHeadOutput, BinSpec, LossError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::ops::Range;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(format!("unknown activation {other:?}")),
        }
    }
}

/// One hidden layer shared by three linear heads (yaw, pitch, roll).
///
/// All parameters live in one flat vector, row-major:
/// `W1 (hidden × input)`, `b1 (hidden)`, then for each head
/// `W (bins × hidden)`, `b (bins)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyNet {
    input_dim: usize,
    hidden: usize,
    activation: Activation,
    spec: BinSpec,
    params: Vec<f64>,
}

/// Hidden-layer values kept from the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pre_activation: Vec<f64>,
    hidden: Vec<f64>,
}

fn param_count(input_dim: usize, hidden: usize, bins: usize) -> usize {
    hidden * input_dim + hidden + 3 * (bins * hidden + bins)
}

impl ToyNet {
    /// Glorot-uniform weights, zero biases.
    pub fn new(input_dim: usize, hidden: usize, spec: BinSpec, activation: Activation, seed: u64) -> Self {
        let mut net = Self::zeros(input_dim, hidden, spec, activation);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bins = net.spec.num_bins();
        let w1 = net.w1_range();
        let limit = (6.0 / (input_dim + hidden) as f64).sqrt();
        net.params[w1].iter_mut().for_each(|w| *w = rng.random_range(-limit..limit));
        let limit = (6.0 / (hidden + bins) as f64).sqrt();
        for head in 0..3 {
            let r = net.head_w_range(head);
            net.params[r].iter_mut().for_each(|w| *w = rng.random_range(-limit..limit));
        }
        net
    }

    pub fn zeros(input_dim: usize, hidden: usize, spec: BinSpec, activation: Activation) -> Self {
        let n = param_count(input_dim, hidden, spec.num_bins());
        Self {
            input_dim,
            hidden,
            activation,
            spec,
            params: vec![0.0; n],
        }
    }

    pub fn from_parts(
        input_dim: usize,
        hidden: usize,
        spec: BinSpec,
        activation: Activation,
        params: Vec<f64>,
    ) -> Result<Self, LossError> {
        let expected = param_count(input_dim, hidden, spec.num_bins());
        if params.len() != expected {
            return Err(LossError::ShapeMismatch {
                expected,
                found: params.len(),
            });
        }
        Ok(Self {
            input_dim,
            hidden,
            activation,
            spec,
            params,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }
    pub fn hidden(&self) -> usize {
        self.hidden
    }
    pub fn activation(&self) -> Activation {
        self.activation
    }
    pub fn spec(&self) -> &BinSpec {
        &self.spec
    }
    pub fn params(&self) -> &[f64] {
        &self.params
    }
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }
    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Sets every head weight and bias to zero.
    pub fn zero_heads(&mut self) {
        let start = self.b1_range().end;
        self.params[start..].iter_mut().for_each(|w| *w = 0.0);
    }

    fn w1_range(&self) -> Range<usize> {
        0..self.hidden * self.input_dim
    }

    fn b1_range(&self) -> Range<usize> {
        let s = self.hidden * self.input_dim;
        s..s + self.hidden
    }

    fn head_base(&self, head: usize) -> usize {
        let bins = self.spec.num_bins();
        self.b1_range().end + head * (bins * self.hidden + bins)
    }

    fn head_w_range(&self, head: usize) -> Range<usize> {
        let s = self.head_base(head);
        s..s + self.spec.num_bins() * self.hidden
    }

    fn head_b_range(&self, head: usize) -> Range<usize> {
        let s = self.head_w_range(head).end;
        s..s + self.spec.num_bins()
    }

    fn check_input(&self, input: &[f64]) -> Result<(), LossError> {
        if input.len() != self.input_dim {
            return Err(LossError::ShapeMismatch {
                expected: self.input_dim,
                found: input.len(),
            });
        }
        Ok(())
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<(ForwardCache, AngleHeadOutput), LossError> {
        self.check_input(input)?;
        let w1 = &self.params[self.w1_range()];
        let b1 = &self.params[self.b1_range()];
        let pre_activation: Vec<f64> = w1
            .chunks_exact(self.input_dim)
            .zip(b1)
            .map(|(row, b)| b + dot(row, input))
            .collect();
        let hidden: Vec<f64> = pre_activation
            .iter()
            .map(|&z| match self.activation {
                Activation::Tanh => z.tanh(),
                Activation::Relu => z.max(0.0),
            })
            .collect();
        let logits = std::array::from_fn(|head| {
            let w = &self.params[self.head_w_range(head)];
            let b = &self.params[self.head_b_range(head)];
            w.chunks_exact(self.hidden)
                .zip(b)
                .map(|(row, b)| b + dot(row, &hidden))
                .collect()
        });
        Ok((
            ForwardCache {
                pre_activation,
                hidden,
            },
            AngleHeadOutput { logits },
        ))
    }

    /// Adds the parameter gradient for one sample into `grad`.
    pub fn backward_into(
        &self,
        input: &[f64],
        cache: &ForwardCache,
        grad_logits: &AngleHeadOutput,
        grad: &mut [f64],
    ) -> Result<(), LossError> {
        self.check_input(input)?;
        grad_logits.check(&self.spec)?;
        if grad.len() != self.params.len() {
            return Err(LossError::ShapeMismatch {
                expected: self.params.len(),
                found: grad.len(),
            });
        }

        let mut grad_hidden = vec![0.0; self.hidden];
        for (head, g_out) in grad_logits.logits.iter().enumerate() {
            let w = &self.params[self.head_w_range(head)];
            let wr = self.head_w_range(head);
            let br = self.head_b_range(head);
            let (gw, gb) = {
                let (before, after) = grad.split_at_mut(br.start);
                (&mut before[wr], &mut after[..br.len()])
            };
            for (k, &g) in g_out.iter().enumerate() {
                gb[k] += g;
                let row = k * self.hidden;
                for j in 0..self.hidden {
                    gw[row + j] += g * cache.hidden[j];
                    grad_hidden[j] += g * w[row + j];
                }
            }
        }

        let w1r = self.w1_range();
        let b1r = self.b1_range();
        let (gw1, gb1) = {
            let (before, after) = grad.split_at_mut(b1r.start);
            (&mut before[w1r], &mut after[..b1r.len()])
        };
        for j in 0..self.hidden {
            let d = match self.activation {
                Activation::Tanh => 1.0 - cache.hidden[j] * cache.hidden[j],
                Activation::Relu => {
                    if cache.pre_activation[j] > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
            };
            let g = grad_hidden[j] * d;
            if g == 0.0 {
                continue;
            }
            gb1[j] += g;
            let row = &mut gw1[j * self.input_dim..(j + 1) * self.input_dim];
            for (w, x) in row.iter_mut().zip(input) {
                *w += g * x;
            }
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn toynet_forward(net: &ToyNet, input: &[f64]) -> Result<AngleHeadOutput, LossError> {
    net.forward_cached(input).map(|(_, out)| out)
}

/// Gradient of a scalar loss with respect to every parameter, given the
/// loss gradient with respect to the logits.
pub fn toynet_backward(
    net: &ToyNet,
    input: &[f64],
    grad_logits: &AngleHeadOutput,
) -> Result<Vec<f64>, LossError> {
    let (cache, _) = net.forward_cached(input)?;
    let mut grad = vec![0.0; net.num_params()];
    net.backward_into(input, &cache, grad_logits, &mut grad)?;
    Ok(grad)
}
