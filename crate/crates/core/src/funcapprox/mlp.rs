use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub bias: bool,
}

impl LayerShape {
    fn param_count(&self) -> usize {
        self.inputs * self.outputs + if self.bias { self.outputs } else { 0 }
    }
}

/// Fully-connected network with a flat parameter vector.
///
/// Each layer stores its weights input-major (`w[i * outputs + j]` connects
/// input `i` to output `j`) followed by its biases. Zero inputs are skipped
/// in both passes, which makes one-hot observations cheap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<LayerShape>,
    params: Vec<f64>,
}

impl Mlp {
    /// ReLU hidden layers and a linear output, initialized uniformly in
    /// `±1/sqrt(fan_in)` with zero biases.
    pub fn new(inputs: usize, hidden: &[usize], outputs: usize, rng: &mut Rng) -> Self {
        let mut shapes = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = inputs;
        for &h in hidden {
            shapes.push(LayerShape {
                inputs: fan_in,
                outputs: h,
                activation: Activation::Relu,
                bias: true,
            });
            fan_in = h;
        }
        shapes.push(LayerShape {
            inputs: fan_in,
            outputs,
            activation: Activation::Identity,
            bias: true,
        });
        Self::from_shapes(shapes, rng)
    }

    pub fn from_shapes(layers: Vec<LayerShape>, rng: &mut Rng) -> Self {
        let mut params = Vec::with_capacity(layers.iter().map(LayerShape::param_count).sum());
        for l in &layers {
            let bound = 1.0 / (l.inputs as f64).sqrt();
            for _ in 0..l.inputs * l.outputs {
                params.push(rng.gen_range(-bound..=bound));
            }
            if l.bias {
                params.extend(std::iter::repeat_n(0.0, l.outputs));
            }
        }
        Mlp { layers, params }
    }

    /// Builds a network from explicit parameters, checking the length.
    pub fn from_parts(layers: Vec<LayerShape>, params: Vec<f64>) -> Result<Self> {
        let expected: usize = layers.iter().map(LayerShape::param_count).sum();
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: params.len(),
            });
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].outputs,
                    actual: pair[1].inputs,
                });
            }
        }
        Ok(Mlp { layers, params })
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    /// Zeroes the last layer so every output starts at exactly 0.
    pub fn zero_output_layer(&mut self) {
        let start = self.params.len() - self.layers.last().unwrap().param_count();
        self.params[start..].fill(0.0);
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut acts = self.trace(x);
        Ok(acts.pop().unwrap())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_len() {
            return Err(Error::DimensionMismatch {
                expected: self.input_len(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Post-activation outputs of every layer.
    fn trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut offset = 0;
        for (l, shape) in self.layers.iter().enumerate() {
            let input: &[f64] = if l == 0 { x } else { &acts[l - 1] };
            let w = &self.params[offset..offset + shape.inputs * shape.outputs];
            let mut out = if shape.bias {
                let b = offset + shape.inputs * shape.outputs;
                self.params[b..b + shape.outputs].to_vec()
            } else {
                vec![0.0; shape.outputs]
            };
            for (i, &xi) in input.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let row = &w[i * shape.outputs..(i + 1) * shape.outputs];
                for (o, &wij) in out.iter_mut().zip(row) {
                    *o += xi * wij;
                }
            }
            if shape.activation == Activation::Relu {
                for o in &mut out {
                    *o = o.max(0.0);
                }
            }
            offset += shape.param_count();
            acts.push(out);
        }
        acts
    }

    /// Adds `d(output · out_grad)/d(params)` at `x` into `grads`.
    pub fn accumulate_grad(&self, x: &[f64], out_grad: &[f64], grads: &mut [f64]) -> Result<()> {
        self.check_input(x)?;
        if out_grad.len() != self.output_len() {
            return Err(Error::DimensionMismatch {
                expected: self.output_len(),
                actual: out_grad.len(),
            });
        }
        let acts = self.trace(x);
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for s in &self.layers {
            offsets.push(off);
            off += s.param_count();
        }
        let mut delta = out_grad.to_vec();
        for l in (0..self.layers.len()).rev() {
            let shape = self.layers[l];
            if shape.activation == Activation::Relu {
                for (d, &a) in delta.iter_mut().zip(&acts[l]) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input: &[f64] = if l == 0 { x } else { &acts[l - 1] };
            let w_off = offsets[l];
            let n_w = shape.inputs * shape.outputs;
            for (i, &xi) in input.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let g = &mut grads[w_off + i * shape.outputs..w_off + (i + 1) * shape.outputs];
                for (gij, &dj) in g.iter_mut().zip(&delta) {
                    *gij += xi * dj;
                }
            }
            if shape.bias {
                for (g, &dj) in grads[w_off + n_w..w_off + n_w + shape.outputs]
                    .iter_mut()
                    .zip(&delta)
                {
                    *g += dj;
                }
            }
            if l > 0 {
                let w = &self.params[w_off..w_off + n_w];
                delta = (0..shape.inputs)
                    .map(|i| {
                        w[i * shape.outputs..(i + 1) * shape.outputs]
                            .iter()
                            .zip(&delta)
                            .map(|(a, b)| a * b)
                            .sum()
                    })
                    .collect();
            }
        }
        Ok(())
    }
}
