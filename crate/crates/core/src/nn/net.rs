use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{ClampError, Result};
use crate::linalg::Matrix;
use crate::rng::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }
}

/// A stack of affine layers split into a backbone (layers before
/// `split_index`) and a projection head (the rest).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<Layer>,
    split_index: usize,
    /// Bumped on every parameter mutation so stale tapes can be detected.
    generation: u64,
}

/// Everything `backward` needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    generation: u64,
    shapes: Vec<(usize, usize)>,
    /// Input to each layer.
    inputs: Vec<Matrix>,
    /// Post-activation output of each layer, used for ReLU masks.
    outputs: Vec<Matrix>,
}

#[derive(Debug, Clone)]
pub struct Forward {
    pub representations: Matrix,
    pub embeddings: Matrix,
    pub tape: Tape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
    /// Gradient with respect to the network inputs.
    pub inputs: Matrix,
}

impl DenseNet {
    pub fn from_layers(layers: Vec<Layer>, split_index: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(ClampError::validation("network has no layers"));
        }
        if split_index > layers.len() {
            return Err(ClampError::validation(format!(
                "split index {split_index} beyond {} layers",
                layers.len()
            )));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(ClampError::validation(format!(
                    "layer {k}: bias length {} does not match {} outputs",
                    l.bias.len(),
                    l.out_dim()
                )));
            }
            if k > 0 && layers[k - 1].out_dim() != l.in_dim() {
                return Err(ClampError::validation(format!(
                    "layer {k} expects width {} but previous layer produces {}",
                    l.in_dim(),
                    layers[k - 1].out_dim()
                )));
            }
        }
        Ok(Self { layers, split_index, generation: 0 })
    }

    /// An MLP with ReLU on every layer except the final head output.
    ///
    /// `backbone` lists widths from the input through the representation,
    /// `head` the widths after it. Weights are uniform in `±1/√fan_in`,
    /// biases zero.
    pub fn mlp(backbone: &[usize], head: &[usize], seed: u64) -> Result<Self> {
        if backbone.len() < 2 {
            return Err(ClampError::validation("backbone needs an input and an output width"));
        }
        let widths: Vec<usize> = backbone.iter().chain(head).copied().collect();
        if widths.iter().any(|&w| w == 0) {
            return Err(ClampError::validation("layer widths must be positive"));
        }
        let mut rng = rng_for(seed, &[0x1417]);
        let n_layers = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
                Layer {
                    weights: Matrix::from_vec(fan_out, fan_in, data),
                    bias: vec![0.0; fan_out],
                    activation: if k + 1 == n_layers && !head.is_empty() {
                        Activation::Identity
                    } else {
                        Activation::Relu
                    },
                }
            })
            .collect();
        Self::from_layers(layers, backbone.len() - 1)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn split_index(&self) -> usize {
        self.split_index
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn representation_dim(&self) -> usize {
        if self.split_index == 0 {
            self.input_dim()
        } else {
            self.layers[self.split_index - 1].out_dim()
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::out_dim)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.as_slice().len() + l.bias.len()).sum()
    }

    /// Mutable access to the layers; invalidates outstanding tapes.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.generation += 1;
        &mut self.layers
    }

    /// The backbone alone, as a network whose output is the representation.
    pub fn backbone(&self) -> DenseNet {
        DenseNet {
            layers: self.layers[..self.split_index].to_vec(),
            split_index: self.split_index,
            generation: 0,
        }
    }

    /// Backbone output only; the projection head is not evaluated.
    pub fn represent(&self, inputs: &Matrix) -> Result<Matrix> {
        self.check_input(inputs)?;
        let mut x = inputs.clone();
        for layer in &self.layers[..self.split_index] {
            x = apply(layer, &x);
        }
        Ok(x)
    }

    fn check_input(&self, inputs: &Matrix) -> Result<()> {
        if inputs.cols() != self.input_dim() {
            return Err(ClampError::validation(format!(
                "input width {} does not match network input width {}",
                inputs.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, inputs: &Matrix) -> Result<Forward> {
        self.check_input(inputs)?;
        let mut tape_inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut x = inputs.clone();
        let mut representations = if self.split_index == 0 { Some(x.clone()) } else { None };
        for (k, layer) in self.layers.iter().enumerate() {
            let y = apply(layer, &x);
            tape_inputs.push(std::mem::replace(&mut x, y.clone()));
            outputs.push(y);
            if k + 1 == self.split_index {
                representations = Some(x.clone());
            }
        }
        Ok(Forward {
            representations: representations.unwrap_or_else(|| x.clone()),
            embeddings: x,
            tape: Tape {
                generation: self.generation,
                shapes: self.layers.iter().map(|l| l.weights.shape()).collect(),
                inputs: tape_inputs,
                outputs,
            },
        })
    }

    /// Reverse-mode gradients of a scalar whose gradient with respect to the
    /// embeddings is `upstream`.
    pub fn backward(&self, tape: &Tape, upstream: &Matrix) -> Result<Gradients> {
        if tape.generation != self.generation
            || tape.shapes.len() != self.layers.len()
            || tape.shapes.iter().zip(&self.layers).any(|(s, l)| *s != l.weights.shape())
        {
            return Err(ClampError::StaleTape(format!(
                "tape recorded at generation {}, network is at {}",
                tape.generation, self.generation
            )));
        }
        let last = tape.outputs.last().expect("non-empty network");
        if upstream.shape() != last.shape() {
            return Err(ClampError::StaleTape(format!(
                "upstream gradient is {}x{}, embeddings are {}x{}",
                upstream.rows(),
                upstream.cols(),
                last.rows(),
                last.cols()
            )));
        }

        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = upstream.clone();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            if layer.activation == Activation::Relu {
                for (gv, &out) in g.as_mut_slice().iter_mut().zip(tape.outputs[k].as_slice()) {
                    if out <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            let weights = g.t_matmul(&tape.inputs[k]);
            let bias = column_sums(&g);
            g = g.matmul(&layer.weights);
            grads.push(LayerGrad { weights, bias });
        }
        grads.reverse();
        Ok(Gradients { layers: grads, inputs: g })
    }
}

fn apply(layer: &Layer, x: &Matrix) -> Matrix {
    let mut y = x.matmul_t(&layer.weights);
    for r in 0..y.rows() {
        for (v, b) in y.row_mut(r).iter_mut().zip(&layer.bias) {
            *v += b;
            if layer.activation == Activation::Relu && *v < 0.0 {
                *v = 0.0;
            }
        }
    }
    y
}

fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for r in 0..m.rows() {
        for (o, v) in out.iter_mut().zip(m.row(r)) {
            *o += v;
        }
    }
    out
}
