//! Multilayer perceptron parameters and tape-recorded forward passes.

use rand::Rng;

use crate::error::{GlomError, Result};
use crate::tape::{Tape, ValueId};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sine,
    Identity,
    /// Logistic squash onto (0, 1); used by the pixel decoder output.
    Sigmoid,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sine => x.sin(),
            Activation::Identity => x,
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Row-major [out_dim, in_dim].
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl Layer {
    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }
}

/// Parameters of one fully connected net. Consecutive layer dims must chain.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(GlomError::config("mlp has no layers"));
        }
        for w in self.layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(GlomError::config(format!(
                    "layer dims do not chain: {} -> {}",
                    w[0].out_dim(),
                    w[1].in_dim()
                )));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Parameter tensors in a stable order: weight then bias, layer by layer.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &self.layers {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }

    /// Plain forward pass with no recording. Only for read-only consumers
    /// such as the linear probe; anything that trains goes through the tape.
    pub fn eval(&self, input: &[f64]) -> Vec<f64> {
        let mut x = input.to_vec();
        for layer in &self.layers {
            let (rows, cols) = (layer.out_dim(), layer.in_dim());
            let mut y = layer.bias.data().to_vec();
            crate::tensor::matvec_into(&mut y, layer.weight.data(), &x, rows, cols);
            for v in &mut y {
                *v = layer.activation.apply(*v);
            }
            x = y;
        }
        x
    }

    /// Hidden layers of `width` repeated `depth` times with `hidden_act`,
    /// then a final layer with `out_act`.
    pub fn shape_of(
        in_dim: usize,
        width: usize,
        depth: usize,
        out_dim: usize,
        hidden_act: Activation,
        out_act: Activation,
    ) -> Vec<(usize, usize, Activation)> {
        let mut dims = Vec::new();
        let mut prev = in_dim;
        for _ in 0..depth {
            dims.push((width, prev, hidden_act));
            prev = width;
        }
        dims.push((out_dim, prev, out_act));
        dims
    }

    /// Random init. Relu layers use uniform He-style fan-in scaling, sine
    /// layers the sinusoidal-net rule (first sine layer scaled by `sine_w0`,
    /// folding the frequency factor into the weights), identity/sigmoid
    /// layers Xavier-style scaling.
    pub fn init<R: Rng>(spec: &[(usize, usize, Activation)], sine_w0: f64, rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(spec.len());
        let mut first_sine_seen = false;
        for &(out_dim, in_dim, act) in spec {
            let limit = match act {
                Activation::Relu => (6.0 / in_dim as f64).sqrt(),
                Activation::Sine => {
                    if !first_sine_seen {
                        first_sine_seen = true;
                        sine_w0 / in_dim as f64
                    } else {
                        (6.0 / in_dim as f64).sqrt()
                    }
                }
                Activation::Identity | Activation::Sigmoid => {
                    (6.0 / (in_dim + out_dim) as f64).sqrt()
                }
            };
            let weight: Vec<f64> =
                (0..out_dim * in_dim).map(|_| rng.gen_range(-limit..limit)).collect();
            layers.push(Layer {
                weight: Tensor::matrix(out_dim, in_dim, weight).unwrap(),
                bias: Tensor::zeros(vec![out_dim]),
                activation: act,
            });
        }
        MlpParams { layers }
    }

    pub fn zeros(spec: &[(usize, usize, Activation)]) -> Self {
        let layers = spec
            .iter()
            .map(|&(out_dim, in_dim, act)| Layer {
                weight: Tensor::zeros(vec![out_dim, in_dim]),
                bias: Tensor::zeros(vec![out_dim]),
                activation: act,
            })
            .collect();
        MlpParams { layers }
    }
}

/// Tape handles to one net's parameters, in the order of [`MlpParams::params`].
#[derive(Debug, Clone)]
pub struct StagedMlp {
    pub layers: Vec<(ValueId, ValueId, Activation)>,
    pub in_dim: usize,
}

/// Put every parameter tensor of a net on the tape as gradient leaves.
pub fn stage_mlp(tape: &mut Tape, params: &MlpParams) -> StagedMlp {
    let layers = params
        .layers
        .iter()
        .map(|l| (tape.leaf(l.weight.clone()), tape.leaf(l.bias.clone()), l.activation))
        .collect();
    StagedMlp { layers, in_dim: params.in_dim() }
}

/// Stage with gradients disabled, for settling without training.
pub fn stage_mlp_frozen(tape: &mut Tape, params: &MlpParams) -> StagedMlp {
    let layers = params
        .layers
        .iter()
        .map(|l| (tape.constant(l.weight.clone()), tape.constant(l.bias.clone()), l.activation))
        .collect();
    StagedMlp { layers, in_dim: params.in_dim() }
}

/// Forward pass recorded on the tape. Deterministic given inputs.
pub fn mlp_forward(tape: &mut Tape, net: &StagedMlp, input: ValueId) -> Result<ValueId> {
    let got = tape.value(input).shape().to_vec();
    if got != [net.in_dim] {
        return Err(GlomError::config(format!(
            "mlp input shape {got:?} does not match in-dim {}",
            net.in_dim
        )));
    }
    let mut x = input;
    for &(w, b, act) in &net.layers {
        let lin = tape.matvec(w, x)?;
        let pre = tape.add(lin, b)?;
        x = match act {
            Activation::Relu => tape.relu(pre),
            Activation::Sine => tape.sin(pre),
            Activation::Identity => pre,
            Activation::Sigmoid => tape.sigmoid(pre),
        };
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn forward_on_tape(params: &MlpParams, input: Vec<f64>) -> Vec<f64> {
        let mut tape = Tape::new();
        let staged = stage_mlp(&mut tape, params);
        let x = tape.leaf(Tensor::vector(input));
        let y = mlp_forward(&mut tape, &staged, x).unwrap();
        tape.value(y).data().to_vec()
    }

    #[test]
    fn identity_single_layer_passes_through() {
        // W = I, b = 0, x = [1, 2] -> [1, 2]
        let params = MlpParams {
            layers: vec![Layer {
                weight: Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
                bias: Tensor::zeros(vec![2]),
                activation: Activation::Identity,
            }],
        };
        assert_eq!(forward_on_tape(&params, vec![1.0, 2.0]), vec![1.0, 2.0]);
    }

    #[test]
    fn zero_weights_yield_bias() {
        // W = 0, b = [3] -> [3] for any x
        let params = MlpParams {
            layers: vec![Layer {
                weight: Tensor::zeros(vec![1, 3]),
                bias: Tensor::vector(vec![3.0]),
                activation: Activation::Identity,
            }],
        };
        assert_eq!(forward_on_tape(&params, vec![-7.0, 0.5, 2.0]), vec![3.0]);
        assert_eq!(forward_on_tape(&params, vec![0.0, 0.0, 0.0]), vec![3.0]);
    }

    /// Independent straight-line re-evaluation of a fixed-seed 2-layer relu
    /// net: the arithmetic is written out without any Tape or MlpParams code.
    #[test]
    fn random_two_layer_relu_matches_straight_line_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let spec = MlpParams::shape_of(3, 4, 1, 2, Activation::Relu, Activation::Identity);
        let params = MlpParams::init(&spec, 3.0, &mut rng);
        let input = [0.3, -1.1, 0.7];

        let w0 = params.layers[0].weight.data();
        let b0 = params.layers[0].bias.data();
        let w1 = params.layers[1].weight.data();
        let b1 = params.layers[1].bias.data();
        let mut hidden = [0.0; 4];
        for r in 0..4 {
            let mut acc = b0[r];
            for c in 0..3 {
                acc += w0[r * 3 + c] * input[c];
            }
            hidden[r] = if acc > 0.0 { acc } else { 0.0 };
        }
        let mut expect = [0.0; 2];
        for r in 0..2 {
            let mut acc = b1[r];
            for c in 0..4 {
                acc += w1[r * 4 + c] * hidden[c];
            }
            expect[r] = acc;
        }

        let got = forward_on_tape(&params, input.to_vec());
        assert_eq!(got, expect.to_vec());
        // The untaped eval path must agree bit for bit.
        assert_eq!(params.eval(&input), expect.to_vec());
    }

    #[test]
    fn shape_mismatch_is_config_error() {
        let params = MlpParams {
            layers: vec![Layer {
                weight: Tensor::zeros(vec![2, 3]),
                bias: Tensor::zeros(vec![2]),
                activation: Activation::Identity,
            }],
        };
        let mut tape = Tape::new();
        let staged = stage_mlp(&mut tape, &params);
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(mlp_forward(&mut tape, &staged, x), Err(GlomError::Config(_))));
    }
}
