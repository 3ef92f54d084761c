use super::params::{ParamId, ParameterStore};
use super::tape::{Tape, Var};
use super::NetError;

/// Fully connected layer `y = x W + b` with `W` stored `in x out`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParameterStore,
        name: &str,
        inputs: usize,
        outputs: usize,
    ) -> Result<Self, NetError> {
        let weight = store.add_uniform(&format!("{name}.weight"), inputs, outputs, inputs)?;
        let bias = store.add_zeros(&format!("{name}.bias"), 1, outputs)?;
        Ok(Self {
            weight,
            bias,
            inputs,
            outputs,
        })
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        x: Var,
    ) -> Result<Var, NetError> {
        let got = tape.value(x).cols();
        if got != self.inputs {
            return Err(NetError::WidthMismatch {
                what: "linear input",
                expected: self.inputs,
                got,
            });
        }
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let y = tape.matmul(x, w);
        Ok(tape.add_bias(y, b))
    }
}

/// Pointwise MLP with ReLU activations and the input re-injected before the
/// third layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    layers: Vec<Linear>,
    inputs: usize,
}

impl Decoder {
    const SKIP_LAYER: usize = 2;

    /// `hidden.len()` hidden layers followed by an output layer of width
    /// `outputs`. The skip needs at least three hidden layers.
    pub fn new(
        store: &mut ParameterStore,
        name: &str,
        inputs: usize,
        hidden: &[usize],
        outputs: usize,
    ) -> Result<Self, NetError> {
        if hidden.len() < Self::SKIP_LAYER + 1 {
            return Err(NetError::Config(format!(
                "decoder needs at least {} hidden layers",
                Self::SKIP_LAYER + 1
            )));
        }
        let mut widths = vec![inputs];
        widths.extend_from_slice(hidden);
        widths.push(outputs);
        if widths.contains(&0) {
            return Err(NetError::Config(format!(
                "decoder '{name}' has a zero-width layer"
            )));
        }
        let mut layers = Vec::new();
        for l in 0..widths.len() - 1 {
            let fan_in = widths[l] + if l == Self::SKIP_LAYER { inputs } else { 0 };
            layers.push(Linear::new(
                store,
                &format!("{name}.{l}"),
                fan_in,
                widths[l + 1],
            )?);
        }
        Ok(Self { layers, inputs })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().expect("non-empty").outputs
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    /// Decodes every row of `x` (width `inputs`).
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        x: Var,
    ) -> Result<Var, NetError> {
        let got = tape.value(x).cols();
        if got != self.inputs {
            return Err(NetError::WidthMismatch {
                what: "decoder input",
                expected: self.inputs,
                got,
            });
        }
        let mut h = x;
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            if l == Self::SKIP_LAYER {
                h = tape.concat_cols(&[h, x]);
            }
            h = layer.forward(tape, store, h)?;
            if l < last {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
}
