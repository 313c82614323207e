use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Normalization;
use crate::control::ErrorState;
use crate::dynamics::Command;
use crate::error::{Error, Result};

pub const INPUTS: usize = 4;
pub const OUTPUTS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::ModelFormat(format!("unknown activation {other:?}"))),
        }
    }
}

/// Tag for the output squashing: steering through tanh, throttle through
/// the logistic function.
pub const OUTPUT_ACTIVATION: &str = "tanh,sigmoid";

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Weights of the `4 -> H1 -> H2 -> 2` regressor. Weight matrices are
/// `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub weights: [DMatrix<f64>; 3],
    pub biases: [DVector<f64>; 3],
    pub hidden: Activation,
}

/// Gradient of the loss with the same layout as [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: [DMatrix<f64>; 3],
    pub biases: [DVector<f64>; 3],
}

impl NetworkParams {
    pub fn zeros(hidden_sizes: [usize; 2], hidden: Activation) -> Self {
        let sizes = [INPUTS, hidden_sizes[0], hidden_sizes[1], OUTPUTS];
        Self {
            weights: std::array::from_fn(|k| DMatrix::zeros(sizes[k + 1], sizes[k])),
            biases: std::array::from_fn(|k| DVector::zeros(sizes[k + 1])),
            hidden,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn xavier<R: Rng>(hidden_sizes: [usize; 2], hidden: Activation, rng: &mut R) -> Self {
        let mut p = Self::zeros(hidden_sizes, hidden);
        for w in &mut p.weights {
            let limit = (6.0 / (w.nrows() + w.ncols()) as f64).sqrt();
            for v in w.iter_mut() {
                *v = rng.random_range(-limit..limit);
            }
        }
        p
    }

    /// `[4, H1, H2, 2]`.
    pub fn layer_sizes(&self) -> [usize; 4] {
        [
            self.weights[0].ncols(),
            self.weights[0].nrows(),
            self.weights[1].nrows(),
            self.weights[2].nrows(),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.layer_sizes();
        if s[0] != INPUTS || s[3] != OUTPUTS || s[1] == 0 || s[2] == 0 {
            return Err(Error::ModelFormat(format!("unsupported layer sizes {s:?}")));
        }
        for k in 0..3 {
            let (w, b) = (&self.weights[k], &self.biases[k]);
            if w.ncols() != s[k] || w.nrows() != s[k + 1] || b.len() != s[k + 1] {
                return Err(Error::ModelFormat(format!("layer {k} has inconsistent shape")));
            }
        }
        if !self.all_finite() {
            return Err(Error::ModelFormat("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Outputs for already-normalized inputs, one column per sample.
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.forward_cached(x).outputs
    }

    fn forward_cached(&self, x: &DMatrix<f64>) -> Activations {
        let h1 = self.affine(0, x).map(|z| self.hidden.apply(z));
        let h2 = self.affine(1, &h1).map(|z| self.hidden.apply(z));
        let mut out = self.affine(2, &h2);
        for mut col in out.column_iter_mut() {
            col[0] = col[0].tanh();
            col[1] = sigmoid(col[1]);
        }
        Activations { h1, h2, outputs: out }
    }

    fn affine(&self, k: usize, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &self.weights[k] * x;
        for mut col in z.column_iter_mut() {
            col += &self.biases[k];
        }
        z
    }

    /// Mean squared error over all outputs and its gradient.
    ///
    /// `x` holds normalized inputs and `targets` the commands, one column per
    /// sample.
    pub fn loss_and_gradient(&self, x: &DMatrix<f64>, targets: &DMatrix<f64>) -> (f64, Gradients) {
        let n = x.ncols() as f64;
        let act = self.forward_cached(x);
        let diff = &act.outputs - targets;
        let loss = diff.norm_squared() / (n * OUTPUTS as f64);

        let mut d3 = diff * (2.0 / (n * OUTPUTS as f64));
        for (mut col, y) in d3.column_iter_mut().zip(act.outputs.column_iter()) {
            col[0] *= 1.0 - y[0] * y[0];
            col[1] *= y[1] * (1.0 - y[1]);
        }
        let mut d2 = self.weights[2].transpose() * &d3;
        d2.zip_apply(&act.h2, |d, a| *d *= self.hidden.derivative(a));
        let mut d1 = self.weights[1].transpose() * &d2;
        d1.zip_apply(&act.h1, |d, a| *d *= self.hidden.derivative(a));

        let grads = Gradients {
            weights: [&d1 * x.transpose(), &d2 * act.h1.transpose(), &d3 * act.h2.transpose()],
            biases: [d1.column_sum(), d2.column_sum(), d3.column_sum()],
        };
        (loss, grads)
    }

    pub fn loss(&self, x: &DMatrix<f64>, targets: &DMatrix<f64>) -> f64 {
        let diff = self.forward_batch(x) - targets;
        diff.norm_squared() / (x.ncols() * OUTPUTS) as f64
    }
}

struct Activations {
    h1: DMatrix<f64>,
    h2: DMatrix<f64>,
    outputs: DMatrix<f64>,
}

/// Normalizes `e` and maps it to a command. Bounded by construction.
pub fn forward(params: &NetworkParams, e: &ErrorState, norm: &Normalization) -> Command {
    let x = DMatrix::from_column_slice(INPUTS, 1, &norm.apply(e));
    let y = params.forward_batch(&x);
    Command::new(y[0], y[1])
}
