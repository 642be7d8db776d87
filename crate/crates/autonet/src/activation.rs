use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::Tensor;

pub const LEAKY_SLOPE: f64 = 0.2;

/// Elementwise nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu(f64),
    Relu,
    Tanh,
    Sigmoid,
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::LeakyRelu(a) => {
                if v > 0.0 {
                    v
                } else {
                    a * v
                }
            }
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
            Activation::Sigmoid => sigmoid(v),
        }
    }

    pub fn forward(self, x: &Tensor) -> Tensor {
        x.map(|v| self.apply(v))
    }

    /// Gradient with respect to the input, given the forward input `x` and output `y`.
    pub fn backward(self, x: &Tensor, y: &Tensor, dy: &Tensor) -> Result<Tensor> {
        dy.same_shape(x, "activation backward")?;
        let d: Vec<f64> = x
            .data()
            .iter()
            .zip(y.data())
            .zip(dy.data())
            .map(|((&xv, &yv), &g)| {
                g * match self {
                    Activation::LeakyRelu(a) => {
                        if xv > 0.0 {
                            1.0
                        } else {
                            a
                        }
                    }
                    Activation::Relu => {
                        if xv > 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    Activation::Tanh => 1.0 - yv * yv,
                    Activation::Sigmoid => yv * (1.0 - yv),
                }
            })
            .collect();
        Tensor::from_vec(x.shape(), d)
    }
}
