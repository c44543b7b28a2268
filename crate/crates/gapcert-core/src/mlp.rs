//! A small fully-connected ReLU network with a scalar logit output, shared by
//! the SGLD trainer and the shattering construction.
//!
//! Binary labels are scored with the logistic loss
//! `ln(1 + exp(-(2y-1)·logit))`; for the zero-one error a zero logit counts
//! as a mistake.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer sizes plus per-layer weight matrices (`dims[l] × dims[l+1]`) and
/// bias vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl MlpParams {
    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(
                "need at least input and output layers of positive width".into(),
            ));
        }
        let weights = layer_dims
            .windows(2)
            .map(|w| DMatrix::zeros(w[0], w[1]))
            .collect();
        let biases = layer_dims[1..]
            .iter()
            .map(|&d| DVector::zeros(d))
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(Error::InvalidArgument("too few layers".into()));
        }
        if self.weights.len() != self.layer_dims.len() - 1
            || self.biases.len() != self.weights.len()
        {
            return Err(Error::InvalidArgument(
                "layer count inconsistent with parameter count".into(),
            ));
        }
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if w.shape() != (self.layer_dims[l], self.layer_dims[l + 1])
                || b.len() != self.layer_dims[l + 1]
            {
                return Err(Error::InvalidArgument(format!(
                    "layer {l} shapes inconsistent with layer_dims"
                )));
            }
            if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NumericalFailure(format!(
                    "non-finite parameter in layer {l}"
                )));
            }
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.weights
            .iter()
            .map(|w| w.len())
            .chain(self.biases.iter().map(|b| b.len()))
            .sum()
    }

    /// Applies `f` to every (weight, companion) parameter pair in place;
    /// `other` must have identical shapes. Used for SGD-style updates.
    pub fn zip_apply(&mut self, other: &MlpParams, mut f: impl FnMut(&mut f64, f64)) {
        for (w, ow) in self.weights.iter_mut().zip(&other.weights) {
            for (v, o) in w.iter_mut().zip(ow.iter()) {
                f(v, *o);
            }
        }
        for (b, ob) in self.biases.iter_mut().zip(&other.biases) {
            for (v, o) in b.iter_mut().zip(ob.iter()) {
                f(v, *o);
            }
        }
    }

    /// Applies `f` to every parameter in place.
    pub fn apply(&mut self, mut f: impl FnMut(&mut f64)) {
        for w in self.weights.iter_mut() {
            for v in w.iter_mut() {
                f(v);
            }
        }
        for b in self.biases.iter_mut() {
            for v in b.iter_mut() {
                f(v);
            }
        }
    }
}

/// Standard initialization: weights i.i.d. `N(0, 1/fan_in)`, biases zero.
pub fn init_mlp(layer_dims: &[usize], seed: u64) -> Result<MlpParams> {
    let mut params = MlpParams::zeros(layer_dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (l, w) in params.weights.iter_mut().enumerate() {
        let std = (1.0 / layer_dims[l] as f64).sqrt();
        for v in w.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = std * z;
        }
    }
    Ok(params)
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Raw scalar logits for a batch (`inputs` is samples × d_in).
pub fn mlp_logits(params: &MlpParams, inputs: &DMatrix<f64>) -> Result<DVector<f64>> {
    let acts = forward_pass(params, inputs)?;
    Ok(acts.last().unwrap().column(0).into_owned())
}

// Pre-activations are not needed separately: ReLU masks can be read off the
// activations themselves.
fn forward_pass(params: &MlpParams, inputs: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
    params.validate()?;
    if inputs.ncols() != params.layer_dims[0] {
        return Err(Error::DimensionMismatch {
            expected: params.layer_dims[0],
            got: inputs.ncols(),
        });
    }
    if *params.layer_dims.last().unwrap() != 1 {
        return Err(Error::InvalidArgument("output layer must be scalar".into()));
    }
    let n_layers = params.weights.len();
    let mut acts = Vec::with_capacity(n_layers + 1);
    acts.push(inputs.clone());
    for l in 0..n_layers {
        let mut z = acts.last().unwrap() * &params.weights[l];
        for mut row in z.row_iter_mut() {
            row += params.biases[l].transpose();
        }
        if l + 1 < n_layers {
            z.apply(|v| *v = v.max(0.0));
        }
        acts.push(z);
    }
    Ok(acts)
}

/// Batch evaluation: logits, mean logistic loss, and zero-one error.
#[derive(Debug, Clone)]
pub struct ForwardResult {
    pub logits: DVector<f64>,
    pub logistic_loss: f64,
    pub zero_one_error: f64,
}

pub fn mlp_forward(
    params: &MlpParams,
    inputs: &DMatrix<f64>,
    labels: &[u8],
) -> Result<ForwardResult> {
    if labels.len() != inputs.nrows() {
        return Err(Error::DimensionMismatch {
            expected: inputs.nrows(),
            got: labels.len(),
        });
    }
    let logits = mlp_logits(params, inputs)?;
    let mut loss = 0.0;
    let mut errors = 0usize;
    for (i, &y) in labels.iter().enumerate() {
        let s = 2.0 * y as f64 - 1.0;
        let z = logits[i];
        loss += softplus(-s * z);
        let correct = (z > 0.0 && y == 1) || (z < 0.0 && y == 0);
        if !correct {
            errors += 1;
        }
    }
    if !loss.is_finite() {
        return Err(Error::NumericalFailure("loss is not finite".into()));
    }
    let n = labels.len() as f64;
    Ok(ForwardResult {
        logits,
        logistic_loss: loss / n,
        zero_one_error: errors as f64 / n,
    })
}

/// Mean logistic loss and its gradient w.r.t. every parameter, by
/// backpropagation. The gradient comes back in the same shape as the
/// parameters.
pub fn mlp_loss_grad(
    params: &MlpParams,
    inputs: &DMatrix<f64>,
    labels: &[u8],
) -> Result<(f64, MlpParams)> {
    if labels.len() != inputs.nrows() {
        return Err(Error::DimensionMismatch {
            expected: inputs.nrows(),
            got: labels.len(),
        });
    }
    let acts = forward_pass(params, inputs)?;
    let n_layers = params.weights.len();
    let batch = inputs.nrows() as f64;

    let logits = acts.last().unwrap();
    let mut loss = 0.0;
    // dL/dlogit for the mean loss
    let mut delta = DMatrix::zeros(inputs.nrows(), 1);
    for (i, &y) in labels.iter().enumerate() {
        let s = 2.0 * y as f64 - 1.0;
        let z = logits[(i, 0)];
        loss += softplus(-s * z);
        delta[(i, 0)] = -s * sigmoid(-s * z) / batch;
    }
    loss /= batch;

    let mut grad = MlpParams::zeros(&params.layer_dims)?;
    for l in (0..n_layers).rev() {
        grad.weights[l] = acts[l].transpose() * &delta;
        for j in 0..grad.biases[l].len() {
            grad.biases[l][j] = delta.column(j).sum();
        }
        if l > 0 {
            let mut prev = &delta * params.weights[l].transpose();
            // ReLU mask from the stored activations
            for (v, a) in prev.iter_mut().zip(acts[l].iter()) {
                if *a <= 0.0 {
                    *v = 0.0;
                }
            }
            delta = prev;
        }
    }
    Ok((loss, grad))
}
