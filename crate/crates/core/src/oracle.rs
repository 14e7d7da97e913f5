//! Dense rectified-linear MLP: the network the spiking system approximates.
//!
//! Hidden layers are `h_l = max(0, h_{l-1} · W_l)`; the output layer is
//! linear, `out = h_{L-1} · W_L`. Loss is `½‖out − y‖²`. No biases.

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::dataio::Dataset;
use crate::error::{check_finite, check_len, Error, Result};
use crate::matrix::Matrix;
use crate::metrics::argmax;
use crate::net::one_hot;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    weights: Vec<Matrix>,
}

/// Per-layer activations of one forward pass. `inputs[l]` is what weight
/// matrix `l` sees (so `inputs[0]` is the network input), and `preacts[l]`
/// is `inputs[l] · W_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    pub inputs: Vec<Vec<f64>>,
    pub preacts: Vec<Vec<f64>>,
}

impl Activations {
    pub fn output(&self) -> &[f64] {
        self.preacts.last().expect("at least one layer")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub mean_loss: f64,
    /// Percent of samples misclassified before their update.
    pub train_error: f64,
}

impl DenseNet {
    pub fn new(weights: Vec<Matrix>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("a network needs at least one weight matrix"));
        }
        for pair in weights.windows(2) {
            check_len("layer chaining", pair[0].cols(), pair[1].rows())?;
        }
        Ok(Self { weights })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        Self::new(ckpt.weights.clone())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.weights.clone()).expect("weights chain")
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.weights[0].rows())
            .chain(self.weights.iter().map(Matrix::cols))
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Activations> {
        check_len("input vector", self.weights[0].rows(), x.len())?;
        check_finite(x)?;
        let mut inputs = vec![x.to_vec()];
        let mut preacts = Vec::with_capacity(self.weights.len());
        for (l, w) in self.weights.iter().enumerate() {
            let z = w.vec_mul(inputs.last().unwrap());
            if l + 1 < self.weights.len() {
                inputs.push(z.iter().map(|&v| v.max(0.0)).collect());
            }
            preacts.push(z);
        }
        Ok(Activations { inputs, preacts })
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(self.forward(x)?.output()))
    }

    pub fn loss(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let acts = self.forward(x)?;
        check_len("target vector", acts.output().len(), y.len())?;
        Ok(0.5 * acts.output().iter().zip(y).map(|(o, t)| (o - t).powi(2)).sum::<f64>())
    }

    /// Gradients of `½‖out − y‖²` with respect to each weight matrix.
    pub fn backward(&self, acts: &Activations, y: &[f64]) -> Result<Vec<Matrix>> {
        check_len("target vector", acts.output().len(), y.len())?;
        let n = self.weights.len();
        let mut grads: Vec<Matrix> = self.weights.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect();
        let mut delta: Vec<f64> = acts.output().iter().zip(y).map(|(o, t)| o - t).collect();
        for l in (0..n).rev() {
            grads[l].add_outer(1.0, &acts.inputs[l], &delta);
            if l > 0 {
                let back = self.weights[l].mul_vec(&delta);
                delta = back
                    .iter()
                    .zip(&acts.preacts[l - 1])
                    .map(|(d, &z)| if z > 0.0 { *d } else { 0.0 })
                    .collect();
            }
        }
        Ok(grads)
    }

    pub fn gradients(&self, x: &[f64], y: &[f64]) -> Result<Vec<Matrix>> {
        let acts = self.forward(x)?;
        self.backward(&acts, y)
    }

    /// One SGD step on a single sample. Returns the loss before the step and
    /// whether the sample was misclassified.
    pub fn sgd_step(&mut self, x: &[f64], y: &[f64], eta: f64) -> Result<(f64, bool)> {
        let acts = self.forward(x)?;
        let out = acts.output();
        check_len("target vector", out.len(), y.len())?;
        let loss = 0.5 * out.iter().zip(y).map(|(o, t)| (o - t).powi(2)).sum::<f64>();
        let wrong = argmax(out) != argmax(y);
        let grads = self.backward(&acts, y)?;
        for (w, g) in self.weights.iter_mut().zip(&grads) {
            for (wi, gi) in w.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *wi -= eta * gi;
            }
        }
        Ok((loss, wrong))
    }

    /// Per-sample SGD over `dataset` in the given sample order.
    pub fn train_epoch(&mut self, dataset: &Dataset, order: &[usize], eta: f64) -> Result<EpochStats> {
        let mut loss = 0.0;
        let mut wrong = 0;
        for &i in order {
            let (x, label) = dataset.dense_sample(i);
            let y = one_hot(label, dataset.n_classes);
            let (l, w) = self.sgd_step(&x, &y, eta)?;
            loss += l;
            wrong += usize::from(w);
        }
        let n = order.len().max(1) as f64;
        Ok(EpochStats {
            mean_loss: loss / n,
            train_error: 100.0 * wrong as f64 / n,
        })
    }

    /// Percent misclassified over the whole dataset.
    pub fn evaluate(&self, dataset: &Dataset) -> Result<f64> {
        let mut wrong = 0;
        for i in 0..dataset.len() {
            let (x, label) = dataset.dense_sample(i);
            wrong += usize::from(self.predict(&x)? != label);
        }
        Ok(100.0 * wrong as f64 / dataset.len().max(1) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_zero_activations() {
        let net = DenseNet::new(vec![Matrix::identity(3), Matrix::identity(3)]).unwrap();
        let acts = net.forward(&[0.0; 3]).unwrap();
        assert!(acts.preacts.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_passes_positive_input() {
        let net = DenseNet::new(vec![Matrix::identity(3), Matrix::identity(3)]).unwrap();
        assert_eq!(net.forward(&[0.5, 1.0, 2.0]).unwrap().output(), &[0.5, 1.0, 2.0]);
    }

    #[test]
    fn hidden_relu_output_linear() {
        let net = DenseNet::new(vec![Matrix::identity(2), Matrix::identity(2)]).unwrap();
        let acts = net.forward(&[-1.0, 2.0]).unwrap();
        assert_eq!(acts.inputs[1], vec![0.0, 2.0]);
        let single = DenseNet::new(vec![Matrix::identity(2)]).unwrap();
        assert_eq!(single.forward(&[-1.0, 2.0]).unwrap().output(), &[-1.0, 2.0]);
    }

    #[test]
    fn perfect_output_zero_gradient() {
        let net = DenseNet::new(vec![Matrix::identity(2)]).unwrap();
        let grads = net.gradients(&[0.3, 0.7], &[0.3, 0.7]).unwrap();
        assert!(grads[0].as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn linear_one_hot_gradient_is_residual_row() {
        let w = Matrix::from_rows(&[vec![0.1, 0.2], vec![0.3, 0.4], vec![0.5, 0.6]]).unwrap();
        let net = DenseNet::new(vec![w]).unwrap();
        let grads = net.gradients(&[0.0, 1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(grads[0].row(0), &[0.0, 0.0]);
        assert_eq!(grads[0].row(1), &[0.3 - 1.0, 0.4]);
        assert_eq!(grads[0].row(2), &[0.0, 0.0]);
    }

    #[test]
    fn eta_zero_keeps_weights() {
        let mut net = DenseNet::new(vec![Matrix::identity(2)]).unwrap();
        let before = net.clone();
        net.sgd_step(&[1.0, 0.5], &[0.0, 1.0], 0.0).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn rejects_shape_errors() {
        assert!(DenseNet::new(vec![Matrix::zeros(2, 3), Matrix::zeros(2, 1)]).is_err());
        let net = DenseNet::new(vec![Matrix::identity(2)]).unwrap();
        assert!(net.forward(&[1.0]).is_err());
        assert!(net.gradients(&[1.0, 1.0], &[1.0]).is_err());
    }
}
