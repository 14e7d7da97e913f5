//! Experiment drivers for the spiking multi-layer perceptron: quantizer
//! convergence, forward equivalence with the dense network, MNIST training,
//! the hyperparameter ablation, and early-guess cost curves.

pub mod experiments;
pub mod output;
pub mod spec;

pub use spec::{DataSource, Preset, RunSpec};
