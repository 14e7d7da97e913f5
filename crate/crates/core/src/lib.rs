//! Event-driven spiking multi-layer perceptron.
//!
//! Real-valued vectors are encoded as streams of signed unit spikes by
//! deterministic quantizers ([`quant`]). A network of such quantizers
//! computes a rectified-linear MLP forward pass with additions only, and
//! trains it by sending error spikes backwards through the same weights
//! ([`net`]). As the number of timesteps `T` grows, both the outputs and the
//! weight updates approach those of the dense network in [`oracle`].
//!
//! - [`quant`]: signed and rectified spike quantizers, Poisson baseline
//! - [`routing`]: breadth-first and depth-first event routers
//! - [`net`]: spiking layers, forward and backward passes, SGD and FSGD
//! - [`oracle`]: dense ReLU network with exact gradients
//! - [`dataio`]: IDX and sparse-text datasets, seeded splits
//! - [`metrics`]: operation counters, early-guess curves, run records
//! - [`checkpoint`]: weight files shared by both networks

pub mod checkpoint;
pub mod dataio;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod net;
pub mod oracle;
pub mod quant;
pub mod routing;

pub use checkpoint::Checkpoint;
pub use dataio::{Dataset, Features, Sample};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use metrics::{ExperimentRecord, OpCounter};
pub use net::{ErrorSignal, SpikingLayer, SpikingNetwork, TrainConfig, UpdateRule};
pub use oracle::DenseNet;
pub use quant::{QuantMode, Quantizer, ResetPolicy, Sign, SignedSpike, SpikeTrain};
pub use routing::{Router, Scheme};
