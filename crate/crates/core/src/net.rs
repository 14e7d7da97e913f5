//! The spiking multi-layer perceptron.
//!
//! Every inter-layer message is a [`SignedSpike`]. On the forward path a
//! spike `(i, s)` arriving at a layer adds `s · W[i, ·]` to the layer's
//! rectified quantizer, whose spikes feed the next layer; the last layer has
//! no quantizer and accumulates its row sums into the output vector `u`.
//!
//! On the backward path each layer owns a signed error quantizer. Error spikes
//! `(j, s)` at a layer update column `j` of its weights and send
//! `s · W[·, j]` down to the error quantizer of the layer below, masked by
//! `[c_preact > 0]` of that layer (the rectifier derivative). Nothing is
//! propagated below the first layer.
//!
//! A training iteration resets the forward state, applies the backward reset
//! policy, then runs `T` timesteps. Each timestep feeds `x` to the input
//! quantizer, routes the resulting spikes forward, and then feeds the error
//! signal into the output error quantizer.

use std::fmt::{self, Display};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{check_finite, check_len, Error, Result};
use crate::matrix::Matrix;
use crate::metrics::{argmax, OpCounter};
use crate::quant::{Quantizer, ResetPolicy, SignedSpike};
use crate::routing::{Delivery, Router, Scheme};

/// Standard deviation of the initial weights for training.
pub const TRAIN_INIT_STD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateRule {
    /// Outer product of input and error spike counts at the end of the iteration.
    #[default]
    Sgd,
    /// Column update on every error spike using the input counts seen so far.
    Fsgd,
}

/// What the output error quantizer integrates on each timestep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorSignal {
    /// `δu_t − y`, the change of `u` during the step minus the target.
    #[default]
    Increment,
    /// `u_t − y` on the cumulative output sum.
    Cumulative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Timesteps per sample.
    pub t_steps: usize,
    pub eta: f64,
    pub update_rule: UpdateRule,
    pub routing: Scheme,
    pub bwd_reset: ResetPolicy,
    pub smooth_gradients: bool,
    pub error_signal: ErrorSignal,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            t_steps: 10,
            eta: 0.002,
            update_rule: UpdateRule::Sgd,
            routing: Scheme::BreadthFirst,
            bwd_reset: ResetPolicy::NoReset,
            smooth_gradients: false,
            error_signal: ErrorSignal::Increment,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_steps == 0 {
            return Err(Error::invalid("t_steps must be at least 1"));
        }
        if !self.eta.is_finite() || self.eta < 0.0 {
            return Err(Error::invalid(format!("learning rate must be finite and non-negative, got {}", self.eta)));
        }
        Ok(())
    }
}

pub struct SpikingLayer {
    weights: Matrix,
    /// Rectified forward quantizer; `None` for the output layer.
    fwd: Option<Quantizer>,
    /// Signed error quantizer over this layer's output units.
    bwd: Quantizer,
    c_in: Vec<i64>,
    c_preact: Vec<f64>,
    c_error: Vec<i64>,
}

impl SpikingLayer {
    pub fn new(weights: Matrix, is_output: bool, bwd_reset: ResetPolicy) -> Self {
        let (d_in, d_out) = (weights.rows(), weights.cols());
        Self {
            fwd: (!is_output).then(|| Quantizer::rectified(d_out)),
            bwd: Quantizer::signed(d_out).with_reset(bwd_reset),
            c_in: vec![0; d_in],
            c_preact: vec![0.0; d_out],
            c_error: vec![0; d_out],
            weights,
        }
    }

    pub fn d_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn d_out(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.weights
    }

    pub fn is_output(&self) -> bool {
        self.fwd.is_none()
    }

    /// Signed count of input spikes received this iteration.
    pub fn c_in(&self) -> &[i64] {
        &self.c_in
    }

    /// Cumulative pre-activation: the weighted sum of all input spikes this iteration.
    pub fn c_preact(&self) -> &[f64] {
        &self.c_preact
    }

    /// Signed count of error spikes emitted this iteration.
    pub fn c_error(&self) -> &[i64] {
        &self.c_error
    }

    pub fn forward_quantizer(&self) -> Option<&Quantizer> {
        self.fwd.as_ref()
    }

    pub fn backward_quantizer(&self) -> &Quantizer {
        &self.bwd
    }

    pub fn backward_quantizer_mut(&mut self) -> &mut Quantizer {
        &mut self.bwd
    }

    fn reset_forward(&mut self) {
        if let Some(q) = &mut self.fwd {
            q.clear();
        }
        self.c_in.iter_mut().for_each(|c| *c = 0);
        self.c_preact.iter_mut().for_each(|c| *c = 0.0);
        self.c_error.iter_mut().for_each(|c| *c = 0);
    }

    /// Deliver one input spike and return the spikes this layer fires.
    pub fn forward_spike(&mut self, spike: SignedSpike) -> Result<Vec<SignedSpike>> {
        let mut out = Vec::new();
        self.forward_into(spike, &mut out)?;
        Ok(out)
    }

    /// Returns the number of threshold checks the drain performed.
    fn forward_into(&mut self, spike: SignedSpike, out: &mut Vec<SignedSpike>) -> Result<usize> {
        if spike.source >= self.d_in() {
            return Err(Error::IndexOutOfRange {
                index: spike.source,
                width: self.d_in(),
            });
        }
        let s = spike.sign.as_f64();
        self.c_in[spike.source] += spike.sign.value();
        let row = self.weights.row(spike.source);
        for (c, w) in self.c_preact.iter_mut().zip(row) {
            *c += s * w;
        }
        match &mut self.fwd {
            Some(q) => {
                q.integrate_scaled(s, row);
                Ok(q.drain_into(out))
            }
            None => Ok(0),
        }
    }

    /// `W −= (η/T) · c_in ⊗ c_error`, where `input` replaces `c_in` when given.
    pub fn apply_sgd_update(&mut self, eta: f64, t_steps: usize, input: Option<&[f64]>) {
        let c_err: Vec<f64> = self.c_error.iter().map(|&c| c as f64).collect();
        let counts: Vec<f64>;
        let a = match input {
            Some(v) => v,
            None => {
                counts = self.c_in.iter().map(|&c| c as f64).collect();
                &counts
            }
        };
        self.weights.add_outer(-eta / t_steps as f64, a, &c_err);
    }

    /// `W[·, j] −= (η/T) · s · c_in` for an error spike `(j, s)`, using the
    /// input seen so far (or `input` when given).
    pub fn apply_fsgd_update(&mut self, spike: SignedSpike, eta: f64, t_steps: usize, input: Option<&[f64]>) {
        let j = spike.source;
        let cols = self.weights.cols();
        let f = -eta / t_steps as f64 * spike.sign.as_f64();
        let w = self.weights.as_mut_slice();
        match input {
            Some(v) => {
                for (i, &x) in v.iter().enumerate() {
                    if x != 0.0 {
                        w[i * cols + j] += f * x;
                    }
                }
            }
            None => {
                for (i, &c) in self.c_in.iter().enumerate() {
                    if c != 0 {
                        w[i * cols + j] += f * c as f64;
                    }
                }
            }
        }
    }
}

/// Modules of the event graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Node {
    /// Input quantizer.
    Input,
    /// Source of the per-step error signal.
    Target,
    /// Forward side of layer `l`.
    Layer(usize),
    /// Error quantizer of layer `l`.
    Error(usize),
    /// Weight-update module of layer `l`.
    Update(usize),
}

impl Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Input => f.write_str("input"),
            Node::Target => f.write_str("target"),
            Node::Layer(l) => write!(f, "layer{l}"),
            Node::Error(l) => write!(f, "error{l}"),
            Node::Update(l) => write!(f, "update{l}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Spike(SignedSpike),
    Dense(Vec<f64>),
}

impl Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Spike(s) => write!(f, "spike{s}"),
            Event::Dense(_) => f.write_str("dense"),
        }
    }
}

/// A forward spike delivered to `layer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpikeRecord {
    pub layer: usize,
    pub spike: SignedSpike,
}

/// Everything the event handlers touch; kept apart from the router so both
/// can be borrowed mutably during dispatch.
struct Engine {
    layers: Vec<SpikingLayer>,
    config: TrainConfig,
    /// Cumulative input vector, the smooth stand-in for input spike counts.
    x_cum: Vec<f64>,
    /// Output deltas go straight to the error quantizer (depth-first training).
    stream_errors: bool,
    /// Forward cost per layer.
    forward_ops: Vec<OpCounter>,
    backward_ops: OpCounter,
    spike_log: Option<Vec<SpikeRecord>>,
}

impl Engine {
    fn handle(&mut self, node: Node, event: &Event) -> Vec<Event> {
        match (node, event) {
            (Node::Layer(l), Event::Spike(s)) => self.on_forward(l, *s),
            (Node::Error(l), Event::Dense(v)) => self.on_error_dense(l, v),
            (Node::Error(l), Event::Spike(s)) => self.on_error_from_above(l, *s),
            (Node::Update(l), Event::Spike(s)) => {
                self.on_update(l, *s);
                Vec::new()
            }
            (node, event) => panic!("no handler for {event} at {node}"),
        }
    }

    fn on_forward(&mut self, l: usize, spike: SignedSpike) -> Vec<Event> {
        if let Some(log) = &mut self.spike_log {
            log.push(SpikeRecord { layer: l, spike });
        }
        let layer = &mut self.layers[l];
        let mut out = Vec::new();
        let checks = layer
            .forward_into(spike, &mut out)
            .expect("routed spike within layer width");
        let cost = &mut self.forward_ops[l];
        cost.count_spike_cost(layer.d_out());
        cost.comparisons += checks as u64;
        if layer.is_output() {
            if self.stream_errors {
                let delta: Vec<f64> = layer
                    .weights
                    .row(spike.source)
                    .iter()
                    .map(|w| spike.sign.as_f64() * w)
                    .collect();
                return vec![Event::Dense(delta)];
            }
            return Vec::new();
        }
        out.into_iter().map(Event::Spike).collect()
    }

    fn drain_error(&mut self, l: usize) -> Vec<Event> {
        let mut out = Vec::new();
        let checks = self.layers[l].bwd.drain_into(&mut out);
        self.backward_ops.comparisons += checks as u64;
        for s in &out {
            self.layers[l].c_error[s.source] += s.sign.value();
        }
        out.into_iter().map(Event::Spike).collect()
    }

    fn on_error_dense(&mut self, l: usize, v: &[f64]) -> Vec<Event> {
        let layer = &mut self.layers[l];
        if layer.is_output() {
            layer.bwd.integrate(v);
        } else {
            let gated: Vec<f64> = v
                .iter()
                .zip(&layer.c_preact)
                .map(|(x, &c)| if c > 0.0 { *x } else { 0.0 })
                .collect();
            layer.bwd.integrate(&gated);
        }
        self.backward_ops.additions += v.len() as u64;
        self.drain_error(l)
    }

    /// An error spike `(j, s)` from layer `l + 1` injects `s · W_{l+1}[·, j]`,
    /// masked by this layer's rectifier derivative.
    fn on_error_from_above(&mut self, l: usize, spike: SignedSpike) -> Vec<Event> {
        let (lower, upper) = self.layers.split_at_mut(l + 1);
        let layer = &mut lower[l];
        let w = &upper[0].weights;
        let cols = w.cols();
        let s = spike.sign.as_f64();
        let data = w.as_slice();
        let mut gated = vec![0.0; layer.d_out()];
        let mut adds = 0;
        for (k, g) in gated.iter_mut().enumerate() {
            if layer.c_preact[k] > 0.0 {
                *g = s * data[k * cols + spike.source];
                adds += 1;
            }
        }
        layer.bwd.integrate(&gated);
        self.backward_ops.additions += adds;
        self.drain_error(l)
    }

    fn smooth_input(&self, l: usize) -> Option<Vec<f64>> {
        if !self.config.smooth_gradients {
            return None;
        }
        Some(if l == 0 {
            self.x_cum.clone()
        } else {
            self.layers[l - 1].c_preact.iter().map(|&c| c.max(0.0)).collect()
        })
    }

    fn on_update(&mut self, l: usize, spike: SignedSpike) {
        if self.config.update_rule != UpdateRule::Fsgd {
            return;
        }
        let smooth = self.smooth_input(l);
        let (eta, t) = (self.config.eta, self.config.t_steps);
        let layer = &mut self.layers[l];
        layer.apply_fsgd_update(spike, eta, t, smooth.as_deref());
        self.backward_ops.additions += layer.d_in() as u64;
    }
}

pub struct SpikingNetwork {
    engine: Engine,
    input: Quantizer,
    router: Router<Node, Event>,
    rng: ChaCha8Rng,
    t: usize,
}

impl SpikingNetwork {
    /// Network with weights drawn from `N(0, init_std²)`.
    pub fn new(layer_sizes: &[usize], init_std: f64, config: TrainConfig) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::invalid("a network needs at least an input and an output size"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let weights = layer_sizes
            .windows(2)
            .map(|p| Matrix::random_normal(p[0], p[1], init_std, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Self::from_weights(weights, config)
    }

    pub fn from_weights(weights: Vec<Matrix>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if weights.is_empty() {
            return Err(Error::invalid("a network needs at least one weight matrix"));
        }
        for pair in weights.windows(2) {
            check_len("layer chaining", pair[0].cols(), pair[1].rows())?;
        }
        let n = weights.len();
        let d_in = weights[0].rows();
        let layers: Vec<SpikingLayer> = weights
            .into_iter()
            .enumerate()
            .map(|(l, w)| SpikingLayer::new(w, l + 1 == n, config.bwd_reset))
            .collect();

        let mut router = Router::new(config.routing);
        router.connect(Node::Input, Node::Layer(0));
        for l in 0..n {
            router.register(Node::Layer(l));
            router.register(Node::Error(l));
            router.register(Node::Update(l));
            if l + 1 < n {
                router.connect(Node::Layer(l), Node::Layer(l + 1));
            }
            if l > 0 {
                router.connect(Node::Error(l), Node::Error(l - 1));
            }
            router.connect(Node::Error(l), Node::Update(l));
        }
        router.connect(Node::Layer(n - 1), Node::Error(n - 1));
        router.connect(Node::Target, Node::Error(n - 1));
        router.validate()?;

        // Reset-policy draws use a stream separate from weight init.
        let rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_ba5e_0000_0001);
        Ok(Self {
            engine: Engine {
                forward_ops: vec![OpCounter::default(); n],
                backward_ops: OpCounter::default(),
                layers,
                config,
                x_cum: vec![0.0; d_in],
                stream_errors: false,
                spike_log: None,
            },
            input: Quantizer::signed(d_in),
            router,
            rng,
            t: 0,
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, config: TrainConfig) -> Result<Self> {
        Self::from_weights(ckpt.weights.clone(), config)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.weights()).expect("network weights chain")
    }

    pub fn config(&self) -> &TrainConfig {
        &self.engine.config
    }

    pub fn layers(&self) -> &[SpikingLayer] {
        &self.engine.layers
    }

    pub fn layers_mut(&mut self) -> &mut [SpikingLayer] {
        &mut self.engine.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let layers = &self.engine.layers;
        std::iter::once(layers[0].d_in())
            .chain(layers.iter().map(SpikingLayer::d_out))
            .collect()
    }

    pub fn weights(&self) -> Vec<Matrix> {
        self.engine.layers.iter().map(|l| l.weights.clone()).collect()
    }

    pub fn d_in(&self) -> usize {
        self.engine.layers[0].d_in()
    }

    pub fn d_out(&self) -> usize {
        self.engine.layers.last().map_or(0, SpikingLayer::d_out)
    }

    /// Current timestep within the iteration.
    pub fn timestep(&self) -> usize {
        self.t
    }

    /// Output sum `u`: every output-layer row added since the iteration started.
    pub fn output_sum(&self) -> &[f64] {
        &self.engine.layers.last().expect("at least one layer").c_preact
    }

    pub fn input_quantizer(&self) -> &Quantizer {
        &self.input
    }

    /// Forward cost per layer since the last [`Self::reset_counters`].
    pub fn forward_ops(&self) -> &[OpCounter] {
        &self.engine.forward_ops
    }

    pub fn backward_ops(&self) -> &OpCounter {
        &self.engine.backward_ops
    }

    pub fn total_ops(&self) -> OpCounter {
        self.engine
            .forward_ops
            .iter()
            .fold(self.engine.backward_ops, |acc, c| acc.merged(c))
    }

    pub fn reset_counters(&mut self) {
        self.engine.forward_ops.iter_mut().for_each(|c| *c = OpCounter::default());
        self.engine.backward_ops = OpCounter::default();
    }

    pub fn enable_spike_log(&mut self) {
        self.engine.spike_log = Some(Vec::new());
    }

    pub fn take_spike_log(&mut self) -> Vec<SpikeRecord> {
        self.engine.spike_log.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn enable_event_trace(&mut self) {
        self.router.enable_trace();
    }

    pub fn take_event_trace(&mut self) -> Vec<Delivery<Node, Event>> {
        self.router.take_trace()
    }

    /// Zero the forward potentials, counts, and the output sum.
    pub fn reset_forward(&mut self) {
        self.input.clear();
        for layer in &mut self.engine.layers {
            layer.reset_forward();
        }
        self.engine.x_cum.iter_mut().for_each(|x| *x = 0.0);
        self.t = 0;
    }

    /// Apply the backward reset policy to every error quantizer.
    pub fn reset_backward(&mut self) {
        for layer in &mut self.engine.layers {
            layer.bwd.reset(&mut self.rng);
        }
    }

    /// Feed `x` to the input quantizer for one timestep and route the spikes
    /// forward until nothing is pending.
    pub fn forward_step(&mut self, x: &[f64]) -> Result<()> {
        check_len("input vector", self.d_in(), x.len())?;
        check_finite(x)?;
        self.t += 1;
        self.router.begin_step();
        self.input.integrate(x);
        let mut spikes = Vec::new();
        self.input.drain_into(&mut spikes);
        if self.engine.config.smooth_gradients {
            for (c, v) in self.engine.x_cum.iter_mut().zip(x) {
                *c += v;
            }
        }
        let engine = &mut self.engine;
        let events = spikes.into_iter().map(Event::Spike).collect();
        self.router.dispatch(Node::Input, events, |n, e| engine.handle(n, e))
    }

    /// Run `T` timesteps on a fresh forward state and return `u / T`.
    pub fn forward_sample(&mut self, x: &[f64], t_steps: usize) -> Result<Vec<f64>> {
        self.forward_sample_with(x, t_steps, |_, _| {})
    }

    /// As [`Self::forward_sample`], calling `observe(t, u)` after every step.
    pub fn forward_sample_with<F>(&mut self, x: &[f64], t_steps: usize, mut observe: F) -> Result<Vec<f64>>
    where
        F: FnMut(usize, &SpikingNetwork),
    {
        if t_steps == 0 {
            return Err(Error::invalid("number of timesteps must be at least 1"));
        }
        self.reset_forward();
        self.engine.stream_errors = false;
        for t in 1..=t_steps {
            self.forward_step(x)?;
            observe(t, self);
        }
        let inv = 1.0 / t_steps as f64;
        Ok(self.output_sum().iter().map(|u| u * inv).collect())
    }

    pub fn predict(&mut self, x: &[f64], t_steps: usize) -> Result<usize> {
        Ok(argmax(&self.forward_sample(x, t_steps)?))
    }

    /// Feed one error increment into the output error quantizer and route the
    /// resulting error spikes down the network.
    pub fn backward_step(&mut self, error_increment: &[f64]) -> Result<()> {
        check_len("error increment", self.d_out(), error_increment.len())?;
        check_finite(error_increment)?;
        let engine = &mut self.engine;
        self.router.dispatch(Node::Target, vec![Event::Dense(error_increment.to_vec())], |n, e| {
            engine.handle(n, e)
        })
    }

    /// One training iteration on the sample `(x, y)`.
    pub fn train_iteration(&mut self, x: &[f64], y: &[f64]) -> Result<()> {
        check_len("input vector", self.d_in(), x.len())?;
        check_len("target vector", self.d_out(), y.len())?;
        check_finite(y)?;
        let config = self.engine.config.clone();
        self.reset_forward();
        self.reset_backward();
        let streaming = config.routing == Scheme::DepthFirst && config.error_signal == ErrorSignal::Increment;
        self.engine.stream_errors = streaming;
        let result = self.run_steps(x, y, &config, streaming);
        self.engine.stream_errors = false;
        result?;
        if config.update_rule == UpdateRule::Sgd {
            self.apply_sgd_updates();
        }
        for layer in &self.engine.layers {
            check_finite(layer.weights.as_slice())?;
        }
        Ok(())
    }

    fn run_steps(&mut self, x: &[f64], y: &[f64], config: &TrainConfig, streaming: bool) -> Result<()> {
        let mut before = vec![0.0; self.d_out()];
        for _ in 0..config.t_steps {
            before.copy_from_slice(self.output_sum());
            self.forward_step(x)?;
            let u = self.output_sum();
            let signal: Vec<f64> = match (config.error_signal, streaming) {
                // Output deltas were already delivered as they happened.
                (ErrorSignal::Increment, true) => y.iter().map(|v| -v).collect(),
                (ErrorSignal::Increment, false) => u.iter().zip(&before).zip(y).map(|((a, b), y)| a - b - y).collect(),
                (ErrorSignal::Cumulative, _) => u.iter().zip(y).map(|(a, y)| a - y).collect(),
            };
            if !streaming {
                self.router.phase_barrier();
            }
            self.backward_step(&signal)?;
        }
        Ok(())
    }

    fn apply_sgd_updates(&mut self) {
        let (eta, t) = (self.engine.config.eta, self.engine.config.t_steps);
        for l in 0..self.engine.layers.len() {
            let smooth = self.engine.smooth_input(l);
            let layer = &mut self.engine.layers[l];
            layer.apply_sgd_update(eta, t, smooth.as_deref());
            self.engine.backward_ops.multiply_adds += (layer.d_in() * layer.d_out()) as u64;
        }
    }
}

/// One-hot target vector.
pub fn one_hot(label: usize, n: usize) -> Vec<f64> {
    let mut y = vec![0.0; n];
    y[label] = 1.0;
    y
}

/// Weight-init helper shared by the experiment drivers.
pub fn init_weights<R: Rng + ?Sized>(layer_sizes: &[usize], std: f64, rng: &mut R) -> Result<Vec<Matrix>> {
    layer_sizes
        .windows(2)
        .map(|p| Matrix::random_normal(p[0], p[1], std, rng))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::Sign;

    fn cfg() -> TrainConfig {
        TrainConfig {
            t_steps: 10,
            eta: 0.1,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn forward_spike_selects_row() {
        let w = Matrix::from_rows(&[vec![2.0, 3.0], vec![4.0, 5.0]]).unwrap();
        let mut layer = SpikingLayer::new(w.clone(), false, ResetPolicy::NoReset);
        let out = layer.forward_spike(SignedSpike::pos(0)).unwrap();
        // Injected total = residual potential + emitted spikes.
        let q = layer.forward_quantizer().unwrap();
        let mut injected = q.phi().to_vec();
        for s in &out {
            injected[s.source] += 1.0;
        }
        assert_eq!(injected, vec![2.0, 3.0]);
        assert_eq!(layer.c_in(), &[1, 0]);

        let mut layer = SpikingLayer::new(w, false, ResetPolicy::NoReset);
        let out = layer.forward_spike(SignedSpike::neg(1)).unwrap();
        assert!(out.is_empty());
        assert_eq!(layer.forward_quantizer().unwrap().phi(), &[-4.0, -5.0]);
        assert_eq!(layer.c_preact(), &[-4.0, -5.0]);
    }

    #[test]
    fn forward_spike_out_of_range() {
        let mut layer = SpikingLayer::new(Matrix::zeros(2, 2), false, ResetPolicy::NoReset);
        assert!(matches!(
            layer.forward_spike(SignedSpike::pos(2)),
            Err(Error::IndexOutOfRange { index: 2, width: 2 })
        ));
    }

    #[test]
    fn sgd_update_arithmetic() {
        let mut layer = SpikingLayer::new(Matrix::zeros(2, 2), true, ResetPolicy::NoReset);
        layer.c_in = vec![2, 1];
        layer.c_error = vec![1, -1];
        layer.apply_sgd_update(0.1, 10, None);
        let expected = [-0.02, 0.02, -0.01, 0.01];
        for (a, b) in layer.weights().as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }

        let mut layer = SpikingLayer::new(Matrix::zeros(2, 2), true, ResetPolicy::NoReset);
        layer.c_in = vec![2, 1];
        layer.apply_sgd_update(0.1, 10, None);
        assert_eq!(layer.weights().as_slice(), &[0.0; 4]);

        let mut layer = SpikingLayer::new(Matrix::zeros(2, 2), true, ResetPolicy::NoReset);
        layer.c_in = vec![0, 3];
        layer.c_error = vec![1, 1];
        layer.apply_sgd_update(0.1, 10, None);
        assert_eq!(layer.weights().row(0), &[0.0, 0.0]);
    }

    #[test]
    fn fsgd_update_arithmetic() {
        let mut layer = SpikingLayer::new(Matrix::zeros(3, 2), true, ResetPolicy::NoReset);
        layer.c_in = vec![3, 0, 1];
        layer.apply_fsgd_update(SignedSpike::pos(1), 0.2, 10, None);
        let col = layer.weights().column(1);
        for (a, b) in col.iter().zip([-0.06, 0.0, -0.02]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(layer.weights().column(0), vec![0.0; 3]);

        let mut layer = SpikingLayer::new(Matrix::zeros(3, 2), true, ResetPolicy::NoReset);
        layer.apply_fsgd_update(SignedSpike::neg(0), 0.2, 10, None);
        assert_eq!(layer.weights().as_slice(), &[0.0; 6]);
    }

    #[test]
    fn fsgd_weights_early_inputs_more() {
        let mut layer = SpikingLayer::new(Matrix::zeros(1, 1), true, ResetPolicy::NoReset);
        layer.c_in = vec![1];
        layer.apply_fsgd_update(SignedSpike::pos(0), 1.0, 1, None);
        let first = layer.weights()[(0, 0)];
        layer.c_in = vec![2];
        layer.apply_fsgd_update(SignedSpike::pos(0), 1.0, 1, None);
        let second = layer.weights()[(0, 0)] - first;
        assert_eq!(first, -1.0);
        assert_eq!(second, -2.0);
    }

    #[test]
    fn zero_input_is_silent() {
        let mut net = SpikingNetwork::new(&[4, 3, 2], 0.5, cfg()).unwrap();
        net.enable_spike_log();
        let out = net.forward_sample(&[0.0; 4], 20).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
        assert!(net.take_spike_log().is_empty());
    }

    #[test]
    fn single_layer_one_hot_reads_row() {
        let w = Matrix::from_rows(&[vec![0.3, -0.7], vec![1.5, 0.25]]).unwrap();
        let mut net = SpikingNetwork::from_weights(vec![w], cfg()).unwrap();
        assert_eq!(net.forward_sample(&[0.0, 1.0], 1).unwrap(), vec![1.5, 0.25]);
    }

    #[test]
    fn predict_ties_go_low() {
        assert_eq!(argmax(&[0.1, 0.9]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn zero_error_sends_nothing_back() {
        let mut net = SpikingNetwork::new(&[3, 4, 2], 0.5, cfg()).unwrap();
        net.forward_step(&[0.9, 0.2, 0.4]).unwrap();
        let before = net.weights();
        net.backward_step(&[0.0, 0.0]).unwrap();
        assert!(net.layers().iter().all(|l| l.c_error().iter().all(|&c| c == 0)));
        assert_eq!(net.weights(), before);
    }

    #[test]
    fn blocked_units_receive_no_error() {
        // Hidden unit 1 only ever sees negative drive.
        let w0 = Matrix::from_rows(&[vec![1.0, -1.0], vec![1.0, -1.0]]).unwrap();
        let w1 = Matrix::from_rows(&[vec![1.0, 0.5], vec![2.0, -3.0]]).unwrap();
        let config = TrainConfig {
            update_rule: UpdateRule::Fsgd,
            bwd_reset: ResetPolicy::ZeroReset,
            t_steps: 20,
            ..cfg()
        };
        let mut net = SpikingNetwork::from_weights(vec![w0, w1], config).unwrap();
        net.enable_event_trace();
        net.train_iteration(&[0.7, 0.4], &[0.0, 1.0]).unwrap();
        assert!(net.layers()[0].c_preact()[1] <= 0.0);
        assert_eq!(net.layers()[0].weights().column(1), vec![-1.0, -1.0]);
        let trace = net.take_event_trace();
        let hidden_error_spikes: Vec<_> = trace
            .iter()
            .filter(|d| d.producer == Node::Error(0))
            .collect();
        assert!(hidden_error_spikes
            .iter()
            .all(|d| !matches!(d.payload, Event::Spike(s) if s.source == 1)));
        // The open unit did get error traffic.
        assert!(!hidden_error_spikes.is_empty());
    }

    #[test]
    fn eta_zero_leaves_weights() {
        for rule in [UpdateRule::Sgd, UpdateRule::Fsgd] {
            let config = TrainConfig {
                eta: 0.0,
                update_rule: rule,
                ..cfg()
            };
            let mut net = SpikingNetwork::new(&[3, 5, 2], 0.3, config).unwrap();
            let before = net.weights();
            net.train_iteration(&[0.5, 0.1, 0.9], &[1.0, 0.0]).unwrap();
            assert_eq!(net.weights(), before);
        }
    }

    #[test]
    fn fsgd_matches_sgd_when_errors_arrive_last() {
        // Single layer, one-hot input of 1.0: one input spike per step, so
        // c_in is constant from step 1. Error potentials start at -0.5+ so the
        // only error spikes come once y has been subtracted T times.
        let w = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let run = |rule| {
            let config = TrainConfig {
                t_steps: 1,
                eta: 0.5,
                update_rule: rule,
                bwd_reset: ResetPolicy::ZeroReset,
                ..TrainConfig::default()
            };
            let mut net = SpikingNetwork::from_weights(vec![w.clone()], config).unwrap();
            net.train_iteration(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
            net.weights()
        };
        let sgd = run(UpdateRule::Sgd);
        assert_ne!(sgd[0], w);
        assert_eq!(sgd, run(UpdateRule::Fsgd));
    }

    #[test]
    fn fsgd_total_is_sum_over_spikes() {
        let config = TrainConfig {
            update_rule: UpdateRule::Fsgd,
            t_steps: 8,
            eta: 0.05,
            ..cfg()
        };
        let mut net = SpikingNetwork::new(&[5, 2], 0.4, config).unwrap();
        let w0 = net.weights()[0].clone();
        let x = [0.9, -0.3, 0.6, 0.0, 0.35];
        let y = [0.0, 1.0];
        // Replay the iteration by hand, tracking c_in at each error spike.
        net.enable_event_trace();
        net.train_iteration(&x, &y).unwrap();
        let mut c_in = [0i64; 5];
        let mut expected = w0.clone();
        for d in net.take_event_trace() {
            match (d.target, &d.payload) {
                (Node::Layer(0), Event::Spike(s)) => c_in[s.source] += s.sign.value(),
                (Node::Update(0), Event::Spike(s)) => {
                    for (i, &c) in c_in.iter().enumerate() {
                        expected[(i, s.source)] += -0.05 / 8.0 * s.sign.as_f64() * c as f64;
                    }
                }
                _ => {}
            }
        }
        assert_eq!(net.weights()[0], expected);
    }

    #[test]
    fn deterministic_given_seed() {
        let config = TrainConfig {
            bwd_reset: ResetPolicy::Random,
            update_rule: UpdateRule::Fsgd,
            seed: 42,
            ..cfg()
        };
        let run = || {
            let mut net = SpikingNetwork::new(&[6, 5, 3], 0.3, config.clone()).unwrap();
            for k in 0..5 {
                let x: Vec<f64> = (0..6).map(|i| ((i * 7 + k * 3) % 5) as f64 / 5.0).collect();
                net.train_iteration(&x, &one_hot(k % 3, 3)).unwrap();
            }
            net.weights()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_bad_config_and_shapes() {
        let bad = TrainConfig {
            t_steps: 0,
            ..cfg()
        };
        assert!(SpikingNetwork::new(&[2, 2], 0.1, bad).is_err());
        let bad = TrainConfig {
            eta: f64::NAN,
            ..cfg()
        };
        assert!(SpikingNetwork::new(&[2, 2], 0.1, bad).is_err());
        assert!(SpikingNetwork::from_weights(vec![Matrix::zeros(2, 3), Matrix::zeros(2, 2)], cfg()).is_err());
        let mut net = SpikingNetwork::new(&[2, 2], 0.1, cfg()).unwrap();
        assert!(net.forward_sample(&[1.0], 3).is_err());
        assert!(net.train_iteration(&[1.0, 0.0], &[1.0]).is_err());
    }

    #[test]
    fn spike_sign_helpers() {
        assert_eq!(SignedSpike::neg(3).sign, Sign::Neg);
    }
}
