//! The experiments behind each subcommand, as library functions so the
//! acceptance suite can call them directly.

use std::ops::RangeInclusive;

use anyhow::{bail, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use smlp_core::dataio::epoch_order;
use smlp_core::metrics::{argmax, count_dense_cost, early_guess_curve, loglog_slope, EpochRecord};
use smlp_core::net::{init_weights, one_hot};
use smlp_core::quant::{quantize_vector, reconstruct, stochastic_sample_vector};
use smlp_core::{
    Checkpoint, Dataset, DenseNet, ExperimentRecord, OpCounter, QuantMode, ResetPolicy, Scheme, SpikingNetwork,
    TrainConfig, UpdateRule,
};

use crate::spec::{config_hash, RunSpec};

pub const DETERMINISTIC_SLOPE: RangeInclusive<f64> = -1.15..=-0.85;
pub const STOCHASTIC_SLOPE: RangeInclusive<f64> = -0.65..=-0.35;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Deterministic,
    Stochastic,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Deterministic => "deterministic",
            Method::Stochastic => "stochastic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub method: Method,
    pub t: usize,
    /// Mean over seeds of `‖reconstruct − v‖₁`.
    pub l1_error: f64,
}

/// Reconstruction error of deterministic and Poisson quantization of random
/// vectors in `[-1, 1]^width`, averaged over `seeds` draws.
pub fn quant_convergence(width: usize, ts: &[usize], seeds: u64) -> Result<Vec<ConvergenceRow>> {
    if seeds == 0 || ts.is_empty() {
        bail!("need at least one seed and one T");
    }
    let vectors: Vec<Vec<f64>> = (0..seeds)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            (0..width).map(|_| rng.random_range(-1.0..=1.0)).collect()
        })
        .collect();
    let mut rows = Vec::new();
    for method in [Method::Deterministic, Method::Stochastic] {
        for &t in ts {
            let mut total = 0.0;
            for (s, v) in vectors.iter().enumerate() {
                let train = match method {
                    Method::Deterministic => quantize_vector(v, t, QuantMode::Signed)?,
                    Method::Stochastic => stochastic_sample_vector(v, t, s as u64)?,
                };
                let r = reconstruct(&train, width, t)?;
                total += r.iter().zip(v).map(|(a, b)| (a - b).abs()).sum::<f64>();
            }
            rows.push(ConvergenceRow {
                method,
                t,
                l1_error: total / seeds as f64,
            });
        }
    }
    Ok(rows)
}

/// Least-squares log-log slope of one method's error curve.
pub fn convergence_slope(rows: &[ConvergenceRow], method: Method) -> f64 {
    let (ts, errs): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.method == method)
        .map(|r| (r.t as f64, r.l1_error))
        .unzip();
    loglog_slope(&ts, &errs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceRow {
    /// Index of the weight layer whose output is compared; the last one is the network output.
    pub layer: usize,
    pub t: usize,
    /// `‖spiking − dense‖₁ / ‖dense‖₁`, averaged over inputs.
    pub rel_l1: f64,
}

/// Compare spike rates of a random spiking network with the dense ReLU
/// activations of the same weights, at each `T` in `ts`.
pub fn forward_equivalence(sizes: &[usize], ts: &[usize], init_std: f64, seed: u64, n_inputs: usize) -> Result<Vec<EquivalenceRow>> {
    let mut ts = ts.to_vec();
    ts.sort_unstable();
    ts.dedup();
    let Some(&t_max) = ts.last() else {
        bail!("need at least one T");
    };
    if ts[0] == 0 || n_inputs == 0 {
        bail!("T values and the number of inputs must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = init_weights(sizes, init_std, &mut rng)?;
    let dense = DenseNet::new(weights.clone())?;
    let mut net = SpikingNetwork::from_weights(weights, TrainConfig::default())?;
    let n_layers = sizes.len() - 1;
    let mut sums = vec![vec![0.0; ts.len()]; n_layers];
    for _ in 0..n_inputs {
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(0.0..1.0)).collect();
        let acts = dense.forward(&x)?;
        let targets: Vec<&[f64]> = (0..n_layers)
            .map(|l| if l + 1 < n_layers { &acts.inputs[l + 1][..] } else { acts.output() })
            .collect();
        net.forward_sample_with(&x, t_max, |t, net| {
            let Some(k) = ts.iter().position(|&c| c == t) else {
                return;
            };
            let inv = 1.0 / t as f64;
            for (l, want) in targets.iter().enumerate() {
                let got: Vec<f64> = if l + 1 < n_layers {
                    net.layers()[l + 1].c_in().iter().map(|&c| c as f64 * inv).collect()
                } else {
                    net.output_sum().iter().map(|u| u * inv).collect()
                };
                sums[l][k] += relative_l1(&got, want);
            }
        })?;
    }
    let mut rows = Vec::new();
    for (l, per_t) in sums.iter().enumerate() {
        for (k, &t) in ts.iter().enumerate() {
            rows.push(EquivalenceRow {
                layer: l,
                t,
                rel_l1: per_t[k] / n_inputs as f64,
            });
        }
    }
    Ok(rows)
}

pub fn relative_l1(got: &[f64], want: &[f64]) -> f64 {
    let diff: f64 = got.iter().zip(want).map(|(a, b)| (a - b).abs()).sum();
    let norm: f64 = want.iter().map(|b| b.abs()).sum();
    if norm == 0.0 {
        diff
    } else {
        diff / norm
    }
}

/// The error curve of one layer, in increasing `T`.
pub fn layer_curve(rows: &[EquivalenceRow], layer: usize) -> Vec<(usize, f64)> {
    rows.iter().filter(|r| r.layer == layer).map(|r| (r.t, r.rel_l1)).collect()
}

pub fn strictly_decreasing(curve: &[(usize, f64)]) -> bool {
    curve.windows(2).all(|w| w[1].1 < w[0].1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientLimit {
    /// Relative L1 distance per weight layer.
    pub per_layer: Vec<f64>,
    /// Relative L1 distance over all weights together.
    pub total: f64,
}

/// One SGD training iteration with zero-reset error quantizers on a random
/// network and input, compared against the dense gradient. The spiking
/// update `−(η/T) c_in ⊗ c_err` estimates `−η T ∂L/∂W`, so `ΔW / T` is
/// compared with `−η ∂L/∂W`.
pub fn spiking_gradient_limit(sizes: &[usize], init_std: f64, t_steps: usize, eta: f64, seed: u64) -> Result<GradientLimit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = init_weights(sizes, init_std, &mut rng)?;
    let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(0.0..1.0)).collect();
    let label = rng.random_range(0..*sizes.last().unwrap());
    let y = one_hot(label, *sizes.last().unwrap());
    let grads = DenseNet::new(weights.clone())?.gradients(&x, &y)?;
    let config = TrainConfig {
        t_steps,
        eta,
        update_rule: UpdateRule::Sgd,
        bwd_reset: ResetPolicy::ZeroReset,
        seed,
        ..TrainConfig::default()
    };
    let mut net = SpikingNetwork::from_weights(weights.clone(), config)?;
    net.train_iteration(&x, &y)?;
    let after = net.weights();
    let (mut diff_all, mut norm_all) = (0.0, 0.0);
    let mut per_layer = Vec::new();
    for ((w0, w1), g) in weights.iter().zip(&after).zip(&grads) {
        let (mut diff, mut norm) = (0.0, 0.0);
        for ((a, b), g) in w0.as_slice().iter().zip(w1.as_slice()).zip(g.as_slice()) {
            let got = (b - a) / t_steps as f64;
            let want = -eta * g;
            diff += (got - want).abs();
            norm += want.abs();
        }
        per_layer.push(if norm == 0.0 { diff } else { diff / norm });
        diff_all += diff;
        norm_all += norm;
    }
    Ok(GradientLimit {
        per_layer,
        total: if norm_all == 0.0 { diff_all } else { diff_all / norm_all },
    })
}

/// Percent of `dataset` the spiking network misclassifies after `t_steps` steps.
pub fn evaluate_spiking(net: &mut SpikingNetwork, dataset: &Dataset, t_steps: usize) -> Result<f64> {
    let mut wrong = 0;
    for i in 0..dataset.len() {
        let (x, label) = dataset.dense_sample(i);
        wrong += usize::from(net.predict(&x, t_steps)? != label);
    }
    Ok(100.0 * wrong as f64 / dataset.len().max(1) as f64)
}

pub struct TrainOutcome {
    pub record: ExperimentRecord,
    pub checkpoint: Checkpoint,
}

impl TrainOutcome {
    pub fn final_test_error(&self) -> f64 {
        self.record.epochs.last().map_or(f64::NAN, |e| e.test_error)
    }
}

/// Train (or only evaluate) the network described by `spec`. `on_epoch` is
/// called after every epoch.
pub fn run_train<F>(spec: &RunSpec, train: &Dataset, test: &Dataset, mut on_epoch: F) -> Result<TrainOutcome>
where
    F: FnMut(&EpochRecord),
{
    spec.validate()?;
    if train.n_features != spec.arch[0] || test.n_features != spec.arch[0] {
        bail!("dataset has {} features but the network takes {}", train.n_features, spec.arch[0]);
    }
    let n_out = *spec.arch.last().unwrap();
    if train.n_classes > n_out {
        bail!("dataset has {} classes but the network has {n_out} outputs", train.n_classes);
    }
    let started = std::time::Instant::now();
    let config = serde_json::to_value(spec)?;
    let mut record = ExperimentRecord::new(config, config_hash(spec));
    let initial = match &spec.init_from {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            if ckpt.layer_sizes != spec.arch {
                bail!("checkpoint {} has layers {:?}, expected {:?}", path.display(), ckpt.layer_sizes, spec.arch);
            }
            ckpt.weights
        }
        None => init_weights(&spec.arch, spec.init_std, &mut ChaCha8Rng::seed_from_u64(spec.train.seed))?,
    };
    let epochs = if spec.eval_only { 0 } else { spec.epochs };
    let checkpoint = if spec.oracle {
        let mut net = DenseNet::new(initial)?;
        for epoch in 0..epochs {
            let order = epoch_order(train.len(), spec.train.seed, epoch);
            let stats = net.train_epoch(train, &order, spec.oracle_eta)?;
            let rec = EpochRecord {
                epoch: epoch + 1,
                train_error: Some(stats.train_error),
                test_error: net.evaluate(test)?,
            };
            on_epoch(&rec);
            record.push_epoch(rec);
        }
        if spec.eval_only {
            let rec = EpochRecord {
                epoch: 0,
                train_error: None,
                test_error: net.evaluate(test)?,
            };
            on_epoch(&rec);
            record.push_epoch(rec);
        }
        // Forward pass, weight gradients, and error propagation each cost one dense pass.
        record.ops.multiply_adds = count_dense_cost(&spec.arch, None)? * 3 * (epochs * train.len()) as u64;
        net.to_checkpoint()
    } else {
        let mut net = SpikingNetwork::from_weights(initial, spec.train.clone())?;
        let mut ops = OpCounter::default();
        for epoch in 0..epochs {
            let order = epoch_order(train.len(), spec.train.seed, epoch);
            let mut wrong = 0;
            net.reset_counters();
            for &i in &order {
                let (x, label) = train.dense_sample(i);
                net.train_iteration(&x, &one_hot(label, n_out))?;
                wrong += usize::from(argmax(net.output_sum()) != label);
            }
            ops = ops.merged(&net.total_ops());
            let rec = EpochRecord {
                epoch: epoch + 1,
                train_error: Some(100.0 * wrong as f64 / order.len().max(1) as f64),
                test_error: evaluate_spiking(&mut net, test, spec.eval_steps())?,
            };
            on_epoch(&rec);
            record.push_epoch(rec);
        }
        if spec.eval_only {
            let rec = EpochRecord {
                epoch: 0,
                train_error: None,
                test_error: evaluate_spiking(&mut net, test, spec.eval_steps())?,
            };
            on_epoch(&rec);
            record.push_epoch(rec);
        }
        record.ops = ops;
        net.to_checkpoint()
    };
    record.wall_time_secs = started.elapsed().as_secs_f64();
    Ok(TrainOutcome { record, checkpoint })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Baseline,
    Fractional,
    DepthFirst,
    Smooth,
    SmoothFractional,
    ZeroReset,
    RandomReset,
    FiveSteps,
    TwentySteps,
}

impl Variant {
    pub const ALL: [Variant; 9] = [
        Variant::Baseline,
        Variant::Fractional,
        Variant::DepthFirst,
        Variant::Smooth,
        Variant::SmoothFractional,
        Variant::ZeroReset,
        Variant::RandomReset,
        Variant::FiveSteps,
        Variant::TwentySteps,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Baseline => "Baseline",
            Variant::Fractional => "Fractional Updates",
            Variant::DepthFirst => "Depth-First Propagation",
            Variant::Smooth => "Smooth Gradients",
            Variant::SmoothFractional => "Smooth & Fractional",
            Variant::ZeroReset => "Back-Quantization = Zero-Reset",
            Variant::RandomReset => "Back-Quantization = Random",
            Variant::FiveSteps => "5 Time Steps",
            Variant::TwentySteps => "20 Time Steps",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Fractional => "fractional",
            Variant::DepthFirst => "depth-first",
            Variant::Smooth => "smooth",
            Variant::SmoothFractional => "smooth-fractional",
            Variant::ZeroReset => "zero-reset",
            Variant::RandomReset => "random-reset",
            Variant::FiveSteps => "t5",
            Variant::TwentySteps => "t20",
        }
    }

    pub fn from_key(key: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.key() == key)
    }

    /// `base` with this one setting changed. The baseline uses plain SGD.
    pub fn apply(self, base: &RunSpec) -> RunSpec {
        let mut spec = base.clone();
        spec.oracle = false;
        let c = &mut spec.train;
        c.update_rule = UpdateRule::Sgd;
        match self {
            Variant::Baseline => {}
            Variant::Fractional => c.update_rule = UpdateRule::Fsgd,
            Variant::DepthFirst => c.routing = Scheme::DepthFirst,
            Variant::Smooth => c.smooth_gradients = true,
            Variant::SmoothFractional => {
                c.smooth_gradients = true;
                c.update_rule = UpdateRule::Fsgd;
            }
            Variant::ZeroReset => c.bwd_reset = ResetPolicy::ZeroReset,
            Variant::RandomReset => c.bwd_reset = ResetPolicy::Random,
            Variant::FiveSteps => c.t_steps = 5,
            Variant::TwentySteps => c.t_steps = 20,
        }
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub train_error: Option<f64>,
    pub test_error: f64,
}

/// Train every variant on the same data and report its final test error.
pub fn run_ablation<F>(base: &RunSpec, variants: &[Variant], train: &Dataset, test: &Dataset, mut on_row: F) -> Result<Vec<AblationRow>>
where
    F: FnMut(&AblationRow),
{
    let mut rows = Vec::new();
    for &v in variants {
        let spec = RunSpec {
            eval_t: None,
            ..v.apply(base)
        };
        let out = run_train(&spec, train, test, |_| {})?;
        let last = out.record.epochs.last().expect("at least one epoch");
        let row = AblationRow {
            variant: v,
            train_error: last.train_error,
            test_error: last.test_error,
        };
        on_row(&row);
        rows.push(row);
    }
    Ok(rows)
}

/// Direction checks on whichever variants are present. Returns one message per violation.
pub fn ablation_violations(rows: &[AblationRow]) -> Vec<String> {
    let err = |v: Variant| rows.iter().find(|r| r.variant == v).map(|r| r.test_error);
    let mut out = Vec::new();
    if let Some(e) = err(Variant::Baseline) {
        if e >= 15.0 {
            out.push(format!("baseline error {e:.2}% is not below 15%"));
        }
    }
    for v in [Variant::ZeroReset, Variant::DepthFirst] {
        if let Some(e) = err(v) {
            if e <= 50.0 {
                out.push(format!("{} error {e:.2}% does not exceed 50%", v.label()));
            }
        }
    }
    if let (Some(t5), Some(t20)) = (err(Variant::FiveSteps), err(Variant::TwentySteps)) {
        if t20 > t5 {
            out.push(format!("20-step error {t20:.2}% exceeds 5-step error {t5:.2}%"));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuessRow {
    pub model: String,
    /// Timestep of the snapshot; `None` for the dense reference points.
    pub t: Option<usize>,
    /// Mean flops per sample.
    pub ops: f64,
    pub error: f64,
}

/// Early-guess curves of spiking networks, plus the dense network's full and
/// zero-skipping costs for the `dense` weights.
pub fn early_guess(
    models: &[(String, Checkpoint)],
    dense: &Checkpoint,
    test: &Dataset,
    t_max: usize,
    checkpoints: &[usize],
    include_input_layer: bool,
) -> Result<Vec<GuessRow>> {
    let samples: Vec<(Vec<f64>, usize)> = (0..test.len()).map(|i| test.dense_sample(i)).collect();
    let mut rows = Vec::new();
    for (name, ckpt) in models {
        let mut net = SpikingNetwork::from_checkpoint(ckpt, TrainConfig::default())?;
        for p in early_guess_curve(&mut net, &samples, t_max, checkpoints, include_input_layer)? {
            rows.push(GuessRow {
                model: name.clone(),
                t: Some(p.t),
                ops: p.ops,
                error: p.error,
            });
        }
    }
    let net = DenseNet::from_checkpoint(dense)?;
    let skip = usize::from(!include_input_layer);
    let sizes = &dense.layer_sizes[skip..];
    let full = 2 * count_dense_cost(sizes, None)?;
    let mut sparse = 0u64;
    let mut wrong = 0;
    for (x, label) in &samples {
        let acts = net.forward(x)?;
        sparse += 2 * count_dense_cost(sizes, Some(&acts.inputs[skip..]))?;
        wrong += usize::from(argmax(acts.output()) != *label);
    }
    let n = samples.len().max(1) as f64;
    let error = 100.0 * wrong as f64 / n;
    rows.push(GuessRow {
        model: "dense-full".into(),
        t: None,
        ops: full as f64,
        error,
    });
    rows.push(GuessRow {
        model: "dense-sparse".into(),
        t: None,
        ops: sparse as f64 / n,
        error,
    });
    Ok(rows)
}

/// Largest rise of the curve between consecutive snapshots, in points.
pub fn max_error_rise(rows: &[GuessRow], model: &str) -> f64 {
    let errs: Vec<f64> = rows.iter().filter(|r| r.model == model && r.t.is_some()).map(|r| r.error).collect();
    errs.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
}
