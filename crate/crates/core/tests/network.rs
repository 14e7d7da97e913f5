use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smlp_core::metrics::{count_dense_cost, l1_distance, loglog_slope};
use smlp_core::net::{init_weights, one_hot, Node};
use smlp_core::routing::Phase;
use smlp_core::{Checkpoint, DenseNet, Matrix, ResetPolicy, Scheme, SpikingNetwork, TrainConfig, UpdateRule};

fn random_input(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0.0..1.0)).collect()
}

fn small_weights(sizes: &[usize], std: f64, seed: u64) -> Vec<Matrix> {
    init_weights(sizes, std, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn spiking_output_converges_to_dense_relu() {
    let sizes = [64, 64, 64, 8];
    let weights = small_weights(&sizes, 0.2, 4);
    let dense = DenseNet::new(weights.clone()).unwrap();
    let mut net = SpikingNetwork::from_weights(weights, TrainConfig::default()).unwrap();
    let x = random_input(64, 9);
    let target = dense.forward(&x).unwrap().output().to_vec();
    let norm: f64 = target.iter().map(|v| v.abs()).sum();

    let ts = [10.0, 100.0, 1000.0];
    let errs: Vec<f64> = ts
        .iter()
        .map(|&t| l1_distance(&net.forward_sample(&x, t as usize).unwrap(), &target) / norm)
        .collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    assert!(loglog_slope(&ts, &errs) <= -0.8, "{errs:?}");
}

#[test]
fn preactivation_is_weighted_spike_count() {
    let weights = small_weights(&[20, 15, 5], 0.3, 1);
    let mut net = SpikingNetwork::from_weights(weights.clone(), TrainConfig::default()).unwrap();
    net.forward_sample(&random_input(20, 3), 37).unwrap();
    for (layer, w) in net.layers().iter().zip(&weights) {
        let counts: Vec<f64> = layer.c_in().iter().map(|&c| c as f64).collect();
        let expected = w.vec_mul(&counts);
        for (a, b) in layer.c_preact().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn silent_units_block_error_spikes() {
    // The second hidden unit never receives input, so no error may cross it.
    let w0 = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
    let w1 = Matrix::from_rows(&[vec![1.0], vec![5.0]]).unwrap();
    let cfg = TrainConfig {
        eta: 0.0,
        ..TrainConfig::default()
    };
    let mut net = SpikingNetwork::from_weights(vec![w0, w1], cfg).unwrap();
    for _ in 0..5 {
        net.train_iteration(&[1.0], &[-3.0]).unwrap();
        assert_eq!(net.layers()[0].c_error()[1], 0);
        assert_ne!(net.layers()[1].c_error()[0], 0);
    }
}

#[test]
fn zero_learning_rate_leaves_weights_unchanged() {
    for rule in [UpdateRule::Sgd, UpdateRule::Fsgd] {
        let weights = small_weights(&[6, 5, 3], 0.3, 2);
        let cfg = TrainConfig {
            eta: 0.0,
            update_rule: rule,
            ..TrainConfig::default()
        };
        let mut net = SpikingNetwork::from_weights(weights.clone(), cfg).unwrap();
        net.train_iteration(&random_input(6, 1), &one_hot(1, 3)).unwrap();
        assert_eq!(net.weights(), weights);
    }
}

#[test]
fn training_is_deterministic_per_seed() {
    let run = |seed| {
        let cfg = TrainConfig {
            seed,
            bwd_reset: ResetPolicy::Random,
            update_rule: UpdateRule::Fsgd,
            eta: 0.01,
            ..TrainConfig::default()
        };
        let mut net = SpikingNetwork::new(&[10, 8, 3], 0.1, cfg).unwrap();
        for k in 0..20 {
            net.train_iteration(&random_input(10, k), &one_hot(k as usize % 3, 3)).unwrap();
        }
        net.to_checkpoint().to_bytes()
    };
    assert_eq!(run(3), run(3));
    assert_ne!(run(3), run(4));
}

fn toy_set() -> Vec<(Vec<f64>, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    (0..10)
        .map(|k| {
            let label = k % 2;
            let (hi, lo) = (rng.random_range(0.7..1.0), rng.random_range(0.0..0.3));
            let x = if label == 0 { vec![hi, lo] } else { vec![lo, hi] };
            (x, label)
        })
        .collect()
}

#[test]
fn separable_toy_set_is_learned_in_20_iterations() {
    let data = toy_set();
    for rule in [UpdateRule::Sgd, UpdateRule::Fsgd] {
        let cfg = TrainConfig {
            eta: 0.05,
            update_rule: rule,
            ..TrainConfig::default()
        };
        let mut net = SpikingNetwork::new(&[2, 2], 0.01, cfg).unwrap();
        for (x, label) in data.iter().cycle().take(20) {
            net.train_iteration(x, &one_hot(*label, 2)).unwrap();
        }
        for (x, label) in &data {
            assert_eq!(net.predict(x, 10).unwrap(), *label, "{rule:?} on {x:?}");
        }
    }
}

#[test]
fn fsgd_equals_sgd_when_inputs_are_complete() {
    // One input unit firing every step; error spikes only from the last step on.
    let w = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
    let run = |rule| {
        let cfg = TrainConfig {
            t_steps: 1,
            eta: 0.1,
            update_rule: rule,
            ..TrainConfig::default()
        };
        let mut net = SpikingNetwork::from_weights(vec![w.clone()], cfg).unwrap();
        net.train_iteration(&[1.0], &[1.0, -2.0]).unwrap();
        net.weights()
    };
    assert_eq!(run(UpdateRule::Sgd), run(UpdateRule::Fsgd));
}

#[test]
fn checkpoints_transplant_losslessly() {
    let weights = small_weights(&[12, 9, 4], 0.2, 8);
    let dense = DenseNet::new(weights.clone()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.ckpt");
    dense.to_checkpoint().save(&path).unwrap();

    let loaded = Checkpoint::load(&path).unwrap();
    let net = SpikingNetwork::from_checkpoint(&loaded, TrainConfig::default()).unwrap();
    assert_eq!(net.weights(), weights);
    let back = DenseNet::from_checkpoint(&net.to_checkpoint()).unwrap();
    assert_eq!(back, dense);
    assert_eq!(Checkpoint::from_bytes(&loaded.to_bytes()).unwrap(), loaded);
}

#[test]
fn spike_log_replays_forward_cost() {
    let sizes = [30, 20, 10, 4];
    let mut net = SpikingNetwork::from_weights(small_weights(&sizes, 0.3, 5), TrainConfig::default()).unwrap();
    net.enable_spike_log();
    net.reset_counters();
    net.forward_sample(&random_input(30, 6), 25).unwrap();
    let log = net.take_spike_log();
    assert!(!log.is_empty());

    let mut replay = vec![0u64; sizes.len() - 1];
    for rec in &log {
        replay[rec.layer] += sizes[rec.layer + 1] as u64;
    }
    let counted: Vec<u64> = net.forward_ops().iter().map(|c| c.additions).collect();
    assert_eq!(replay, counted);
    assert!(counted.iter().sum::<u64>() > 0);
}

#[test]
fn dense_cost_is_sum_of_layer_products() {
    assert_eq!(count_dense_cost(&[784, 300, 300, 10], None).unwrap(), 328_200);
    assert_eq!(
        count_dense_cost(&[3, 2, 1], Some(&[vec![1.0, 0.0, 2.0], vec![0.0, 0.0]])).unwrap(),
        4
    );
}

#[test]
fn backward_never_interleaves_with_forward() {
    let mut net = SpikingNetwork::new(&[16, 12, 4], 0.2, TrainConfig::default()).unwrap();
    net.enable_event_trace();
    for k in 0..100 {
        net.train_iteration(&random_input(16, k), &one_hot(k as usize % 4, 4)).unwrap();
        let trace = net.take_event_trace();
        let mut seen_backward = false;
        let mut steps = 0;
        for d in &trace {
            match d.target {
                Node::Layer(_) if d.producer == Node::Input => {
                    if seen_backward {
                        steps += 1;
                    }
                    seen_backward = false;
                    assert_eq!(d.phase, Phase::Forward);
                }
                Node::Layer(_) => assert!(!seen_backward, "forward spike after backward events"),
                Node::Error(_) | Node::Update(_) => {
                    seen_backward = true;
                    assert_eq!(d.phase, Phase::Backward);
                }
                other => panic!("unexpected target {other}"),
            }
        }
        assert!(steps <= 10);
    }
}

#[test]
fn depth_first_forward_pass_matches_breadth_first() {
    let weights = small_weights(&[20, 16, 6], 0.3, 12);
    let x = random_input(20, 2);
    let out = |routing| {
        let cfg = TrainConfig {
            routing,
            ..TrainConfig::default()
        };
        let mut net = SpikingNetwork::from_weights(weights.clone(), cfg).unwrap();
        net.forward_sample(&x, 200).unwrap()
    };
    let (bf, df) = (out(Scheme::BreadthFirst), out(Scheme::DepthFirst));
    assert!(l1_distance(&bf, &df) < 0.1, "{bf:?} vs {df:?}");
}
