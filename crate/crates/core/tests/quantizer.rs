use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smlp_core::quant::{
    quantize_stream, quantize_vector, reconstruct, rect_spike_count_closed_form, stochastic_sample_vector,
};
use smlp_core::{QuantMode, Quantizer, Sign};

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn running_sum_tracks_input_within_half_width(
        v in prop::collection::vec(-2.0f64..2.0, 1..128),
        t_steps in 1usize..100,
    ) {
        let mut q = Quantizer::signed(v.len());
        let mut decoded = vec![0.0; v.len()];
        for t in 1..=t_steps {
            for s in q.step(&v).unwrap() {
                decoded[s.source] += s.sign.as_f64();
            }
            let target: Vec<f64> = v.iter().map(|x| x * t as f64).collect();
            prop_assert!(l1(&target, &decoded) < v.len() as f64 / 2.0);
        }
    }

    #[test]
    fn potential_equals_residual(
        v in prop::collection::vec(-2.0f64..2.0, 1..32),
        t_steps in 1usize..50,
    ) {
        let mut q = Quantizer::signed(v.len());
        let mut decoded = vec![0.0; v.len()];
        for _ in 0..t_steps {
            for s in q.step(&v).unwrap() {
                decoded[s.source] += s.sign.as_f64();
            }
        }
        for i in 0..v.len() {
            let residual = v[i] * t_steps as f64 - decoded[i];
            prop_assert!((residual - q.phi()[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn rectified_count_matches_closed_form(
        stream in prop::collection::vec(prop::collection::vec(-1.5f64..1.5, 4), 1..40),
    ) {
        let (train, _) = quantize_stream(stream.iter().map(Vec::as_slice), 4, QuantMode::Rectified).unwrap();
        for unit in 0..4 {
            let simulated = train.spikes().iter().filter(|(_, s)| s.source == unit).count() as u64;
            prop_assert_eq!(simulated, rect_spike_count_closed_form(&stream, unit).unwrap());
        }
        prop_assert!(train.spikes().iter().all(|(_, s)| s.sign == Sign::Pos));
    }
}

#[test]
fn deterministic_error_shrinks_like_one_over_t() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let v: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut errors = Vec::new();
    for t in [10, 100, 1000] {
        let train = quantize_vector(&v, t, QuantMode::Signed).unwrap();
        errors.push(l1(&reconstruct(&train, 64, t).unwrap(), &v));
    }
    assert!(errors[0] < 32.0 / 10.0 && errors[1] < 32.0 / 100.0 && errors[2] < 32.0 / 1000.0);
    assert!(errors[2] < errors[0]);
}

#[test]
fn stochastic_baseline_is_noisier_than_herding() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let v: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
    let t = 1000;
    let det = l1(&reconstruct(&quantize_vector(&v, t, QuantMode::Signed).unwrap(), 64, t).unwrap(), &v);
    let sto = l1(&reconstruct(&stochastic_sample_vector(&v, t, 3).unwrap(), 64, t).unwrap(), &v);
    assert!(sto > 5.0 * det, "stochastic {sto} vs deterministic {det}");
}

#[test]
fn closed_form_counts_on_random_streams() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let len = rng.random_range(1..60);
        let stream: Vec<Vec<f64>> = (0..len).map(|_| vec![rng.random_range(-1.0..1.2)]).collect();
        let (train, q) = quantize_stream(stream.iter().map(Vec::as_slice), 1, QuantMode::Rectified).unwrap();
        assert_eq!(train.len() as u64, rect_spike_count_closed_form(&stream, 0).unwrap());
        assert!(q.phi()[0] <= 0.5);
    }
}
