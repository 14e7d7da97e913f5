//! Cost accounting, error metrics, and experiment records.
//!
//! Flops are logical: one addition is one flop and one multiply-add is two.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::SpikingNetwork;

pub const FLOP_DEFINITION: &str = "1 addition = 1 flop; 1 multiply-add = 2 flops";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounter {
    pub additions: u64,
    pub multiply_adds: u64,
    pub comparisons: u64,
}

impl OpCounter {
    /// One spike delivered into a layer of `fanout` units costs one row addition.
    pub fn count_spike_cost(&mut self, fanout: usize) {
        self.additions += fanout as u64;
    }

    pub fn flops(&self) -> u64 {
        self.additions + 2 * self.multiply_adds
    }

    pub fn merged(&self, other: &OpCounter) -> OpCounter {
        OpCounter {
            additions: self.additions + other.additions,
            multiply_adds: self.multiply_adds + other.multiply_adds,
            comparisons: self.comparisons + other.comparisons,
        }
    }
}

/// Multiply-adds of a dense forward pass. With `activations` (the input to
/// each weight matrix, starting with the network input), sources with zero
/// activation are skipped.
pub fn count_dense_cost(layer_sizes: &[usize], activations: Option<&[Vec<f64>]>) -> Result<u64> {
    let pairs = layer_sizes.windows(2);
    match activations {
        None => Ok(pairs.map(|p| (p[0] * p[1]) as u64).sum()),
        Some(acts) => {
            if acts.len() + 1 < layer_sizes.len() {
                return Err(Error::invalid(format!(
                    "need {} activation vectors, got {}",
                    layer_sizes.len() - 1,
                    acts.len()
                )));
            }
            pairs
                .zip(acts)
                .map(|(p, a)| {
                    if a.len() != p[0] {
                        return Err(Error::DimensionMismatch {
                            context: "dense cost activations",
                            expected: p[0],
                            got: a.len(),
                        });
                    }
                    let active = a.iter().filter(|&&v| v != 0.0).count();
                    Ok((active * p[1]) as u64)
                })
                .sum()
        }
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Percentage of mismatched predictions.
pub fn error_rate(predictions: &[usize], labels: &[usize]) -> f64 {
    assert_eq!(predictions.len(), labels.len());
    if labels.is_empty() {
        return 0.0;
    }
    let wrong = predictions.iter().zip(labels).filter(|(p, l)| p != l).count();
    100.0 * wrong as f64 / labels.len() as f64
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Timestep of the snapshot.
    pub t: usize,
    /// Mean flops per sample spent up to this timestep.
    pub ops: f64,
    /// Percent error of `argmax(u)` at this timestep.
    pub error: f64,
}

/// Error of early guesses versus computation spent. At every checkpoint
/// timestep the prediction `argmax(u)` is scored and paired with the mean
/// forward flops per sample so far; `include_input_layer = false` drops the
/// cost of spikes delivered into the first weight layer.
pub fn early_guess_curve(
    net: &mut SpikingNetwork,
    samples: &[(Vec<f64>, usize)],
    t_max: usize,
    checkpoints: &[usize],
    include_input_layer: bool,
) -> Result<Vec<CurvePoint>> {
    if let Some(&bad) = checkpoints.iter().find(|&&c| c == 0 || c > t_max) {
        return Err(Error::invalid(format!("checkpoint {bad} outside 1..={t_max}")));
    }
    let mut wrong = vec![0usize; checkpoints.len()];
    let mut flops = vec![0u64; checkpoints.len()];
    for (x, label) in samples {
        net.reset_counters();
        net.forward_sample_with(x, t_max, |t, net| {
            for (k, _) in checkpoints.iter().enumerate().filter(|(_, &c)| c == t) {
                if argmax(net.output_sum()) != *label {
                    wrong[k] += 1;
                }
                let skip = usize::from(!include_input_layer);
                flops[k] += net.forward_ops().iter().skip(skip).map(OpCounter::flops).sum::<u64>();
            }
        })?;
    }
    let n = samples.len().max(1) as f64;
    Ok(checkpoints
        .iter()
        .enumerate()
        .map(|(k, &t)| CurvePoint {
            t,
            ops: flops[k] as f64 / n,
            error: 100.0 * wrong[k] as f64 / n,
        })
        .collect())
}

/// CSV `ops,error` (plus the timestep) for plotting.
pub fn write_curve_csv<W: Write>(curve: &[CurvePoint], mut w: W) -> std::io::Result<()> {
    writeln!(w, "t,ops,error")?;
    for p in curve {
        writeln!(w, "{},{},{}", p.t, p.ops, p.error)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Percent of training samples misclassified while they were trained on;
    /// absent for evaluation-only runs.
    pub train_error: Option<f64>,
    pub test_error: f64,
}

/// Serialized output of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub config: serde_json::Value,
    pub config_hash: String,
    pub flop_definition: String,
    pub epochs: Vec<EpochRecord>,
    pub curve: Vec<CurvePoint>,
    pub ops: OpCounter,
    pub wall_time_secs: f64,
}

impl ExperimentRecord {
    pub fn new(config: serde_json::Value, config_hash: String) -> Self {
        Self {
            config,
            config_hash,
            flop_definition: FLOP_DEFINITION.to_string(),
            epochs: Vec::new(),
            curve: Vec::new(),
            ops: OpCounter::default(),
            wall_time_secs: 0.0,
        }
    }

    pub fn push_epoch(&mut self, epoch: EpochRecord) {
        debug_assert!(self.epochs.last().is_none_or(|e| e.epoch < epoch.epoch));
        self.epochs.push(epoch);
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_cost_formula() {
        assert_eq!(count_dense_cost(&[784, 300, 300, 10], None).unwrap(), 328_200);
        assert_eq!(count_dense_cost(&[2, 3], None).unwrap(), 6);
        assert_eq!(count_dense_cost(&[2, 3], Some(&[vec![0.0, 0.7]])).unwrap(), 3);
        assert!(count_dense_cost(&[2, 3], Some(&[vec![0.0]])).is_err());
    }

    #[test]
    fn spike_cascade_cost() {
        let mut c = OpCounter::default();
        for fanout in [300, 300, 10] {
            c.count_spike_cost(fanout);
        }
        assert_eq!(c.additions, 610);
        assert_eq!(OpCounter::default().flops(), 0);
    }

    #[test]
    fn flops_weigh_multiply_adds_double() {
        let c = OpCounter {
            additions: 5,
            multiply_adds: 3,
            comparisons: 100,
        };
        assert_eq!(c.flops(), 11);
        assert_eq!(c.merged(&c).additions, 10);
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [10.0, 100.0, 1000.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        assert!((loglog_slope(&xs, &ys) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn record_round_trip() {
        let mut r = ExperimentRecord::new(serde_json::json!({"t": 10}), "abc".into());
        r.push_epoch(EpochRecord {
            epoch: 1,
            train_error: Some(12.5),
            test_error: 13.25,
        });
        r.curve.push(CurvePoint {
            t: 3,
            ops: 1234.5,
            error: 40.0,
        });
        r.wall_time_secs = 0.1 + 0.2;
        let back = ExperimentRecord::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn error_rate_percent() {
        assert_eq!(error_rate(&[1, 2, 3, 4], &[1, 2, 0, 0]), 50.0);
    }
}
