//! Signed-spike quantizers.
//!
//! A [`Quantizer`] holds a potential vector `phi`. Each [`Quantizer::step`]
//! adds an input vector to `phi` and then drains it: while some potential is
//! above the firing threshold, the unit with the largest potential fires a
//! unit spike and its potential is moved back toward zero by one. The signed
//! mode fires in both directions and behaves like a discrete-time,
//! bidirectional delta-sigma modulator; the rectified mode only fires on
//! positive crossings and its spike rate tracks `max(0, mean input)`.

use std::fmt;
use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};

/// Potentials strictly above this magnitude fire.
pub const THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Pos,
    Neg,
}

impl Sign {
    pub fn value(self) -> i64 {
        match self {
            Sign::Pos => 1,
            Sign::Neg => -1,
        }
    }

    pub fn as_f64(self) -> f64 {
        self.value() as f64
    }

    pub fn of(x: f64) -> Sign {
        if x < 0.0 {
            Sign::Neg
        } else {
            Sign::Pos
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// A unit event: which unit fired and in which direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignedSpike {
    pub source: usize,
    pub sign: Sign,
}

impl SignedSpike {
    pub fn new(source: usize, sign: Sign) -> Self {
        Self { source, sign }
    }

    pub fn pos(source: usize) -> Self {
        Self::new(source, Sign::Pos)
    }

    pub fn neg(source: usize) -> Self {
        Self::new(source, Sign::Neg)
    }
}

impl fmt::Display for SignedSpike {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{:+})", self.source, self.sign.value())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantMode {
    Signed,
    Rectified,
}

/// What happens to a quantizer's potentials at the start of a training iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResetPolicy {
    ZeroReset,
    #[default]
    NoReset,
    /// Each potential drawn uniformly from `[-1/2, 1/2]`.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quantizer {
    phi: Vec<f64>,
    mode: QuantMode,
    reset: ResetPolicy,
}

impl Quantizer {
    pub fn new(width: usize, mode: QuantMode) -> Self {
        Self {
            phi: vec![0.0; width],
            mode,
            reset: ResetPolicy::ZeroReset,
        }
    }

    pub fn signed(width: usize) -> Self {
        Self::new(width, QuantMode::Signed)
    }

    pub fn rectified(width: usize) -> Self {
        Self::new(width, QuantMode::Rectified)
    }

    pub fn with_reset(mut self, reset: ResetPolicy) -> Self {
        self.reset = reset;
        self
    }

    pub fn width(&self) -> usize {
        self.phi.len()
    }

    pub fn mode(&self) -> QuantMode {
        self.mode
    }

    pub fn reset_policy(&self) -> ResetPolicy {
        self.reset
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn set_phi(&mut self, phi: &[f64]) -> Result<()> {
        check_len("quantizer potentials", self.phi.len(), phi.len())?;
        self.phi.copy_from_slice(phi);
        Ok(())
    }

    /// Zero every potential regardless of policy.
    pub fn clear(&mut self) {
        self.phi.iter_mut().for_each(|p| *p = 0.0);
    }

    /// Apply the reset policy at an iteration boundary.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        match self.reset {
            ResetPolicy::ZeroReset => self.clear(),
            ResetPolicy::NoReset => {}
            ResetPolicy::Random => {
                for p in &mut self.phi {
                    *p = rng.random_range(-THRESHOLD..=THRESHOLD);
                }
            }
        }
    }

    /// One timestep: integrate `v`, then drain. Returns the spikes in emission order.
    pub fn step(&mut self, v: &[f64]) -> Result<Vec<SignedSpike>> {
        check_len("quantizer input", self.phi.len(), v.len())?;
        check_finite(v)?;
        let mut out = Vec::new();
        self.integrate(v);
        self.drain_into(&mut out);
        Ok(out)
    }

    /// Integrate a sparse input (`(index, value)` pairs) and drain. Only touched
    /// units can be above threshold, so the drain is restricted to them.
    pub fn step_sparse(&mut self, v: &[(usize, f64)], out: &mut Vec<SignedSpike>) -> Result<usize> {
        for &(i, x) in v {
            if i >= self.phi.len() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    width: self.phi.len(),
                });
            }
            if !x.is_finite() {
                return Err(Error::NonFinite { index: i });
            }
        }
        for &(i, x) in v {
            self.phi[i] += x;
        }
        let mut checks = 0;
        loop {
            checks += 1;
            let mut best: Option<(usize, f64)> = None;
            for &(i, _) in v {
                let m = self.magnitude(i);
                // Lowest index wins ties, matching the dense scan.
                let better = match best {
                    None => m > THRESHOLD,
                    Some((bi, bm)) => m > bm || (m == bm && i < bi),
                };
                if better {
                    best = Some((i, m));
                }
            }
            match best {
                Some((i, _)) => out.push(self.fire(i)),
                None => return Ok(checks),
            }
        }
    }

    /// `phi += v` without draining. Callers must check lengths.
    pub fn integrate(&mut self, v: &[f64]) {
        debug_assert_eq!(v.len(), self.phi.len());
        for (p, x) in self.phi.iter_mut().zip(v) {
            *p += x;
        }
    }

    /// `phi += scale * v`.
    pub fn integrate_scaled(&mut self, scale: f64, v: &[f64]) {
        debug_assert_eq!(v.len(), self.phi.len());
        for (p, x) in self.phi.iter_mut().zip(v) {
            *p += scale * x;
        }
    }

    /// Fire until no potential is above threshold. Returns the number of
    /// threshold checks performed (one per loop-condition evaluation).
    pub fn drain_into(&mut self, out: &mut Vec<SignedSpike>) -> usize {
        let mut checks = 0;
        loop {
            checks += 1;
            match self.argmax() {
                Some(i) if self.magnitude(i) > THRESHOLD && self.phi[i].is_finite() => out.push(self.fire(i)),
                _ => return checks,
            }
        }
    }

    fn magnitude(&self, i: usize) -> f64 {
        match self.mode {
            QuantMode::Signed => self.phi[i].abs(),
            QuantMode::Rectified => self.phi[i],
        }
    }

    fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.phi.len() {
            let m = self.magnitude(i);
            if best.is_none_or(|(_, bm)| m > bm) {
                best = Some((i, m));
            }
        }
        best.map(|(i, _)| i)
    }

    fn fire(&mut self, i: usize) -> SignedSpike {
        let sign = match self.mode {
            QuantMode::Signed => Sign::of(self.phi[i]),
            QuantMode::Rectified => Sign::Pos,
        };
        self.phi[i] -= sign.as_f64();
        SignedSpike::new(i, sign)
    }
}

/// Spikes tagged with the (1-based) timestep on which they fired.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpikeTrain {
    spikes: Vec<(usize, SignedSpike)>,
}

impl SpikeTrain {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a spike. Timesteps must be non-decreasing.
    pub fn push(&mut self, t: usize, spike: SignedSpike) {
        debug_assert!(self.spikes.last().is_none_or(|&(last, _)| last <= t));
        self.spikes.push((t, spike));
    }

    pub fn spikes(&self) -> &[(usize, SignedSpike)] {
        &self.spikes
    }

    pub fn len(&self) -> usize {
        self.spikes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spikes.is_empty()
    }

    pub fn at(&self, t: usize) -> impl Iterator<Item = SignedSpike> + '_ {
        self.spikes.iter().filter(move |(ts, _)| *ts == t).map(|&(_, s)| s)
    }

    /// CSV with header `t,source,sign`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,source,sign")?;
        for (t, s) in &self.spikes {
            writeln!(w, "{},{},{}", t, s.source, s.sign.value())?;
        }
        Ok(())
    }
}

/// Run `t_steps` steps of a fresh quantizer on the constant input `v`.
pub fn quantize_vector(v: &[f64], t_steps: usize, mode: QuantMode) -> Result<SpikeTrain> {
    let stream = std::iter::repeat_n(v, t_steps);
    let (train, _) = quantize_stream(stream, v.len(), mode)?;
    Ok(train)
}

/// Quantize a stream of vectors, one per timestep. Also returns the final quantizer.
pub fn quantize_stream<'a, I>(stream: I, width: usize, mode: QuantMode) -> Result<(SpikeTrain, Quantizer)>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut q = Quantizer::new(width, mode);
    let mut train = SpikeTrain::new();
    let mut steps = 0;
    for (t, v) in stream.into_iter().enumerate() {
        for s in q.step(v)? {
            train.push(t + 1, s);
        }
        steps += 1;
    }
    if steps == 0 {
        return Err(Error::invalid("number of timesteps must be at least 1"));
    }
    Ok((train, q))
}

/// Poisson baseline: each step draws `N ~ Poisson(sum |v|)` spikes, each from
/// unit `i` with probability `|v_i| / sum |v|` and carrying the sign of `v_i`.
pub fn stochastic_sample_vector(v: &[f64], t_steps: usize, seed: u64) -> Result<SpikeTrain> {
    if t_steps == 0 {
        return Err(Error::invalid("number of timesteps must be at least 1"));
    }
    check_finite(v)?;
    let mut train = SpikeTrain::new();
    let mag: f64 = v.iter().map(|x| x.abs()).sum();
    if mag == 0.0 {
        return Ok(train);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poisson = Poisson::new(mag).map_err(|e| Error::invalid(format!("poisson rate {mag}: {e}")))?;
    let index = WeightedIndex::new(v.iter().map(|x| x.abs()))
        .map_err(|e| Error::invalid(format!("sampling weights: {e}")))?;
    for t in 1..=t_steps {
        let n = poisson.sample(&mut rng) as u64;
        for _ in 0..n {
            let i = index.sample(&mut rng);
            train.push(t, SignedSpike::new(i, Sign::of(v[i])));
        }
    }
    Ok(train)
}

/// `(1/T) Σ e_{source} · sign` over the train.
pub fn reconstruct(train: &SpikeTrain, width: usize, t_steps: usize) -> Result<Vec<f64>> {
    if t_steps == 0 {
        return Err(Error::invalid("cannot reconstruct over zero timesteps"));
    }
    let mut out = vec![0.0; width];
    for (_, s) in train.spikes() {
        if s.source >= width {
            return Err(Error::IndexOutOfRange {
                index: s.source,
                width,
            });
        }
        out[s.source] += s.sign.as_f64();
    }
    let inv = 1.0 / t_steps as f64;
    out.iter_mut().for_each(|x| *x *= inv);
    Ok(out)
}

/// Number of spikes a fresh rectified quantizer emits from unit `unit` over
/// the stream: `max(0, floor(max_{T'} Σ_{t≤T'} v_t[unit] + 1/2))`.
pub fn rect_spike_count_closed_form(stream: &[Vec<f64>], unit: usize) -> Result<u64> {
    if stream.is_empty() {
        return Err(Error::invalid("stream must be nonempty"));
    }
    let mut cum = 0.0;
    let mut best = f64::NEG_INFINITY;
    for v in stream {
        let x = *v.get(unit).ok_or(Error::IndexOutOfRange {
            index: unit,
            width: v.len(),
        })?;
        cum += x;
        best = best.max(cum);
    }
    Ok((best + THRESHOLD).floor().max(0.0) as u64)
}
