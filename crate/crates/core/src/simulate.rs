//! Seeded generation of Markov binary sequences and study ensembles.
//!
//! Every sequence draws from its own ChaCha8 stream. `generate` uses
//! stream 0 of the seed; ensemble member `i` uses stream `i + 1`, so members
//! can be produced in any order, on any number of threads, with identical
//! results.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::MarkovParams;
use crate::dataset::{ScatterDataset, ScatterPoint};
use crate::error::{Error, Result};

const SIZES_STREAM: u64 = u64::MAX;

/// A binary measurement outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum State {
    /// The event occurred, coded 1.
    A,
    /// The event did not occur, coded 0.
    B,
}

impl State {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            State::A
        } else {
            State::B
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            State::A => 1,
            State::B => 0,
        }
    }

    /// Spin representation `2x - 1`.
    pub fn spin(self) -> i64 {
        match self {
            State::A => 1,
            State::B => -1,
        }
    }

    pub fn other(self) -> Self {
        match self {
            State::A => State::B,
            State::B => State::A,
        }
    }
}

/// A non-empty record of measurements, with optional provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinarySequence {
    states: Vec<State>,
    params_used: Option<MarkovParams>,
    seed: Option<u64>,
}

impl BinarySequence {
    pub fn new(states: Vec<State>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::EmptyInput(
                "binary sequence must have at least one state",
            ));
        }
        Ok(Self {
            states,
            params_used: None,
            seed: None,
        })
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn params_used(&self) -> Option<&MarkovParams> {
        self.params_used.as_ref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn count(&self, state: State) -> usize {
        self.states.iter().filter(|&&s| s == state).count()
    }

    /// Observed proportion of state A.
    pub fn frequency_a(&self) -> f64 {
        self.count(State::A) as f64 / self.len() as f64
    }

    /// `0`/`1` characters, one per state.
    pub fn to_bit_string(&self) -> String {
        self.states
            .iter()
            .map(|s| if *s == State::A { '1' } else { '0' })
            .collect()
    }
}

/// Infinite stream of states drawn from a chain.
pub struct StateStream<R> {
    params: MarkovParams,
    rng: R,
    prev: Option<State>,
}

impl<R: Rng> StateStream<R> {
    pub fn new(params: MarkovParams, rng: R) -> Self {
        Self {
            params,
            rng,
            prev: None,
        }
    }
}

impl<R: Rng> Iterator for StateStream<R> {
    type Item = State;

    fn next(&mut self) -> Option<State> {
        let prob_a = match self.prev {
            None => self.params.p1(),
            Some(State::A) => self.params.p(),
            Some(State::B) => 1.0 - self.params.q(),
        };
        let s = State::from_bit(self.rng.random::<f64>() < prob_a);
        self.prev = Some(s);
        Some(s)
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn member_rng(seed: u64, index: usize) -> ChaCha8Rng {
    stream_rng(seed, index as u64 + 1)
}

fn collect_sequence(
    params: MarkovParams,
    n: usize,
    seed: u64,
    rng: ChaCha8Rng,
) -> Result<BinarySequence> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "sequence length must be at least 1".into(),
        ));
    }
    Ok(BinarySequence {
        states: StateStream::new(params, rng).take(n).collect(),
        params_used: Some(params),
        seed: Some(seed),
    })
}

/// Draws a sequence of `n` states. Identical arguments give identical output.
pub fn generate(params: &MarkovParams, n: usize, seed: u64) -> Result<BinarySequence> {
    collect_sequence(*params, n, seed, stream_rng(seed, 0))
}

/// The `index`-th independent member sequence derived from `seed`, the same
/// one `ensemble` would use for that index.
pub fn generate_member(
    params: &MarkovParams,
    n: usize,
    seed: u64,
    index: usize,
) -> Result<BinarySequence> {
    collect_sequence(*params, n, seed, member_rng(seed, index))
}

/// One scatter point per requested size, each from an independent stream.
pub fn ensemble(params: &MarkovParams, sizes: &[u64], seed: u64) -> Result<ScatterDataset> {
    if sizes.is_empty() {
        return Err(Error::EmptyInput("ensemble needs at least one size"));
    }
    if sizes.contains(&0) {
        return Err(Error::InvalidArgument(
            "ensemble sizes must be at least 1".into(),
        ));
    }
    let params = *params;
    let points = sizes
        .par_iter()
        .enumerate()
        .map(|(i, &n)| {
            let hits = StateStream::new(params, member_rng(seed, i))
                .take(n as usize)
                .filter(|s| *s == State::A)
                .count();
            ScatterPoint::new(n, hits as f64 / n as f64)
        })
        .collect();
    ScatterDataset::new(points)
}

/// `count` study sizes drawn log-uniformly from `[min, max]`.
pub fn log_uniform_sizes(count: usize, min: u64, max: u64, seed: u64) -> Result<Vec<u64>> {
    if min == 0 || min > max {
        return Err(Error::InvalidArgument(format!(
            "bad size range [{min}, {max}]"
        )));
    }
    let mut rng = stream_rng(seed, SIZES_STREAM);
    let (lo, hi) = ((min as f64).ln(), (max as f64).ln());
    Ok((0..count)
        .map(|_| {
            let x = (lo + rng.random::<f64>() * (hi - lo)).exp().round() as u64;
            x.clamp(min, max)
        })
        .collect())
}

/// Finite-sample lag-`m` spin correlation `(1/(N-m)) sum s_i s_{i+m}`.
pub fn empirical_autocorrelation(seq: &BinarySequence, m: usize) -> Result<f64> {
    let n = seq.len();
    if m == 0 || m >= n {
        return Err(Error::InvalidArgument(format!(
            "lag {m} must satisfy 1 <= m < sequence length {n}"
        )));
    }
    let s = seq.states();
    let sum: i64 = s
        .iter()
        .zip(&s[m..])
        .map(|(x, y)| x.spin() * y.spin())
        .sum();
    Ok(sum as f64 / (n - m) as f64)
}

/// Sample mean and (n - 1) standard deviation of the `p_bar` values.
pub fn p_bar_moments(dataset: &ScatterDataset) -> (f64, f64) {
    let xs: Vec<f64> = dataset.points().iter().map(|p| p.p_bar).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
