//! Runs: maximal stretches of one state.
//!
//! Persistence lengthens runs and anti-persistence shortens them. Run
//! histograms are extracted from sequences with the first and last runs kept
//! at their observed (possibly truncated) length.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::chain::{int_pow, MarkovParams};
use crate::error::{Error, Result};
use crate::simulate::{BinarySequence, State};

/// Counts of runs of one state by run length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunHistogram {
    pub state: State,
    pub counts: BTreeMap<usize, u64>,
    /// Length of the source sequence.
    pub total_length: usize,
}

impl RunHistogram {
    pub fn new(state: State, total_length: usize) -> Self {
        Self {
            state,
            counts: BTreeMap::new(),
            total_length,
        }
    }

    pub fn from_counts(
        state: State,
        total_length: usize,
        counts: impl IntoIterator<Item = (usize, u64)>,
    ) -> Self {
        let mut h = Self::new(state, total_length);
        for (m, c) in counts {
            if c > 0 {
                *h.counts.entry(m).or_default() += c;
            }
        }
        h
    }

    pub fn count(&self, m: usize) -> u64 {
        self.counts.get(&m).copied().unwrap_or(0)
    }

    pub fn num_runs(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Number of positions covered by these runs.
    pub fn covered(&self) -> u64 {
        self.counts.iter().map(|(&m, &c)| m as u64 * c).sum()
    }

    pub fn max_len(&self) -> Option<usize> {
        self.counts.keys().next_back().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Run histograms of `(A, B)`.
pub fn extract_runs(seq: &BinarySequence) -> (RunHistogram, RunHistogram) {
    let n = seq.len();
    let mut a = RunHistogram::new(State::A, n);
    let mut b = RunHistogram::new(State::B, n);
    let states = seq.states();
    let mut start = 0;
    for i in 1..=n {
        if i == n || states[i] != states[start] {
            let hist = if states[start] == State::A {
                &mut a
            } else {
                &mut b
            };
            *hist.counts.entry(i - start).or_default() += 1;
            start = i;
        }
    }
    (a, b)
}

fn check_run_domain(n: usize, m: usize) -> Result<()> {
    if m == 0 || m + 2 > n {
        return Err(Error::InvalidArgument(format!(
            "run length {m} outside 1..={} for sequence length {n}",
            n.saturating_sub(2)
        )));
    }
    Ok(())
}

/// Expected number of runs (both states together) of length `m` in a
/// memory-free sequence of length `n` with frequency `p_bar` of A.
pub fn expected_runs_memoryfree(n: usize, p_bar: f64, m: usize) -> Result<f64> {
    check_run_domain(n, m)?;
    if !(p_bar > 0.0 && p_bar < 1.0) {
        return Err(Error::InvalidParameter {
            name: "p_bar",
            value: p_bar,
            reason: "must lie in the open interval (0, 1)",
        });
    }
    let r = 1.0 - p_bar;
    let k = m as u64;
    Ok((n - m - 1) as f64 * (p_bar * p_bar * int_pow(r, k) + r * r * int_pow(p_bar, k)))
}

/// Expected number of runs of `state` of length exactly `m` in a stationary
/// chain of length `n`: positions times the probability that a position
/// starts such a run.
pub fn expected_runs_markov(
    params: &MarkovParams,
    n: usize,
    m: usize,
    state: State,
) -> Result<f64> {
    check_run_domain(n, m)?;
    let pinf = params.derive().pinf;
    let (stay, other_stay, other_freq) = match state {
        State::A => (params.p(), params.q(), 1.0 - pinf),
        State::B => (params.q(), params.p(), pinf),
    };
    let enter = other_freq * (1.0 - other_stay);
    Ok((n - m - 1) as f64 * enter * int_pow(stay, m as u64 - 1) * (1.0 - stay))
}

/// Normalized run-length frequencies of one state, with every bin from 1 to
/// the longest observed run present (zero bins included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunCurve {
    pub state: State,
    pub freqs: BTreeMap<usize, f64>,
}

impl RunCurve {
    pub fn new(state: State, freqs: BTreeMap<usize, f64>) -> Self {
        Self { state, freqs }
    }

    pub fn get(&self, m: usize) -> f64 {
        self.freqs.get(&m).copied().unwrap_or(0.0)
    }

    pub fn max_len(&self) -> Option<usize> {
        self.freqs.keys().next_back().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// Mean run length under the curve.
    pub fn mean_length(&self) -> f64 {
        let total: f64 = self.freqs.values().sum();
        self.freqs.iter().map(|(&m, &f)| m as f64 * f).sum::<f64>() / total
    }

    /// Fraction of run positions that continue the run,
    /// `sum (m - 1) f(m) / sum m f(m)`.
    pub fn continuation_estimate(&self) -> Result<f64> {
        continuation_ratio(self.freqs.iter().map(|(&m, &f)| (m, f)))
    }
}

pub(crate) fn continuation_ratio(bins: impl Iterator<Item = (usize, f64)>) -> Result<f64> {
    let (mut cont, mut pos) = (0.0, 0.0);
    for (m, w) in bins {
        cont += (m as f64 - 1.0) * w;
        pos += m as f64 * w;
    }
    if pos <= 0.0 {
        return Err(Error::EmptyInput("no runs observed"));
    }
    Ok(cont / pos)
}

/// Averages raw counts bin-wise over the histograms, then normalizes so the
/// frequencies sum to one.
pub fn average_and_normalize(histograms: &[RunHistogram]) -> Result<RunCurve> {
    let first = histograms
        .first()
        .ok_or(Error::EmptyInput("no histograms to average"))?;
    if histograms.iter().any(|h| h.state != first.state) {
        return Err(Error::InvalidArgument("histograms mix states".into()));
    }
    let max_len = histograms
        .iter()
        .filter_map(RunHistogram::max_len)
        .max()
        .ok_or(Error::EmptyInput("histograms contain no runs"))?;
    let k = histograms.len() as f64;
    let averaged: Vec<f64> = (1..=max_len)
        .map(|m| histograms.iter().map(|h| h.count(m) as f64).sum::<f64>() / k)
        .collect();
    let total: f64 = averaged.iter().sum();
    let freqs = averaged
        .into_iter()
        .enumerate()
        .map(|(i, c)| (i + 1, c / total))
        .collect();
    Ok(RunCurve::new(first.state, freqs))
}

/// Normalized expected run-length curve of `state` for bins `1..=max_m`,
/// normalized over the whole admissible range `1..=n-2`.
pub fn model_curve(
    params: &MarkovParams,
    n: usize,
    state: State,
    max_m: usize,
) -> Result<RunCurve> {
    check_run_domain(n, 1)?;
    let mut total = 0.0;
    let mut freqs = BTreeMap::new();
    for m in 1..=n - 2 {
        let e = expected_runs_markov(params, n, m, state)?;
        total += e;
        if m <= max_m {
            freqs.insert(m, e);
        } else if e < total * 1e-17 {
            break;
        }
    }
    for f in freqs.values_mut() {
        *f /= total;
    }
    Ok(RunCurve::new(state, freqs))
}

/// Memory-free reference curve (both states pooled), normalized over
/// `1..=n-2`, for bins `1..=max_m`.
pub fn memoryfree_curve(n: usize, p_bar: f64, max_m: usize) -> Result<BTreeMap<usize, f64>> {
    check_run_domain(n, 1)?;
    let mut total = 0.0;
    let mut out = BTreeMap::new();
    for m in 1..=n - 2 {
        let e = expected_runs_memoryfree(n, p_bar, m)?;
        total += e;
        if m <= max_m {
            out.insert(m, e);
        } else if e < total * 1e-17 {
            break;
        }
    }
    for f in out.values_mut() {
        *f /= total;
    }
    Ok(out)
}

/// Runs of both states pooled, averaged over sequences and normalized, for
/// comparison with [`memoryfree_curve`].
pub fn pooled_curve(a: &[RunHistogram], b: &[RunHistogram]) -> Result<BTreeMap<usize, f64>> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::InvalidArgument(
            "need one A and one B histogram per sequence".into(),
        ));
    }
    let mut sums: BTreeMap<usize, f64> = BTreeMap::new();
    for h in a.iter().chain(b) {
        for (&m, &c) in &h.counts {
            *sums.entry(m).or_default() += c as f64;
        }
    }
    let max_len = sums
        .keys()
        .next_back()
        .copied()
        .ok_or(Error::EmptyInput("no runs"))?;
    let total: f64 = sums.values().sum();
    Ok((1..=max_len)
        .map(|m| (m, sums.get(&m).copied().unwrap_or(0.0) / total))
        .collect())
}

/// Mean length over all runs of both states: positions per run.
pub fn mean_run_length(a: &RunHistogram, b: &RunHistogram) -> f64 {
    (a.covered() + b.covered()) as f64 / (a.num_runs() + b.num_runs()) as f64
}
