//! Recovering `(p, q)` from data.
//!
//! Two routes are provided:
//!
//! * Scatter plots: the center `pinf` is the size-weighted mean proportion,
//!   `nu` is the smallest variance factor whose funnel encloses the requested
//!   fraction of studies, and `(pinf, nu)` is inverted algebraically.
//! * Run-length curves: a grid search over `(p11, p22)` minimizing squared
//!   log10-frequency differences against the expected run-length curves, and
//!   a closed-form geometric maximum-likelihood estimate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{derive, MarkovParams};
use crate::dataset::ScatterDataset;
use crate::error::{Error, Result};
use crate::funnel::{coverage, z_for_level, FunnelSpec};
use crate::runs::{
    average_and_normalize, continuation_ratio, extract_runs, model_curve, RunCurve, RunHistogram,
};
use crate::simulate::{generate_member, State};

/// Quantiles need at least this many studies to mean anything.
pub const MIN_SCATTER_POINTS: usize = 20;

// Keeps the boundary study inside the funnel despite rounding in the bounds.
const NU_ROUNDING_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterFit {
    pub pinf_hat: f64,
    pub nu_hat: f64,
    pub p_hat: f64,
    pub q_hat: f64,
    pub coverage_achieved: f64,
    pub n_points: usize,
    pub level: f64,
    /// Whether a lower bound on `p` or `q` moved the estimate.
    pub constrained: bool,
}

/// Lower bounds on the self-transition probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PqBounds {
    pub min_p: f64,
    pub min_q: f64,
}

impl PqBounds {
    fn validate(&self) -> Result<()> {
        for (name, v) in [("min_p", self.min_p), ("min_q", self.min_q)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::InvalidParameter {
                    name,
                    value: v,
                    reason: "must lie in [0, 1)",
                });
            }
        }
        Ok(())
    }

    fn is_active(&self) -> bool {
        self.min_p > 0.0 || self.min_q > 0.0
    }
}

/// Size-weighted mean of the observed proportions.
pub fn estimate_center(dataset: &ScatterDataset) -> f64 {
    let (num, den) = dataset.points().iter().fold((0.0, 0.0), |(num, den), pt| {
        (num + pt.n as f64 * pt.p_bar, den + pt.n as f64)
    });
    num / den
}

/// Smallest `nu` whose funnel at `level` (with `z = z_for_level(level)`)
/// encloses at least a `level` fraction of the studies.
pub fn estimate_nu(dataset: &ScatterDataset, pinf: f64, level: f64) -> Result<f64> {
    let z = z_for_level(level)?;
    if !(pinf > 0.0 && pinf < 1.0) {
        return Err(Error::InvalidParameter {
            name: "pinf",
            value: pinf,
            reason: "must lie in the open interval (0, 1)",
        });
    }
    let n = dataset.len();
    if n < MIN_SCATTER_POINTS {
        return Err(Error::InvalidArgument(format!(
            "estimating nu needs at least {MIN_SCATTER_POINTS} studies, got {n}"
        )));
    }
    let scale = (pinf * (1.0 - pinf)).sqrt();
    let mut deviations: Vec<f64> = dataset
        .points()
        .iter()
        .map(|pt| (pt.p_bar - pinf).abs() * (pt.n as f64).sqrt() / scale)
        .collect();
    deviations.sort_by(f64::total_cmp);
    // Number of studies that must be enclosed; the small slack absorbs
    // representation error in level * n (0.95 * 100 is not exactly 95).
    let needed = ((level * n as f64) - 1e-9).ceil().max(1.0) as usize;
    let boundary = deviations[needed.min(n) - 1];
    if boundary == 0.0 {
        return Err(Error::Degenerate(
            "studies sit at the center; the scatter carries no width information".into(),
        ));
    }
    Ok(boundary / z * (1.0 + NU_ROUNDING_GUARD))
}

/// Algebraic inverse of `derive` restricted to `(pinf, nu) -> (p, q)`.
pub fn invert_to_pq(pinf: f64, nu: f64) -> Result<(f64, f64)> {
    if !(pinf > 0.0 && pinf < 1.0) || !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::Infeasible(format!(
            "pinf = {pinf}, nu = {nu} out of domain"
        )));
    }
    let nu_sq = nu * nu;
    let s = 2.0 * nu_sq / (1.0 + nu_sq);
    pq_from_sum(pinf, s)
}

fn pq_from_sum(pinf: f64, s: f64) -> Result<(f64, f64)> {
    let q = 1.0 - pinf * (2.0 - s);
    let p = s - q;
    if p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0 {
        Ok((p, q))
    } else {
        Err(Error::Infeasible(format!(
            "pinf = {pinf} with p + q = {s} needs p = {p}, q = {q}; no two-state chain matches"
        )))
    }
}

/// Full scatter pipeline: center, width, inversion and optional lower
/// bounds on `p` and `q`.
///
/// With bounds, `pinf` is held fixed and `p + q` is raised to the smallest
/// value satisfying them. Both `p` and `q` increase with `p + q` at fixed
/// `pinf`, so this is the nearest admissible chain, and it only widens the
/// funnel.
pub fn fit_scatter(
    dataset: &ScatterDataset,
    level: f64,
    bounds: Option<PqBounds>,
) -> Result<ScatterFit> {
    let bounds = bounds.unwrap_or_default();
    bounds.validate()?;
    let pinf = estimate_center(dataset);
    if !(pinf > 0.0 && pinf < 1.0) {
        return Err(Error::Degenerate(format!(
            "center {pinf} leaves no room for a two-state chain"
        )));
    }
    let nu = estimate_nu(dataset, pinf, level)?;
    let nu_sq = nu * nu;
    let mut s = 2.0 * nu_sq / (1.0 + nu_sq);

    let required =
        (2.0 - (1.0 - bounds.min_q) / pinf).max(2.0 - (1.0 - bounds.min_p) / (1.0 - pinf));
    let mut constrained = false;
    if bounds.is_active() && s < required {
        s = required;
        constrained = true;
    }
    let (mut p, mut q) = pq_from_sum(pinf, s)?;
    p = p.max(bounds.min_p);
    q = q.max(bounds.min_q);

    let d = derive(&MarkovParams::new(p, q, pinf)?);
    let spec = FunnelSpec::at_level(d.pinf, d.nu, level)?;
    Ok(ScatterFit {
        pinf_hat: d.pinf,
        nu_hat: d.nu,
        p_hat: p,
        q_hat: q,
        coverage_achieved: coverage(dataset, &spec),
        n_points: dataset.len(),
        level,
        constrained,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunFitMethod {
    Mle,
    SimulatedLeastSquares,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFit {
    /// Self-transition probability of state A ('on').
    pub p11_hat: f64,
    /// Self-transition probability of state B ('off').
    pub p22_hat: f64,
    pub objective: f64,
    pub method: RunFitMethod,
    /// Objective of Monte Carlo curves at the fitted point, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_objective: Option<f64>,
}

/// Geometric maximum-likelihood continuation probability of one state's
/// runs. Returns 0 when no run ever continues.
pub fn fit_runs_mle(histogram: &RunHistogram) -> Result<f64> {
    continuation_ratio(histogram.counts.iter().map(|(&m, &c)| (m, c as f64)))
}

fn geometric_nll(curve: &RunCurve, p: f64) -> f64 {
    let total: f64 = curve.freqs.values().sum();
    -curve
        .freqs
        .iter()
        .map(|(&m, &f)| f * ((m as f64 - 1.0) * p.ln() + (1.0 - p).ln()))
        .sum::<f64>()
        / total
}

/// Closed-form fit of both states from their normalized run curves.
pub fn fit_curves_mle(on: &RunCurve, off: &RunCurve) -> Result<RunFit> {
    check_curve_states(on, off)?;
    let p11 = on.continuation_estimate()?;
    let p22 = off.continuation_estimate()?;
    for (name, v) in [("p11", p11), ("p22", p22)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Degenerate(format!(
                "{name} estimate {v} is on the boundary"
            )));
        }
    }
    Ok(RunFit {
        p11_hat: p11,
        p22_hat: p22,
        objective: geometric_nll(on, p11) + geometric_nll(off, p22),
        method: RunFitMethod::Mle,
        mc_objective: None,
    })
}

/// Pools histograms from several sequences and fits both states.
pub fn fit_histograms_mle(on: &[RunHistogram], off: &[RunHistogram]) -> Result<RunFit> {
    fit_curves_mle(&average_and_normalize(on)?, &average_and_normalize(off)?)
}

fn check_curve_states(on: &RunCurve, off: &RunCurve) -> Result<()> {
    if on.state != State::A || off.state != State::B {
        return Err(Error::InvalidArgument(
            "expected the 'on' curve for state A and the 'off' curve for state B".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunFitConfig {
    pub grid_step: f64,
    pub refine_step: f64,
    /// Bins at or below this frequency in the data are ignored.
    pub floor: f64,
    /// Sequence length used by the expected-run model.
    pub sequence_length: usize,
    /// Monte Carlo sequences simulated at the optimum; 0 disables it.
    pub confirm_seeds: usize,
    pub seed: u64,
}

impl Default for RunFitConfig {
    fn default() -> Self {
        Self {
            grid_step: 0.05,
            refine_step: 0.01,
            floor: 1e-4,
            sequence_length: 10_000,
            confirm_seeds: 0,
            seed: 0,
        }
    }
}

impl RunFitConfig {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("grid_step", self.grid_step),
            ("refine_step", self.refine_step),
        ] {
            if !(v > 0.0 && v <= 0.5) {
                return Err(Error::InvalidParameter {
                    name,
                    value: v,
                    reason: "must lie in (0, 0.5]",
                });
            }
        }
        if !(self.floor >= 0.0 && self.floor < 1.0) {
            return Err(Error::InvalidParameter {
                name: "floor",
                value: self.floor,
                reason: "must lie in [0, 1)",
            });
        }
        if self.sequence_length < 3 {
            return Err(Error::InvalidArgument(
                "sequence_length must be at least 3".into(),
            ));
        }
        Ok(())
    }
}

/// Observed bins above the floor, as `(m, log10 frequency)`.
fn usable_bins(curve: &RunCurve, floor: f64) -> Result<Vec<(usize, f64)>> {
    let bins: Vec<(usize, f64)> = curve
        .freqs
        .iter()
        .filter(|(_, &f)| f > floor && f.is_finite())
        .map(|(&m, &f)| (m, f.log10()))
        .collect();
    if bins.len() < 2 {
        return Err(Error::Infeasible(format!(
            "run curve of state {:?} has {} bin(s) above the floor; need at least 2",
            curve.state,
            bins.len()
        )));
    }
    if bins.iter().all(|&(_, l)| l == bins[0].1) {
        return Err(Error::Infeasible(format!(
            "run curve of state {:?} is flat; run lengths carry no memory signal",
            curve.state
        )));
    }
    Ok(bins)
}

fn log_residual(bins: &[(usize, f64)], model: &RunCurve, floor: f64) -> f64 {
    bins.iter()
        .map(|&(m, obs)| {
            let predicted = model.get(m).max(floor).max(f64::MIN_POSITIVE).log10();
            (obs - predicted).powi(2)
        })
        .sum()
}

struct Target {
    on: Vec<(usize, f64)>,
    off: Vec<(usize, f64)>,
    max_on: usize,
    max_off: usize,
}

impl Target {
    fn objective(&self, p11: f64, p22: f64, config: &RunFitConfig) -> Result<f64> {
        let params = MarkovParams::stationary(p11, p22)?;
        let n = config.sequence_length;
        let on = model_curve(&params, n, State::A, self.max_on.min(n - 2))?;
        let off = model_curve(&params, n, State::B, self.max_off.min(n - 2))?;
        Ok(log_residual(&self.on, &on, config.floor) + log_residual(&self.off, &off, config.floor))
    }
}

fn axis(step: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut i = 1;
    loop {
        let v = i as f64 * step;
        if v >= 1.0 - 1e-9 {
            break;
        }
        out.push(v);
        i += 1;
    }
    out
}

fn refined_axis(center: f64, half_width: f64, step: f64) -> Vec<f64> {
    let k = (half_width / step).round() as i64;
    (-k..=k)
        .map(|j| center + j as f64 * step)
        .filter(|&v| v > 1e-9 && v < 1.0 - 1e-9)
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    p11: f64,
    p22: f64,
    objective: f64,
}

impl Cell {
    fn distance_to_memoryless(&self) -> f64 {
        (self.p11 - 0.5).powi(2) + (self.p22 - 0.5).powi(2)
    }

    /// Lower objective wins; ties go to weaker memory, then lexicographic.
    fn better_than(&self, other: &Cell) -> bool {
        self.objective
            .total_cmp(&other.objective)
            .then(
                self.distance_to_memoryless()
                    .total_cmp(&other.distance_to_memoryless()),
            )
            .then(self.p11.total_cmp(&other.p11))
            .then(self.p22.total_cmp(&other.p22))
            .is_lt()
    }
}

fn search(target: &Target, xs: &[f64], ys: &[f64], config: &RunFitConfig) -> Result<Cell> {
    let cells: Vec<(f64, f64)> = xs
        .iter()
        .flat_map(|&x| ys.iter().map(move |&y| (x, y)))
        .collect();
    let evaluated: Vec<Cell> = cells
        .par_iter()
        .map(|&(p11, p22)| {
            target.objective(p11, p22, config).map(|objective| Cell {
                p11,
                p22,
                objective,
            })
        })
        .collect::<Result<_>>()?;
    evaluated
        .into_iter()
        .reduce(|best, c| if c.better_than(&best) { c } else { best })
        .ok_or_else(|| Error::Infeasible("empty search grid".into()))
}

/// Grid search over `(p11, p22)` against the expected run-length curves,
/// coarse at `grid_step` and then refined at `refine_step` within one coarse
/// step of the best cell.
pub fn fit_runs_simulated(on: &RunCurve, off: &RunCurve, config: &RunFitConfig) -> Result<RunFit> {
    config.validate()?;
    check_curve_states(on, off)?;
    let target = Target {
        on: usable_bins(on, config.floor)?,
        off: usable_bins(off, config.floor)?,
        max_on: on.max_len().unwrap_or(1),
        max_off: off.max_len().unwrap_or(1),
    };
    let coarse = axis(config.grid_step);
    let best = search(&target, &coarse, &coarse, config)?;
    let best = search(
        &target,
        &refined_axis(best.p11, config.grid_step, config.refine_step),
        &refined_axis(best.p22, config.grid_step, config.refine_step),
        config,
    )?;

    let mc_objective = if config.confirm_seeds > 0 {
        Some(monte_carlo_objective(&target, best.p11, best.p22, config)?)
    } else {
        None
    };
    Ok(RunFit {
        p11_hat: best.p11,
        p22_hat: best.p22,
        objective: best.objective,
        method: RunFitMethod::SimulatedLeastSquares,
        mc_objective,
    })
}

fn monte_carlo_objective(
    target: &Target,
    p11: f64,
    p22: f64,
    config: &RunFitConfig,
) -> Result<f64> {
    let params = MarkovParams::stationary(p11, p22)?;
    let (on, off): (Vec<_>, Vec<_>) = (0..config.confirm_seeds)
        .into_par_iter()
        .map(|i| {
            generate_member(&params, config.sequence_length, config.seed, i)
                .map(|s| extract_runs(&s))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let on = average_and_normalize(&on)?;
    let off = average_and_normalize(&off)?;
    Ok(log_residual(&target.on, &on, config.floor) + log_residual(&target.off, &off, config.floor))
}

/// Empirical run curves of `(A, B)` averaged over `seeds` member sequences.
pub fn simulated_curves(
    params: &MarkovParams,
    n: usize,
    seeds: usize,
    seed: u64,
) -> Result<(RunCurve, RunCurve)> {
    let (a, b): (Vec<_>, Vec<_>) = (0..seeds)
        .into_par_iter()
        .map(|i| generate_member(params, n, seed, i).map(|s| extract_runs(&s)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    Ok((average_and_normalize(&a)?, average_and_normalize(&b)?))
}
