//! Closed-form statistics of the first-order two-state Markov chain.
//!
//! State A is coded `1`, state B is coded `0`. The chain is driven by the
//! self-transition probabilities `p = P(A -> A)` and `q = P(B -> B)`; the
//! cross transitions are `1 - p` and `1 - q`. Everything here is exact
//! algebra on those two numbers and the initial probability `p1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Self-transition probabilities and initial probability of state A.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkovParams {
    p: f64,
    q: f64,
    p1: f64,
}

impl MarkovParams {
    /// Builds a parameter set. `p` and `q` must lie in the open interval
    /// `(0, 1)`, `p1` in the closed interval `[0, 1]`.
    pub fn new(p: f64, q: f64, p1: f64) -> Result<Self> {
        check_open_unit("p", p)?;
        check_open_unit("q", q)?;
        if !(0.0..=1.0).contains(&p1) {
            return Err(Error::InvalidParameter {
                name: "p1",
                value: p1,
                reason: "must lie in [0, 1]",
            });
        }
        Ok(Self { p, q, p1 })
    }

    /// Parameter set started from the stationary distribution (`p1 = pinf`).
    pub fn stationary(p: f64, q: f64) -> Result<Self> {
        check_open_unit("p", p)?;
        check_open_unit("q", q)?;
        Self::new(p, q, stationary_frequency(p, q))
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    /// Same transition probabilities, different initial probability.
    pub fn with_p1(&self, p1: f64) -> Result<Self> {
        Self::new(self.p, self.q, p1)
    }

    /// Transition matrix in column-stochastic layout: entry `[i][j]` is the
    /// probability of moving to state `i` from state `j` (index 0 = A).
    pub fn transition_matrix(&self) -> [[f64; 2]; 2] {
        [[self.p, 1.0 - self.q], [1.0 - self.p, self.q]]
    }

    /// Memory eigenvalue `a = p + q - 1`.
    pub fn memory_eigenvalue(&self) -> f64 {
        self.p + self.q - 1.0
    }

    /// The two eigenvalues of the transition matrix, `(a, 1)`.
    pub fn eigenvalues(&self) -> (f64, f64) {
        (self.memory_eigenvalue(), 1.0)
    }

    pub fn derive(&self) -> DerivedParams {
        derive(self)
    }
}

// Fields are validated finite floats, so equality is total.
impl Eq for MarkovParams {}

fn check_open_unit(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must lie in the open interval (0, 1)",
        })
    }
}

fn stationary_frequency(p: f64, q: f64) -> f64 {
    (1.0 - q) / (2.0 - (p + q))
}

/// Analytic summary of a parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    /// Memory eigenvalue `p + q - 1`.
    pub a: f64,
    /// Asymptotic frequency of state A.
    pub pinf: f64,
    /// Variance modulation factor.
    pub nu: f64,
    pub nu_sq: f64,
}

impl DerivedParams {
    /// Asymptotic frequency of state B, `(1 - p) / (2 - (p + q))`.
    pub fn pinf_b(&self) -> f64 {
        1.0 - self.pinf
    }

    /// Whether the chain broadens the scatter of proportions (`nu > 1`),
    /// which happens exactly when `p + q > 1`.
    pub fn is_clustering(&self) -> bool {
        self.a > 0.0
    }

    pub fn is_dispersing(&self) -> bool {
        self.a < 0.0
    }
}

pub fn derive(params: &MarkovParams) -> DerivedParams {
    let s = params.p + params.q;
    let a = s - 1.0;
    let pinf = stationary_frequency(params.p, params.q);
    let nu_sq = s / (2.0 - s);
    DerivedParams {
        a,
        pinf,
        nu: nu_sq.sqrt(),
        nu_sq,
    }
}

/// `a^n` for a non-negative integer power, exact repeated squaring when the
/// exponent fits `powi`.
pub(crate) fn int_pow(a: f64, n: u64) -> f64 {
    match i32::try_from(n) {
        Ok(k) => a.powi(k),
        Err(_) => a.powf(n as f64),
    }
}

/// Expected proportion of state A among the first `n` measurements.
pub fn mean_frequency(params: &MarkovParams, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let d = derive(params);
    let geometric = (1.0 - int_pow(d.a, n)) / (1.0 - d.a);
    Ok(d.pinf + (params.p1 - d.pinf) / n as f64 * geometric)
}

/// Probability that the `n`-th measurement (1-based) finds state A.
pub fn state_probability(params: &MarkovParams, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let d = derive(params);
    Ok(int_pow(d.a, n - 1) * (params.p1 - d.pinf) + d.pinf)
}

/// `n`-step probabilities of landing in A: `(from A, from B)`.
///
/// The second component is `pinf * (1 - a^n)`, which is the solution of the
/// one-step recursion with the initial value `0`.
pub fn n_step_self_transitions(params: &MarkovParams, n: u64) -> (f64, f64) {
    let d = derive(params);
    let an = int_pow(d.a, n);
    (an * (1.0 - d.pinf) + d.pinf, d.pinf * (1.0 - an))
}

/// Standard deviation of the observed proportion of A over `n` measurements.
pub fn std_of_proportion(params: &MarkovParams, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let d = derive(params);
    Ok(memoryless_std(d.pinf, n) * d.nu)
}

/// Binomial standard deviation `sqrt(pinf (1 - pinf) / n)`.
pub fn memoryless_std(pinf: f64, n: u64) -> f64 {
    (pinf * (1.0 - pinf) / n as f64).sqrt()
}

/// Lag-1 correlation of the spins `2x - 1` for the symmetric chain `p = q`.
pub fn lag1_correlation_symmetric(p: f64) -> Result<f64> {
    check_open_unit("p", p)?;
    Ok(2.0 * p - 1.0)
}
