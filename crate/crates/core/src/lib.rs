//! Memory in first-order two-state Markov processes.
//!
//! A chain with self-transition probabilities `p` (state A) and `q`
//! (state B) either clusters (`p + q > 1`) or disperses (`p + q < 1`) its
//! states. The effect shows up in two observables: the scatter of the
//! proportion of A across independent sequences (a funnel plot whose width
//! is scaled by the variance factor `nu`), and the distribution of run
//! lengths. This crate computes both in closed form, simulates them, and
//! inverts them to recover `(p, q)` from data.
//!
//! Module map:
//!
//! * [`chain`] closed-form quantities of the chain.
//! * [`simulate`] seeded sequence and ensemble generation, empirical estimators.
//! * [`runs`] run extraction, expected run counts, normalized run curves.
//! * [`funnel`] confidence curves and coverage of scatter datasets.
//! * [`estimate`] scatter-plot and run-length fits.
//! * [`io`] study/sequence parsing, text formatting and JSON reports.

pub mod chain;
pub mod dataset;
pub mod error;
pub mod estimate;
pub mod funnel;
pub mod io;
pub mod runs;
pub mod simulate;

pub use chain::{DerivedParams, MarkovParams};
pub use dataset::{ScatterDataset, ScatterPoint};
pub use error::{Error, Result};
pub use estimate::{RunFit, RunFitConfig, RunFitMethod, ScatterFit};
pub use funnel::FunnelSpec;
pub use runs::{RunCurve, RunHistogram};
pub use simulate::{BinarySequence, State};
