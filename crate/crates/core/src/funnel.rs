//! Funnel-plot confidence curves.
//!
//! Around the center `pinf`, the proportion observed in a study of size `n`
//! falls within `pinf +- z sqrt(pinf (1 - pinf) / n) nu` with the normal
//! coverage of `z`. Solving for `n` gives the curve
//! `n = z^2 pinf (1 - pinf) nu^2 / (p_bar - pinf)^2`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::ScatterDataset;
use crate::error::{Error, Result};

pub const DEFAULT_Z: f64 = 1.96;

/// Two-sided standard normal quantile for a confidence level in `(0, 1)`.
pub fn z_for_level(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter {
            name: "level",
            value: level,
            reason: "must lie in the open interval (0, 1)",
        });
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(0.5 * (1.0 + level)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunnelSpec {
    pub pinf: f64,
    pub nu: f64,
    pub z: f64,
}

impl FunnelSpec {
    pub fn new(pinf: f64, nu: f64, z: f64) -> Result<Self> {
        if !(pinf > 0.0 && pinf < 1.0) {
            return Err(Error::InvalidParameter {
                name: "pinf",
                value: pinf,
                reason: "must lie in the open interval (0, 1)",
            });
        }
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "nu",
                value: nu,
                reason: "must be positive",
            });
        }
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "z",
                value: z,
                reason: "must be positive",
            });
        }
        Ok(Self { pinf, nu, z })
    }

    /// Funnel at the conventional 95% quantile `z = 1.96`.
    pub fn with_default_z(pinf: f64, nu: f64) -> Result<Self> {
        Self::new(pinf, nu, DEFAULT_Z)
    }

    pub fn at_level(pinf: f64, nu: f64, level: f64) -> Result<Self> {
        Self::new(pinf, nu, z_for_level(level)?)
    }

    pub fn half_width(&self, n: f64) -> f64 {
        self.z * (self.pinf * (1.0 - self.pinf) / n).sqrt() * self.nu
    }

    /// `z^2 pinf (1 - pinf) nu^2`, the numerator of the `n = f(p_bar)` curve.
    pub fn coefficient(&self) -> f64 {
        self.z * self.z * self.pinf * (1.0 - self.pinf) * self.nu * self.nu
    }
}

/// Unclamped `(lower, upper)` bounds at study size `n`.
pub fn confidence_bounds(spec: &FunnelSpec, n: u64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    Ok(bounds_at(spec, n as f64))
}

fn bounds_at(spec: &FunnelSpec, n: f64) -> (f64, f64) {
    let h = spec.half_width(n);
    (spec.pinf - h, spec.pinf + h)
}

/// Study size at which the funnel boundary passes through `p_bar`.
pub fn required_n(spec: &FunnelSpec, p_bar: f64) -> Result<f64> {
    let d = p_bar - spec.pinf;
    if d == 0.0 {
        return Err(Error::Singular { pinf: spec.pinf });
    }
    Ok(spec.coefficient() / (d * d))
}

/// Fraction of points inside the funnel, bounds inclusive.
pub fn coverage(dataset: &ScatterDataset, spec: &FunnelSpec) -> f64 {
    let inside = dataset
        .points()
        .iter()
        .filter(|pt| {
            let (lo, hi) = bounds_at(spec, pt.n as f64);
            lo <= pt.p_bar && pt.p_bar <= hi
        })
        .count();
    inside as f64 / dataset.len() as f64
}

/// One point of a sampled funnel curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunnelSample {
    pub n: f64,
    pub lower: f64,
    pub upper: f64,
}

impl FunnelSample {
    /// Bounds clipped to `[0, 1]` for display.
    pub fn clamped(&self) -> Self {
        Self {
            n: self.n,
            lower: self.lower.clamp(0.0, 1.0),
            upper: self.upper.clamp(0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveGrid {
    pub n_min: f64,
    pub n_max: f64,
    pub points: usize,
}

impl Default for CurveGrid {
    fn default() -> Self {
        Self {
            n_min: 10.0,
            n_max: 1e5,
            points: 200,
        }
    }
}

/// Samples the funnel on a log-spaced grid of study sizes.
pub fn sample_curve(spec: &FunnelSpec, grid: CurveGrid) -> Result<Vec<FunnelSample>> {
    let CurveGrid {
        n_min,
        n_max,
        points,
    } = grid;
    if !(n_min > 0.0 && n_max >= n_min && n_max.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "bad n range [{n_min}, {n_max}]"
        )));
    }
    if points == 0 || (points == 1 && n_max != n_min) {
        return Err(Error::InvalidArgument(
            "need at least two points for a range".into(),
        ));
    }
    let (lo, hi) = (n_min.ln(), n_max.ln());
    Ok((0..points)
        .map(|i| {
            let n = if i == 0 {
                n_min
            } else if i + 1 == points {
                n_max
            } else {
                (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp()
            };
            let (lower, upper) = bounds_at(spec, n);
            FunnelSample { n, lower, upper }
        })
        .collect())
}
