use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One study in a scatter plot: its size and the observed proportion of A.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub n: u64,
    pub p_bar: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl ScatterPoint {
    pub fn new(n: u64, p_bar: f64) -> Self {
        Self {
            n,
            p_bar,
            label: None,
        }
    }

    pub fn labeled(n: u64, p_bar: f64, label: impl Into<String>) -> Self {
        Self {
            n,
            p_bar,
            label: Some(label.into()),
        }
    }
}

/// Non-empty set of `(n, p_bar)` study points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ScatterPoint>", into = "Vec<ScatterPoint>")]
pub struct ScatterDataset {
    points: Vec<ScatterPoint>,
}

impl ScatterDataset {
    pub fn new(points: Vec<ScatterPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("scatter dataset has no points"));
        }
        for (i, pt) in points.iter().enumerate() {
            if pt.n == 0 {
                return Err(Error::InvalidArgument(format!(
                    "point {i}: n must be at least 1"
                )));
            }
            if !(0.0..=1.0).contains(&pt.p_bar) {
                return Err(Error::InvalidArgument(format!(
                    "point {i}: p_bar = {} outside [0, 1]",
                    pt.p_bar
                )));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[ScatterPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points whose label equals `label`.
    pub fn filter_label(&self, label: &str) -> Result<Self> {
        Self::new(
            self.points
                .iter()
                .filter(|p| p.label.as_deref() == Some(label))
                .cloned()
                .collect(),
        )
    }
}

impl TryFrom<Vec<ScatterPoint>> for ScatterDataset {
    type Error = Error;

    fn try_from(points: Vec<ScatterPoint>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<ScatterDataset> for Vec<ScatterPoint> {
    fn from(d: ScatterDataset) -> Self {
        d.points
    }
}
