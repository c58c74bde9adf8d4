use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Candidate couplings `{min, min + step, …, ≤ max}` in MHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct GGrid {
    min: f64,
    max: f64,
    step: f64,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    min_mhz: f64,
    max_mhz: f64,
    step_mhz: f64,
}

impl GGrid {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::config("grid.step_mhz", format!("must be positive, got {step}")));
        }
        if !min.is_finite() || min < 0.0 {
            return Err(Error::config("grid.min_mhz", format!("must be finite and >= 0, got {min}")));
        }
        if !max.is_finite() || !(min < max) {
            return Err(Error::config("grid.max_mhz", format!("must exceed grid.min_mhz, got {max}")));
        }
        let count = ((max - min) / step * (1.0 + 1e-12)).floor() as usize + 1;
        let values = (0..count).map(|k| min + k as f64 * step).collect();
        Ok(GGrid { min, max, step, values })
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl TryFrom<GridSpec> for GGrid {
    type Error = Error;

    fn try_from(s: GridSpec) -> Result<Self> {
        GGrid::new(s.min_mhz, s.max_mhz, s.step_mhz)
    }
}

impl From<GGrid> for GridSpec {
    fn from(g: GGrid) -> Self {
        GridSpec { min_mhz: g.min, max_mhz: g.max, step_mhz: g.step }
    }
}
