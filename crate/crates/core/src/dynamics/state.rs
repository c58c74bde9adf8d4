use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{basis_index, Model};
use crate::sparse::SparseOp;

use super::propagator::CVector;

/// Basis state the system starts in at `t0`. Defaults to ground ⊗ vacuum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    #[serde(default)]
    pub photons: usize,
    #[serde(default)]
    pub excited: bool,
}

impl InitialState {
    pub fn vector(&self, model: &Model) -> Result<CVector> {
        if self.photons > model.params.n_trunc {
            return Err(Error::InvalidParameters(format!(
                "initial photon number {} exceeds n_trunc {}",
                self.photons, model.params.n_trunc
            )));
        }
        let mut v = CVector::zeros(model.dim);
        v[basis_index(self.photons, self.excited)] = Complex64::new(1.0, 0.0);
        Ok(v)
    }
}

/// Conditional (unnormalized) state vector. `log_norm` is the running sum of
/// `ln ‖ψ‖²` factors divided out by [`QuantumState::renormalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    pub amplitudes: CVector,
    pub log_norm: f64,
}

impl QuantumState {
    pub fn new(amplitudes: CVector) -> Self {
        QuantumState { amplitudes, log_norm: 0.0 }
    }

    pub fn initial(model: &Model, init: InitialState) -> Result<Self> {
        Ok(Self::new(init.vector(model)?))
    }

    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    pub fn renormalize(&mut self) -> Result<()> {
        let n2 = self.norm_squared();
        if !(n2 > 0.0) || !n2.is_finite() {
            return Err(Error::Numeric(format!("cannot renormalize state with squared norm {n2}")));
        }
        self.amplitudes.unscale_mut(n2.sqrt());
        self.log_norm += n2.ln();
        Ok(())
    }

    /// Applies jump operator `c_channel` without renormalizing.
    pub fn jump(&mut self, model: &Model, channel: usize) {
        self.amplitudes = model.jump_sparse(channel).apply(&self.amplitudes);
    }

    /// Normalized expectation values `(⟨a†a⟩, ⟨σ+σ−⟩)`.
    pub fn populations(&self, model: &Model) -> (f64, f64) {
        populations(&self.amplitudes, model)
    }
}

pub(crate) fn populations(psi: &CVector, model: &Model) -> (f64, f64) {
    let n2 = psi.norm_squared();
    let mean = |op: &SparseOp| op.expectation(psi).re / n2;
    (mean(model.number_sparse()), mean(model.excited_sparse()))
}
