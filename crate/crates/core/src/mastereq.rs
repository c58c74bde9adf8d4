//! Unconditional master-equation evolution
//! `dρ/dt = −i(Hρ − ρH†) + Σ_j c_j ρ c_j†` and its steady state.
//!
//! Used as an independent check on the trajectory simulator: averaging
//! conditional states over many trajectories must reproduce `ρ(t)`.

use num_complex::Complex64;

use crate::dynamics::InitialState;
use crate::error::{Error, Result};
use crate::model::{angular, basis_index, CMatrix, Model};
use crate::sparse::SparseOp;

pub const DEFAULT_DT: f64 = 1e-4;
pub const DEFAULT_STEADY_TOL: f64 = 1e-10;
/// Population allowed in the two highest Fock levels before the truncation
/// is considered too small.
pub const TRUNCATION_TAIL_TOL: f64 = 1e-8;

const TRACE_TOL: f64 = 1e-8;
const HERMITICITY_TOL: f64 = 1e-10;
const POSITIVITY_TOL: f64 = 1e-8;
const CHECK_INTERVAL: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct MasterState {
    pub rho: CMatrix,
    pub time: f64,
}

impl MasterState {
    pub fn pure(model: &Model, init: InitialState, time: f64) -> Result<Self> {
        let psi = init.vector(model)?;
        Ok(MasterState { rho: &psi * psi.adjoint(), time })
    }

    pub fn ground_vacuum(model: &Model) -> Self {
        let mut rho = CMatrix::zeros(model.dim, model.dim);
        rho[(0, 0)] = Complex64::new(1.0, 0.0);
        MasterState { rho, time: 0.0 }
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        max_abs(&(&self.rho - self.rho.adjoint()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.rho + self.rho.adjoint()).unscale(2.0);
        herm.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expectations {
    pub photons: f64,
    pub excited: f64,
    /// `2κ⟨a†a⟩ + 2γ⊥⟨σ+σ−⟩`, detections per μs.
    pub flux: f64,
    /// Largest imaginary part among the raw expectation values.
    pub max_imag: f64,
}

pub fn expectations(state: &MasterState, model: &Model) -> Expectations {
    let tr = |op: &CMatrix| (op * &state.rho).trace();
    let n = tr(&(model.op_a.adjoint() * &model.op_a));
    let e = tr(&(model.op_sigma_minus.adjoint() * &model.op_sigma_minus));
    let p = &model.params;
    let flux = 2.0 * angular(p.kappa) * n + 2.0 * angular(p.gamma_perp) * e;
    Expectations {
        photons: n.re,
        excited: e.re,
        flux: flux.re,
        max_imag: n.im.abs().max(e.im.abs()).max(flux.im.abs()),
    }
}

/// Population in the two highest retained Fock levels.
pub fn truncation_tail(state: &MasterState, model: &Model) -> f64 {
    let top = model.params.n_trunc;
    let mut tail = 0.0;
    for n in top.saturating_sub(1)..=top {
        for s in [false, true] {
            let i = basis_index(n, s);
            tail += state.rho[(i, i)].re;
        }
    }
    tail
}

/// Logs a warning and returns `false` if the truncation looks too small.
pub fn check_truncation(state: &MasterState, model: &Model) -> bool {
    let tail = truncation_tail(state, model);
    if tail >= TRUNCATION_TAIL_TOL {
        log::warn!(
            "population {tail:.3e} in the top two Fock levels; increase n_trunc above {}",
            model.params.n_trunc
        );
        false
    } else {
        true
    }
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Fixed-step RK4 integrator for one coupling value.
#[derive(Debug, Clone)]
pub struct MasterIntegrator<'m> {
    model: &'m Model,
    hamiltonian: SparseOp,
    dt: f64,
}

impl<'m> MasterIntegrator<'m> {
    pub fn new(model: &'m Model, g: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameters(format!("dt must be positive, got {dt}")));
        }
        let h = model.effective_hamiltonian(g)?;
        Ok(MasterIntegrator {
            model,
            hamiltonian: SparseOp::from_dense(&h.matrix),
            dt,
        })
    }

    /// `dρ/dt` for Hermitian `ρ`.
    pub fn derivative(&self, rho: &CMatrix) -> CMatrix {
        let mut k = CMatrix::zeros(rho.nrows(), rho.ncols());
        self.hamiltonian.mul_dense_into(-Complex64::i(), rho, &mut k);
        // for Hermitian ρ, iρH† = (−iHρ)†
        let mut out = &k + k.adjoint();
        for channel in 0..2 {
            self.model.jump_sparse(channel).sandwich_into(rho, &mut out);
        }
        out
    }

    /// One RK4 step of size `h`, without trace renormalization.
    pub fn rk4_step(&self, rho: &CMatrix, h: f64) -> CMatrix {
        let k1 = self.derivative(rho);
        let k2 = self.derivative(&(rho + &k1 * Complex64::new(h / 2.0, 0.0)));
        let k3 = self.derivative(&(rho + &k2 * Complex64::new(h / 2.0, 0.0)));
        let k4 = self.derivative(&(rho + &k3 * Complex64::new(h, 0.0)));
        let next = rho + (k1 + (k2 + k3) * Complex64::new(2.0, 0.0) + k4) * Complex64::new(h / 6.0, 0.0);
        // `derivative` is only valid on Hermitian input; left in place, the
        // anti-Hermitian roundoff component grows under the decay commutator.
        (&next + next.adjoint()).unscale(2.0)
    }

    /// Evolves `state` forward by `duration`, checking trace, Hermiticity and
    /// boundedness every 0.1 μs and positivity at the end.
    pub fn advance(&self, state: &MasterState, duration: f64) -> Result<MasterState> {
        if !(duration >= 0.0) {
            return Err(Error::Contract(format!("duration must be >= 0, got {duration}")));
        }
        let steps = (duration / self.dt).ceil() as usize;
        if steps == 0 {
            return Ok(state.clone());
        }
        let h = duration / steps as f64;
        let check_every = ((CHECK_INTERVAL / h).round() as usize).max(1);

        let mut rho = state.rho.clone();
        for step in 1..=steps {
            rho = self.rk4_step(&rho, h);
            if step % check_every == 0 || step == steps {
                self.check_and_renormalize(&mut rho, state.time + step as f64 * h)?;
            }
        }
        let out = MasterState { rho, time: state.time + duration };
        let min_eig = out.min_eigenvalue();
        if min_eig < -POSITIVITY_TOL {
            return Err(Error::StepSize(format!(
                "density matrix lost positivity (eigenvalue {min_eig:.3e}); reduce dt below {}",
                self.dt
            )));
        }
        Ok(out)
    }

    fn check_and_renormalize(&self, rho: &mut CMatrix, time: f64) -> Result<()> {
        let tr = rho.trace();
        let bounded = rho.iter().all(|z| z.re.is_finite() && z.im.is_finite() && z.norm() <= 1.0 + 1e-6);
        if !bounded || (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::StepSize(format!(
                "integration unstable at t = {time:.4} us (trace {tr}); reduce dt below {}",
                self.dt
            )));
        }
        let herm = max_abs(&(&*rho - rho.adjoint()));
        if herm > HERMITICITY_TOL {
            return Err(Error::StepSize(format!(
                "density matrix lost Hermiticity ({herm:.3e}) at t = {time:.4} us; reduce dt below {}",
                self.dt
            )));
        }
        rho.unscale_mut(tr.re);
        Ok(())
    }
}

pub fn integrate_master(
    model: &Model,
    g: f64,
    rho0: &MasterState,
    duration: f64,
    dt: f64,
) -> Result<MasterState> {
    MasterIntegrator::new(model, g, dt)?.advance(rho0, duration)
}

/// States at each of `times` (absolute, ascending, not before `rho0.time`).
pub fn integrate_master_sampled(
    model: &Model,
    g: f64,
    rho0: &MasterState,
    times: &[f64],
    dt: f64,
) -> Result<Vec<MasterState>> {
    let integrator = MasterIntegrator::new(model, g, dt)?;
    let mut state = rho0.clone();
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        state = integrator.advance(&state, t - state.time)?;
        out.push(state.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct SteadyStateOptions {
    pub dt: f64,
    pub max_time: f64,
    /// Integration time between convergence checks.
    pub chunk: f64,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        SteadyStateOptions { dt: DEFAULT_DT, max_time: 50.0, chunk: 0.05 }
    }
}

/// Long-time integration from ground ⊗ vacuum until
/// `‖dρ/dt‖_max < tol · (2κ + 2γ⊥)`.
pub fn steady_state(model: &Model, g: f64, tol: f64) -> Result<MasterState> {
    steady_state_with(model, g, tol, &SteadyStateOptions::default())
}

pub fn steady_state_with(
    model: &Model,
    g: f64,
    tol: f64,
    opts: &SteadyStateOptions,
) -> Result<MasterState> {
    let p = &model.params;
    let threshold = tol * (2.0 * angular(p.kappa) + 2.0 * angular(p.gamma_perp));
    let integrator = MasterIntegrator::new(model, g, opts.dt)?;
    let mut state = MasterState::ground_vacuum(model);
    loop {
        let residual = max_abs(&integrator.derivative(&state.rho));
        if residual < threshold {
            return Ok(state);
        }
        if state.time >= opts.max_time {
            return Err(Error::Convergence(format!(
                "residual {residual:.3e} still above {threshold:.3e} after {} us",
                state.time
            )));
        }
        state = integrator.advance(&state, opts.chunk)?;
    }
}
