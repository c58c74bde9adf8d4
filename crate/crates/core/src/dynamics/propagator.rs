use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{CMatrix, EffectiveHamiltonian};

use super::state::QuantumState;

pub type CVector = DVector<Complex64>;

/// Eigenvector matrices with a condition number above this switch to the
/// scaling-and-squaring path.
pub const MAX_EIGENVECTOR_CONDITION: f64 = 1e8;
const RECONSTRUCTION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Eigendecomposition,
    ScalingSquaring,
}

#[derive(Debug, Clone)]
enum Kernel {
    /// `H = V diag(μ) V⁻¹`; `rates[k] = −iμ_k` so that `U(τ) = V diag(e^{rate·τ}) V⁻¹`.
    Eigen {
        rates: Vec<Complex64>,
        vectors: CMatrix,
        inverse: CMatrix,
    },
    Series(RadixExp),
}

/// `exp(Aτ)` assembled from cached `exp(A·d·16^p)` factors following the
/// base-16 expansion of `τ`, with a short Taylor series for the remainder.
/// Each level is computed on first use.
#[derive(Debug, Clone)]
struct RadixExp {
    generator: CMatrix,
    levels: Vec<OnceLock<Vec<CMatrix>>>,
}

const RADIX: usize = 16;
const LEVEL_MAX: i32 = 2;
const LEVEL_MIN: i32 = -5;

impl RadixExp {
    fn new(generator: CMatrix) -> Self {
        let n = (LEVEL_MAX - LEVEL_MIN + 1) as usize;
        RadixExp { generator, levels: (0..n).map(|_| OnceLock::new()).collect() }
    }

    /// `[exp(A·d·16^p) for d in 1..16]`
    fn level(&self, p: i32) -> &[CMatrix] {
        self.levels[(p - LEVEL_MIN) as usize].get_or_init(|| {
            let base = expm(&self.generator.scale((RADIX as f64).powi(p)));
            let mut out = Vec::with_capacity(RADIX - 1);
            out.push(base.clone());
            for d in 1..RADIX - 1 {
                let next = &out[d - 1] * &base;
                out.push(next);
            }
            out
        })
    }

    fn apply(&self, psi: &CVector, tau: f64) -> CVector {
        let mut v = psi.clone();
        let mut rest = tau;
        let top = (RADIX as f64).powi(LEVEL_MAX);
        while rest >= RADIX as f64 * top {
            v = &self.level(LEVEL_MAX)[RADIX - 2] * v;
            rest -= (RADIX - 1) as f64 * top;
        }
        for p in (LEVEL_MIN..=LEVEL_MAX).rev() {
            let w = (RADIX as f64).powi(p);
            let d = ((rest / w).floor() as usize).min(RADIX - 1);
            if d > 0 {
                v = &self.level(p)[d - 1] * v;
                rest -= d as f64 * w;
            }
        }
        if rest > 0.0 {
            // rest < 16^-5 us, so ‖A‖·rest is ~1e-2 at most
            let mut term = v.clone();
            for k in 1..=12 {
                term = &self.generator * term * Complex64::new(rest / k as f64, 0.0);
                v += &term;
                if term.norm() <= f64::EPSILON * v.norm() {
                    break;
                }
            }
        }
        v
    }
}

/// Exact no-jump evolution `U(τ) = exp(−iHτ)` for a fixed coupling.
#[derive(Debug, Clone)]
pub struct Propagator {
    pub g: f64,
    kernel: Kernel,
}

/// State vector expressed in the propagator's working coordinates, so that
/// repeated evaluation at different durations costs one matrix-vector
/// product.
#[derive(Debug, Clone)]
pub struct ModalState(CVector);

impl Propagator {
    pub fn new(h: &EffectiveHamiltonian) -> Result<Self> {
        prepare_propagator(h)
    }

    /// Forces a particular evaluation path.
    pub fn with_method(h: &EffectiveHamiltonian, method: Method) -> Result<Self> {
        check_finite(&h.matrix)?;
        let kernel = match method {
            Method::Eigendecomposition => eigen_kernel(&h.matrix).ok_or_else(|| {
                Error::Numeric(format!(
                    "H_eff(g = {}) is not diagonalizable to the required accuracy",
                    h.g
                ))
            })?,
            Method::ScalingSquaring => series_kernel(&h.matrix),
        };
        Ok(Propagator { g: h.g, kernel })
    }

    pub fn method(&self) -> Method {
        match self.kernel {
            Kernel::Eigen { .. } => Method::Eigendecomposition,
            Kernel::Series(_) => Method::ScalingSquaring,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.kernel {
            Kernel::Eigen { rates, .. } => rates.len(),
            Kernel::Series(d) => d.generator.nrows(),
        }
    }

    pub fn to_modal(&self, psi: &CVector) -> ModalState {
        match &self.kernel {
            Kernel::Eigen { inverse, .. } => ModalState(inverse * psi),
            Kernel::Series(_) => ModalState(psi.clone()),
        }
    }

    /// `U(τ)ψ` for a state previously passed through [`Self::to_modal`].
    pub fn propagate_modal(&self, modal: &ModalState, tau: f64) -> CVector {
        if tau == 0.0 {
            return match &self.kernel {
                Kernel::Eigen { vectors, .. } => vectors * &modal.0,
                Kernel::Series(_) => modal.0.clone(),
            };
        }
        match &self.kernel {
            Kernel::Eigen { rates, vectors, .. } => {
                let scaled = DVector::from_iterator(
                    rates.len(),
                    rates.iter().zip(modal.0.iter()).map(|(r, c)| (r * tau).exp() * c),
                );
                vectors * scaled
            }
            Kernel::Series(d) => d.apply(&modal.0, tau),
        }
    }

    /// `U(τ)ψ`. Exactly the identity at `τ = 0`.
    pub fn apply(&self, psi: &CVector, tau: f64) -> Result<CVector> {
        if !(tau >= 0.0) {
            return Err(Error::Contract(format!("evolution time must be >= 0, got {tau}")));
        }
        if tau == 0.0 {
            return Ok(psi.clone());
        }
        Ok(match &self.kernel {
            Kernel::Series(d) => d.apply(psi, tau),
            Kernel::Eigen { .. } => self.propagate_modal(&self.to_modal(psi), tau),
        })
    }

    pub fn evolve(&self, state: &QuantumState, tau: f64) -> Result<QuantumState> {
        evolve(self, state, tau)
    }

    /// Dense `U(τ)`.
    pub fn matrix(&self, tau: f64) -> CMatrix {
        match &self.kernel {
            Kernel::Eigen { rates, vectors, inverse } => {
                let mut scaled = vectors.clone();
                for (k, r) in rates.iter().enumerate() {
                    let f = (r * tau).exp();
                    for z in scaled.column_mut(k).iter_mut() {
                        *z *= f;
                    }
                }
                scaled * inverse
            }
            Kernel::Series(d) => expm(&d.generator.scale(tau)),
        }
    }
}

pub fn prepare_propagator(h: &EffectiveHamiltonian) -> Result<Propagator> {
    check_finite(&h.matrix)?;
    let kernel = eigen_kernel(&h.matrix).unwrap_or_else(|| {
        log::debug!("H_eff(g = {}) ill-conditioned, using scaling and squaring", h.g);
        series_kernel(&h.matrix)
    });
    Ok(Propagator { g: h.g, kernel })
}

pub fn evolve(prop: &Propagator, state: &QuantumState, tau: f64) -> Result<QuantumState> {
    let amplitudes = prop.apply(&state.amplitudes, tau)?;
    let norm = amplitudes.norm_squared();
    if !norm.is_finite() {
        return Err(Error::Numeric(format!("non-finite state after evolving by {tau} us")));
    }
    if norm <= 0.0 {
        return Err(Error::Numeric(format!("state annihilated after evolving by {tau} us")));
    }
    Ok(QuantumState {
        amplitudes,
        log_norm: state.log_norm,
    })
}

fn series_kernel(h: &CMatrix) -> Kernel {
    Kernel::Series(RadixExp::new(h.map(|z| -Complex64::i() * z)))
}

fn check_finite(m: &CMatrix) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric("effective Hamiltonian has non-finite entries".into()))
    }
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn norm1(m: &CMatrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Complex Schur form `H = Q T Q†`, eigenvectors of `T` by back substitution,
/// then `V = Q Y` and `V⁻¹ = Y⁻¹ Q†` with `Y` upper triangular.
fn eigen_kernel(h: &CMatrix) -> Option<Kernel> {
    let n = h.nrows();
    let (q, t) = Schur::try_new(h.clone(), 1e-15, 100 * n.max(10))?.unpack();
    let scale = max_abs(h).max(f64::MIN_POSITIVE);
    let smin = (f64::EPSILON * scale).max(f64::MIN_POSITIVE);

    let mut y = CMatrix::zeros(n, n);
    for k in 0..n {
        let lambda = t[(k, k)];
        y[(k, k)] = Complex64::new(1.0, 0.0);
        for j in (0..k).rev() {
            let mut acc = Complex64::new(0.0, 0.0);
            for l in j + 1..=k {
                acc += t[(j, l)] * y[(l, k)];
            }
            let mut denom = t[(j, j)] - lambda;
            if denom.norm() < smin {
                denom = Complex64::new(smin, 0.0);
            }
            y[(j, k)] = -acc / denom;
        }
        let norm = y.column(k).norm();
        if !norm.is_finite() {
            return None;
        }
        y.column_mut(k).unscale_mut(norm);
    }

    // cond₂(V) = cond₂(Y) since Q is unitary
    let sv = y.clone().singular_values();
    let cond = sv.max() / sv.min();
    if !cond.is_finite() || cond > MAX_EIGENVECTOR_CONDITION {
        return None;
    }
    let y_inv = y.clone().try_inverse()?;

    let vectors = &q * &y;
    let inverse = y_inv * q.adjoint();
    let mus: Vec<Complex64> = (0..n).map(|k| t[(k, k)]).collect();

    let mut rebuilt = vectors.clone();
    for (k, mu) in mus.iter().enumerate() {
        for z in rebuilt.column_mut(k).iter_mut() {
            *z *= mu;
        }
    }
    let err = max_abs(&(rebuilt * &inverse - h));
    if !(err <= RECONSTRUCTION_TOL * scale) {
        return None;
    }

    Some(Kernel::Eigen {
        rates: mus.into_iter().map(|mu| -Complex64::i() * mu).collect(),
        vectors,
        inverse,
    })
}

/// `exp(A)` by scaling and squaring of a truncated Taylor series.
pub fn expm(a: &CMatrix) -> CMatrix {
    const ORDER: usize = 20;
    let n = a.nrows();
    let norm = norm1(a);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a.scale(0.5f64.powi(squarings));

    let mut result = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=ORDER {
        term = (&term * &scaled).unscale(k as f64);
        result += &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}
