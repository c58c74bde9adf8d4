//! Atom-cavity model: parameters, truncated Hilbert space, operators and the
//! effective (non-Hermitian) Hamiltonian.
//!
//! User-facing frequencies are `value / 2π` in MHz. Internally every rate is
//! multiplied by 2π so that matrices are in rad/μs and time is in μs.
//!
//! Basis index `i = 2n + s`, with `n` the photon number and `s = 0` (ground)
//! or `s = 1` (excited). The cavity ladder is the slow index.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseOp;

pub type CMatrix = DMatrix<Complex64>;

pub const DEFAULT_N_TRUNC: usize = 30;

/// Converts a `value / 2π` in MHz into an angular rate in rad/μs.
#[inline]
pub fn angular(mhz: f64) -> f64 {
    TAU * mhz
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Maximum coupling (antinode, beam centre).
    #[serde(rename = "g0_mhz")]
    pub g0: f64,
    /// Atomic dipole decay rate.
    #[serde(rename = "gamma_perp_mhz")]
    pub gamma_perp: f64,
    /// Cavity field decay rate.
    #[serde(rename = "kappa_mhz")]
    pub kappa: f64,
    /// Coherent drive strength.
    #[serde(rename = "epsilon_mhz")]
    pub epsilon: f64,
    /// Highest photon number retained.
    pub n_trunc: usize,
}

impl ModelParams {
    /// Rates used in the numerical experiment: `(g0, γ⊥, κ) = (57, 2.5, 30)`.
    pub fn reference(epsilon: f64) -> Self {
        ModelParams {
            g0: 57.0,
            gamma_perp: 2.5,
            kappa: 30.0,
            epsilon,
            n_trunc: DEFAULT_N_TRUNC,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("g0", self.g0),
            ("gamma_perp", self.gamma_perp),
            ("kappa", self.kappa),
            ("epsilon", self.epsilon),
        ];
        for (name, value) in rates {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidParameters(format!(
                    "{name} must be finite and non-negative, got {value}"
                )));
            }
        }
        if self.kappa + self.gamma_perp <= 0.0 {
            return Err(Error::InvalidParameters(
                "kappa + gamma_perp must be positive".into(),
            ));
        }
        if self.n_trunc < 1 {
            return Err(Error::InvalidParameters("n_trunc must be at least 1".into()));
        }
        Ok(())
    }
}

/// Position of a basis vector in the product space.
#[inline]
pub fn basis_index(photons: usize, excited: bool) -> usize {
    2 * photons + excited as usize
}

/// Inverse of [`basis_index`].
#[inline]
pub fn basis_label(index: usize) -> (usize, bool) {
    (index / 2, index % 2 == 1)
}

#[derive(Debug, Clone)]
pub struct Model {
    pub params: ModelParams,
    pub dim: usize,
    pub op_a: CMatrix,
    pub op_sigma_minus: CMatrix,
    /// Atomic fluorescence jump operator `√(2γ⊥) σ−`.
    pub c0: CMatrix,
    /// Cavity emission jump operator `√(2κ) a`.
    pub c1: CMatrix,
    jumps_sparse: [SparseOp; 2],
    number_sparse: SparseOp,
    excited_sparse: SparseOp,
}

pub fn build_model(params: ModelParams) -> Result<Model> {
    params.validate()?;
    let n_max = params.n_trunc;
    let dim = 2 * (n_max + 1);

    let mut op_a = CMatrix::zeros(dim, dim);
    let mut op_sigma_minus = CMatrix::zeros(dim, dim);
    for n in 0..=n_max {
        for excited in [false, true] {
            let col = basis_index(n, excited);
            if n > 0 {
                op_a[(basis_index(n - 1, excited), col)] = Complex64::new((n as f64).sqrt(), 0.0);
            }
            if excited {
                op_sigma_minus[(basis_index(n, false), col)] = Complex64::new(1.0, 0.0);
            }
        }
    }

    let c0 = op_sigma_minus.scale((2.0 * angular(params.gamma_perp)).sqrt());
    let c1 = op_a.scale((2.0 * angular(params.kappa)).sqrt());
    let number = op_a.adjoint() * &op_a;
    let excited = op_sigma_minus.adjoint() * &op_sigma_minus;

    Ok(Model {
        params,
        dim,
        jumps_sparse: [SparseOp::from_dense(&c0), SparseOp::from_dense(&c1)],
        number_sparse: SparseOp::from_dense(&number),
        excited_sparse: SparseOp::from_dense(&excited),
        op_a,
        op_sigma_minus,
        c0,
        c1,
    })
}

impl Model {
    pub fn new(params: ModelParams) -> Result<Self> {
        build_model(params)
    }

    pub fn jump_operator(&self, channel: usize) -> &CMatrix {
        match channel {
            0 => &self.c0,
            _ => &self.c1,
        }
    }

    pub(crate) fn jump_sparse(&self, channel: usize) -> &SparseOp {
        &self.jumps_sparse[channel]
    }

    pub(crate) fn number_sparse(&self) -> &SparseOp {
        &self.number_sparse
    }

    pub(crate) fn excited_sparse(&self) -> &SparseOp {
        &self.excited_sparse
    }

    /// `c0†c0 + c1†c1`, the total decay operator.
    pub fn total_decay(&self) -> CMatrix {
        self.c0.adjoint() * &self.c0 + self.c1.adjoint() * &self.c1
    }

    /// Largest single-state decay rate in the truncated space (rad/μs).
    pub fn max_decay_rate(&self) -> f64 {
        2.0 * angular(self.params.kappa) * self.params.n_trunc as f64
            + 2.0 * angular(self.params.gamma_perp)
    }

    pub fn effective_hamiltonian(&self, g: f64) -> Result<EffectiveHamiltonian> {
        effective_hamiltonian(self, g)
    }
}

/// Non-Hermitian generator of no-jump evolution, in rad/μs.
#[derive(Debug, Clone)]
pub struct EffectiveHamiltonian {
    pub matrix: CMatrix,
    pub g: f64,
}

/// `H = ig(aσ+ − a†σ−) + iε(a − a†) − iκa†a − iγ⊥σ+σ−`.
pub fn effective_hamiltonian(model: &Model, g: f64) -> Result<EffectiveHamiltonian> {
    if !g.is_finite() || g < 0.0 {
        return Err(Error::InvalidParameters(format!(
            "coupling g must be finite and non-negative, got {g}"
        )));
    }
    let p = &model.params;
    let i = Complex64::i();
    let a = &model.op_a;
    let sm = &model.op_sigma_minus;
    let ad = a.adjoint();
    let sp = sm.adjoint();

    let coherent = (a * &sp - &ad * sm) * (i * angular(g)) + (a - &ad) * (i * angular(p.epsilon));
    // −iκa†a − iγ⊥σ+σ− written as −(i/2)Σc†c so the anti-Hermitian part is
    // bit-for-bit the total decay operator.
    let decay = model.total_decay() * (i * 0.5);
    Ok(EffectiveHamiltonian {
        matrix: coherent - decay,
        g,
    })
}

/// Field geometry of a TEM00 standing-wave mode. Lengths in μm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeGeometry {
    pub lambda: f64,
    pub w0: f64,
    pub position: [f64; 3],
}

impl ModeGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !(self.w0 > 0.0) {
            return Err(Error::InvalidParameters(
                "lambda and w0 must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// `g(r) = g0 cos(2πx/λ) exp[−(y² + z²)/w0²]`.
///
/// The sign is kept; the likelihood is invariant under `g → −g`, so
/// identification can only ever recover `|g|`.
pub fn coupling_at_position(geom: &ModeGeometry, g0: f64) -> f64 {
    let [x, y, z] = geom.position;
    g0 * (TAU * x / geom.lambda).cos() * (-(y * y + z * z) / (geom.w0 * geom.w0)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn max_abs(m: &CMatrix) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn dimension_formula() {
        let m = build_model(ModelParams { n_trunc: 2, ..ModelParams::reference(0.0) }).unwrap();
        assert_eq!(m.dim, 6);
        let m = build_model(ModelParams::reference(44.3)).unwrap();
        assert_eq!(m.dim, 62);
    }

    #[test]
    fn cavity_jump_matrix_elements() {
        let m = build_model(ModelParams::reference(44.3)).unwrap();
        for n in 1..=30 {
            for s in [false, true] {
                let expected = (2.0 * TAU * 30.0 * n as f64).sqrt();
                let got = m.c1[(basis_index(n - 1, s), basis_index(n, s))];
                assert!((got - c(expected, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_params() {
        let bad = [
            ModelParams { kappa: -1.0, ..ModelParams::reference(1.0) },
            ModelParams { epsilon: f64::NAN, ..ModelParams::reference(1.0) },
            ModelParams { n_trunc: 0, ..ModelParams::reference(1.0) },
            ModelParams { kappa: 0.0, gamma_perp: 0.0, ..ModelParams::reference(1.0) },
        ];
        for p in bad {
            assert!(matches!(build_model(p), Err(Error::InvalidParameters(_))));
        }
    }

    #[test]
    fn decay_operator_identity() {
        let m = build_model(ModelParams { n_trunc: 4, ..ModelParams::reference(10.0) }).unwrap();
        let a = &m.op_a;
        let sm = &m.op_sigma_minus;
        let expected = (sm.adjoint() * sm) * c(2.0 * angular(2.5), 0.0)
            + (a.adjoint() * a) * c(2.0 * angular(30.0), 0.0);
        assert!(max_abs(&(m.total_decay() - expected)) < 1e-12);
    }

    #[test]
    fn annihilation_structure() {
        let m = build_model(ModelParams { n_trunc: 3, ..ModelParams::reference(0.0) }).unwrap();
        for s in [false, true] {
            let col = m.op_a.column(basis_index(0, s));
            assert!(col.iter().all(|z| z.norm() == 0.0));
        }
        let nonzero = m.op_a.iter().filter(|z| z.norm() > 0.0).count();
        assert_eq!(nonzero, 2 * 3);
    }

    #[test]
    fn vacuum_is_dark_without_drive() {
        let m = build_model(ModelParams::reference(0.0)).unwrap();
        let h = effective_hamiltonian(&m, 0.0).unwrap();
        let col = h.matrix.column(basis_index(0, false));
        assert!(col.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn coupling_matrix_element() {
        let m = build_model(ModelParams { n_trunc: 3, ..ModelParams::reference(20.0) }).unwrap();
        for g in [0.0, 12.5, 45.0] {
            let h = effective_hamiltonian(&m, g).unwrap();
            let el = h.matrix[(basis_index(0, true), basis_index(1, false))];
            assert!((el - c(0.0, angular(g))).norm() < 1e-12);
        }
    }

    #[test]
    fn anti_hermitian_part_is_decay() {
        let m = build_model(ModelParams::reference(34.0)).unwrap();
        let decay = m.total_decay();
        for g in [0.0, 20.0, 45.0, 57.0] {
            let h = &effective_hamiltonian(&m, g).unwrap().matrix;
            let diff = h - h.adjoint() + &decay * Complex64::i();
            assert!(max_abs(&diff) <= 1e-12, "g={g}");

            let a = &m.op_a;
            let sm = &m.op_sigma_minus;
            let coherent = (a * sm.adjoint() - a.adjoint() * sm) * c(0.0, angular(g))
                + (a - a.adjoint()) * c(0.0, angular(34.0));
            let herm = h + h.adjoint() - coherent.scale(2.0);
            assert!(max_abs(&herm) <= 1e-12);
        }
    }

    #[test]
    fn negative_coupling_rejected() {
        let m = build_model(ModelParams { n_trunc: 1, ..ModelParams::reference(0.0) }).unwrap();
        assert!(effective_hamiltonian(&m, -1.0).is_err());
    }

    #[test]
    fn decay_is_positive_semidefinite() {
        let m = build_model(ModelParams { n_trunc: 8, ..ModelParams::reference(44.3) }).unwrap();
        for g in [0.0, 28.5, 57.0] {
            let h = &effective_hamiltonian(&m, g).unwrap().matrix;
            let decay = (h - h.adjoint()) * Complex64::i();
            let eig = decay.symmetric_eigenvalues();
            assert!(eig.iter().all(|&v| v >= -1e-10));
        }
    }

    #[test]
    fn basis_round_trip() {
        for n in 0..=30 {
            for s in [false, true] {
                assert_eq!(basis_label(basis_index(n, s)), (n, s));
            }
        }
        for i in 0..62 {
            let (n, s) = basis_label(i);
            assert_eq!(basis_index(n, s), i);
        }
    }

    #[test]
    fn canonical_commutator_below_truncation() {
        let n_trunc = 6;
        let m = build_model(ModelParams { n_trunc, ..ModelParams::reference(0.0) }).unwrap();
        let a = &m.op_a;
        let comm = a * a.adjoint() - a.adjoint() * a;
        for i in 0..m.dim {
            for j in 0..m.dim {
                let (n, _) = basis_label(i);
                let expected = if i == j && n < n_trunc { 1.0 } else if i == j { -(n_trunc as f64) } else { 0.0 };
                assert!((comm[(i, j)] - c(expected, 0.0)).norm() < 1e-12, "({i},{j})");
            }
        }
    }

    #[test]
    fn mode_function() {
        let geom = |x, y, z| ModeGeometry { lambda: 0.852, w0: 14.2, position: [x, y, z] };
        assert!((coupling_at_position(&geom(0.0, 0.0, 0.0), 57.0) - 57.0).abs() < 1e-12);
        assert!(coupling_at_position(&geom(0.852 / 4.0, 0.0, 0.0), 57.0).abs() < 1e-12);
        let off_axis = coupling_at_position(&geom(0.0, 14.2, 0.0), 57.0);
        assert!((off_axis - 57.0 * (-1.0f64).exp()).abs() < 1e-12);
        assert!(coupling_at_position(&geom(0.852 / 2.0, 0.0, 0.0), 57.0) < 0.0);
        assert!(geom(0.0, 0.0, 0.0).validate().is_ok());
        assert!(ModeGeometry { lambda: 0.0, w0: 1.0, position: [0.0; 3] }.validate().is_err());
    }
}
