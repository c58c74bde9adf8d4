use nalgebra::DVector;
use num_complex::Complex64;

use crate::model::CMatrix;

/// Coordinate-list view of a mostly-empty operator matrix.
#[derive(Debug, Clone, Default)]
pub(crate) struct SparseOp {
    dim: usize,
    entries: Vec<(usize, usize, Complex64)>,
}

impl SparseOp {
    pub fn from_dense(m: &CMatrix) -> Self {
        let mut entries = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if v.re != 0.0 || v.im != 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        SparseOp { dim: m.nrows(), entries }
    }

    pub fn apply(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        let mut out = DVector::zeros(self.dim);
        for &(i, j, a) in &self.entries {
            out[i] += a * v[j];
        }
        out
    }

    /// `⟨v|A|v⟩`.
    pub fn expectation(&self, v: &DVector<Complex64>) -> Complex64 {
        self.entries
            .iter()
            .map(|&(i, j, a)| v[i].conj() * a * v[j])
            .sum()
    }

    /// `out += α · A · M`.
    pub fn mul_dense_into(&self, alpha: Complex64, m: &CMatrix, out: &mut CMatrix) {
        let ncols = m.ncols();
        for &(i, j, a) in &self.entries {
            let s = alpha * a;
            for k in 0..ncols {
                out[(i, k)] += s * m[(j, k)];
            }
        }
    }

    /// `out += A · M · A†`.
    pub fn sandwich_into(&self, m: &CMatrix, out: &mut CMatrix) {
        for &(i, j, a) in &self.entries {
            for &(k, l, b) in &self.entries {
                out[(i, k)] += a * m[(j, l)] * b.conj();
            }
        }
    }
}
