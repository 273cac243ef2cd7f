//! Steady-state and transient solution of `C dT/dt = G T + q`.

mod heatmap;
pub(crate) mod steady;
mod transient;

pub use heatmap::{layer_heatmap, HeatMap};
pub use steady::{steady_state, steady_state_rise};
pub(crate) use steady::steady_response;
pub use transient::{simulate, SolverConfig};

use nalgebra::DMatrixViewMut;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CscMatrix, CsrMatrix};

use crate::error::{Error, Result};
use crate::rc::RCModel;

/// Sparse operators of a model prepared for repeated solves.
pub(crate) struct Operators {
    pub g: CsrMatrix<f64>,
    /// `-G`, symmetric positive (semi)definite, in CSC order.
    neg_g: CscMatrix<f64>,
    /// Position of each diagonal entry inside `neg_g.values()`.
    diag_pos: Vec<usize>,
    pub capacitance: Vec<f64>,
}

impl Operators {
    pub fn new(model: &RCModel) -> Self {
        let g = model.g_csr();
        let mut neg_g = model.g_csc();
        neg_g.values_mut().iter_mut().for_each(|v| *v = -*v);
        let mut diag_pos = vec![usize::MAX; model.len()];
        let offsets = neg_g.col_offsets();
        let rows = neg_g.row_indices();
        for col in 0..model.len() {
            for k in offsets[col]..offsets[col + 1] {
                if rows[k] == col {
                    diag_pos[col] = k;
                }
            }
        }
        Operators { g, neg_g, diag_pos, capacitance: model.capacitances() }
    }

    pub fn len(&self) -> usize {
        self.capacitance.len()
    }

    /// `out = G x`
    pub fn apply_g(&self, x: &[f64], out: &mut [f64]) {
        let offsets = self.g.row_offsets();
        let cols = self.g.col_indices();
        let vals = self.g.values();
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in offsets[i]..offsets[i + 1] {
                acc += vals[k] * x[cols[k]];
            }
            *o = acc;
        }
    }

    /// Cholesky factor of `diag(shift) − scale·G`.
    pub fn factor_shifted(&self, scale: f64, shift: &[f64]) -> Result<CscCholesky<f64>> {
        let m = self.shifted(scale, shift);
        CscCholesky::factor(&m).map_err(|e| Error::numerical(format!("sparse Cholesky failed: {e}")))
    }

    pub fn refactor_shifted(&self, chol: &mut CscCholesky<f64>, scale: f64, shift: &[f64]) -> Result<()> {
        let values = self.shifted_values(scale, shift);
        chol.refactor(&values)
            .map_err(|e| Error::numerical(format!("sparse Cholesky failed: {e}")))
    }

    fn shifted_values(&self, scale: f64, shift: &[f64]) -> Vec<f64> {
        let mut values: Vec<f64> = self.neg_g.values().iter().map(|v| v * scale).collect();
        for (i, &p) in self.diag_pos.iter().enumerate() {
            values[p] += shift[i];
        }
        values
    }

    fn shifted(&self, scale: f64, shift: &[f64]) -> CscMatrix<f64> {
        let values = self.shifted_values(scale, shift);
        let pattern = self.neg_g.pattern().clone();
        CscMatrix::try_from_pattern_and_values(pattern, values).expect("pattern matches values")
    }
}

pub(crate) fn solve_in_place(chol: &CscCholesky<f64>, b: &mut [f64]) {
    let n = b.len();
    chol.solve_mut(DMatrixViewMut::from_slice(b, n, 1));
}
