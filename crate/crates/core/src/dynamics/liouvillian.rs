use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, Mat};
use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::models::LindbladModel;
use crate::ops::CsrMatrix;

/// Largest total Hilbert dimension for which the dense superoperator is
/// formed.
pub const DENSE_DIM_LIMIT: usize = 64;

/// Largest total Hilbert dimension for which the sparse superoperator is
/// formed.
pub const SPARSE_DIM_LIMIT: usize = 1024;

/// Column-stacked superoperator with `vec(ρ̇) = 𝓛 vec(ρ)`:
///
/// `𝓛 = -i(I⊗H - Hᵀ⊗I) + Σ [L̄⊗L - ½ I⊗L†L - ½ (L†L)ᵀ⊗I]`
pub fn liouvillian_matrix(model: &LindbladModel) -> Result<CsrMatrix> {
    let n = model.dim();
    if n > SPARSE_DIM_LIMIT {
        return Err(Error::SizeLimit(format!(
            "Liouvillian of a {n}-dimensional model exceeds the sparse limit {SPARSE_DIM_LIMIT}"
        )));
    }
    let id = CsrMatrix::identity(n);
    let h_eff = model.effective_hamiltonian();
    let h_eff = h_eff.matrix();
    let minus_i = C64::new(0.0, -1.0);
    // vec(ρ H_eff†) = (H̄_eff ⊗ I) vec(ρ)
    let mut out = id
        .kron(h_eff)
        .lincomb(minus_i, &h_eff.conj().kron(&id), -minus_i);
    for l in &model.collapse_ops {
        let l = l.matrix();
        if l.nnz() == 0 {
            continue;
        }
        out = out.lincomb(C64::new(1.0, 0.0), &l.conj().kron(l), C64::new(1.0, 0.0));
    }
    Ok(out)
}

/// Dense superoperator, limited to models of total dimension
/// [`DENSE_DIM_LIMIT`] or less.
pub fn liouvillian_dense(model: &LindbladModel) -> Result<Array2<C64>> {
    let n = model.dim();
    if n > DENSE_DIM_LIMIT {
        return Err(Error::SizeLimit(format!(
            "dense Liouvillian of a {n}-dimensional model exceeds the limit {DENSE_DIM_LIMIT}"
        )));
    }
    Ok(liouvillian_matrix(model)?.to_dense())
}

/// Eigenvalues of the dense superoperator, sorted by decreasing real part.
pub fn liouvillian_spectrum(model: &LindbladModel) -> Result<Vec<C64>> {
    let dense = liouvillian_dense(model)?;
    let m = dense.nrows();
    let mat = Mat::<C64>::from_fn(m, m, |i, j| dense[[i, j]]);
    let mut eig = mat
        .eigenvalues()
        .map_err(|e| Error::Solver(format!("eigenvalue solver failed: {e:?}")))?;
    eig.sort_by(|a, b| b.re.total_cmp(&a.re));
    Ok(eig)
}

/// Sparse LU factorisation of `alpha·I + beta·M`.
pub struct ShiftedLu {
    n: usize,
    lu: Lu<usize, C64>,
}

impl std::fmt::Debug for ShiftedLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ShiftedLu").field("n", &self.n).finish()
    }
}

impl ShiftedLu {
    pub fn new(m: &CsrMatrix, alpha: C64, beta: C64) -> Result<Self> {
        let n = m.nrows();
        let mut triplets: Vec<Triplet<usize, usize, C64>> = m
            .triplets()
            .map(|(i, j, v)| Triplet::new(i, j, beta * v))
            .collect();
        triplets.extend((0..n).map(|k| Triplet::new(k, k, alpha)));
        let sparse = SparseColMat::<usize, C64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::Solver(format!("sparse assembly failed: {e:?}")))?;
        let lu = sparse
            .sp_lu()
            .map_err(|e| Error::Solver(format!("sparse LU failed: {e:?}")))?;
        Ok(Self { n, lu })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves in place for each column of `rhs` (each of length `dim`).
    pub fn solve_columns(&self, columns: &mut [Vec<C64>]) {
        if columns.is_empty() {
            return;
        }
        let mut mat = Mat::<C64>::from_fn(self.n, columns.len(), |i, j| columns[j][i]);
        self.lu.solve_in_place_with_conj(Conj::No, mat.as_mut());
        for (j, col) in columns.iter_mut().enumerate() {
            for (i, v) in col.iter_mut().enumerate() {
                *v = mat[(i, j)];
            }
        }
    }

    pub fn solve(&self, rhs: &mut Vec<C64>) {
        self.solve_columns(std::slice::from_mut(rhs));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::lindblad_rhs;
    use crate::models::{build_open_loop, PaperDefaults};
    use crate::ops::{destroy, DensityMatrix, HilbertSpec, Operator};

    fn decay(kappa: f64) -> LindbladModel {
        let space = HilbertSpec::single(2).unwrap();
        let l = kappa.sqrt() * &destroy(2).unwrap();
        LindbladModel::new(Operator::zeros(&space), vec![l]).unwrap()
    }

    #[test]
    fn two_level_decay_spectrum() {
        let kappa = 2.0;
        let mut eig: Vec<f64> = liouvillian_spectrum(&decay(kappa))
            .unwrap()
            .iter()
            .map(|e| {
                assert!(e.im.abs() < 1e-12);
                e.re
            })
            .collect();
        eig.sort_by(f64::total_cmp);
        let expected = [-kappa, -kappa / 2.0, -kappa / 2.0, 0.0];
        for (a, b) in eig.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{eig:?}");
        }
    }

    #[test]
    fn superoperator_matches_rhs_on_mixed_state() {
        let model = build_open_loop(&PaperDefaults::plant(), 5).unwrap();
        let l = liouvillian_matrix(&model).unwrap();
        let mut rho = DensityMatrix::maximally_mixed(&model.space);
        rho.data_mut()[[0, 3]] = C64::new(0.01, 0.02);
        rho.data_mut()[[3, 0]] = C64::new(0.01, -0.02);
        let lhs = l.matvec(&rho.to_vec_col());
        let rhs = lindblad_rhs(&rho, &model).unwrap().to_vec_col();
        let err = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn size_limits() {
        let model = build_open_loop(&PaperDefaults::plant(), 65).unwrap();
        assert!(matches!(liouvillian_dense(&model), Err(Error::SizeLimit(_))));
        assert!(liouvillian_matrix(&model).is_ok());
    }

    #[test]
    fn shifted_solve() {
        let m = CsrMatrix::from_diagonal(&[C64::new(1.0, 0.0), C64::new(3.0, 0.0)]);
        let lu = ShiftedLu::new(&m, C64::new(2.0, 0.0), C64::new(-1.0, 0.0)).unwrap();
        let mut x = vec![C64::new(1.0, 0.0), C64::new(4.0, 0.0)];
        lu.solve(&mut x);
        assert!((x[0] - C64::new(1.0, 0.0)).norm() < 1e-14);
        assert!((x[1] - C64::new(-4.0, 0.0)).norm() < 1e-14);
        assert_eq!(lu.dim(), 2);
    }
}
