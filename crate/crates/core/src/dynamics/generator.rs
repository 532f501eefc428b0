use ndarray::{Array2, ArrayView2, ArrayViewMut2};
use num_complex::Complex64 as C64;

use crate::error::Result;
use crate::models::LindbladModel;
use crate::ops::{CsrMatrix, DensityMatrix, ZERO};

/// Master-equation right-hand side with the operator products that do not
/// depend on the state precomputed.
#[derive(Debug, Clone)]
pub struct Generator {
    dim: usize,
    h_eff: CsrMatrix,
    h_eff_adj: CsrMatrix,
    jumps: Vec<(CsrMatrix, CsrMatrix)>,
}

impl Generator {
    pub fn new(model: &LindbladModel) -> Self {
        let h_eff = model.effective_hamiltonian().matrix().clone();
        let h_eff_adj = h_eff.adjoint();
        let jumps = model
            .collapse_ops
            .iter()
            .filter(|l| !l.is_zero())
            .map(|l| (l.matrix().clone(), l.matrix().adjoint()))
            .collect();
        Self {
            dim: model.dim(),
            h_eff,
            h_eff_adj,
            jumps,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `out = -i H_eff ρ + i ρ H_eff† + Σ L ρ L†`. `scratch` must be
    /// `dim × dim`.
    pub fn apply_into(
        &self,
        rho: ArrayView2<'_, C64>,
        mut out: ArrayViewMut2<'_, C64>,
        scratch: &mut Array2<C64>,
    ) {
        let minus_i = C64::new(0.0, -1.0);
        out.fill(ZERO);
        self.h_eff.mul_dense_acc(rho, minus_i, out.view_mut());
        self.h_eff_adj.dense_mul_acc(rho, -minus_i, out.view_mut());
        for (l, l_adj) in &self.jumps {
            scratch.fill(ZERO);
            l.mul_dense_acc(rho, C64::new(1.0, 0.0), scratch.view_mut());
            l_adj.dense_mul_acc(scratch.view(), C64::new(1.0, 0.0), out.view_mut());
        }
    }

    pub fn apply(&self, rho: ArrayView2<'_, C64>) -> Array2<C64> {
        let mut out = Array2::zeros((self.dim, self.dim));
        let mut scratch = Array2::zeros((self.dim, self.dim));
        self.apply_into(rho, out.view_mut(), &mut scratch);
        out
    }
}

/// `ρ̇` for the model's master equation. The result is a derivative, not a
/// state, so only its shape is checked.
pub fn lindblad_rhs(rho: &DensityMatrix, model: &LindbladModel) -> Result<DensityMatrix> {
    rho.space().ensure_same(&model.space)?;
    let out = Generator::new(model).apply(rho.data().view());
    DensityMatrix::from_matrix(model.space.clone(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{destroy, fock_state, HilbertSpec, Operator};
    use ndarray::array;

    fn decay(kappa: f64) -> LindbladModel {
        let space = HilbertSpec::single(2).unwrap();
        let l = kappa.sqrt() * &destroy(2).unwrap();
        LindbladModel::new(Operator::zeros(&space), vec![l]).unwrap()
    }

    #[test]
    fn ground_state_is_stationary_under_decay() {
        let model = decay(3.0);
        let rho = DensityMatrix::from_pure(&fock_state(&model.space, &[0]).unwrap());
        let d = lindblad_rhs(&rho, &model).unwrap();
        assert!(d.data().iter().all(|v| *v == ZERO));
    }

    #[test]
    fn excited_state_decays_at_kappa() {
        let kappa = 3.0;
        let model = decay(kappa);
        let rho = DensityMatrix::from_pure(&fock_state(&model.space, &[1]).unwrap());
        let d = lindblad_rhs(&rho, &model).unwrap();
        let k = C64::new(kappa, 0.0);
        let expected = array![[k, ZERO], [ZERO, -k]];
        let err = (d.data() - &expected).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(err < 1e-15, "{err}");
    }

    #[test]
    fn rejects_space_mismatch() {
        let model = decay(1.0);
        let rho = DensityMatrix::maximally_mixed(&HilbertSpec::single(3).unwrap());
        assert!(lindblad_rhs(&rho, &model).is_err());
    }
}
