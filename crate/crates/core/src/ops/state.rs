use faer::Side;
use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

use super::{HilbertSpec, ZERO};
use crate::error::{Error, Result};

/// Dense pure state. May be unnormalised while a quantum-jump trajectory is
/// decaying between jumps.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    space: HilbertSpec,
    amplitudes: Array1<C64>,
}

impl StateVector {
    pub fn from_amplitudes(space: HilbertSpec, amplitudes: Array1<C64>) -> Result<Self> {
        if amplitudes.len() != space.total_dim() {
            return Err(Error::InvalidDimension(format!(
                "{} amplitudes for space of dimension {}",
                amplitudes.len(),
                space.total_dim()
            )));
        }
        Ok(Self { space, amplitudes })
    }

    pub(crate) fn from_amplitudes_unchecked(space: HilbertSpec, amplitudes: Array1<C64>) -> Self {
        debug_assert_eq!(amplitudes.len(), space.total_dim());
        Self { space, amplitudes }
    }

    pub fn space(&self) -> &HilbertSpec {
        &self.space
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut Array1<C64> {
        &mut self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.amplitudes.mapv_inplace(|a| a / n);
        }
    }

    pub fn normalized(&self) -> Self {
        let mut out = self.clone();
        out.normalize();
        out
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() <= 1e-12
    }
}

/// Dense density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    space: HilbertSpec,
    data: Array2<C64>,
}

impl DensityMatrix {
    /// Wraps a dense matrix and checks Hermiticity, unit trace and
    /// numerical positivity.
    pub fn new(space: HilbertSpec, data: Array2<C64>) -> Result<Self> {
        let rho = Self::from_matrix(space, data)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Wraps a dense matrix checking only its shape. Used for derivatives
    /// and intermediate results that are not states.
    pub fn from_matrix(space: HilbertSpec, data: Array2<C64>) -> Result<Self> {
        let n = space.total_dim();
        if data.dim() != (n, n) {
            return Err(Error::InvalidDimension(format!(
                "matrix shape {:?} does not match space dimension {n}",
                data.dim()
            )));
        }
        Ok(Self { space, data })
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        let psi = psi.normalized();
        let a = psi.amplitudes();
        let n = a.len();
        let data = Array2::from_shape_fn((n, n), |(i, j)| a[i] * a[j].conj());
        Self {
            space: psi.space().clone(),
            data,
        }
    }

    pub fn maximally_mixed(space: &HilbertSpec) -> Self {
        let n = space.total_dim();
        let data = Array2::from_diag_elem(n, C64::new(1.0 / n as f64, 0.0));
        Self {
            space: space.clone(),
            data,
        }
    }

    pub fn space(&self) -> &HilbertSpec {
        &self.space
    }

    pub fn data(&self) -> &Array2<C64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array2<C64> {
        &mut self.data
    }

    pub fn into_data(self) -> Array2<C64> {
        self.data
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.data.diag().iter().copied().fold(ZERO, |a, b| a + b)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `max |rho - rho†|`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut err = 0.0f64;
        for i in 0..n {
            for j in i..n {
                err = err.max((self.data[[i, j]] - self.data[[j, i]].conj()).norm());
            }
        }
        err
    }

    /// Replaces the matrix by its Hermitian part.
    pub fn hermitize(&mut self) {
        let n = self.dim();
        for i in 0..n {
            for j in i..n {
                let avg = 0.5 * (self.data[[i, j]] + self.data[[j, i]].conj());
                self.data[[i, j]] = avg;
                self.data[[j, i]] = avg.conj();
            }
        }
    }

    pub fn scale_in_place(&mut self, s: f64) {
        self.data.mapv_inplace(|v| v * s);
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let n = self.dim();
        let m = faer::Mat::<C64>::from_fn(n, n, |i, j| {
            0.5 * (self.data[[i, j]] + self.data[[j, i]].conj())
        });
        m.self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Solver(format!("eigen decomposition failed: {e:?}")))
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.first().copied().unwrap_or(0.0))
    }

    /// Checks Hermiticity (1e-10), unit trace (1e-9) and positivity (-1e-8).
    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > 1e-10 {
            return Err(Error::InvalidParameter(format!(
                "density matrix not Hermitian (deviation {herm:.3e})"
            )));
        }
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "density matrix trace {tr} differs from one"
            )));
        }
        let min = self.min_eigenvalue()?;
        if min < -1e-8 {
            return Err(Error::InvalidParameter(format!(
                "density matrix has negative eigenvalue {min:.3e}"
            )));
        }
        Ok(())
    }

    /// Half the trace norm of `self - other`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        self.space.ensure_same(&other.space)?;
        let diff = DensityMatrix {
            space: self.space.clone(),
            data: &self.data - &other.data,
        };
        Ok(0.5 * diff.eigenvalues()?.iter().map(|e| e.abs()).sum::<f64>())
    }

    /// Reduced state of one mode (partial trace over all others).
    pub fn reduce_to_mode(&self, mode: usize) -> Result<DensityMatrix> {
        let dims = self.space.mode_dims();
        let d = self.space.mode_dim(mode)?;
        let inner: usize = dims[mode + 1..].iter().product();
        let outer: usize = dims[..mode].iter().product();
        let mut out = Array2::<C64>::zeros((d, d));
        for o in 0..outer {
            for p in 0..inner {
                for i in 0..d {
                    let row = (o * d + i) * inner + p;
                    for j in 0..d {
                        let col = (o * d + j) * inner + p;
                        out[[i, j]] += self.data[[row, col]];
                    }
                }
            }
        }
        DensityMatrix::from_matrix(HilbertSpec::single(d)?, out)
    }

    /// Diagonal of the density matrix (Fock-basis populations).
    pub fn populations(&self) -> Vec<f64> {
        self.data.diag().iter().map(|v| v.re).collect()
    }

    /// Photon-number distribution of one mode.
    pub fn photon_distribution(&self, mode: usize) -> Result<Vec<f64>> {
        if self.space.n_modes() == 1 {
            self.space.mode_dim(mode)?;
            return Ok(self.populations());
        }
        Ok(self.reduce_to_mode(mode)?.populations())
    }

    /// Column-stacked vectorisation: `vec[col * n + row]`.
    pub fn to_vec_col(&self) -> Vec<C64> {
        let n = self.dim();
        let mut out = vec![ZERO; n * n];
        for ((i, j), &v) in self.data.indexed_iter() {
            out[j * n + i] = v;
        }
        out
    }

    pub fn from_vec_col(space: &HilbertSpec, v: &[C64]) -> Result<Self> {
        let n = space.total_dim();
        if v.len() != n * n {
            return Err(Error::InvalidDimension(format!(
                "vector of length {} cannot be reshaped to {n}x{n}",
                v.len()
            )));
        }
        let data = Array2::from_shape_fn((n, n), |(i, j)| v[j * n + i]);
        Ok(Self {
            space: space.clone(),
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::fock_state;

    #[test]
    fn partial_trace_of_product_state() {
        let space = HilbertSpec::two_mode(3, 4).unwrap();
        let rho = DensityMatrix::from_pure(&fock_state(&space, &[2, 1]).unwrap());
        let plant = rho.photon_distribution(1).unwrap();
        assert_eq!(plant, vec![0.0, 1.0, 0.0, 0.0]);
        let ctrl = rho.photon_distribution(0).unwrap();
        assert_eq!(ctrl, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn vec_roundtrip_is_column_stacked() {
        let space = HilbertSpec::single(2).unwrap();
        let data = ndarray::array![
            [C64::new(1.0, 0.0), C64::new(2.0, 0.0)],
            [C64::new(3.0, 0.0), C64::new(4.0, 0.0)]
        ];
        let rho = DensityMatrix::from_matrix(space.clone(), data).unwrap();
        let v = rho.to_vec_col();
        assert_eq!(v[1], C64::new(3.0, 0.0));
        assert_eq!(DensityMatrix::from_vec_col(&space, &v).unwrap(), rho);
    }

    #[test]
    fn validation_rejects_bad_trace() {
        let space = HilbertSpec::single(2).unwrap();
        let data = Array2::from_diag_elem(2, C64::new(1.0, 0.0));
        assert!(DensityMatrix::new(space, data).is_err());
    }
}
