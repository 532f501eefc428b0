//! Fock-space operators, states and density matrices.
//!
//! Multi-mode spaces use the Kronecker convention with mode 0 as the slow
//! (leftmost) factor. In the two-mode feedback network mode 0 is the
//! controller `a` and mode 1 is the plant `b`.

mod sparse;
mod state;

pub use sparse::CsrMatrix;
pub use state::{DensityMatrix, StateVector};

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Mode index of the controller cavity in two-mode spaces.
pub const CONTROLLER_MODE: usize = 0;
/// Mode index of the plant cavity in two-mode spaces.
pub const PLANT_MODE: usize = 1;

/// Ordered per-mode truncation dimensions (photon cutoff + 1).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HilbertSpec {
    mode_dims: Vec<usize>,
}

impl HilbertSpec {
    pub fn new(mode_dims: impl Into<Vec<usize>>) -> Result<Self> {
        let mode_dims = mode_dims.into();
        if mode_dims.is_empty() {
            return Err(Error::InvalidDimension("space needs at least one mode".into()));
        }
        if let Some(d) = mode_dims.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidDimension(format!(
                "mode dimension {d} < 2 in {mode_dims:?}"
            )));
        }
        Ok(Self { mode_dims })
    }

    pub fn single(dim: usize) -> Result<Self> {
        Self::new(vec![dim])
    }

    /// Controller-then-plant layout used by the closed-loop network.
    pub fn two_mode(controller_dim: usize, plant_dim: usize) -> Result<Self> {
        Self::new(vec![controller_dim, plant_dim])
    }

    pub fn mode_dims(&self) -> &[usize] {
        &self.mode_dims
    }

    pub fn n_modes(&self) -> usize {
        self.mode_dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.mode_dims.iter().product()
    }

    pub fn mode_dim(&self, mode: usize) -> Result<usize> {
        self.mode_dims.get(mode).copied().ok_or_else(|| {
            Error::InvalidDimension(format!(
                "mode {mode} out of range for {} modes",
                self.mode_dims.len()
            ))
        })
    }

    /// Flat basis index of a product Fock state.
    pub fn index_of(&self, occupations: &[usize]) -> Result<usize> {
        if occupations.len() != self.mode_dims.len() {
            return Err(Error::InvalidDimension(format!(
                "{} occupations given for {} modes",
                occupations.len(),
                self.mode_dims.len()
            )));
        }
        let mut idx = 0;
        for (&n, &d) in occupations.iter().zip(&self.mode_dims) {
            if n >= d {
                return Err(Error::InvalidDimension(format!(
                    "occupation {n} not below cutoff dimension {d}"
                )));
            }
            idx = idx * d + n;
        }
        Ok(idx)
    }

    /// Inverse of [`index_of`](Self::index_of).
    pub fn occupations_of(&self, mut idx: usize) -> Vec<usize> {
        let mut occ = vec![0; self.mode_dims.len()];
        for (slot, &d) in occ.iter_mut().zip(&self.mode_dims).rev() {
            *slot = idx % d;
            idx /= d;
        }
        occ
    }

    pub(crate) fn ensure_same(&self, other: &HilbertSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::InvalidDimension(format!(
                "space mismatch: {:?} vs {:?}",
                self.mode_dims, other.mode_dims
            )))
        }
    }
}

/// Sparse operator acting on a [`HilbertSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    space: HilbertSpec,
    data: CsrMatrix,
}

impl Operator {
    pub fn new(space: HilbertSpec, data: CsrMatrix) -> Result<Self> {
        let n = space.total_dim();
        if data.shape() != (n, n) {
            return Err(Error::InvalidDimension(format!(
                "matrix shape {:?} does not match space dimension {n}",
                data.shape()
            )));
        }
        Ok(Self { space, data })
    }

    pub fn zeros(space: &HilbertSpec) -> Self {
        let n = space.total_dim();
        Self {
            space: space.clone(),
            data: CsrMatrix::zeros(n, n),
        }
    }

    pub fn identity(space: &HilbertSpec) -> Self {
        Self {
            space: space.clone(),
            data: CsrMatrix::identity(space.total_dim()),
        }
    }

    pub fn space(&self) -> &HilbertSpec {
        &self.space
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.space.total_dim()
    }

    pub fn nnz(&self) -> usize {
        self.data.nnz()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data.get(i, j)
    }

    pub fn adjoint(&self) -> Self {
        Self {
            space: self.space.clone(),
            data: self.data.adjoint(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            space: self.space.clone(),
            data: self.data.transpose(),
        }
    }

    pub fn conj(&self) -> Self {
        Self {
            space: self.space.clone(),
            data: self.data.conj(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            space: self.space.clone(),
            data: self.data.scale(s),
        }
    }

    pub fn try_add(&self, other: &Operator) -> Result<Self> {
        self.space.ensure_same(&other.space)?;
        Ok(Self {
            space: self.space.clone(),
            data: self.data.lincomb(ONE, &other.data, ONE),
        })
    }

    pub fn try_mul(&self, other: &Operator) -> Result<Self> {
        self.space.ensure_same(&other.space)?;
        Ok(Self {
            space: self.space.clone(),
            data: self.data.matmul(&other.data),
        })
    }

    pub fn commutator(&self, other: &Operator) -> Result<Self> {
        let ab = self.try_mul(other)?;
        let ba = other.try_mul(self)?;
        Ok(&ab - &ba)
    }

    /// `max |A - A†|` over all entries.
    pub fn hermiticity_error(&self) -> f64 {
        self.data.max_abs_diff(&self.data.adjoint())
    }

    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        self.data.max_abs_diff(&other.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data
            .triplets()
            .map(|(_, _, v)| v.norm())
            .fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.data.nnz() == 0
    }

    pub fn to_dense(&self) -> ndarray::Array2<C64> {
        self.data.to_dense()
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        self.space.ensure_same(psi.space())?;
        let out = self.data.matvec(psi.amplitudes().as_slice().expect("contiguous"));
        Ok(StateVector::from_amplitudes_unchecked(self.space.clone(), out.into()))
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        self.try_add(rhs).expect("operator sum on mismatched spaces")
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "operator difference on mismatched spaces");
        Operator {
            space: self.space.clone(),
            data: self.data.lincomb(ONE, &rhs.data, -ONE),
        }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.try_mul(rhs).expect("operator product on mismatched spaces")
    }
}

impl Mul<&Operator> for C64 {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        rhs.scale(self)
    }
}

impl Mul<&Operator> for f64 {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        rhs.scale(C64::new(self, 0.0))
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scale(-ONE)
    }
}

/// Truncated annihilation operator: `M[n, n+1] = sqrt(n+1)`.
pub fn destroy(dim: usize) -> Result<Operator> {
    let space = HilbertSpec::single(dim)?;
    let data = CsrMatrix::from_triplets(
        dim,
        dim,
        (0..dim - 1).map(|n| (n, n + 1, C64::new(((n + 1) as f64).sqrt(), 0.0))),
    );
    Operator::new(space, data)
}

/// Truncated photon-number operator.
pub fn number(dim: usize) -> Result<Operator> {
    let space = HilbertSpec::single(dim)?;
    let data = CsrMatrix::from_diagonal(
        &(0..dim).map(|n| C64::new(n as f64, 0.0)).collect::<Vec<_>>(),
    );
    Operator::new(space, data)
}

/// Lifts a single-mode operator onto `space`, acting as the identity on every
/// other mode.
pub fn embed(op: &Operator, mode_index: usize, space: &HilbertSpec) -> Result<Operator> {
    let target = space.mode_dim(mode_index)?;
    if op.space.n_modes() != 1 || op.dim() != target {
        return Err(Error::InvalidDimension(format!(
            "cannot embed {:?} operator into mode {mode_index} of dimension {target}",
            op.space.mode_dims()
        )));
    }
    let mut acc: Option<CsrMatrix> = None;
    for (k, &d) in space.mode_dims().iter().enumerate() {
        let factor = if k == mode_index {
            op.data.clone()
        } else {
            CsrMatrix::identity(d)
        };
        acc = Some(match acc {
            None => factor,
            Some(m) => m.kron(&factor),
        });
    }
    Operator::new(space.clone(), acc.expect("non-empty space"))
}

/// `Tr(op · rho)`.
pub fn expectation(rho: &DensityMatrix, op: &Operator) -> Result<C64> {
    rho.space().ensure_same(op.space())?;
    let r = rho.data();
    let mut acc = ZERO;
    for (i, j, v) in op.matrix().triplets() {
        acc += v * r[[j, i]];
    }
    Ok(acc)
}

/// `⟨psi| op |psi⟩` without normalisation.
pub fn expectation_pure(psi: &StateVector, op: &Operator) -> Result<C64> {
    psi.space().ensure_same(op.space())?;
    let amps = psi.amplitudes();
    let mut acc = ZERO;
    for (i, j, v) in op.matrix().triplets() {
        acc += amps[i].conj() * v * amps[j];
    }
    Ok(acc)
}

/// Product Fock state `|n_0, n_1, ...⟩`.
pub fn fock_state(space: &HilbertSpec, occupations: &[usize]) -> Result<StateVector> {
    let idx = space.index_of(occupations)?;
    let mut amps = vec![ZERO; space.total_dim()];
    amps[idx] = ONE;
    Ok(StateVector::from_amplitudes_unchecked(space.clone(), amps.into()))
}

/// Product of truncated coherent states, renormalised after truncation.
pub fn coherent_state(space: &HilbertSpec, alphas: &[C64]) -> Result<StateVector> {
    if alphas.len() != space.n_modes() {
        return Err(Error::InvalidDimension(format!(
            "{} amplitudes given for {} modes",
            alphas.len(),
            space.n_modes()
        )));
    }
    let factors: Vec<Vec<C64>> = alphas
        .iter()
        .zip(space.mode_dims())
        .map(|(&alpha, &d)| {
            let mut amps = Vec::with_capacity(d);
            let mut cur = ONE;
            for n in 0..d {
                if n > 0 {
                    cur = cur * alpha / (n as f64).sqrt();
                }
                amps.push(cur);
            }
            let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            amps.iter_mut().for_each(|a| *a /= norm);
            amps
        })
        .collect();
    let mut out = vec![ONE];
    for f in &factors {
        out = out
            .iter()
            .flat_map(|&x| f.iter().map(move |&y| x * y))
            .collect();
    }
    let mut psi = StateVector::from_amplitudes_unchecked(space.clone(), out.into());
    psi.normalize();
    Ok(psi)
}
