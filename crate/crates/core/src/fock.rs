//! Truncated multimode Fock-space algebra.
//!
//! Basis states are ordered row-major with the last mode varying fastest, so
//! for two modes with cutoffs `(N1, N2)` the state `|n1, n2>` sits at flat
//! index `n1 * (N2 + 1) + n2`. Every module in this crate relies on that
//! ordering.

use num_complex::Complex64 as C64;
use thiserror::Error;

pub const MAX_MODES: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("occupation {occupation} of mode {mode} exceeds cutoff {cutoff}")]
    OutOfBasis {
        mode: usize,
        occupation: usize,
        cutoff: usize,
    },
    #[error("expected {expected} occupations, got {got}")]
    ModeCount { expected: usize, got: usize },
    #[error("dimension mismatch: operator acts on {expected:?}, state lives in {got:?}")]
    DimsMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("unsupported number of modes {0} (1..={MAX_MODES})")]
    UnsupportedModes(usize),
}

/// Per-mode photon-number cutoffs. Mode `i` holds occupations `0..=cutoffs[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BasisDims {
    cutoffs: Vec<usize>,
    strides: Vec<usize>,
    total: usize,
}

impl BasisDims {
    pub fn new(cutoffs: &[usize]) -> Result<Self, FockError> {
        if cutoffs.is_empty() || cutoffs.len() > MAX_MODES {
            return Err(FockError::UnsupportedModes(cutoffs.len()));
        }
        let mut strides = vec![1; cutoffs.len()];
        for i in (0..cutoffs.len() - 1).rev() {
            strides[i] = strides[i + 1] * (cutoffs[i + 1] + 1);
        }
        let total = strides[0] * (cutoffs[0] + 1);
        Ok(Self {
            cutoffs: cutoffs.to_vec(),
            strides,
            total,
        })
    }

    pub fn two_mode(n1: usize, n2: usize) -> Self {
        Self::new(&[n1, n2]).expect("two modes are always supported")
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.cutoffs
    }

    pub fn cutoff(&self, mode: usize) -> usize {
        self.cutoffs[mode]
    }

    pub fn modes(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn stride(&self, mode: usize) -> usize {
        self.strides[mode]
    }

    /// Occupation of `mode` in the basis state at flat index `index`.
    #[inline]
    pub fn occupation(&self, index: usize, mode: usize) -> usize {
        (index / self.strides[mode]) % (self.cutoffs[mode] + 1)
    }

    pub fn index(&self, occupations: &[usize]) -> Result<usize, FockError> {
        basis_index(occupations, self)
    }

    pub fn occupations(&self, index: usize) -> Vec<usize> {
        (0..self.modes()).map(|m| self.occupation(index, m)).collect()
    }
}

pub fn basis_index(occupations: &[usize], dims: &BasisDims) -> Result<usize, FockError> {
    if occupations.len() != dims.modes() {
        return Err(FockError::ModeCount {
            expected: dims.modes(),
            got: occupations.len(),
        });
    }
    let mut index = 0;
    for (mode, (&n, &cutoff)) in occupations.iter().zip(&dims.cutoffs).enumerate() {
        if n > cutoff {
            return Err(FockError::OutOfBasis {
                mode,
                occupation: n,
                cutoff,
            });
        }
        index += n * dims.strides[mode];
    }
    Ok(index)
}

/// Complex amplitudes over a truncated Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    dims: BasisDims,
    amps: Vec<C64>,
}

impl StateVector {
    pub fn zeros(dims: &BasisDims) -> Self {
        Self {
            dims: dims.clone(),
            amps: vec![C64::new(0.0, 0.0); dims.total()],
        }
    }

    pub fn vacuum(dims: &BasisDims) -> Self {
        let mut psi = Self::zeros(dims);
        psi.amps[0] = C64::new(1.0, 0.0);
        psi
    }

    pub fn fock(dims: &BasisDims, occupations: &[usize]) -> Result<Self, FockError> {
        let mut psi = Self::zeros(dims);
        psi.amps[basis_index(occupations, dims)?] = C64::new(1.0, 0.0);
        Ok(psi)
    }

    /// Product of truncated single-mode coherent states, renormalized on the
    /// truncated basis.
    pub fn coherent(dims: &BasisDims, alphas: &[C64]) -> Result<Self, FockError> {
        if alphas.len() != dims.modes() {
            return Err(FockError::ModeCount {
                expected: dims.modes(),
                got: alphas.len(),
            });
        }
        let factors: Vec<Vec<C64>> = alphas
            .iter()
            .zip(dims.cutoffs())
            .map(|(&alpha, &cutoff)| coherent_amplitudes(alpha, cutoff))
            .collect();
        let amps = (0..dims.total())
            .map(|i| {
                factors
                    .iter()
                    .enumerate()
                    .fold(C64::new(1.0, 0.0), |acc, (m, f)| acc * f[dims.occupation(i, m)])
            })
            .collect();
        let mut psi = Self {
            dims: dims.clone(),
            amps,
        };
        psi.normalize();
        Ok(psi)
    }

    pub fn from_amplitudes(dims: &BasisDims, amps: Vec<C64>) -> Result<Self, FockError> {
        if amps.len() != dims.total() {
            return Err(FockError::DimsMismatch {
                expected: dims.cutoffs().to_vec(),
                got: vec![amps.len()],
            });
        }
        Ok(Self {
            dims: dims.clone(),
            amps,
        })
    }

    pub fn dims(&self) -> &BasisDims {
        &self.dims
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn amplitude(&self, occupations: &[usize]) -> Result<C64, FockError> {
        Ok(self.amps[basis_index(occupations, &self.dims)?])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Scales to unit norm and returns the norm before scaling.
    pub fn normalize(&mut self) -> f64 {
        let norm = self.norm_sqr().sqrt();
        if norm > 0.0 {
            let inv = 1.0 / norm;
            self.amps.iter_mut().for_each(|a| *a *= inv);
        }
        norm
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn scaled(&self, factor: C64) -> StateVector {
        StateVector {
            dims: self.dims.clone(),
            amps: self.amps.iter().map(|a| a * factor).collect(),
        }
    }

    pub fn add(&self, other: &StateVector) -> Result<StateVector, FockError> {
        ensure_same_dims(&self.dims, &other.dims)?;
        Ok(StateVector {
            dims: self.dims.clone(),
            amps: self.amps.iter().zip(&other.amps).map(|(a, b)| a + b).collect(),
        })
    }

    /// Population of the top two Fock levels of each mode; returns the largest.
    pub fn top_level_population(&self) -> f64 {
        top_level_population(&self.dims, self.amps.iter().map(|a| a.norm_sqr()))
    }
}

/// Largest, over modes, of the total weight found in the two highest retained
/// levels of that mode. `populations` is indexed like the flat basis.
pub fn top_level_population(dims: &BasisDims, populations: impl Iterator<Item = f64>) -> f64 {
    let mut per_mode = [0.0f64; MAX_MODES];
    for (i, p) in populations.enumerate() {
        for (m, acc) in per_mode.iter_mut().enumerate().take(dims.modes()) {
            if dims.occupation(i, m) + 2 > dims.cutoff(m) {
                *acc += p;
            }
        }
    }
    per_mode[..dims.modes()].iter().cloned().fold(0.0, f64::max)
}

fn coherent_amplitudes(alpha: C64, cutoff: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity(cutoff + 1);
    let mut term = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    out.push(term);
    for n in 1..=cutoff {
        term = term * alpha / (n as f64).sqrt();
        out.push(term);
    }
    out
}

fn ensure_same_dims(expected: &BasisDims, got: &BasisDims) -> Result<(), FockError> {
    if expected != got {
        return Err(FockError::DimsMismatch {
            expected: expected.cutoffs().to_vec(),
            got: got.cutoffs().to_vec(),
        });
    }
    Ok(())
}

/// Sparse operator in sorted, deduplicated triplet form, with a CSR view for
/// fast application.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    dims: BasisDims,
    entries: Vec<(usize, usize, C64)>,
    row_ptr: Vec<usize>,
}

impl SparseOperator {
    /// Sorts by (row, col), sums duplicates and drops exact zeros.
    pub fn from_triplets(dims: &BasisDims, mut entries: Vec<(usize, usize, C64)>) -> Self {
        let n = dims.total();
        assert!(
            entries.iter().all(|&(r, c, _)| r < n && c < n),
            "triplet index out of range"
        );
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, C64)> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|&(_, _, v)| v != C64::new(0.0, 0.0));
        let mut row_ptr = vec![0; n + 1];
        for &(r, _, _) in &merged {
            row_ptr[r + 1] += 1;
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            dims: dims.clone(),
            entries: merged,
            row_ptr,
        }
    }

    pub fn zero(dims: &BasisDims) -> Self {
        Self::from_triplets(dims, Vec::new())
    }

    pub fn identity(dims: &BasisDims) -> Self {
        let entries = (0..dims.total()).map(|i| (i, i, C64::new(1.0, 0.0))).collect();
        Self::from_triplets(dims, entries)
    }

    pub fn dims(&self) -> &BasisDims {
        &self.dims
    }

    pub fn entries(&self) -> &[(usize, usize, C64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        let slice = &self.entries[self.row_ptr[row]..self.row_ptr[row + 1]];
        slice
            .binary_search_by_key(&col, |&(_, c, _)| c)
            .map(|k| slice[k].2)
            .unwrap_or_default()
    }

    pub fn element(&self, bra: &[usize], ket: &[usize]) -> Result<C64, FockError> {
        Ok(self.get(basis_index(bra, &self.dims)?, basis_index(ket, &self.dims)?))
    }

    pub fn adjoint(&self) -> Self {
        let entries = self.entries.iter().map(|&(r, c, v)| (c, r, v.conj())).collect();
        Self::from_triplets(&self.dims, entries)
    }

    pub fn scale(&self, factor: C64) -> Self {
        let entries = self.entries.iter().map(|&(r, c, v)| (r, c, v * factor)).collect();
        Self::from_triplets(&self.dims, entries)
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dims, other.dims, "operator dims differ");
        let entries = self.entries.iter().chain(&other.entries).cloned().collect();
        Self::from_triplets(&self.dims, entries)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    /// Operator product `self * rhs`, merging the rows of `rhs` selected by the
    /// columns of each row of `self`.
    pub fn mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.dims, rhs.dims, "operator dims differ");
        let mut entries = Vec::new();
        for row in 0..self.dims.total() {
            for &(_, k, a) in self.row(row) {
                entries.extend(rhs.row(k).iter().map(|&(_, col, b)| (row, col, a * b)));
            }
        }
        Self::from_triplets(&self.dims, entries)
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.mul(other).sub(&other.mul(self))
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[(usize, usize, C64)] {
        &self.entries[self.row_ptr[row]..self.row_ptr[row + 1]]
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.entries
            .iter()
            .all(|&(r, c, v)| (v - self.get(c, r).conj()).norm() <= tol)
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector, FockError> {
        ensure_same_dims(&self.dims, &psi.dims)?;
        let mut out = StateVector::zeros(&self.dims);
        self.apply_into(&psi.amps, &mut out.amps);
        Ok(out)
    }

    /// `out = A x`. Both slices must have length `dims.total()`.
    #[inline]
    pub fn apply_into(&self, x: &[C64], out: &mut [C64]) {
        for (row, o) in out.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for &(_, col, v) in self.row(row) {
                acc += v * x[col];
            }
            *o = acc;
        }
    }

    /// `out += s A x`.
    #[inline]
    pub fn apply_add_scaled(&self, s: C64, x: &[C64], out: &mut [C64]) {
        for (row, o) in out.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for &(_, col, v) in self.row(row) {
                acc += v * x[col];
            }
            *o += s * acc;
        }
    }

    /// `<x| A |x>` without allocating.
    pub fn expectation(&self, x: &[C64]) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for row in 0..self.dims.total() {
            let mut r = C64::new(0.0, 0.0);
            for &(_, col, v) in self.row(row) {
                r += v * x[col];
            }
            acc += x[row].conj() * r;
        }
        acc
    }
}

fn ladder(mode: usize, dims: &BasisDims, creation: bool) -> SparseOperator {
    assert!(mode < dims.modes(), "mode {mode} out of range");
    let stride = dims.stride(mode);
    let entries = (0..dims.total())
        .filter_map(|col| {
            let n = dims.occupation(col, mode);
            if creation {
                (n < dims.cutoff(mode))
                    .then(|| (col + stride, col, C64::new(((n + 1) as f64).sqrt(), 0.0)))
            } else {
                (n > 0).then(|| (col - stride, col, C64::new((n as f64).sqrt(), 0.0)))
            }
        })
        .collect();
    SparseOperator::from_triplets(dims, entries)
}

/// Annihilation operator on `mode`: `<n-1|a|n> = sqrt(n)`.
pub fn annihilation(mode: usize, dims: &BasisDims) -> SparseOperator {
    ladder(mode, dims, false)
}

pub fn creation(mode: usize, dims: &BasisDims) -> SparseOperator {
    ladder(mode, dims, true)
}

pub fn number(mode: usize, dims: &BasisDims) -> SparseOperator {
    let entries = (0..dims.total())
        .map(|i| (i, i, C64::new(dims.occupation(i, mode) as f64, 0.0)))
        .collect();
    SparseOperator::from_triplets(dims, entries)
}

pub fn apply(op: &SparseOperator, psi: &StateVector) -> Result<StateVector, FockError> {
    op.apply(psi)
}

/// Reduced single-mode density matrix over occupations `0..=cutoff`, stored
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    cutoff: usize,
    data: Vec<C64>,
}

impl DensityMatrix {
    pub fn zeros(cutoff: usize) -> Self {
        Self {
            cutoff,
            data: vec![C64::new(0.0, 0.0); (cutoff + 1) * (cutoff + 1)],
        }
    }

    pub fn from_pure(amps: &[C64]) -> Self {
        let cutoff = amps.len() - 1;
        let mut rho = Self::zeros(cutoff);
        for m in 0..=cutoff {
            for n in 0..=cutoff {
                rho.data[m * (cutoff + 1) + n] = amps[m] * amps[n].conj();
            }
        }
        rho
    }

    pub fn from_diagonal(p: &[f64]) -> Self {
        let mut rho = Self::zeros(p.len() - 1);
        for (n, &pn) in p.iter().enumerate() {
            rho.set(n, n, C64::new(pn, 0.0));
        }
        rho
    }

    /// Builds from a row-major `(cutoff+1)^2` matrix.
    pub fn from_matrix(cutoff: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), (cutoff + 1) * (cutoff + 1));
        Self { cutoff, data }
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.cutoff + 1
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> C64 {
        self.data[m * (self.cutoff + 1) + n]
    }

    pub fn set(&mut self, m: usize, n: usize, v: C64) {
        self.data[m * (self.cutoff + 1) + n] = v;
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|n| self.get(n, n)).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|n| self.get(n, n).re).collect()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        (0..d)
            .flat_map(|m| (0..d).map(move |n| (m, n)))
            .map(|(m, n)| (self.get(m, n) - self.get(n, m).conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn purity(&self) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for m in 0..d {
            for n in 0..d {
                acc += (self.get(m, n) * self.get(n, m)).re;
            }
        }
        acc
    }
}

/// `Tr_2 |psi><psi|` for a two-mode pure state.
pub fn partial_trace_mode1(psi: &StateVector) -> DensityMatrix {
    let dims = psi.dims();
    assert_eq!(dims.modes(), 2, "partial trace expects two modes");
    let (n1, n2) = (dims.cutoff(0) + 1, dims.cutoff(1) + 1);
    let amps = psi.amplitudes();
    let mut rho = DensityMatrix::zeros(n1 - 1);
    for m in 0..n1 {
        let row_m = &amps[m * n2..(m + 1) * n2];
        for n in m..n1 {
            let row_n = &amps[n * n2..(n + 1) * n2];
            let v: C64 = row_m.iter().zip(row_n).map(|(a, b)| a * b.conj()).sum();
            rho.set(m, n, v);
            rho.set(n, m, v.conj());
        }
    }
    rho
}

/// `Tr_2 rho` for a dense two-mode density matrix (row-major, basis order as
/// in [`BasisDims`]).
pub fn partial_trace_mode1_dense(rho: &[C64], dims: &BasisDims) -> DensityMatrix {
    assert_eq!(dims.modes(), 2, "partial trace expects two modes");
    let dim = dims.total();
    assert_eq!(rho.len(), dim * dim);
    let (n1, n2) = (dims.cutoff(0) + 1, dims.cutoff(1) + 1);
    let mut out = DensityMatrix::zeros(n1 - 1);
    for m in 0..n1 {
        for n in 0..n1 {
            let v = (0..n2)
                .map(|k| rho[(m * n2 + k) * dim + n * n2 + k])
                .sum();
            out.set(m, n, v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn basis_index_examples() {
        let dims = BasisDims::two_mode(3, 3);
        assert_eq!(basis_index(&[0, 0], &dims).unwrap(), 0);
        assert_eq!(basis_index(&[0, 1], &dims).unwrap(), 1);
        assert_eq!(basis_index(&[3, 3], &dims).unwrap(), 15);
        assert_eq!(
            basis_index(&[4, 0], &dims),
            Err(FockError::OutOfBasis {
                mode: 0,
                occupation: 4,
                cutoff: 3
            })
        );
    }

    #[test]
    fn basis_index_is_bijective() {
        let dims = BasisDims::new(&[2, 3, 1]).unwrap();
        for i in 0..dims.total() {
            assert_eq!(dims.index(&dims.occupations(i)).unwrap(), i);
        }
    }

    #[test]
    fn ladder_examples() {
        let dims = BasisDims::two_mode(5, 5);
        let a1 = annihilation(0, &dims);
        let a2 = annihilation(1, &dims);
        let out = a1.apply(&StateVector::fock(&dims, &[1, 0]).unwrap()).unwrap();
        assert_eq!(out, StateVector::vacuum(&dims));
        let out = a1.apply(&StateVector::fock(&dims, &[4, 0]).unwrap()).unwrap();
        assert_eq!(out, StateVector::fock(&dims, &[3, 0]).unwrap().scaled(c(2.0)));
        let out = a2.apply(&StateVector::fock(&dims, &[1, 0]).unwrap()).unwrap();
        assert_eq!(out.norm_sqr(), 0.0);
    }

    #[test]
    fn apply_examples() {
        let dims = BasisDims::two_mode(3, 3);
        let psi = StateVector::coherent(&dims, &[C64::new(0.3, 0.1), C64::new(-0.2, 0.4)]).unwrap();
        assert_eq!(SparseOperator::identity(&dims).apply(&psi).unwrap(), psi);

        let n1 = creation(0, &dims).mul(&annihilation(0, &dims));
        let two = StateVector::fock(&dims, &[2, 0]).unwrap();
        let got = n1.apply(&two).unwrap();
        for (a, b) in got.amplitudes().iter().zip(two.scaled(c(2.0)).amplitudes()) {
            assert!((a - b).norm() < 1e-14);
        }

        let pair = creation(0, &dims).mul(&creation(1, &dims));
        let out = pair.apply(&StateVector::vacuum(&dims)).unwrap();
        assert_eq!(out, StateVector::fock(&dims, &[1, 1]).unwrap());
    }

    #[test]
    fn apply_rejects_mismatched_dims() {
        let op = SparseOperator::identity(&BasisDims::two_mode(2, 2));
        let psi = StateVector::vacuum(&BasisDims::two_mode(3, 2));
        assert!(matches!(op.apply(&psi), Err(FockError::DimsMismatch { .. })));
    }

    #[test]
    fn commutator_is_identity_below_cutoff() {
        for cutoffs in [vec![4], vec![3, 5], vec![2, 2, 3]] {
            let dims = BasisDims::new(&cutoffs).unwrap();
            for mode in 0..dims.modes() {
                let comm = annihilation(mode, &dims).commutator(&creation(mode, &dims));
                for i in 0..dims.total() {
                    for j in 0..dims.total() {
                        let n = dims.occupation(i, mode);
                        let expected = if i != j {
                            0.0
                        } else if n < dims.cutoff(mode) {
                            1.0
                        } else {
                            -(dims.cutoff(mode) as f64)
                        };
                        assert!((comm.get(i, j) - c(expected)).norm() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn triplets_are_sorted_and_merged() {
        let dims = BasisDims::new(&[2]).unwrap();
        let op = SparseOperator::from_triplets(
            &dims,
            vec![(2, 0, c(1.0)), (0, 1, c(2.0)), (2, 0, c(0.5)), (1, 1, c(1.0)), (1, 1, c(-1.0))],
        );
        assert_eq!(op.entries(), &[(0, 1, c(2.0)), (2, 0, c(1.5))]);
    }

    #[test]
    fn partial_trace_examples() {
        let dims = BasisDims::two_mode(3, 3);
        let rho = partial_trace_mode1(&StateVector::vacuum(&dims));
        assert_eq!(rho.get(0, 0), c(1.0));
        assert_eq!(rho.trace(), c(1.0));

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bell = StateVector::fock(&dims, &[0, 0])
            .unwrap()
            .add(&StateVector::fock(&dims, &[1, 1]).unwrap())
            .unwrap()
            .scaled(c(s));
        let rho = partial_trace_mode1(&bell);
        for m in 0..4 {
            for n in 0..4 {
                let expected = if m == n && m < 2 { 0.5 } else { 0.0 };
                assert!((rho.get(m, n) - c(expected)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn partial_trace_of_product_state_recovers_factor() {
        let single = BasisDims::new(&[4]).unwrap();
        let phi1 = StateVector::coherent(&single, &[C64::new(0.7, -0.2)]).unwrap();
        let phi2 = [C64::new(0.6, 0.0), C64::new(0.0, 0.8), c(0.0)];
        let dims = BasisDims::two_mode(4, 2);
        let amps = (0..dims.total())
            .map(|i| phi1.amplitudes()[dims.occupation(i, 0)] * phi2[dims.occupation(i, 1)])
            .collect();
        let psi = StateVector::from_amplitudes(&dims, amps).unwrap();
        let reduced = partial_trace_mode1(&psi);
        let expected = DensityMatrix::from_pure(phi1.amplitudes());
        for (a, b) in reduced.data().iter().zip(expected.data()) {
            assert!((a - b).norm() < 1e-14);
        }

        let dense: Vec<C64> = (0..dims.total() * dims.total())
            .map(|k| psi.amplitudes()[k / dims.total()] * psi.amplitudes()[k % dims.total()].conj())
            .collect();
        let reduced_dense = partial_trace_mode1_dense(&dense, &dims);
        for (a, b) in reduced_dense.data().iter().zip(expected.data()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn top_level_population_reports_tail() {
        let dims = BasisDims::two_mode(5, 5);
        let psi = StateVector::fock(&dims, &[4, 0]).unwrap();
        assert_eq!(psi.top_level_population(), 1.0);
        assert_eq!(StateVector::fock(&dims, &[3, 3]).unwrap().top_level_population(), 0.0);
    }

    fn arb_state(dim: usize) -> impl Strategy<Value = Vec<C64>> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim)
            .prop_map(|v| v.into_iter().map(|(re, im)| C64::new(re, im)).collect())
    }

    proptest! {
        #[test]
        fn apply_is_linear(
            x in arb_state(20),
            y in arb_state(20),
            a in (-2.0f64..2.0, -2.0f64..2.0),
            b in (-2.0f64..2.0, -2.0f64..2.0),
        ) {
            let dims = BasisDims::two_mode(4, 3);
            let op = creation(0, &dims).mul(&creation(0, &dims)).mul(&annihilation(1, &dims))
                .add(&annihilation(0, &dims).mul(&creation(1, &dims)).scale(C64::new(0.0, 1.5)));
            let (a, b) = (C64::new(a.0, a.1), C64::new(b.0, b.1));
            let psi = StateVector::from_amplitudes(&dims, x).unwrap();
            let phi = StateVector::from_amplitudes(&dims, y).unwrap();
            let lhs = op.apply(&psi.scaled(a).add(&phi.scaled(b)).unwrap()).unwrap();
            let rhs = op.apply(&psi).unwrap().scaled(a).add(&op.apply(&phi).unwrap().scaled(b)).unwrap();
            for (l, r) in lhs.amplitudes().iter().zip(rhs.amplitudes()) {
                prop_assert!((l - r).norm() < 1e-12);
            }
        }
    }
}
