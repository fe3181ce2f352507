//! Collinear polarization triplets from two cascaded parametric processes.
//!
//! Modes are ordered `(a1V, a1H, a2V, a2H)`: the first two are the
//! subharmonic modes at the triplet frequency, the last two the intermediate
//! modes that the second process consumes.

use num_complex::Complex64 as C64;
use serde::Serialize;
use thiserror::Error;

use crate::fock::{self, BasisDims, FockError, SparseOperator, StateVector};

pub const A1V: usize = 0;
pub const A1H: usize = 1;
pub const A2V: usize = 2;
pub const A2H: usize = 3;
pub const DEFAULT_CUTOFF: usize = 4;
const VACUUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolarizationError {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error("intermediate modes hold population {0:e}; expected vacuum")]
    UnexpectedPopulation(f64),
    #[error("state vanishes; normalization undefined")]
    ZeroState,
    #[error("expected a two- or four-mode state, got {0} modes")]
    ModeCount(usize),
}

/// Cutoffs of the four polarization modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FourModeDims {
    pub a1v: usize,
    pub a1h: usize,
    pub a2v: usize,
    pub a2h: usize,
}

impl Default for FourModeDims {
    fn default() -> Self {
        Self::uniform(DEFAULT_CUTOFF)
    }
}

impl FourModeDims {
    pub fn uniform(cutoff: usize) -> Self {
        Self {
            a1v: cutoff,
            a1h: cutoff,
            a2v: cutoff,
            a2h: cutoff,
        }
    }

    pub fn basis(&self) -> BasisDims {
        BasisDims::new(&[self.a1v, self.a1h, self.a2v, self.a2h]).expect("four modes are supported")
    }

    /// Smallest cutoffs that hold the triplet: `|3>` on each subharmonic mode
    /// and one photon on each intermediate mode.
    pub fn check(&self) -> Result<(), FockError> {
        let need = [(A1V, self.a1v, 3), (A1H, self.a1h, 3), (A2V, self.a2v, 1), (A2H, self.a2h, 1)];
        for (mode, cutoff, occupation) in need {
            if cutoff < occupation {
                return Err(FockError::OutOfBasis {
                    mode,
                    occupation,
                    cutoff,
                });
            }
        }
        Ok(())
    }
}

fn pair_hermitian(term: SparseOperator, scale: f64) -> SparseOperator {
    // i s (T - T^+)
    let i = C64::new(0.0, scale);
    term.sub(&term.adjoint()).scale(i)
}

/// `H1 = i chi E0 (a1V^+ a2H^+ + a1H^+ a2V^+) + h.c.` and
/// `H2 = i k (a2V a1H^+2 + a2H a1V^+2) + h.c.`
pub fn polarization_hamiltonians(chi_e0: f64, k: f64, dims: &FourModeDims) -> (SparseOperator, SparseOperator) {
    let b = dims.basis();
    let c = |m| fock::creation(m, &b);
    let a = |m| fock::annihilation(m, &b);
    let down = c(A1V).mul(&c(A2H)).add(&c(A1H).mul(&c(A2V)));
    let up = c(A1H)
        .mul(&c(A1H))
        .mul(&a(A2V))
        .add(&c(A1V).mul(&c(A1V)).mul(&a(A2H)));
    (pair_hermitian(down, chi_e0), pair_hermitian(up, k))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletState {
    /// `(-i)^2 H2 H1 |vac>`, second-order factors `1/2!` and time ordering omitted.
    pub unnormalized: StateVector,
    pub normalized: Option<StateVector>,
}

/// Second-order perturbative state from vacuum; `chi` and `k` are the couplings
/// with the interaction time already absorbed.
pub fn triplet_state(chi: f64, k: f64, e0: f64, dims: &FourModeDims) -> Result<TripletState, PolarizationError> {
    dims.check()?;
    let (h1, h2) = polarization_hamiltonians(chi * e0, k, dims);
    let vac = StateVector::vacuum(&dims.basis());
    let psi = h2.apply(&h1.apply(&vac)?)?.scaled(C64::new(-1.0, 0.0));
    let normalized = if psi.norm_sqr() > 0.0 {
        let mut n = psi.clone();
        n.normalize();
        Some(n)
    } else {
        None
    };
    Ok(TripletState {
        unnormalized: psi,
        normalized,
    })
}

/// Restrict a four-mode state to the subharmonic pair, requiring the
/// intermediate modes to be empty.
pub fn subharmonic_state(psi: &StateVector) -> Result<StateVector, PolarizationError> {
    let dims = psi.dims();
    if dims.modes() != 4 {
        return Err(PolarizationError::ModeCount(dims.modes()));
    }
    let pair = BasisDims::two_mode(dims.cutoff(A1V), dims.cutoff(A1H));
    let mut amps = vec![C64::new(0.0, 0.0); pair.total()];
    let mut stray = 0.0;
    for (i, &a) in psi.amplitudes().iter().enumerate() {
        let occ = dims.occupations(i);
        if occ[A2V] == 0 && occ[A2H] == 0 {
            amps[occ[A1V] * (pair.cutoff(1) + 1) + occ[A1H]] = a;
        } else {
            stray += a.norm_sqr();
        }
    }
    let total = psi.norm_sqr();
    if total == 0.0 {
        return Err(PolarizationError::ZeroState);
    }
    if stray > VACUUM_TOLERANCE * total {
        return Err(PolarizationError::UnexpectedPopulation(stray / total));
    }
    Ok(StateVector::from_amplitudes(&pair, amps)?)
}

/// Purity of the reduced `a1V` state. Accepts the two subharmonic modes
/// directly or the full four-mode state.
pub fn nonproduct_check(psi: &StateVector) -> Result<f64, PolarizationError> {
    let pair = match psi.dims().modes() {
        2 => psi.clone(),
        4 => subharmonic_state(psi)?,
        m => return Err(PolarizationError::ModeCount(m)),
    };
    let norm = pair.norm_sqr();
    if norm == 0.0 {
        return Err(PolarizationError::ZeroState);
    }
    let rho = fock::partial_trace_mode1(&pair.scaled(C64::new(1.0 / norm.sqrt(), 0.0)));
    Ok(rho.purity())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn dims() -> FourModeDims {
        FourModeDims::default()
    }

    #[test]
    fn hamiltonian_elements() {
        let (h1, h2) = polarization_hamiltonians(0.7, 0.3, &dims());
        assert!(h1.is_hermitian(1e-15) && h2.is_hermitian(1e-15));
        let e = h1.element(&[1, 0, 0, 1], &[0, 0, 0, 0]).unwrap();
        assert!((e - C64::new(0.0, 0.7)).norm() < 1e-15);
        let e = h1.element(&[0, 1, 1, 0], &[0, 0, 0, 0]).unwrap();
        assert!((e - C64::new(0.0, 0.7)).norm() < 1e-15);
        let e = h2.element(&[3, 0, 0, 0], &[1, 0, 0, 1]).unwrap();
        assert!((e - C64::new(0.0, 0.3 * 6f64.sqrt())).norm() < 1e-15);
    }

    #[test]
    fn triplet_amplitudes() {
        let t = triplet_state(1.0, 1.0, 1.0, &dims()).unwrap();
        let b = dims().basis();
        let s6 = 6f64.sqrt();
        for (i, a) in t.unnormalized.amplitudes().iter().enumerate() {
            let occ = b.occupations(i);
            let want = if occ == [3, 0, 0, 0] || occ == [0, 3, 0, 0] { s6 } else { 0.0 };
            assert!((a - C64::new(want, 0.0)).norm() < 1e-12, "{occ:?}: {a}");
        }
        let n = t.normalized.unwrap();
        for occ in [[3, 0, 0, 0], [0, 3, 0, 0]] {
            assert!((n.amplitude(&occ).unwrap() - C64::new(FRAC_1_SQRT_2, 0.0)).norm() < 1e-12);
        }
        assert!((nonproduct_check(&n).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn triplet_scaling_and_independence() {
        let base = triplet_state(1.0, 1.0, 1.0, &dims()).unwrap();
        let scaled = triplet_state(2.0, 0.5, 3.0, &dims()).unwrap();
        let amp = |t: &TripletState| t.unnormalized.amplitude(&[3, 0, 0, 0]).unwrap();
        assert!((amp(&scaled) - 3.0 * amp(&base)).norm() < 1e-12);
        for (x, y) in base
            .normalized
            .unwrap()
            .amplitudes()
            .iter()
            .zip(scaled.normalized.unwrap().amplitudes())
        {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn triplet_is_symmetric_and_intermediate_modes_empty() {
        let d = FourModeDims::uniform(5);
        let psi = triplet_state(0.4, 1.3, 0.9, &d).unwrap().unnormalized;
        let b = d.basis();
        for m in [A2V, A2H] {
            let out = fock::annihilation(m, &b).apply(&psi).unwrap();
            assert_eq!(out.norm_sqr(), 0.0);
        }
        for (i, a) in psi.amplitudes().iter().enumerate() {
            let o = b.occupations(i);
            let j = b.index(&[o[1], o[0], o[3], o[2]]).unwrap();
            assert_eq!(*a, psi.amplitudes()[j]);
        }
    }

    #[test]
    fn degenerate_inputs() {
        let t = triplet_state(0.0, 1.0, 1.0, &dims()).unwrap();
        assert_eq!(t.unnormalized.norm_sqr(), 0.0);
        assert!(t.normalized.is_none());

        let small = FourModeDims { a1v: 2, ..dims() };
        assert!(matches!(
            triplet_state(1.0, 1.0, 1.0, &small),
            Err(PolarizationError::Fock(FockError::OutOfBasis { mode: A1V, .. }))
        ));
    }

    #[test]
    fn product_states_are_pure() {
        let b = dims().basis();
        for occ in [[3, 0, 0, 0], [0, 3, 0, 0]] {
            let psi = StateVector::fock(&b, &occ).unwrap();
            assert!((nonproduct_check(&psi).unwrap() - 1.0).abs() < 1e-12);
        }
        let psi = StateVector::fock(&b, &[1, 0, 1, 0]).unwrap();
        assert!(matches!(
            nonproduct_check(&psi),
            Err(PolarizationError::UnexpectedPopulation(_))
        ));
    }
}
