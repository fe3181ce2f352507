//! Simulation engine for a pulsed cascaded optical parametric oscillator.
//!
//! Two intracavity subharmonic modes are driven by a Gaussian pulse train and
//! coupled by a cascaded three-photon interaction. The crate integrates the
//! open-system dynamics by quantum state diffusion (with a dense
//! master-equation oracle for small truncations), evaluates photon statistics
//! and Wigner functions, runs the c-number stochastic equations and the
//! linear threshold analysis, and builds the perturbative polarization
//! triplet state.

pub mod config;
pub mod dynamics;
pub mod fock;
pub mod observables;
pub mod polarization;
pub mod runner;
pub mod semiclassical;
pub mod stats;
pub mod trajectories;

pub use dynamics::{Pump, PulseTrain, SystemParams};
pub use fock::{BasisDims, DensityMatrix, SparseOperator, StateVector};
pub use trajectories::{EvolutionSchedule, InitialState, RunResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
