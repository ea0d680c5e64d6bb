//! Ground-state energy estimation by Ramsey-type interference against a
//! classically known reference state, with an exact state-vector simulator.
//!
//! Every numeric type is generic over [`Real`]; the aliases below fix `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evolution;
pub mod linalg;
pub mod models;
pub mod operators;
pub mod oracle;
pub mod protocol;
pub mod scalar;
pub mod spectral;
pub mod symmetry;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
pub use evolution::{Method, PropagationSettings};
pub use models::{shipped_model, parse_model_file, GhzLayout};
pub use operators::{Pauli, PauliString};
pub use protocol::{GhzDiagnostics, GhzPlan, SeriesMode, Shots};
pub use scalar::{Cplx, Real};
pub use spectral::{AnalysisOptions, DftOptions, EstimateKind, PeakOptions, Refinement, Window};

pub type Hamiltonian = operators::HamiltonianSpec<f64>;
pub type State = operators::StateVector<f64>;
pub type Model = models::ModelConfig<f64>;
pub type Plan = protocol::RamseyPlan<f64>;
pub type Grid = protocol::TauGrid<f64>;
pub type Series = protocol::RamseySeries<f64>;
pub type Spectrum = spectral::Spectrum<f64>;
pub type Peak = spectral::PeakEstimate<f64>;
pub type EnergyReport = spectral::EnergyReport<f64>;
pub type Estimate = spectral::EnergyEstimate<f64>;
pub type SectorRun = spectral::SectorRun<f64>;
pub type ScanReport = spectral::ScanReport<f64>;
pub type CompareRow = spectral::CompareRow<f64>;
pub type Decomposition = symmetry::SectorDecomposition<f64>;
pub type Eigensystem = symmetry::SectorEigensystem<f64>;
pub type FullSpectrum = oracle::FullSpectrum<f64>;
