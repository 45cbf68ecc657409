//! Domain walls of the coupled Gross-Pitaevskii system
//!
//! ```text
//! i psi1_t = -psi1'' + (|psi1|^2 + g |psi2|^2) psi1
//! i psi2_t = -psi2'' + (g |psi1|^2 + |psi2|^2) psi2,   g > 1
//! ```
//!
//! on a truncated uniform grid: profiles, energy and weighted-space
//! functionals, spectra of the linearized operators, time evolution,
//! modulation fitting and stability experiments.

pub mod eigen;
pub mod error;
pub mod evolution;
pub mod functionals;
pub mod golden;
pub mod grid;
pub mod linalg;
pub mod modulation;
pub mod oracle;
pub mod profile;
pub mod spectral;
pub mod stability;

pub use error::{Error, Result};
pub use grid::{diff1, quad, ComplexPair, Grid, RealPair};
pub use evolution::{evolve, step, EvolveConfig, Scheme, Trajectory};
pub use functionals::{energy, rho_a, rho_r, weighted_inner, Perturbation};
pub use modulation::{assemble_b, fit_modulation, track, ModulationMatrix, ModulationState, Tracking};
pub use profile::{fit_decay, solve_profile, translate_gauge, CouplingParams, DecayFit, WallProfile};
pub use spectral::{assemble, lowest_eigs, OperatorKind, OperatorMatrix, SpectralResult};
pub use stability::{run_stability, ExperimentConfig, PerturbationKind, StabilityReport};
