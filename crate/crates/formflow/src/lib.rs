//! Spectral workbench for stochastic evolution operators acting on
//! differential forms over flat tori (and a truncated-line variant).
//!
//! The library assembles the degree-preserving evolution operator
//! H = L_F − T Σ_a L_{e_a}² of the stochastic flow ẋ = F + (2T)^{1/2} e·ξ
//! in a Fourier–Galerkin basis of the exterior algebra, computes full
//! non-Hermitian spectra per ghost degree, and evaluates the spectral
//! and topological diagnostics built on them: Witten index and zero
//! modes, partition-function traces, boson–fermion pairing, sharp and
//! counting determinants, spectrum classification and temperature
//! sweeps, the Ito–Stratonovich operator pair with a trajectory-level
//! Monte Carlo arbiter, and the deterministic fixed-point (Lefschetz)
//! trace toolkit.
//!
//! See the `examples/` directory for one runnable example per
//! capability and `src/main.rs` for the thin CLI around scenario files.

extern crate blas_src;

pub mod basis;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod mc;
pub mod operators;
pub mod scenario;
pub mod spectra;
pub mod susy;
pub mod transfer;

pub use basis::{eval_density, integral, wedge_sign, FormBasis, KFormVector, Manifold};
pub use error::{FlowError, Result};
pub use fields::{TrigPoly, VectorField, Vielbein};
pub use geometry::{hodge_star, GeometryBundle};
pub use operators::{GradedOperator, OperatorSet};
pub use spectra::{eigendecompose, zero_modes, EigenPair, Spectrum, ZeroModeReport};
pub use susy::{Classification, SusyReport};
