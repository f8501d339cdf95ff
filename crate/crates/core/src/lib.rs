//! Trace functions of Hermitian matrix product operators by global block
//! Lanczos and Gauss quadrature, with thermal observables of spin chains.
//!
//! The pipeline: build a Hamiltonian MPO ([`models`]), run the Krylov
//! recurrence once per starting block ([`lanczos`]), then evaluate any number
//! of functions and temperatures against the resulting quadrature rule
//! ([`thermal`]). [`oracle`] provides dense exact-diagonalization references
//! for small chains and [`cli`] drives temperature sweeps.

pub mod cli;
pub mod lanczos;
pub mod models;
pub mod mpo;
pub mod oracle;
pub mod tensor;
pub mod thermal;

pub use lanczos::{evaluate, evaluate_many, run_lanczos, LanczosConfig, LanczosRun, QuadratureRule};
pub use models::{ModelSpec, StartingBlock};
pub use mpo::Mpo;
