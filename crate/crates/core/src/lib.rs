//! Numerical workbench for multistate Landau-Zener models.
//!
//! The crate propagates `H(t) = A + B t` Hamiltonians to scattering
//! matrices, checks the exact hierarchy constraints those matrices obey,
//! builds multiparticle (fermionic) and tensor-product compositions, runs
//! the semiclassical trajectory ansatz on Demkov-Osherov and bow-tie
//! diagrams, and carries the closed-form solutions of the classic solvable
//! models for use as oracles.
//!
//! Everything is generic over the real scalar via [`LzFloat`]; the aliases
//! below fix `f64`, which is what the command-line tool and the test suite
//! use.

pub mod analytic;
pub mod compose;
pub mod constraints;
pub mod model;
pub mod modelfile;
pub mod presets;
pub mod propagator;
pub mod scalar;
pub mod semiclassical;

pub use nalgebra;
pub use num_complex;

pub use model::{CanonicalizationReport, MlzModel, ModelError};
pub use propagator::{PropagationConfig, ScatteringMatrix, Scheme, TransitionMatrix};
pub use scalar::{LzFloat, C};

/// `f64` model.
pub type Model64 = MlzModel<f64>;
/// `f32` model.
pub type Model32 = MlzModel<f32>;
/// `f64` scattering matrix.
pub type Scattering64 = ScatteringMatrix<f64>;
/// `f64` transition-probability matrix.
pub type Transition64 = TransitionMatrix<f64>;
/// `f64` propagation configuration.
pub type Config64 = PropagationConfig<f64>;
