//! Adaptive solver for the smallest eigenpair of `A u = lambda C u` on
//! sequence space, with cost accounting and dense reference checks.

pub mod error;
pub mod harness;
pub mod ledger;
pub mod operators;
pub mod oracle;
pub mod quotients;
pub mod seqspace;
pub mod solvers;

pub use error::{Error, Result};
pub use ledger::CostLedger;
pub use operators::{apply, make_model, CompressibleOperator, ModelConfig, ProblemInstance};
pub use seqspace::SparseVector;
pub use solvers::{derive_parameters, minieig, SpectralBounds, StepParameters};
