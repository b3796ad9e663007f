pub mod calculus;
pub mod cli;
pub mod domain;
pub mod error;
pub mod flow;
pub mod gallery;
pub mod hamiltonian;
pub mod interp;
pub mod io;
pub mod invariants;
pub mod metrics;
pub mod reparam;
pub mod report;

pub use error::{Error, Result};
