//! Closed-loop control of spin-lattice Schrödinger systems under fixed-rank
//! hierarchical Tucker truncation.
//!
//! The crate propagates dense tensorized states with a Strang splitting,
//! truncates them to a prescribed hierarchical rank after every sampled
//! control step, and provides the post-hoc analysis used to check practical
//! stability, rank–accuracy and surrogate-to-plant transfer bounds on the
//! resulting trajectories.
//!
//! Module map:
//!
//! - [`tensor`]: amplitude vectors, index conventions, matricization, local operators
//! - [`linalg`]: Hermitian eigendecomposition, singular values, `exp(−iM)`
//! - [`ht`]: dimension trees and HSVD truncation
//! - [`model`]: Heisenberg lattices, named states, `dist_star`, feedback
//! - [`propagate`]: Strang and exact one-step maps
//! - [`closed_loop`]: nominal, surrogate and coupled transfer loops, tubes, sweeps
//! - [`analysis`]: decay fits, contraction estimates, bound checks

pub mod analysis;
pub mod closed_loop;
pub mod error;
pub mod ht;
pub mod linalg;
pub mod model;
pub mod propagate;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{ModeShape, StateVector, C64};

/// Crate version, recorded in run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/states.md")]
    mod states {}
    #[doc = include_str!("../../../book/src/hierarchical-tucker.md")]
    mod hierarchical_tucker {}
    #[doc = include_str!("../../../book/src/lattice.md")]
    mod lattice {}
    #[doc = include_str!("../../../book/src/propagation.md")]
    mod propagation {}
    #[doc = include_str!("../../../book/src/closed-loop.md")]
    mod closed_loop {}
    #[doc = include_str!("../../../book/src/certification.md")]
    mod certification {}
    #[doc = include_str!("../../../book/src/command-line.md")]
    mod command_line {}
}
