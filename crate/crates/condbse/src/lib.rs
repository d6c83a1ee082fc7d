//! Backward stochastic equations whose terminal data live in the
//! L⁰(F₀)-module generated by L^p, solved on finite filtered spaces.
//!
//! Layout follows the mathematics bottom-up:
//! [`probspace`] (trees, conditional expectation), [`l0algebra`] (lattice
//! operations, gluing, stability), [`rnmodule`] (conditional norms and the
//! random contraction engine), [`processes`] (S^p, martingales,
//! decomposition), [`bsecore`] (generators and the G-map), [`solvers`],
//! [`gexp`] (g-expectations) and [`cli`].

pub mod bsecore;
pub mod cli;
pub mod error;
pub mod gexp;
pub mod l0algebra;
pub mod probspace;
pub mod processes;
pub mod report;
pub mod rnmodule;
pub mod sampling;
pub mod solvers;

pub use error::{Error, Result};
pub use probspace::{build_space, cond_expect, is_measurable, FilteredSpace, L0Value, Partition};
