//! Simulator for multicomponent Cahn–Hilliard systems with Maxwell–Stefan
//! cross-diffusion in one space dimension.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod banded;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod mobility;
pub mod scheme;

pub use error::{Error, Result};
pub use grid::{Field, Grid1D};
pub use mobility::{Composition, FrictionModel, Matrix, ModelKind, ModelSpec};
pub use scheme::{SchemeParams, State, StepReport};
