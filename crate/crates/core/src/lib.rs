//! Zero-range processes on a discrete torus with slow defect sites.
//!
//! The crate pairs an exact continuous-time simulator of the diffusively
//! rescaled particle system with a finite-difference solver for its
//! hydrodynamic limit, and a harness comparing the two.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod defects;
pub mod error;
pub mod harness;
pub mod heat;
pub mod measure;
pub mod pde;
pub mod profile;
pub mod rate;
pub mod scenario;
pub mod sim;
pub mod thermo;
pub mod verify;

pub use defects::{DefectClass, DefectSet, DefectSpec};
pub use error::{Error, Result};
pub use profile::{InitialCondition, Profile};
pub use rate::{RateFamily, RateFunction};
pub use thermo::{GrandCanonical, Marginal};
