//! Numerical toolkit for Engel structures arising as complex tangencies.
//!
//! The pipeline builds convex spherical curves by grafting, rebalances them to
//! zero integral, integrates them into bundle immersions, forms the derived
//! prolonged plane field and certifies the Engel condition, both directly and
//! as the complex tangency of an embedding into C³.

pub mod cli;
pub mod config;
pub mod cr;
pub mod curve;
mod dense;
pub mod engel;
pub mod error;
pub mod family;
pub mod jet;
pub mod prolong;
pub mod reparam;
pub mod report;
pub mod surgery;
pub mod vec3;

pub use error::{ForgeError, Result};
