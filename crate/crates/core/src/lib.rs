//! Inverse design of rotationally symmetric ring cavities in dielectric slabs.
//!
//! The crate solves the guided-mode-expansion eigenproblem of a slab patterned
//! with concentric etched rings, extracts quality factors and far-field
//! radiation channels, scores designs with a three-term loss (Q, Gaussian
//! far-field overlap, resonance frequency), and drives a staged bounded
//! gradient descent over the disk radius and ring widths.

pub mod analysis;
pub mod error;
pub mod geometry;
pub mod gme;
pub mod objective;
pub mod optimizer;
pub mod slab;

pub use error::{AnalysisError, GeometryError, GmeError, ObjectiveError, OptimizerError, ParseError};
