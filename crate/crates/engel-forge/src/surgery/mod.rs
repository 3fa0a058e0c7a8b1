//! Curvature-profile surgery on convex spherical curves.

pub mod profile;
pub mod seed;
pub mod graft;
pub mod wiggle;

pub use profile::{PiecewiseProfile, Segment, SegmentKind, SmoothedCurve, SmoothingReport};
