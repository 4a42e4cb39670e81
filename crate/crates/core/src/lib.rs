//! Predictive teleoperation engine: incremental free-space carving of a
//! surface mesh from keyframe streams, a 250 Hz proximity/haptic loop against
//! that mesh, and a deterministic delayed-channel session harness.

pub mod carving;
pub mod contact;
pub mod delaunay;
pub mod evaluation;
pub mod geometry;
pub mod harness;
pub mod mesh;
pub mod mesh_io;
pub mod par;
pub mod predicates;
pub mod slam;
