//! Per-frame 3D configuration estimation for non-rigid surfaces (cloth,
//! paper, posters) from RGBD sequences, by minimizing a four-term energy over
//! a triangulated mesh with a semi-implicit iterative scheme. Includes a
//! synthetic RGBD generator so the tracker can be validated against exact
//! ground truth.

pub mod energy;
pub mod features;
pub mod mesh;
pub mod pipeline;
pub mod rgbd;
pub mod solver;
pub mod sparse;
pub mod synth;
