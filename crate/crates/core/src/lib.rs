//! Fiducial tracking core: camera geometry, image primitives, the Colored
//! Points and binary square-marker detectors, planar pose estimation, a
//! synthetic scene renderer, and the per-frame tracking engine.

pub mod colored_points;
pub mod geometry;
pub mod imaging;
pub mod par;
pub mod marker;
pub mod pose;
pub mod engine;
pub mod record;
pub mod synth;
pub mod wire;
pub mod sweep;
