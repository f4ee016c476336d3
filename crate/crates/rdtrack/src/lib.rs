//! Reconstruction of rate-distortion curves by tracking Blahut–Arimoto
//! fixed points in β with a high-order Taylor method, using implicit
//! derivatives computed from closed-form derivative tensors, with detection
//! and handling of bifurcations.

pub mod ba_core;
pub mod combinatorics;
pub mod implicit;
pub mod linalg;
pub mod oracles;
pub mod problem;
pub mod sympoly;
pub mod tensors;
pub mod tracker;

/// Library version embedded in output manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
