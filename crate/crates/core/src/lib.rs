//! Element-based multi-agent formation control.
//!
//! A formation of `N` agents in 2D or 3D is modeled as a simplicial complex
//! (triangles or tetrahedra). Each element carries a deformation gradient
//! mapping its reference shape to its current shape, and controllers are
//! negative gradients of distortion energies built from that gradient.
//! The library also provides rigidity-based baseline controllers
//! (distance/bearing/ratio-of-distance), stiffness/Laplacian assembly with
//! leader-follower harmonic solves and stabilizing weight design, a
//! fixed-step gradient-flow simulator, and the diagnostics used by the
//! acceptance suite (energy decay statistics, manifold residuals,
//! finite-difference Hessian spectra).

pub mod baselines;
pub mod controller;
pub mod deformation;
mod error;
pub mod fixtures;
pub mod geometry;
pub mod laplacian;
pub mod scenario;
pub mod simulation;
pub mod verify;

pub use error::{Error, Result};
