//! Desk-scale numerical laboratory for a discrete, diffeomorphism-natural
//! MDL functional on boundary-fitted meshes over analytic test geometries.
//!
//! The crate verifies the quantitative predictions of the underlying theory
//! that are checkable at desk scale: per-cell interior and first-layer energy
//! laws, calibration of the constants (alpha0, alpha1, beta1), global
//! interior O(h^2) and boundary O(h) convergence rates, quasi-additivity,
//! scan indifference, layer bounds, flat-reference quasi-uniqueness,
//! smoothing-operator stability, and scaling homogeneities.

pub mod analysis;
pub mod config;
pub mod energy;
pub mod fitting;
pub mod geometry;
pub mod mesh;
pub mod quad;
pub mod region;
pub mod report;
pub mod smoothing;
pub mod windows;
