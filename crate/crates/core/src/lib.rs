//! Numerical functionals of four-dimensional WZW actions on discretized
//! spheres and balls: mapping degree, the five-dimensional topological term,
//! anomaly cochains and 2-cocycles, transition functions and line-bundle
//! fiber algebra, the cobordism gluing calculus, and the two abelian
//! extensions of the based mapping group of S³.
//!
//! Fields are analytic descriptors sampled on demand; every integral runs on
//! a cubed-sphere midpoint atlas with a deterministic parallel reduction.

pub mod algebra;
pub mod geometry;

pub use algebra::{AlgebraElement, CMat, GroupElement, C64};
pub use geometry::{build_sphere_mesh, cone_mesh, hemisphere, RegionMesh, Weighting};
