//! Discretized visibility fields for watertight triangle meshes.
//!
//! The crate is split along the pipeline:
//!
//! * [`geom`] meshes, BVH ray queries, samplers, cameras and mesh I/O.
//! * [`dirsphere`] the fixed Fibonacci direction set and top-k cosine interpolation.
//! * [`oracle`] ray-traced ground truth (visibility masks, occupancy, albedo) and the `.vfld` format.
//! * [`field`] the trainable field: encoding, residual MLP heads, losses, Adam and gradient checks.
//! * [`viewagg`] visibility-weighted multi-view feature aggregation.
//! * [`prt`] real spherical harmonics, transfer vectors and self-shadowed diffuse relighting.
//! * [`recon`] marching cubes and the geometry / image metrics.

pub mod dirsphere;
pub mod error;
pub mod field;
pub mod geom;
pub mod image;
pub mod oracle;
pub mod prt;
pub mod recon;
pub mod viewagg;

pub use error::{Error, Result};
pub use geom::{Vec3, TriangleMesh};
