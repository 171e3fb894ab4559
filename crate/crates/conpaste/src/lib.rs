//! Conservative pasting on the flat torus: smoothing, blending and local
//! replacement of divergence-free vector fields and volume-preserving maps,
//! with divergence and Jacobian-determinant corrections that restore exact
//! conservation.

pub mod diffeo_pasting;
pub mod divsolve;
pub mod error;
pub mod grid;
pub mod io;
mod linalg;
pub mod mollify;
pub mod moser;
pub mod pasting;
pub mod regions;
pub mod symplectic;
pub mod synth;

pub use error::{Error, Result};
