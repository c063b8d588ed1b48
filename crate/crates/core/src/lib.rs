//! Discrete inverse problem toolkit for the perturbed biharmonic operator
//! Δ² + q on a cylinder [0, X₁] × D_r.

pub mod boundary;
pub mod carleman;
pub mod error;
pub mod cgo;
pub mod forward;
pub mod io;
pub mod jet;
pub mod linalg;
pub mod mesh;
pub mod phantom;
pub mod pipeline;
pub mod ray;
pub mod trace;
pub mod util;

pub use error::{Error, Result};
