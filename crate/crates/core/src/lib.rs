//! Solver library for d-dimensional reaction-diffusion problems on
//! Cartesian boxes in the Tensor Train format, with a guaranteed upper
//! bound on the energy norm of the total error obtained from a low-rank
//! complementary flux reconstruction.

pub(crate) mod als_util;
pub mod complementary;
pub mod cross;
pub mod error;
pub mod estimator;
pub mod fem;
pub mod linalg;
pub mod pipeline;
pub mod primal;
pub mod problems;
pub mod tt;

pub use error::{Error, Result};
pub use tt::{BlockTtVector, TtMatrix, TtVector};
