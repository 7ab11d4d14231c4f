//! Tensor Train vectors, matrices and block vectors.

pub mod block;
pub mod io;
pub mod matrix;
pub mod vector;

pub use block::{BlockTtVector, MoveReport};
pub use matrix::TtMatrix;
pub use vector::{diff_norm, Orthogonality, TtVector, DENSE_CAP};
