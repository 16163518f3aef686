pub mod error;
pub mod evolution;
pub mod geometry;
pub mod kernels;
pub mod lab;
pub mod linalg;
pub mod local;
pub mod nonlocal;
pub mod pair;

pub use error::{Error, Result};
