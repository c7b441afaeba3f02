//! Finite-type minimal annuli in S^2 x R.

pub mod error;
pub mod grid;
pub mod iwasawa;
pub mod lax;
pub mod poly;
pub mod quad;
pub mod sinh_gordon;
pub mod spectral;
pub mod surface;
pub mod whitham;

pub use error::{Error, Result};
