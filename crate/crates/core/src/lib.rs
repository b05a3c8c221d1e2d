//! Higher-order Fourier analysis over finite fields, with a harness for
//! locally correctable and locally testable affine-invariant codes.

pub mod cli;
pub mod codes;
pub mod domain_fn;
pub mod error;
pub mod factors;
pub mod field;
pub mod gowers;
pub mod ncpoly;
pub mod nets;
pub mod util;

pub use error::{Error, Result};
