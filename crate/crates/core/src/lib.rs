//! Certification of multi-qubit diagonal gates from product-state probes.

pub mod channels;
pub mod optics;
pub mod probes;
pub mod error;
pub mod expsim;
pub mod qmath;
pub mod random;
pub mod sampling;

pub use error::{Error, Result};
pub use qmath::ComplexMatrix;
