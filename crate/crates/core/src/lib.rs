//! Numerical toolkit for complex structures on real spaces.
//!
//! The crate models square-root-of-minus-identity operators and the
//! machinery around them: complexification, Riesz spectral projections over
//! symmetric contours, lifting of approximate structures with an even/odd
//! dichotomy, real-spectrum parity invariants, conjugator synthesis, and an
//! exact eventually-constant model of 2x2 matrix fields over countable
//! compacta.
//!
//! All values are immutable after construction and every operation is pure
//! and deterministic (fixed summation order), so values can be shared and
//! sent freely between threads.

pub mod ckfield;
pub mod complexify;
pub mod error;
pub mod lifting;
pub mod linalg;
pub mod riesz;
pub mod structures;

pub use error::{Error, Result};
pub use linalg::{ComplexOperator, RealOperator, SpectralCluster, Spectrum};
