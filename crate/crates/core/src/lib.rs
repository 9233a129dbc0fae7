//! Lossy BosonSampling at desk scale.
//!
//! Exact permanents, the lossy output-probability functionals (input loss,
//! dark counts, photon shuffling), exact output distributions, and the
//! interpolation procedure that recovers `|Per(X)|^2` from a noisy oracle for
//! the lossy quantity. Every bound used along the way (KL/Pinsker, the
//! Vandermonde inverse norm bounds, the estimator variance bound and the
//! Chebyshev confidence step) is exposed as a plain function so it can be
//! checked numerically.

pub mod distributions;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod loss;
pub mod permanent;
pub mod reduction;
pub mod states;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, RealMatrix, Seed};
pub use loss::LossModel;
pub use permanent::PermanentValue;
pub use states::OccupationState;
