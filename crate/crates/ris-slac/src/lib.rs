//! Simulation library for RIS-assisted mmWave links.
//!
//! The crate covers geometric channel synthesis with near-field RIS responses,
//! pilot-based estimation of the cascaded channel, Fisher-information position
//! bounds for a single-antenna link through the RIS, and the experiment drivers
//! that sweep pilot budgets.

// Comparisons are written as `!(x > y)` where NaN must be rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod geometry;
pub mod localization;
pub mod ris_control;
pub mod seed;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
/// Dense complex vector.
pub type CVector = nalgebra::DVector<C64>;
/// Point or displacement in the global frame, meters.
pub type Point3 = nalgebra::Vector3<f64>;
