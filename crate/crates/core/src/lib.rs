//! Wideband hybrid beamforming with a dynamic-subarray fixed true-time-delay
//! (DS-FTTD) front end.
//!
//! The crate covers the whole simulation chain:
//!
//! - [`geometry`]: uniform planar arrays, carrier grids, steering vectors and
//!   the sector antenna model.
//! - [`squint`]: closed-form beam-squint analysis for frequency-flat weights.
//! - [`channel`]: multicarrier multipath channels, SVD + water-filling optimal
//!   precoders and imperfect-CSI perturbation.
//! - [`fttd`]: the fixed delay bank, the block-diagonal delay matrix `F[m]`
//!   and the one-hot switch matrix `S`.
//! - [`rd`]: the row-decomposition alternating minimization that designs `S`
//!   and the digital precoders `D[m]`.
//! - [`metrics`]: spectral efficiency, per-architecture power and energy
//!   efficiency.
//! - [`experiment`]: configurable sweeps producing CSV tables.
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled and
//! fall back to plain iterators otherwise; see [`Execution`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod fttd;
pub mod geometry;
pub mod linalg;
pub mod metrics;
pub mod rd;
pub mod squint;

pub use error::{Error, Result};
pub use exec::Execution;

/// Complex scalar used for every signal-domain quantity.
pub type C64 = nalgebra::Complex<f64>;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<C64>;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
