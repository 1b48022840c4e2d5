//! TE waves in vacuum/Drude stratified media: spectral zones, generalized
//! eigenfunctions, slab dispersion curves, a discrete self-adjoint oracle
//! for the reduced operator, and time-domain experiments.

// `!(x > a)` is the NaN-rejecting form throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dispersion;
pub mod dynamics;
pub mod error;
pub mod media;
pub mod modes;
pub mod operator1d;
pub mod quadrature;
pub mod roots;
pub mod zones;

pub use error::{Error, Result};
pub use media::{DerivedConstants, DrudeMedium, Side};
pub use zones::{SpectralPoint, TransverseRoots, ZoneLabel};
