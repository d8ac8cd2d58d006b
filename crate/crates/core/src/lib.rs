//! Asymptotic secret key rates for the coherent-state, homodyne-detection
//! CV-QKD protocol when Bob's practical homodyne detector is modelled as two
//! trusted beamsplitters (electronic noise `eta_e`, detection efficiency
//! `eta_d`) with an optional noiseless phase-sensitive amplifier between them.
//!
//! Modules, bottom up:
//!
//! - [`gaussian`]: covariance matrices, symplectic transforms, homodyne
//!   conditioning, symplectic spectra and entropies.
//! - [`detector`]: conventional vs. modified detector parametrizations and
//!   their shot-noise-unit bookkeeping.
//! - [`protocol`]: the entanglement-based chain and the key rate
//!   `R = beta * I_AB - chi_BE`.
//! - [`analysis`]: distance / modulation sweeps, maximal tolerable excess
//!   noise, high-gain convergence.
//! - [`mcsim`]: quadrature-level Monte-Carlo of the prepare-and-measure
//!   detector outputs.

// `!(x > 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod detector;
mod error;
pub mod gaussian;
pub mod mcsim;
pub mod protocol;

pub use error::{Error, Result};

pub use detector::{ConventionalDetector, ModifiedDetector, RawCalibration};
pub use gaussian::{CovarianceMatrix, Quadrature, SymplecticTransform};
pub use protocol::{ChannelParams, FiberChannel, KeyRateBreakdown, ProtocolParams};
