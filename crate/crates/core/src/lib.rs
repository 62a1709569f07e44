//! Frequency-domain Gaussian noise models of an all-optical effective
//! negative-mass oscillator (ENMO) cascaded with an optomechanical sensor
//! (OMS). Covers the inversely squeezed output spectra and in-situ parameter
//! fits, along with projected back-action cancellation.
//!
//! Rates are angular (rad/s) everywhere inside the library; [`units`]
//! converts to and from Hz at the I/O boundary.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod budget;
pub mod characterize;
pub mod covariance;
pub mod error;
pub mod io;
pub mod optics;
pub mod spectra;
pub mod units;

pub use covariance::{Covariance2, SqueezeEllipse};
pub use error::{EnmoError, Result};
pub use optics::{
    CavityMode, Coupling, CrossTerm, EnmoParams, MechanicalMode, OmsParams, StrengthVariant, WaveplateSetting,
};
pub use spectra::{Band, NoiseSpectrum, Spacing};
