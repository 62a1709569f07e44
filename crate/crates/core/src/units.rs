//! Unit conversions at the I/O boundary.
//!
//! Every frequency stored in a model type is angular (rad/s). Files and the
//! command line use ordinary frequency in Hz; conversion happens once, here.

use std::f64::consts::{LN_10, TAU};

#[inline]
pub fn hz_to_rad(hz: f64) -> f64 {
    TAU * hz
}

#[inline]
pub fn rad_to_hz(rad: f64) -> f64 {
    rad / TAU
}

/// Shot-noise (vacuum) quadrature variance.
pub const VACUUM: f64 = 0.5;

/// Variance in vacuum = ½ units to dB relative to shot noise.
pub fn variance_to_db(variance: f64) -> f64 {
    10.0 * (variance / VACUUM).log10()
}

/// dB relative to shot noise back to a variance in vacuum = ½ units.
pub fn db_to_variance(db: f64) -> f64 {
    VACUUM * (db * LN_10 / 10.0).exp()
}

/// Power in dB (dBm or dB of any reference) to linear units of that reference.
pub fn db_to_linear(db: f64) -> f64 {
    (db * LN_10 / 10.0).exp()
}
