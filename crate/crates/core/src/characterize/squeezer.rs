use serde::{Deserialize, Serialize};

use crate::covariance::{ellipse_from_covariance, Covariance2};
use crate::error::{EnmoError, Result};
use crate::units::db_to_linear;

/// Variation of the detected variance over all detection angles, `v_max - v_min`.
/// Zero for a phase-insensitive (circular) state.
pub fn angle_flatness(sigma: &Covariance2) -> Result<f64> {
    let e = ellipse_from_covariance(sigma)?;
    Ok(e.v_max - e.v_min)
}

/// Detection efficiency and squeeze parameter of a pure squeezed state seen
/// through loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezerEstimate {
    pub eta: f64,
    pub r: f64,
}

/// Inverts `V± = η e^{±2r} + 1 - η` (shot noise = 1) for a measured
/// squeezing/anti-squeezing pair in dB relative to shot noise.
///
/// With `a = V+ - 1` and `b = V- - 1`, `η = -ab / (a + b)` and
/// `e^{2r} = 1 + a/η`.
pub fn infer_efficiency_from_squeezing(sqz_db: f64, antisqz_db: f64) -> Result<SqueezerEstimate> {
    if !sqz_db.is_finite() || !antisqz_db.is_finite() {
        return Err(EnmoError::NonFinite("squeezing level"));
    }
    if sqz_db >= 0.0 {
        return Err(EnmoError::NoSqueezing(format!(
            "squeezed level {sqz_db} dB is not below shot noise"
        )));
    }
    if antisqz_db <= 0.0 {
        return Err(EnmoError::NoSqueezing(format!(
            "anti-squeezed level {antisqz_db} dB is not above shot noise"
        )));
    }
    let a = db_to_linear(antisqz_db) - 1.0;
    let b = db_to_linear(sqz_db) - 1.0;
    if a + b <= 0.0 {
        // a pure state has V+ V- = 1, i.e. a + b + ab = 0; loss only raises V+ V-
        return Err(EnmoError::UnphysicalPair(format!(
            "anti-squeezing {antisqz_db} dB is too small for squeezing {sqz_db} dB"
        )));
    }
    let eta = -a * b / (a + b);
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(EnmoError::UnphysicalPair(format!(
            "implied efficiency {eta} outside (0, 1]"
        )));
    }
    let r = 0.5 * (1.0 + a / eta).ln();
    Ok(SqueezerEstimate { eta, r })
}

/// Forward model: `(squeezed, anti-squeezed)` levels in dB for `eta`, `r`.
pub fn squeezing_levels_db(eta: f64, r: f64) -> (f64, f64) {
    let v = |s: f64| 10.0 * (eta * (2.0 * s * r).exp() + 1.0 - eta).log10();
    (v(-1.0), v(1.0))
}
