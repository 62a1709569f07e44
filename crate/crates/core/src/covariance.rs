//! Two-mode quadrature covariance algebra: rotation to a detection angle,
//! vacuum-admixing loss and squeezing-ellipse extraction.
//!
//! Shot-noise convention: the vacuum is `½·I`. The "detection angle" `psi`
//! selects the (2,2) element of `R(psi) σ R(psi)ᵀ` with
//! `R = [[cos, sin], [-sin, cos]]`; `psi = 0` reads the phase quadrature and
//! `psi = π/2` the amplitude quadrature.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{EnmoError, Result};
use crate::units::VACUUM;

/// Symmetric 2×2 covariance in (amplitude, phase) quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Covariance2 {
    pub vxx: f64,
    pub vpp: f64,
    pub vxp: f64,
}

/// Uncertainty-principle bound `det σ ≥ ¼`.
pub const PHYSICAL_DET: f64 = VACUUM * VACUUM;

impl Covariance2 {
    pub const fn vacuum() -> Self {
        Self {
            vxx: VACUUM,
            vpp: VACUUM,
            vxp: 0.0,
        }
    }

    pub const fn diag(vxx: f64, vpp: f64) -> Self {
        Self { vxx, vpp, vxp: 0.0 }
    }

    pub fn det(&self) -> f64 {
        self.vxx * self.vpp - self.vxp * self.vxp
    }

    pub fn trace(&self) -> f64 {
        self.vxx + self.vpp
    }

    pub fn is_positive_definite(&self) -> bool {
        self.vxx > 0.0 && self.vpp > 0.0 && self.det() > 0.0
    }

    pub fn physicality(&self, tol: f64) -> Physicality {
        let det = self.det();
        Physicality {
            det,
            margin: det - PHYSICAL_DET,
            physical: det >= PHYSICAL_DET - tol && self.vxx > 0.0 && self.vpp > 0.0,
        }
    }
}

/// Result of the `det σ ≥ ¼` check; reported rather than assumed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Physicality {
    pub det: f64,
    /// `det - ¼`; negative values violate the uncertainty relation.
    pub margin: f64,
    pub physical: bool,
}

/// `R(psi) σ R(psi)ᵀ`.
pub fn rotate_covariance(sigma: &Covariance2, psi: f64) -> Covariance2 {
    let (s, c) = psi.sin_cos();
    let (ss, cc, sc) = (s * s, c * c, s * c);
    Covariance2 {
        vxx: cc * sigma.vxx + 2.0 * sc * sigma.vxp + ss * sigma.vpp,
        vpp: ss * sigma.vxx - 2.0 * sc * sigma.vxp + cc * sigma.vpp,
        vxp: (cc - ss) * sigma.vxp + sc * (sigma.vpp - sigma.vxx),
    }
}

/// `η σ + (1 - η) ½ I`.
pub fn apply_loss(sigma: &Covariance2, eta: f64) -> Result<Covariance2> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(EnmoError::InvalidParameter {
            name: "eta",
            reason: format!("efficiency must lie in [0, 1], got {eta}"),
        });
    }
    Ok(mix_vacuum(sigma, eta))
}

pub(crate) fn mix_vacuum(sigma: &Covariance2, eta: f64) -> Covariance2 {
    let vac = (1.0 - eta) * VACUUM;
    Covariance2 {
        vxx: eta * sigma.vxx + vac,
        vpp: eta * sigma.vpp + vac,
        vxp: eta * sigma.vxp,
    }
}

/// Variance seen at detection angle `psi`: `(R σ Rᵀ)₂₂`.
pub fn variance_at_angle(sigma: &Covariance2, psi: f64) -> f64 {
    let (s, c) = psi.sin_cos();
    s * s * sigma.vxx - 2.0 * s * c * sigma.vxp + c * c * sigma.vpp
}

/// Squeezing ellipse: principal variances and the detection angle of the
/// minimal-variance quadrature, in `[0, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezeEllipse {
    pub v_min: f64,
    pub v_max: f64,
    /// Detection angle `psi` at which `variance_at_angle` is minimal.
    pub angle: f64,
}

/// Eigen-decomposition of a positive-definite covariance.
///
/// The angle follows the detection-angle convention: `diag(¼, 1)` (amplitude
/// squeezed) has angle `π/2`. Rotating the covariance by `psi` shifts the
/// angle by `-psi` mod π. Circles get angle 0.
pub fn ellipse_from_covariance(sigma: &Covariance2) -> Result<SqueezeEllipse> {
    if !sigma.is_positive_definite() || !sigma.vxp.is_finite() {
        return Err(EnmoError::NotPositiveDefinite {
            vxx: sigma.vxx,
            vpp: sigma.vpp,
            vxp: sigma.vxp,
            det: sigma.det(),
        });
    }
    let mean = 0.5 * sigma.trace();
    let half_diff = 0.5 * (sigma.vpp - sigma.vxx);
    let radius = half_diff.hypot(sigma.vxp);
    // variance_at_angle = mean + half_diff cos 2ψ - vxp sin 2ψ = mean + radius cos(2ψ + φ)
    // with φ = atan2(vxp, half_diff); the minimum sits at 2ψ + φ = π.
    let angle = if radius == 0.0 {
        0.0
    } else {
        let phi = sigma.vxp.atan2(half_diff);
        canonical_angle(0.5 * (PI - phi))
    };
    Ok(SqueezeEllipse {
        v_min: mean - radius,
        v_max: mean + radius,
        angle,
    })
}

/// Maps an angle to `[0, π)`.
pub fn canonical_angle(angle: f64) -> f64 {
    let a = angle.rem_euclid(PI);
    if a >= PI {
        0.0
    } else {
        a
    }
}
