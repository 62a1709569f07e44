//! Noise spectra of the ENMO and of the cascaded ENMO → OMS system, and the
//! projected back-action cancellation.
//!
//! All spectra are quadrature variances with the vacuum at ½.

use serde::{Deserialize, Serialize};

use crate::covariance::{ellipse_from_covariance, mix_vacuum, Covariance2, Physicality, SqueezeEllipse};
use crate::error::{finite, EnmoError, Result};
use crate::optics::{mech_susceptibility, CrossTerm, EnmoParams, OmsParams};
use crate::units::{hz_to_rad, rad_to_hz, variance_to_db, VACUUM};

/// Grid spacing of a frequency band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

/// Frequency band in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub n_points: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

impl Band {
    pub fn new(f_min_hz: f64, f_max_hz: f64, n_points: usize, spacing: Spacing) -> Result<Self> {
        let band = Self {
            f_min_hz,
            f_max_hz,
            n_points,
            spacing,
        };
        band.validate()?;
        Ok(band)
    }

    pub fn validate(&self) -> Result<()> {
        finite(self.f_min_hz, "f_min_hz")?;
        finite(self.f_max_hz, "f_max_hz")?;
        let bad = |reason: String| EnmoError::InvalidParameter { name: "band", reason };
        if self.f_min_hz >= self.f_max_hz {
            return Err(bad(format!(
                "f_min {} must be below f_max {}",
                self.f_min_hz, self.f_max_hz
            )));
        }
        if self.n_points < 2 {
            return Err(bad("need at least two points".into()));
        }
        if self.spacing == Spacing::Log && self.f_min_hz <= 0.0 {
            return Err(bad("log spacing needs f_min > 0".into()));
        }
        Ok(())
    }

    /// Strictly increasing grid in Hz; the end points are exact.
    pub fn frequencies_hz(&self) -> Vec<f64> {
        let n = self.n_points;
        let last = (n - 1) as f64;
        (0..n)
            .map(|i| {
                if i == 0 {
                    return self.f_min_hz;
                }
                if i == n - 1 {
                    return self.f_max_hz;
                }
                let t = i as f64 / last;
                match self.spacing {
                    Spacing::Linear => self.f_min_hz + t * (self.f_max_hz - self.f_min_hz),
                    Spacing::Log => self.f_min_hz * (self.f_max_hz / self.f_min_hz).powf(t),
                }
            })
            .collect()
    }
}

/// A variance spectrum on an increasing grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpectrum {
    pub frequencies_hz: Vec<f64>,
    pub values: Vec<f64>,
}

impl NoiseSpectrum {
    pub fn new(frequencies_hz: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if frequencies_hz.len() != values.len() {
            return Err(EnmoError::InvalidData("frequency/value length mismatch".into()));
        }
        if frequencies_hz.windows(2).any(|w| w[1] <= w[0]) {
            return Err(EnmoError::InvalidData(
                "frequency grid is not strictly increasing".into(),
            ));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v <= 0.0) {
            return Err(EnmoError::InvalidData(format!(
                "spectrum value {v} is not finite and positive"
            )));
        }
        Ok(Self { frequencies_hz, values })
    }

    pub fn db(&self) -> Vec<f64> {
        self.values.iter().map(|&v| variance_to_db(v)).collect()
    }
}

fn require_detuning(enmo: &EnmoParams) -> Result<()> {
    if enmo.ancilla.detuning == 0.0 {
        return Err(EnmoError::SingularDetuning);
    }
    Ok(())
}

/// The three pieces shared by the ENMO covariance and the CQNC spectrum.
struct EnmoTerms {
    strength: f64,
    chi_a_sq: f64,
    loss: f64,
}

fn enmo_terms(enmo: &EnmoParams, omega: f64) -> EnmoTerms {
    let ka = enmo.ancilla.kappa;
    let da = enmo.ancilla.detuning;
    let chi_a_sq = enmo.chi_ancilla(omega).norm_sqr();
    let strength = enmo.strength(omega);
    let loss = 0.5 * strength * ka * chi_a_sq * ((omega * omega + 0.25 * ka * ka) / (da * da) + 1.0);
    EnmoTerms {
        strength,
        chi_a_sq,
        loss,
    }
}

/// Quadrature covariance of the ENMO output at `omega` (rad/s).
///
/// `vxx = ½`, `vxp = -G_a` (or `-G_a |chi_a| / 2` with the normalized cross
/// term) and `vpp = ½ + (G_a²/2)|chi_a|² + loss`.
pub fn enmo_covariance(enmo: &EnmoParams, omega: f64) -> Result<Covariance2> {
    require_detuning(enmo)?;
    finite(omega, "omega")?;
    Ok(enmo_covariance_unchecked(enmo, omega))
}

pub(crate) fn enmo_covariance_unchecked(enmo: &EnmoParams, omega: f64) -> Covariance2 {
    let t = enmo_terms(enmo, omega);
    let vxp = match enmo.cross_term {
        CrossTerm::AsPrinted => -t.strength,
        CrossTerm::Normalized => -0.5 * t.strength * t.chi_a_sq.sqrt(),
    };
    Covariance2 {
        vxx: VACUUM,
        vxp,
        vpp: VACUUM + 0.5 * t.strength * t.strength * t.chi_a_sq + t.loss,
    }
}

/// Per-term breakdown of the cascaded phase-quadrature spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CqncTerms {
    /// ½
    pub shot: f64,
    /// `(G_a²/2) |chi_m + chi_a|²`, the residual back-action.
    pub backaction: f64,
    /// Vacuum noise admitted by the ancilla loss.
    pub loss: f64,
    pub total: f64,
}

/// Phase-quadrature spectrum of the ENMO → OMS cascade with its term breakdown.
pub fn s_cqnc_terms(enmo: &EnmoParams, oms: &OmsParams, omega: f64) -> Result<CqncTerms> {
    require_detuning(enmo)?;
    finite(omega, "omega")?;
    let t = enmo_terms(enmo, omega);
    let chi_sum = mech_susceptibility(&oms.mech, omega) + enmo.chi_ancilla(omega);
    let backaction = 0.5 * t.strength * t.strength * chi_sum.norm_sqr();
    Ok(CqncTerms {
        shot: VACUUM,
        backaction,
        loss: t.loss,
        total: VACUUM + backaction + t.loss,
    })
}

pub fn s_cqnc(enmo: &EnmoParams, oms: &OmsParams, omega: f64) -> Result<f64> {
    s_cqnc_terms(enmo, oms, omega).map(|t| t.total)
}

/// Label carried by every output that contains the sensor-only baseline.
pub const OMS_BASELINE_LABEL: &str =
    "reconstructed: S_oms = 1/2 + (G_om^2/2)|chi_m|^2 (cascade spectrum with the ENMO removed, no loss term)";

/// Ponderomotively squeezed phase-quadrature spectrum of the sensor alone,
/// `½ + (G_om²/2)|chi_m|²`. This baseline is a reconstruction.
pub fn s_oms_only(oms: &OmsParams, omega: f64) -> f64 {
    let g = oms.strength(omega);
    VACUUM + 0.5 * g * g * mech_susceptibility(&oms.mech, omega).norm_sqr()
}

/// `10 log10(s_before / s_after)`.
pub fn cancellation_db(s_before: f64, s_after: f64) -> Result<f64> {
    if !(s_before > 0.0 && s_after > 0.0) || !s_before.is_finite() || !s_after.is_finite() {
        return Err(EnmoError::InvalidParameter {
            name: "spectrum",
            reason: format!("both spectra must be finite and positive, got {s_before} and {s_after}"),
        });
    }
    Ok(10.0 * (s_before / s_after).log10())
}

/// Human-readable form of the default cancelled-fraction definition.
pub const FRACTION_FORMULA: &str = "(S_before - S_after) / (S_before - floor)";

/// Fraction of the excess noise above `floor` that is removed.
pub fn qba_cancellation_fraction(s_before: f64, s_after: f64, floor: f64) -> Result<f64> {
    if !(s_before > floor) {
        return Err(EnmoError::InvalidParameter {
            name: "s_before",
            reason: format!("baseline {s_before} must exceed the floor {floor}"),
        });
    }
    Ok((s_before - s_after) / (s_before - floor))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionOptions {
    /// Points within `guard_gammas * gamma_m` of `omega_m` are skipped by the maximizers.
    pub guard_gammas: f64,
    /// Noise floor of the cancelled fraction.
    pub floor: f64,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            guard_gammas: 10.0,
            floor: VACUUM,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveMaximum {
    pub frequency_hz: f64,
    /// Frequency over the mechanical resonance frequency.
    pub frequency_over_omega_m: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Projection {
    pub variant: &'static str,
    pub baseline: &'static str,
    pub fraction_formula: &'static str,
    pub options: ProjectionOptions,
    pub frequencies_hz: Vec<f64>,
    pub s_oms: Vec<f64>,
    pub s_cqnc: Vec<f64>,
    pub reduction_db: Vec<f64>,
    /// `None` where the baseline does not exceed the floor.
    pub fraction: Vec<Option<f64>>,
    pub max_reduction_db: Option<CurveMaximum>,
    pub max_fraction: Option<CurveMaximum>,
    /// Number of grid points inside the resonance guard band.
    pub guarded_points: usize,
    /// True when the ENMO actually lowers the noise somewhere outside the guard band.
    pub cancellation: bool,
    pub notes: Vec<String>,
}

fn arg_max<I: Iterator<Item = (usize, f64)>>(it: I) -> Option<(usize, f64)> {
    it.fold(None, |best, (i, v)| match best {
        Some((_, b)) if b >= v => best,
        _ => Some((i, v)),
    })
}

/// Projects the cancellation achieved by cascading `enmo` in front of `oms`.
pub fn project_cqnc(
    enmo: &EnmoParams,
    oms: &OmsParams,
    band: &Band,
    options: &ProjectionOptions,
) -> Result<Projection> {
    band.validate()?;
    require_detuning(enmo)?;
    let freqs = band.frequencies_hz();
    let omega_m = oms.mech.omega_m;
    let guard = options.guard_gammas * oms.mech.gamma_m;

    let mut s_oms = Vec::with_capacity(freqs.len());
    let mut s_after = Vec::with_capacity(freqs.len());
    let mut reduction_db = Vec::with_capacity(freqs.len());
    let mut fraction = Vec::with_capacity(freqs.len());
    let mut allowed = Vec::with_capacity(freqs.len());
    for &f in &freqs {
        let w = hz_to_rad(f);
        let before = s_oms_only(oms, w);
        let after = s_cqnc(enmo, oms, w)?;
        reduction_db.push(cancellation_db(before, after)?);
        fraction.push(qba_cancellation_fraction(before, after, options.floor).ok());
        s_oms.push(before);
        s_after.push(after);
        allowed.push((w - omega_m).abs() > guard);
    }

    let to_max = |(i, v): (usize, f64)| CurveMaximum {
        frequency_hz: freqs[i],
        frequency_over_omega_m: hz_to_rad(freqs[i]) / omega_m,
        value: v,
    };
    let max_reduction_db = arg_max(
        reduction_db
            .iter()
            .enumerate()
            .filter(|(i, _)| allowed[*i])
            .map(|(i, v)| (i, *v)),
    )
    .map(to_max);
    let max_fraction = arg_max(
        fraction
            .iter()
            .enumerate()
            .filter(|(i, _)| allowed[*i])
            .filter_map(|(i, v)| v.map(|v| (i, v))),
    )
    .map(to_max);

    let mut notes = Vec::new();
    if enmo.g_a() == 0.0 {
        notes.push(
            "no cancellation: ENMO coupling g_a is zero, so the cascade model carries no back-action at all \
             and the reduction curve only reflects the removed sensor back-action"
                .to_string(),
        );
    }
    let cancellation = enmo.g_a() > 0.0 && max_reduction_db.is_some_and(|m| m.value > 0.0);
    if !cancellation && enmo.g_a() > 0.0 {
        notes.push("no cancellation: the cascade is noisier than the sensor alone everywhere".into());
    }
    let guarded_points = allowed.iter().filter(|a| !**a).count();
    Ok(Projection {
        variant: enmo.variant.as_str(),
        baseline: OMS_BASELINE_LABEL,
        fraction_formula: FRACTION_FORMULA,
        options: *options,
        frequencies_hz: freqs,
        s_oms,
        s_cqnc: s_after,
        reduction_db,
        fraction,
        max_reduction_db,
        max_fraction,
        guarded_points,
        cancellation,
        notes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EllipsePoint {
    pub frequency_hz: f64,
    #[serde(flatten)]
    pub ellipse: SqueezeEllipse,
}

/// Squeezing ellipse of the detected ENMO output over a band, after loss `eta`.
pub fn ellipse_spectrum(enmo: &EnmoParams, eta: f64, band: &Band) -> Result<Vec<EllipsePoint>> {
    band.validate()?;
    band.frequencies_hz()
        .into_iter()
        .map(|f| {
            let sigma = crate::covariance::apply_loss(&enmo_covariance(enmo, hz_to_rad(f))?, eta)?;
            Ok(EllipsePoint {
                frequency_hz: f,
                ellipse: ellipse_from_covariance(&sigma)?,
            })
        })
        .collect()
}

/// A grid point where the detected covariance violates `det ≥ ¼`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhysicalityViolation {
    pub frequency_hz: f64,
    #[serde(flatten)]
    pub physicality: Physicality,
}

/// Scans the detected covariance over a band and lists every unphysical point.
pub fn physicality_scan(enmo: &EnmoParams, eta: f64, band: &Band, tol: f64) -> Result<Vec<PhysicalityViolation>> {
    band.validate()?;
    require_detuning(enmo)?;
    if !(0.0..=1.0).contains(&eta) {
        return Err(EnmoError::InvalidParameter {
            name: "eta",
            reason: format!("efficiency must lie in [0, 1], got {eta}"),
        });
    }
    Ok(band
        .frequencies_hz()
        .into_iter()
        .filter_map(|f| {
            let sigma = mix_vacuum(&enmo_covariance_unchecked(enmo, hz_to_rad(f)), eta);
            let p = sigma.physicality(tol);
            (!p.physical).then_some(PhysicalityViolation {
                frequency_hz: f,
                physicality: p,
            })
        })
        .collect())
}

/// Ancilla resonance frequency in Hz, `-delta_a / 2π`.
pub fn ancilla_resonance_hz(enmo: &EnmoParams) -> f64 {
    rad_to_hz(-enmo.ancilla.detuning)
}
