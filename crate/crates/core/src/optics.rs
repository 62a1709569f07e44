//! Physical parameter types, susceptibilities and coupling relations of the
//! negative-mass oscillator (ENMO) and the optomechanical sensor (OMS).
//!
//! Susceptibility convention, used by every module in the crate:
//!
//! ```text
//! chi_cavity(w) =  1 / (kappa/2   - i (w + delta))
//! chi_mech(w)   = -1 / (gamma_m/2 - i (w - omega_m))
//! ```
//!
//! With this choice an ancilla cavity with `delta_a = -omega_m` and
//! `kappa_a = gamma_m` has `chi_mech = -chi_cavity` at every frequency, which
//! is the cancellation condition of the cascaded scheme.

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{finite, EnmoError, Result};
use crate::units::rad_to_hz;

/// An optical resonator mode. All rates in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityMode {
    /// Full linewidth.
    pub kappa: f64,
    pub detuning: f64,
    /// Free spectral range, when the physical cavity is known.
    pub fsr: Option<f64>,
}

impl CavityMode {
    pub fn new(kappa: f64, detuning: f64) -> Result<Self> {
        let mode = Self {
            kappa,
            detuning,
            fsr: None,
        };
        mode.validate()?;
        Ok(mode)
    }

    pub fn with_fsr(mut self, fsr: f64) -> Result<Self> {
        self.fsr = Some(fsr);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        finite(self.kappa, "kappa")?;
        finite(self.detuning, "detuning")?;
        if self.kappa <= 0.0 {
            return Err(EnmoError::InvalidParameter {
                name: "kappa",
                reason: format!("linewidth must be positive, got {}", self.kappa),
            });
        }
        if let Some(fsr) = self.fsr {
            finite(fsr, "fsr")?;
            if fsr <= self.kappa {
                return Err(EnmoError::InvalidParameter {
                    name: "fsr",
                    reason: format!("free spectral range {fsr} must exceed the linewidth {}", self.kappa),
                });
            }
        }
        Ok(())
    }
}

/// The mechanical oscillator of the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanicalMode {
    pub omega_m: f64,
    pub gamma_m: f64,
}

impl MechanicalMode {
    pub fn new(omega_m: f64, gamma_m: f64) -> Result<Self> {
        let m = Self { omega_m, gamma_m };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        finite(self.omega_m, "omega_m")?;
        finite(self.gamma_m, "gamma_m")?;
        if self.omega_m <= 0.0 || self.gamma_m <= 0.0 || self.gamma_m >= self.omega_m {
            return Err(EnmoError::InvalidParameter {
                name: "mechanical mode",
                reason: format!(
                    "need 0 < gamma_m < omega_m, got gamma_m={} omega_m={}",
                    self.gamma_m, self.omega_m
                ),
            });
        }
        Ok(())
    }
}

/// Beamsplitter and down-conversion coupling rates between meter and ancilla.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub g_bs: f64,
    pub g_dc: f64,
}

impl Coupling {
    pub fn new(g_bs: f64, g_dc: f64) -> Result<Self> {
        let c = Self { g_bs, g_dc };
        c.validate()?;
        Ok(c)
    }

    /// Total ENMO coupling `g_a = g_bs + g_dc`.
    pub fn g_a(&self) -> f64 {
        self.g_bs + self.g_dc
    }

    pub fn validate(&self) -> Result<()> {
        finite(self.g_bs, "g_bs")?;
        finite(self.g_dc, "g_dc")?;
        if self.g_bs < 0.0 || self.g_dc < 0.0 {
            return Err(EnmoError::InvalidParameter {
                name: "coupling",
                reason: "coupling rates must be non-negative".into(),
            });
        }
        Ok(())
    }
}

/// Which cavity sets the ENMO measurement strength `G_a = g_a^2 kappa |chi|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrengthVariant {
    /// Ancilla cavity (`kappa_a`, `chi_a`).
    #[default]
    AsPrinted,
    /// Meter cavity (`kappa_c`, `chi_c`), by analogy with the sensor's `G_om`.
    MeterAnalogy,
}

impl StrengthVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            StrengthVariant::AsPrinted => "as-printed",
            StrengthVariant::MeterAnalogy => "meter-analogy",
        }
    }
}

impl std::str::FromStr for StrengthVariant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "as-printed" => Ok(Self::AsPrinted),
            "meter-analogy" => Ok(Self::MeterAnalogy),
            other => Err(format!("unknown variant '{other}' (expected as-printed|meter-analogy)")),
        }
    }
}

/// Amplitude-phase correlation entry of the ENMO covariance.
///
/// `AsPrinted` uses `-G_a`, which carries units of rad/s and makes the
/// matrix non-positive-definite for any realistic coupling. `Normalized`
/// uses the dimensionless `-G_a |chi_a| / 2`, for which the lossless part of
/// the matrix is a pure state (`det = 1/4`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossTerm {
    #[default]
    AsPrinted,
    Normalized,
}

impl CrossTerm {
    pub fn as_str(&self) -> &'static str {
        match self {
            CrossTerm::AsPrinted => "as-printed",
            CrossTerm::Normalized => "normalized",
        }
    }
}

impl std::str::FromStr for CrossTerm {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "as-printed" => Ok(Self::AsPrinted),
            "normalized" => Ok(Self::Normalized),
            other => Err(format!("unknown cross term '{other}' (expected as-printed|normalized)")),
        }
    }
}

/// The all-optical negative-mass oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnmoParams {
    /// Readout cavity (p-polarization), `kappa_c`, `delta_c`.
    pub meter: CavityMode,
    /// High-finesse cavity standing in for the mechanical mode, `kappa_a`, `delta_a`.
    pub ancilla: CavityMode,
    pub coupling: Coupling,
    #[serde(default)]
    pub variant: StrengthVariant,
    #[serde(default)]
    pub cross_term: CrossTerm,
}

impl EnmoParams {
    pub fn new(meter: CavityMode, ancilla: CavityMode, coupling: Coupling) -> Result<Self> {
        let p = Self {
            meter,
            ancilla,
            coupling,
            variant: StrengthVariant::default(),
            cross_term: CrossTerm::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_variant(mut self, variant: StrengthVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_cross_term(mut self, cross_term: CrossTerm) -> Self {
        self.cross_term = cross_term;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.meter.validate()?;
        self.ancilla.validate()?;
        self.coupling.validate()?;
        if self.meter.kappa <= self.ancilla.kappa {
            return Err(EnmoError::InvalidParameter {
                name: "kappa_c",
                reason: format!(
                    "meter linewidth {} must exceed ancilla linewidth {}",
                    self.meter.kappa, self.ancilla.kappa
                ),
            });
        }
        Ok(())
    }

    pub fn g_a(&self) -> f64 {
        self.coupling.g_a()
    }

    pub fn chi_ancilla(&self, omega: f64) -> Complex64 {
        susceptibility(self.ancilla.kappa, self.ancilla.detuning, omega)
    }

    /// Frequency-dependent measurement strength `G_a(omega)` for the configured variant.
    pub fn strength(&self, omega: f64) -> f64 {
        let (kappa, chi) = match self.variant {
            StrengthVariant::AsPrinted => (self.ancilla.kappa, self.chi_ancilla(omega)),
            StrengthVariant::MeterAnalogy => (
                self.meter.kappa,
                susceptibility(self.meter.kappa, self.meter.detuning, omega),
            ),
        };
        g_squared_strength(self.g_a(), kappa, chi.norm_sqr())
    }
}

/// The optomechanical sensor whose back-action the ENMO cancels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmsParams {
    /// Optomechanical readout cavity, `kappa_om`, `delta'_om`.
    pub meter: CavityMode,
    pub mech: MechanicalMode,
    pub g_om: f64,
}

impl OmsParams {
    pub fn new(meter: CavityMode, mech: MechanicalMode, g_om: f64) -> Result<Self> {
        let p = Self { meter, mech, g_om };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.meter.validate()?;
        self.mech.validate()?;
        finite(self.g_om, "g_om")?;
        if self.g_om < 0.0 {
            return Err(EnmoError::InvalidParameter {
                name: "g_om",
                reason: "coupling must be non-negative".into(),
            });
        }
        Ok(())
    }

    /// `G_om(omega) = g_om^2 kappa_om |chi_om(omega)|^2`.
    pub fn strength(&self, omega: f64) -> f64 {
        let chi = susceptibility(self.meter.kappa, self.meter.detuning, omega);
        g_squared_strength(self.g_om, self.meter.kappa, chi.norm_sqr())
    }
}

/// Waveplate orientation `delta` (optical axis to s-pol) and retardation `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveplateSetting {
    pub delta: f64,
    pub theta: f64,
}

fn susceptibility(kappa: f64, detuning: f64, omega: f64) -> Complex64 {
    Complex64::new(1.0, 0.0) / Complex64::new(kappa / 2.0, -(omega + detuning))
}

fn g_squared_strength(g: f64, kappa: f64, chi_mag_sq: f64) -> f64 {
    g * g * kappa * chi_mag_sq
}

/// Cavity susceptibility `1 / (kappa/2 - i (omega + detuning))`, in seconds.
pub fn chi_cavity(mode: &CavityMode, omega: f64) -> Result<Complex64> {
    finite(mode.kappa, "kappa")?;
    finite(mode.detuning, "detuning")?;
    finite(omega, "omega")?;
    if mode.kappa <= 0.0 {
        return Err(EnmoError::InvalidParameter {
            name: "kappa",
            reason: "linewidth must be positive".into(),
        });
    }
    Ok(susceptibility(mode.kappa, mode.detuning, omega))
}

/// Mechanical susceptibility `-1 / (gamma_m/2 - i (omega - omega_m))`, in seconds.
pub fn chi_mech(mech: &MechanicalMode, omega: f64) -> Result<Complex64> {
    mech.validate()?;
    finite(omega, "omega")?;
    Ok(mech_susceptibility(mech, omega))
}

pub(crate) fn mech_susceptibility(mech: &MechanicalMode, omega: f64) -> Complex64 {
    Complex64::new(-1.0, 0.0) / Complex64::new(mech.gamma_m / 2.0, -(omega - mech.omega_m))
}

/// `G = g^2 kappa |chi|^2`. With `g`, `kappa` in rad/s and `|chi|^2` in s^2
/// the result is a rate in rad/s.
pub fn measurement_strength(g: f64, kappa: f64, chi_mag_sq: f64) -> Result<f64> {
    finite(g, "g")?;
    finite(kappa, "kappa")?;
    finite(chi_mag_sq, "chi_mag_sq")?;
    if g < 0.0 || kappa < 0.0 || chi_mag_sq < 0.0 {
        return Err(EnmoError::InvalidParameter {
            name: "measurement_strength",
            reason: "inputs must be non-negative".into(),
        });
    }
    Ok(g_squared_strength(g, kappa, chi_mag_sq))
}

/// Polarization coupling matrix of a retarder with axis angle `delta` and
/// retardation `theta`, acting on (s, p) amplitudes.
pub fn waveplate_matrix(wp: &WaveplateSetting) -> Matrix2<Complex64> {
    let (s, c) = wp.delta.sin_cos();
    let phase = Complex64::from_polar(1.0, -wp.theta);
    let one = Complex64::new(1.0, 0.0);
    let off = (phase - one) * (s * c);
    Matrix2::new(
        one * (c * c) + phase * (s * s),
        off,
        off,
        phase * (c * c) + one * (s * s),
    )
}

/// Residuals of the lossless beamsplitter relations for `M = [[t, r], [r', t']]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BeamsplitterCheck {
    /// `max(| |r| - |r'| |, | |t| - |t'| |)`
    pub magnitude_symmetry: f64,
    /// `| |r|^2 + |t|^2 - 1 |`
    pub energy: f64,
    /// `| t r'* + r t'* |`, row orthogonality of a unitary `M`.
    pub phase: f64,
    pub tol: f64,
    pub passed: bool,
}

pub fn beamsplitter_relations_check(m: &Matrix2<Complex64>, tol: f64) -> BeamsplitterCheck {
    let (t, r) = (m[(0, 0)], m[(0, 1)]);
    let (r2, t2) = (m[(1, 0)], m[(1, 1)]);
    let magnitude_symmetry = (r.norm() - r2.norm()).abs().max((t.norm() - t2.norm()).abs());
    let energy = (r.norm_sqr() + t.norm_sqr() - 1.0).abs();
    let phase = (t * r2.conj() + r * t2.conj()).norm();
    let passed = tol > 0.0 && magnitude_symmetry < tol && energy < tol && phase < tol;
    BeamsplitterCheck {
        magnitude_symmetry,
        energy,
        phase,
        tol,
        passed,
    }
}

/// Beamsplitter coupling of a waveplate inside a cavity: `sin(2 delta) theta FSR`.
pub fn g_bs_from_waveplate(wp: &WaveplateSetting, fsr: f64) -> Result<f64> {
    finite(fsr, "fsr")?;
    if fsr <= 0.0 {
        return Err(EnmoError::InvalidParameter {
            name: "fsr",
            reason: "free spectral range must be positive".into(),
        });
    }
    Ok((2.0 * wp.delta).sin() * wp.theta * fsr)
}

/// Eigenfrequency splitting of two coupled modes, `2 sqrt((delta_rel/2)^2 + g_bs^2)`.
///
/// Reduces to `2 g_bs` for degenerate modes. The detuned form is the
/// standard two-mode eigenvalue result.
pub fn normal_mode_splitting(delta_rel: f64, g_bs: f64) -> Result<f64> {
    finite(delta_rel, "delta_rel")?;
    finite(g_bs, "g_bs")?;
    if g_bs < 0.0 {
        return Err(EnmoError::InvalidParameter {
            name: "g_bs",
            reason: "coupling must be non-negative".into(),
        });
    }
    Ok(2.0 * (delta_rel / 2.0).hypot(g_bs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchingTolerances {
    /// Relative tolerance on each equality condition.
    pub relative: f64,
    /// Minimum `|delta_a| / kappa_a` accepted as "much greater than".
    pub hierarchy_ratio: f64,
}

impl Default for MatchingTolerances {
    fn default() -> Self {
        Self {
            relative: 0.01,
            hierarchy_ratio: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub name: &'static str,
    pub expression: &'static str,
    /// Signed residual, in Hz for rate conditions and dimensionless for the ratio.
    pub residual: f64,
    /// `|residual|` over the scale of the compared quantities (ratio for the hierarchy).
    pub relative: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchingReport {
    pub variant: &'static str,
    pub tolerances: MatchingTolerances,
    pub conditions: Vec<ConditionCheck>,
    pub all_passed: bool,
}

impl MatchingReport {
    pub fn get(&self, name: &str) -> Option<&ConditionCheck> {
        self.conditions.iter().find(|c| c.name == name)
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("matching report (G_a variant: {})\n", self.variant);
        out.push_str(&format!(
            "{:<20} {:<28} {:>16} {:>12}  {}\n",
            "condition", "expression", "residual", "relative", "status"
        ));
        for c in &self.conditions {
            out.push_str(&format!(
                "{:<20} {:<28} {:>16.6e} {:>12.4e}  {}\n",
                c.name,
                c.expression,
                c.residual,
                c.relative,
                if c.passed { "ok" } else { "MISMATCH" }
            ));
        }
        out
    }
}

fn equality(name: &'static str, expression: &'static str, lhs: f64, rhs: f64, tol: f64) -> ConditionCheck {
    let residual = lhs - rhs;
    let scale = lhs.abs().max(rhs.abs());
    let relative = if scale == 0.0 { 0.0 } else { residual.abs() / scale };
    ConditionCheck {
        name,
        expression,
        residual: rad_to_hz(residual),
        relative,
        passed: relative <= tol,
    }
}

/// Checks the ENMO/OMS matching conditions. Mismatches are findings, not errors.
pub fn matching_report(enmo: &EnmoParams, oms: &OmsParams, tol: &MatchingTolerances) -> MatchingReport {
    let rel = tol.relative;
    let ratio = enmo.ancilla.detuning.abs() / enmo.ancilla.kappa;
    let conditions = vec![
        equality(
            "detuning",
            "delta_a + omega_m = 0",
            enmo.ancilla.detuning,
            -oms.mech.omega_m,
            rel,
        ),
        equality(
            "linewidth",
            "kappa_a - gamma_m = 0",
            enmo.ancilla.kappa,
            oms.mech.gamma_m,
            rel,
        ),
        ConditionCheck {
            name: "hierarchy",
            expression: "|delta_a| / kappa_a >> 1",
            residual: ratio,
            relative: ratio,
            passed: ratio >= tol.hierarchy_ratio,
        },
        equality(
            "meter_linewidth",
            "kappa_c - kappa_om = 0",
            enmo.meter.kappa,
            oms.meter.kappa,
            rel,
        ),
        equality("coupling_sum", "(g_bs + g_dc) - g_om = 0", enmo.g_a(), oms.g_om, rel),
        equality(
            "coupling_balance",
            "g_bs - g_dc = 0",
            enmo.coupling.g_bs,
            enmo.coupling.g_dc,
            rel,
        ),
    ];
    let all_passed = conditions.iter().all(|c| c.passed);
    MatchingReport {
        variant: enmo.variant.as_str(),
        tolerances: *tol,
        conditions,
        all_passed,
    }
}

/// Parameters reported for the ENMO and its matched membrane sensor.
pub mod reference {
    use super::*;
    use crate::units::hz_to_rad;

    pub const FSR_HZ: f64 = 197.4e6;
    pub const ANCILLA_DETUNINGS_HZ: [f64; 3] = [-465e3, -710e3, -1050e3];

    pub fn enmo() -> EnmoParams {
        enmo_with_ancilla_kappa(hz_to_rad(160e3))
    }

    /// Same ENMO with a different ancilla linewidth (e.g. the 10 kHz upgrade).
    pub fn enmo_with_ancilla_kappa(kappa_a: f64) -> EnmoParams {
        EnmoParams {
            meter: CavityMode {
                kappa: hz_to_rad(980e3),
                detuning: 0.0,
                fsr: None,
            },
            ancilla: CavityMode {
                kappa: kappa_a,
                detuning: hz_to_rad(-710e3),
                fsr: Some(hz_to_rad(FSR_HZ)),
            },
            coupling: Coupling {
                g_bs: hz_to_rad(175e3),
                g_dc: hz_to_rad(175e3),
            },
            variant: StrengthVariant::AsPrinted,
            cross_term: CrossTerm::AsPrinted,
        }
    }

    pub fn oms() -> OmsParams {
        OmsParams {
            meter: CavityMode {
                kappa: hz_to_rad(1e6),
                detuning: 0.0,
                fsr: None,
            },
            mech: MechanicalMode {
                omega_m: hz_to_rad(710e3),
                gamma_m: hz_to_rad(1.0),
            },
            g_om: hz_to_rad(350e3),
        }
    }

    /// Total detection efficiency from the loss budget.
    pub const ETA: f64 = 0.54;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::hz_to_rad;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(a.abs())
    }

    #[test]
    fn chi_cavity_peak_is_real() {
        let mode = CavityMode::new(hz_to_rad(160e3), hz_to_rad(-710e3)).unwrap();
        let chi = chi_cavity(&mode, hz_to_rad(710e3)).unwrap();
        assert!(chi.im.abs() < 1e-20);
        assert!(close(chi.re, 2.0 / mode.kappa, 1e-14));
        // oracle: 1.9894367886486917e-06 s
        assert!(close(chi.re, 1.9894367886486917e-06, 1e-13));
    }

    #[test]
    fn chi_cavity_off_resonance_oracle() {
        let mode = CavityMode::new(hz_to_rad(160e3), hz_to_rad(-710e3)).unwrap();
        let chi = chi_cavity(&mode, 0.0).unwrap();
        assert!(close(chi.norm(), 2.2275233151653384e-07, 1e-13));
    }

    #[test]
    fn chi_rejects_non_finite() {
        let mode = CavityMode {
            kappa: 1.0,
            detuning: 0.0,
            fsr: None,
        };
        assert!(chi_cavity(&mode, f64::NAN).is_err());
        let bad = CavityMode {
            kappa: f64::INFINITY,
            ..mode
        };
        assert!(chi_cavity(&bad, 0.0).is_err());
    }

    #[test]
    fn chi_mech_resonance_and_detuned() {
        let mech = MechanicalMode::new(hz_to_rad(710e3), hz_to_rad(1.0)).unwrap();
        let on = chi_mech(&mech, mech.omega_m).unwrap();
        assert!(close(on.re, -2.0 / mech.gamma_m, 1e-14));
        assert_eq!(on.im, 0.0);
        let off = chi_mech(&mech, hz_to_rad(709e3)).unwrap();
        assert!(close(off.norm(), 0.00015915492319753117, 1e-12));
    }

    #[test]
    fn matched_susceptibilities_cancel() {
        let mech = MechanicalMode::new(hz_to_rad(710e3), hz_to_rad(1.0)).unwrap();
        let anc = CavityMode::new(mech.gamma_m, -mech.omega_m).unwrap();
        for k in 0..2000 {
            let w = hz_to_rad(1e3 + 1e3 * k as f64);
            let sum = chi_mech(&mech, w).unwrap() + chi_cavity(&anc, w).unwrap();
            assert_eq!(sum.norm(), 0.0);
        }
    }

    #[test]
    fn strength_examples() {
        assert_eq!(measurement_strength(0.0, 1.0, 1.0).unwrap(), 0.0);
        let kappa = hz_to_rad(160e3);
        let g = hz_to_rad(350e3);
        let peak = measurement_strength(g, kappa, (2.0 / kappa).powi(2)).unwrap();
        assert!(close(peak, 4.0 * g * g / kappa, 1e-14));
        assert!(close(peak, 19242255.003237482, 1e-13));
        assert!(close(peak, hz_to_rad(3.0625e6), 1e-13));
        assert!(measurement_strength(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn strength_variants_select_cavity() {
        let e = reference::enmo();
        let w = hz_to_rad(300e3);
        let a = e.strength(w);
        let chi_c = susceptibility(e.meter.kappa, e.meter.detuning, w);
        let m = e.with_variant(StrengthVariant::MeterAnalogy).strength(w);
        assert!(close(m, e.g_a().powi(2) * e.meter.kappa * chi_c.norm_sqr(), 1e-14));
        assert!(a != m);
    }

    #[test]
    fn waveplate_examples() {
        let id = waveplate_matrix(&WaveplateSetting { delta: 0.7, theta: 0.0 });
        assert!((id - Matrix2::identity()).norm() < 1e-15);
        let theta = 0.4;
        let d0 = waveplate_matrix(&WaveplateSetting { delta: 0.0, theta });
        assert!((d0[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((d0[(1, 1)] - Complex64::from_polar(1.0, -theta)).norm() < 1e-15);
        assert!(d0[(0, 1)].norm() < 1e-15 && d0[(1, 0)].norm() < 1e-15);
        let hw = waveplate_matrix(&WaveplateSetting {
            delta: FRAC_PI_4,
            theta: PI,
        });
        let expect = Matrix2::new(0.0, -1.0, -1.0, 0.0).map(|x| Complex64::new(x, 0.0));
        assert!((hw - expect).norm() < 1e-15);
    }

    #[test]
    fn beamsplitter_relations() {
        let id: Matrix2<Complex64> = Matrix2::identity();
        assert!(beamsplitter_relations_check(&id, 1e-12).passed);
        let wp = waveplate_matrix(&WaveplateSetting {
            delta: 0.3,
            theta: 0.01,
        });
        assert!(beamsplitter_relations_check(&wp, 1e-10).passed);
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let bad = Matrix2::new(h, h, h, h);
        let report = beamsplitter_relations_check(&bad, 1e-10);
        assert!(!report.passed);
        assert!((report.phase - 1.0).abs() < 1e-15);
        assert!(report.energy < 1e-15);
    }

    #[test]
    fn g_bs_examples() {
        let fsr = hz_to_rad(reference::FSR_HZ);
        assert_eq!(
            g_bs_from_waveplate(&WaveplateSetting { delta: 0.0, theta: 0.3 }, fsr).unwrap(),
            0.0
        );
        let g = g_bs_from_waveplate(
            &WaveplateSetting {
                delta: FRAC_PI_4,
                theta: 0.01,
            },
            fsr,
        )
        .unwrap();
        assert!(close(g, 0.01 * fsr, 1e-15));
        // required sin(2 delta) theta for 175 kHz
        let product = 175e3 / reference::FSR_HZ;
        assert!(close(product, 8.865e-4, 1e-3));
        let g = g_bs_from_waveplate(
            &WaveplateSetting {
                delta: FRAC_PI_4,
                theta: product,
            },
            fsr,
        )
        .unwrap();
        assert!(close(g, hz_to_rad(175e3), 1e-12));
        assert!(g_bs_from_waveplate(&WaveplateSetting { delta: 0.1, theta: 0.1 }, 0.0).is_err());
    }

    #[test]
    fn normal_mode_splitting_examples() {
        let g = hz_to_rad(175e3);
        assert_eq!(normal_mode_splitting(0.0, g).unwrap() / g, 2.0);
        assert_eq!(normal_mode_splitting(-3.0, 0.0).unwrap(), 3.0);
        let s = normal_mode_splitting(hz_to_rad(100e3), g).unwrap();
        assert!(close(s, 2287113.974549008, 1e-13));
        assert!((rad_to_hz(s) - 364.0e3).abs() < 100.0);
        assert!(normal_mode_splitting(0.0, -1.0).is_err());
    }

    #[test]
    fn matching_report_reference() {
        let r = matching_report(&reference::enmo(), &reference::oms(), &MatchingTolerances::default());
        let sum = r.get("coupling_sum").unwrap();
        assert!(sum.passed);
        assert!(sum.residual.abs() < 1e-9);
        let lw = r.get("linewidth").unwrap();
        assert!(!lw.passed);
        assert!((lw.residual - (160e3 - 1.0)).abs() < 1e-6);
        let h = r.get("hierarchy").unwrap();
        assert!((h.residual - 4.4375).abs() < 1e-12);
        assert!(h.passed);
        assert!(r.get("detuning").unwrap().passed);
        assert!(r.get("coupling_balance").unwrap().passed);
        assert!(!r.all_passed);
        assert_eq!(r.variant, "as-printed");
        assert!(r.to_table().contains("MISMATCH"));
    }

    #[test]
    fn matching_report_perfect_and_hierarchy_violation() {
        let oms = reference::oms();
        let mut enmo = reference::enmo();
        enmo.ancilla.kappa = oms.mech.gamma_m;
        enmo.ancilla.detuning = -oms.mech.omega_m;
        enmo.meter.kappa = oms.meter.kappa;
        let r = matching_report(&enmo, &oms, &MatchingTolerances::default());
        assert!(r.all_passed, "{}", r.to_table());

        enmo.ancilla.kappa = oms.mech.omega_m / 2.0;
        let r = matching_report(&enmo, &oms, &MatchingTolerances::default());
        assert!(!r.get("hierarchy").unwrap().passed);
    }

    #[test]
    fn type_invariants() {
        assert!(CavityMode::new(0.0, 1.0).is_err());
        assert!(CavityMode::new(1.0, 0.0).unwrap().with_fsr(0.5).is_err());
        assert!(MechanicalMode::new(1.0, 2.0).is_err());
        assert!(Coupling::new(-1.0, 0.0).is_err());
        let slow = CavityMode::new(1.0, 0.0).unwrap();
        let fast = CavityMode::new(2.0, -5.0).unwrap();
        assert!(EnmoParams::new(slow, fast, Coupling::new(0.0, 0.0).unwrap()).is_err());
        assert!(reference::enmo().validate().is_ok());
        assert!(reference::oms().validate().is_ok());
    }
}
