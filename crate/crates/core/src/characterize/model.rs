use serde::{Deserialize, Serialize};

use crate::covariance::{mix_vacuum, rotate_covariance, variance_at_angle};
use crate::error::{finite, EnmoError, Result};
use crate::optics::{CavityMode, Coupling, CrossTerm, EnmoParams, StrengthVariant};
use crate::spectra::enmo_covariance_unchecked;

/// Everything the detected variance of a trace set depends on. Rates in rad/s.
///
/// The coupling is stored split, but only `g_bs + g_dc` enters the model;
/// `split_known` records whether the split came from an independent prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub g_bs: f64,
    pub g_dc: f64,
    #[serde(default)]
    pub split_known: bool,
    pub kappa_a: f64,
    /// One ancilla detuning per detuning group.
    pub delta_a: Vec<f64>,
    pub kappa_c: f64,
    pub delta_c: f64,
    pub eta: f64,
    /// One detection angle per trace.
    pub psi: Vec<f64>,
    #[serde(default)]
    pub variant: StrengthVariant,
    #[serde(default)]
    pub cross_term: CrossTerm,
}

/// A scalar entry of [`FitParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    GA,
    GBs,
    GDc,
    KappaA,
    KappaC,
    DeltaC,
    Eta,
    DeltaA(usize),
    Psi(usize),
}

impl ParamKind {
    pub fn name(&self) -> String {
        match self {
            ParamKind::GA => "g_a".into(),
            ParamKind::GBs => "g_bs".into(),
            ParamKind::GDc => "g_dc".into(),
            ParamKind::KappaA => "kappa_a".into(),
            ParamKind::KappaC => "kappa_c".into(),
            ParamKind::DeltaC => "delta_c".into(),
            ParamKind::Eta => "eta".into(),
            ParamKind::DeltaA(g) => format!("delta_a[{g}]"),
            ParamKind::Psi(t) => format!("psi[{t}]"),
        }
    }

    /// Whether the value is a rate (rad/s) and is reported in Hz.
    pub fn is_rate(&self) -> bool {
        !matches!(self, ParamKind::Eta | ParamKind::Psi(_))
    }
}

impl FitParams {
    /// Model parameters from an ENMO description, with one detuning group
    /// taken from the ancilla and angles to be filled in later.
    pub fn from_enmo(enmo: &EnmoParams, eta: f64) -> Self {
        Self {
            g_bs: enmo.coupling.g_bs,
            g_dc: enmo.coupling.g_dc,
            split_known: false,
            kappa_a: enmo.ancilla.kappa,
            delta_a: vec![enmo.ancilla.detuning],
            kappa_c: enmo.meter.kappa,
            delta_c: enmo.meter.detuning,
            eta,
            psi: Vec::new(),
            variant: enmo.variant,
            cross_term: enmo.cross_term,
        }
    }

    pub fn g_a(&self) -> f64 {
        self.g_bs + self.g_dc
    }

    /// ENMO of detuning group `group`.
    pub fn enmo(&self, group: usize) -> EnmoParams {
        EnmoParams {
            meter: CavityMode {
                kappa: self.kappa_c,
                detuning: self.delta_c,
                fsr: None,
            },
            ancilla: CavityMode {
                kappa: self.kappa_a,
                detuning: self.delta_a[group],
                fsr: None,
            },
            coupling: Coupling {
                g_bs: self.g_bs,
                g_dc: self.g_dc,
            },
            variant: self.variant,
            cross_term: self.cross_term,
        }
    }

    pub fn validate(&self, n_groups: usize, n_traces: usize) -> Result<()> {
        for (v, what) in [
            (self.g_bs, "g_bs"),
            (self.g_dc, "g_dc"),
            (self.kappa_a, "kappa_a"),
            (self.kappa_c, "kappa_c"),
            (self.delta_c, "delta_c"),
            (self.eta, "eta"),
        ] {
            finite(v, what)?;
        }
        for &d in &self.delta_a {
            finite(d, "delta_a")?;
            if d == 0.0 {
                return Err(EnmoError::SingularDetuning);
            }
        }
        for &p in &self.psi {
            finite(p, "psi")?;
        }
        let invalid = |name, reason: String| Err(EnmoError::InvalidParameter { name, reason });
        if self.kappa_a <= 0.0 || self.kappa_c <= 0.0 {
            return invalid("kappa", "linewidths must be positive".into());
        }
        if self.g_bs < 0.0 || self.g_dc < 0.0 {
            return invalid("coupling", "coupling rates must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return invalid("eta", format!("efficiency must lie in [0, 1], got {}", self.eta));
        }
        if self.delta_a.len() != n_groups {
            return invalid(
                "delta_a",
                format!("{} detunings for {} detuning groups", self.delta_a.len(), n_groups),
            );
        }
        if self.psi.len() != n_traces {
            return invalid("psi", format!("{} angles for {} traces", self.psi.len(), n_traces));
        }
        Ok(())
    }

    pub fn get(&self, kind: ParamKind) -> f64 {
        match kind {
            ParamKind::GA => self.g_a(),
            ParamKind::GBs => self.g_bs,
            ParamKind::GDc => self.g_dc,
            ParamKind::KappaA => self.kappa_a,
            ParamKind::KappaC => self.kappa_c,
            ParamKind::DeltaC => self.delta_c,
            ParamKind::Eta => self.eta,
            ParamKind::DeltaA(g) => self.delta_a[g],
            ParamKind::Psi(t) => self.psi[t],
        }
    }

    /// Sets one entry. Setting `g_a` rescales both couplings, keeping the split.
    pub fn set(&mut self, kind: ParamKind, value: f64) {
        match kind {
            ParamKind::GA => {
                let total = self.g_a();
                if total > 0.0 {
                    let r = self.g_bs / total;
                    self.g_bs = r * value;
                    self.g_dc = value - self.g_bs;
                } else {
                    self.g_bs = 0.5 * value;
                    self.g_dc = 0.5 * value;
                }
            }
            ParamKind::GBs => self.g_bs = value,
            ParamKind::GDc => self.g_dc = value,
            ParamKind::KappaA => self.kappa_a = value,
            ParamKind::KappaC => self.kappa_c = value,
            ParamKind::DeltaC => self.delta_c = value,
            ParamKind::Eta => self.eta = value,
            ParamKind::DeltaA(g) => self.delta_a[g] = value,
            ParamKind::Psi(t) => self.psi[t] = value,
        }
    }
}

/// Detected variance of `enmo` at `omega`, after efficiency `eta` and at detection angle `psi`.
pub fn detected_variance(enmo: &EnmoParams, eta: f64, omega: f64, psi: f64) -> f64 {
    let sigma = enmo_covariance_unchecked(enmo, omega);
    variance_at_angle(&mix_vacuum(&rotate_covariance(&sigma, psi), eta), 0.0)
}

/// Model variance (vacuum = ½) of trace `trace` in detuning group `group`.
pub fn model_variance(params: &FitParams, group: usize, trace: usize, omega: f64) -> f64 {
    detected_variance(&params.enmo(group), params.eta, omega, params.psi[trace])
}
