use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::model::{model_variance, FitParams};
use super::trace::{Trace, TraceSet, ValueScale};
use crate::error::{EnmoError, Result};
use crate::spectra::Band;
use crate::units::{hz_to_rad, VACUUM};

/// Detection angles recorded at one ancilla detuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignGroup {
    pub detuning_hz: f64,
    pub angles_rad: Vec<f64>,
}

/// A measurement design: which detunings and angles, over which band,
/// with how much multiplicative Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDesign {
    pub groups: Vec<DesignGroup>,
    pub band: Band,
    /// Relative standard deviation of the noise.
    pub noise: f64,
    pub seed: u64,
}

impl SynthDesign {
    /// Three detunings with an orthogonal angle pair at each, 50 kHz to 2 MHz.
    pub fn standard(detunings_hz: &[f64], noise: f64, seed: u64) -> Self {
        Self {
            groups: detunings_hz
                .iter()
                .map(|&d| DesignGroup {
                    detuning_hz: d,
                    angles_rad: vec![0.0, std::f64::consts::FRAC_PI_2],
                })
                .collect(),
            band: Band {
                f_min_hz: 50e3,
                f_max_hz: 2e6,
                n_points: 200,
                spacing: crate::spectra::Spacing::Linear,
            },
            noise,
            seed,
        }
    }

    pub fn n_traces(&self) -> usize {
        self.groups.iter().map(|g| g.angles_rad.len()).sum()
    }

    /// Truth parameters laid out for this design: one detuning per group and
    /// one angle per trace, both taken from the design.
    pub fn layout(&self, shared: &FitParams) -> FitParams {
        let mut p = shared.clone();
        p.delta_a = self.groups.iter().map(|g| hz_to_rad(g.detuning_hz)).collect();
        p.psi = self.groups.iter().flat_map(|g| g.angles_rad.iter().copied()).collect();
        p
    }

    pub fn validate(&self) -> Result<()> {
        self.band.validate()?;
        if self.groups.is_empty() || self.groups.iter().any(|g| g.angles_rad.is_empty()) {
            return Err(EnmoError::InvalidData(
                "design needs at least one angle per detuning".into(),
            ));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(EnmoError::InvalidParameter {
                name: "noise",
                reason: format!("noise level must be finite and >= 0, got {}", self.noise),
            });
        }
        Ok(())
    }
}

fn angle_label(i: usize) -> String {
    let mut s = String::new();
    let mut n = i;
    loop {
        s.insert(0, (b'A' + (n % 26) as u8) as char);
        if n < 26 {
            break;
        }
        n = n / 26 - 1;
    }
    s
}

/// Synthetic traces from `truth` (shared parameters; detunings and angles
/// come from `design`). Deterministic in `design.seed`.
///
/// Each point is `V (1 + n ε)` with `ε ~ N(0, 1)`, stored linear with
/// shot noise = 1.
pub fn synth_dataset(truth: &FitParams, design: &SynthDesign) -> Result<TraceSet> {
    design.validate()?;
    let params = design.layout(truth);
    params.validate(design.groups.len(), design.n_traces())?;

    let freqs = design.band.frequencies_hz();
    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut traces = Vec::with_capacity(design.n_traces());
    let mut t = 0;
    for (g, group) in design.groups.iter().enumerate() {
        for (k, &psi) in group.angles_rad.iter().enumerate() {
            let mut values = Vec::with_capacity(freqs.len());
            for &f in &freqs {
                let v = model_variance(&params, g, t, hz_to_rad(f)) / VACUUM;
                let eps: f64 = normal.sample(&mut rng);
                values.push(v * (1.0 + design.noise * eps));
            }
            let mut trace = Trace {
                frequencies_hz: freqs.clone(),
                values,
                scale: ValueScale::Linear,
                angle_label: angle_label(k),
                detuning_hz: group.detuning_hz,
                metadata: BTreeMap::new(),
                comments: Vec::new(),
            };
            trace.metadata.insert("psi_true_rad".into(), serde_json::json!(psi));
            trace.validate().map_err(|e| {
                EnmoError::InvalidData(format!(
                    "synthetic trace {t} is not a valid variance spectrum ({e}); the noise level may be too high"
                ))
            })?;
            traces.push(trace);
            t += 1;
        }
    }
    TraceSet::new(traces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::reference;

    fn truth() -> FitParams {
        FitParams::from_enmo(&reference::enmo(), reference::ETA)
    }

    #[test]
    fn deterministic_in_seed() {
        let d = SynthDesign::standard(&reference::ANCILLA_DETUNINGS_HZ, 0.01, 7);
        let a = synth_dataset(&truth(), &d).unwrap();
        let b = synth_dataset(&truth(), &d).unwrap();
        assert_eq!(a, b);
        let other = SynthDesign { seed: 8, ..d };
        assert_ne!(a, synth_dataset(&truth(), &other).unwrap());
    }

    #[test]
    fn layout_and_labels() {
        let d = SynthDesign::standard(&reference::ANCILLA_DETUNINGS_HZ, 0.0, 1);
        let set = synth_dataset(&truth(), &d).unwrap();
        assert_eq!(set.traces.len(), 6);
        assert_eq!(set.groups().len(), 3);
        assert_eq!(set.traces[1].angle_label, "B");
        assert_eq!(set.traces[0].len(), 200);
        assert_eq!(angle_label(27), "AB");
    }
}
