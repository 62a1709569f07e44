use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{EnmoError, Result};
use crate::units::{db_to_linear, VACUUM};

/// How the values of a trace are expressed. Both are relative to shot noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueScale {
    /// Linear variance, shot noise = 1.
    Linear,
    /// `10 log10(V / V_shot)`.
    DbRelShot,
}

impl ValueScale {
    pub fn column(&self) -> &'static str {
        match self {
            ValueScale::Linear => "variance_linear",
            ValueScale::DbRelShot => "variance_db_rel_shot",
        }
    }
}

/// A shot-noise-normalized quadrature variance spectrum at one detection angle.
///
/// Values are kept exactly as read so that writing a trace back reproduces
/// the file; [`Trace::variance`] gives the internal form (vacuum = ½).
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub frequencies_hz: Vec<f64>,
    pub values: Vec<f64>,
    pub scale: ValueScale,
    pub angle_label: String,
    pub detuning_hz: f64,
    pub metadata: BTreeMap<String, serde_json::Value>,
    /// `#` lines preceding the header, without the leading `#`.
    pub comments: Vec<String>,
}

impl Trace {
    pub fn new(frequencies_hz: Vec<f64>, values: Vec<f64>, scale: ValueScale) -> Result<Self> {
        let t = Self {
            frequencies_hz,
            values,
            scale,
            angle_label: String::new(),
            detuning_hz: 0.0,
            metadata: BTreeMap::new(),
            comments: Vec::new(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn with_labels(mut self, angle_label: impl Into<String>, detuning_hz: f64) -> Self {
        self.angle_label = angle_label.into();
        self.detuning_hz = detuning_hz;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.frequencies_hz.is_empty() {
            return Err(EnmoError::InvalidData("trace has no points".into()));
        }
        if self.frequencies_hz.len() != self.values.len() {
            return Err(EnmoError::InvalidData(format!(
                "{} frequencies but {} values",
                self.frequencies_hz.len(),
                self.values.len()
            )));
        }
        for (i, (&f, &v)) in self.frequencies_hz.iter().zip(&self.values).enumerate() {
            if !f.is_finite() || f <= 0.0 {
                return Err(EnmoError::InvalidData(format!(
                    "point {i}: frequency {f} must be positive"
                )));
            }
            if i > 0 && f <= self.frequencies_hz[i - 1] {
                return Err(EnmoError::InvalidData(format!("point {i}: frequencies must increase")));
            }
            let ok = match self.scale {
                ValueScale::Linear => v.is_finite() && v > 0.0,
                ValueScale::DbRelShot => v.is_finite(),
            };
            if !ok {
                return Err(EnmoError::InvalidData(format!("point {i}: invalid variance {v}")));
            }
        }
        if !self.detuning_hz.is_finite() {
            return Err(EnmoError::NonFinite("detuning_hz"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Shot-noise-relative linear variance (vacuum = 1).
    pub fn linear(&self) -> Vec<f64> {
        match self.scale {
            ValueScale::Linear => self.values.clone(),
            ValueScale::DbRelShot => self.values.iter().map(|&d| db_to_linear(d)).collect(),
        }
    }

    /// Variance in the library convention (vacuum = ½).
    pub fn variance(&self) -> Vec<f64> {
        self.linear().into_iter().map(|v| v * VACUUM).collect()
    }
}

/// Traces grouped by ancilla detuning, in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    pub traces: Vec<Trace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetuningGroup {
    pub detuning_hz: f64,
    pub traces: Vec<usize>,
}

impl TraceSet {
    pub fn new(traces: Vec<Trace>) -> Result<Self> {
        if traces.is_empty() {
            return Err(EnmoError::InvalidData("trace set is empty".into()));
        }
        for t in &traces {
            t.validate()?;
        }
        Ok(Self { traces })
    }

    pub fn groups(&self) -> Vec<DetuningGroup> {
        let mut groups: Vec<DetuningGroup> = Vec::new();
        for (i, t) in self.traces.iter().enumerate() {
            match groups.iter_mut().find(|g| g.detuning_hz == t.detuning_hz) {
                Some(g) => g.traces.push(i),
                None => groups.push(DetuningGroup {
                    detuning_hz: t.detuning_hz,
                    traces: vec![i],
                }),
            }
        }
        groups
    }

    /// Group index of every trace.
    pub fn group_of(&self) -> Vec<usize> {
        let groups = self.groups();
        let mut out = vec![0; self.traces.len()];
        for (g, group) in groups.iter().enumerate() {
            for &t in &group.traces {
                out[t] = g;
            }
        }
        out
    }

    pub fn n_points(&self) -> usize {
        self.traces.iter().map(Trace::len).sum()
    }
}

/// A raw electronic power spectrum, linear or in dB(m).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    pub frequencies_hz: Vec<f64>,
    pub values: Vec<f64>,
    pub db: bool,
}

impl PowerSpectrum {
    pub fn linear(frequencies_hz: Vec<f64>, values: Vec<f64>) -> Self {
        Self {
            frequencies_hz,
            values,
            db: false,
        }
    }

    pub fn decibel(frequencies_hz: Vec<f64>, values: Vec<f64>) -> Self {
        Self {
            frequencies_hz,
            values,
            db: true,
        }
    }

    fn power(&self) -> Vec<f64> {
        if self.db {
            self.values.iter().map(|&d| db_to_linear(d)).collect()
        } else {
            self.values.clone()
        }
    }
}

/// `(raw - dark) / (shot - dark)` on a shared frequency grid, computed in
/// linear power. The result is a linear trace with shot noise = 1.
pub fn shot_noise_normalize(raw: &PowerSpectrum, shot: &PowerSpectrum, dark: &PowerSpectrum) -> Result<Trace> {
    let n = raw.frequencies_hz.len();
    for (name, s) in [("raw", raw), ("shot", shot), ("dark", dark)] {
        if s.values.len() != s.frequencies_hz.len() || s.frequencies_hz.len() != n {
            return Err(EnmoError::InvalidData(format!(
                "{name} spectrum length does not match the raw grid"
            )));
        }
        if s.frequencies_hz != raw.frequencies_hz {
            return Err(EnmoError::InvalidData(format!(
                "{name} spectrum is on a different frequency grid"
            )));
        }
    }
    let (r, s, d) = (raw.power(), shot.power(), dark.power());
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let f = raw.frequencies_hz[i];
        if !(s[i] > d[i]) {
            return Err(EnmoError::ShotBelowDark { frequency_hz: f });
        }
        let v = (r[i] - d[i]) / (s[i] - d[i]);
        if !(v > 0.0) || !v.is_finite() {
            return Err(EnmoError::InvalidData(format!(
                "signal does not exceed dark noise at {f} Hz"
            )));
        }
        values.push(v);
    }
    Trace::new(raw.frequencies_hz.clone(), values, ValueScale::Linear)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_db_example() {
        let f = vec![1e5];
        let t = shot_noise_normalize(
            &PowerSpectrum::decibel(f.clone(), vec![-90.0]),
            &PowerSpectrum::decibel(f.clone(), vec![-93.0]),
            &PowerSpectrum::decibel(f, vec![-103.0]),
        )
        .unwrap();
        assert!((t.values[0] - 2.105847016632092).abs() < 1e-12, "{}", t.values[0]);
    }

    #[test]
    fn normalize_linear() {
        let f = vec![1.0, 2.0];
        let t = shot_noise_normalize(
            &PowerSpectrum::linear(f.clone(), vec![3.0, 1.0]),
            &PowerSpectrum::linear(f.clone(), vec![2.0, 2.0]),
            &PowerSpectrum::linear(f, vec![1.0, 0.0]),
        )
        .unwrap();
        assert_eq!(t.values, vec![2.0, 0.5]);
    }

    #[test]
    fn shot_below_dark_is_rejected() {
        let f = vec![1.0, 2.0];
        let err = shot_noise_normalize(
            &PowerSpectrum::linear(f.clone(), vec![3.0, 3.0]),
            &PowerSpectrum::linear(f.clone(), vec![2.0, 1.0]),
            &PowerSpectrum::linear(f, vec![1.0, 1.0]),
        )
        .unwrap_err();
        assert!(matches!(err, EnmoError::ShotBelowDark { frequency_hz } if frequency_hz == 2.0));
    }

    #[test]
    fn grouping_follows_first_appearance() {
        let mk = |d: f64| {
            Trace::new(vec![1.0], vec![1.0], ValueScale::Linear)
                .unwrap()
                .with_labels("A", d)
        };
        let set = TraceSet::new(vec![mk(-2.0), mk(-1.0), mk(-2.0)]).unwrap();
        let g = set.groups();
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].traces, vec![0, 2]);
        assert_eq!(set.group_of(), vec![0, 1, 0]);
    }

    #[test]
    fn db_trace_converts_to_half_vacuum() {
        let t = Trace::new(vec![1.0], vec![0.0], ValueScale::DbRelShot).unwrap();
        assert_eq!(t.variance(), vec![0.5]);
        assert!(Trace::new(vec![1.0], vec![-1.0], ValueScale::Linear).is_err());
        assert!(Trace::new(vec![2.0, 1.0], vec![1.0, 1.0], ValueScale::Linear).is_err());
    }
}
