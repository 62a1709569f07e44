//! File formats. Everything on disk is in Hz; conversion to rad/s happens here.
//!
//! * parameter files: JSON, see [`EnmoConfig`] and [`OmsConfig`]
//! * traces: CSV with a `frequency_hz,variance_db_rel_shot` or
//!   `frequency_hz,variance_linear` header, optionally preceded by `#` lines
//! * trace sets: a JSON manifest listing trace files with their labels
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading
//! and re-writing a file produced here reproduces it byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::characterize::{FitParams, FitResult, Trace, TraceSet, ValueScale};
use crate::error::{EnmoError, Result};
use crate::optics::{CavityMode, Coupling, CrossTerm, EnmoParams, MechanicalMode, OmsParams, StrengthVariant};
use crate::units::{hz_to_rad, rad_to_hz};

fn io_err(path: &Path, source: std::io::Error) -> EnmoError {
    EnmoError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|source| EnmoError::Json {
        path: path.display().to_string(),
        source,
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json_string(value))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// A scalar or a list; detunings may be given either way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// ENMO parameters as stored on disk (Hz).
///
/// The coupling is given either as `g_a_hz` or as `g_bs_hz` + `g_dc_hz`.
/// A given `g_bs_hz` counts as a known split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnmoConfig {
    pub kappa_a_hz: f64,
    pub delta_a_hz: OneOrMany,
    pub kappa_c_hz: f64,
    #[serde(default)]
    pub delta_c_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_bs_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_dc_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_a_hz: Option<f64>,
    #[serde(default = "one")]
    pub eta: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub psi_rad: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fsr_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<StrengthVariant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_term: Option<CrossTerm>,
}

fn one() -> f64 {
    1.0
}

impl EnmoConfig {
    fn coupling(&self) -> Result<(Coupling, bool)> {
        let bad = |reason: &str| EnmoError::InvalidParameter {
            name: "coupling",
            reason: reason.into(),
        };
        let (g_bs, g_dc, known) = match (self.g_a_hz, self.g_bs_hz, self.g_dc_hz) {
            (None, Some(b), Some(d)) => (b, d, true),
            (Some(a), None, None) => (0.5 * a, 0.5 * a, false),
            (Some(a), Some(b), None) => (b, a - b, true),
            (Some(a), Some(b), Some(d)) => {
                if ((b + d) - a).abs() > 1e-9 * a.abs().max(1.0) {
                    return Err(bad("g_a_hz must equal g_bs_hz + g_dc_hz"));
                }
                (b, d, true)
            }
            _ => return Err(bad("give g_a_hz, or g_bs_hz and g_dc_hz")),
        };
        let c = Coupling::new(hz_to_rad(g_bs), hz_to_rad(g_dc))?;
        Ok((c, known))
    }

    /// Model parameters. Detunings and angles are kept as listed.
    pub fn to_fit_params(&self) -> Result<FitParams> {
        let (coupling, split_known) = self.coupling()?;
        Ok(FitParams {
            g_bs: coupling.g_bs,
            g_dc: coupling.g_dc,
            split_known,
            kappa_a: hz_to_rad(self.kappa_a_hz),
            delta_a: self.delta_a_hz.values().into_iter().map(hz_to_rad).collect(),
            kappa_c: hz_to_rad(self.kappa_c_hz),
            delta_c: hz_to_rad(self.delta_c_hz),
            eta: self.eta,
            psi: self.psi_rad.clone(),
            variant: self.variant.unwrap_or_default(),
            cross_term: self.cross_term.unwrap_or_default(),
        })
    }

    /// The ENMO at the first listed ancilla detuning, validated.
    pub fn to_enmo(&self) -> Result<EnmoParams> {
        let detunings = self.delta_a_hz.values();
        let first = *detunings.first().ok_or_else(|| EnmoError::InvalidParameter {
            name: "delta_a_hz",
            reason: "no detuning given".into(),
        })?;
        self.to_enmo_at(first)
    }

    pub fn to_enmo_at(&self, delta_a_hz: f64) -> Result<EnmoParams> {
        let (coupling, _) = self.coupling()?;
        let mut ancilla = CavityMode::new(hz_to_rad(self.kappa_a_hz), hz_to_rad(delta_a_hz))?;
        if let Some(fsr) = self.fsr_hz {
            ancilla = ancilla.with_fsr(hz_to_rad(fsr))?;
        }
        let meter = CavityMode::new(hz_to_rad(self.kappa_c_hz), hz_to_rad(self.delta_c_hz))?;
        Ok(EnmoParams::new(meter, ancilla, coupling)?
            .with_variant(self.variant.unwrap_or_default())
            .with_cross_term(self.cross_term.unwrap_or_default()))
    }

    pub fn from_enmo(enmo: &EnmoParams, eta: f64) -> Self {
        Self {
            kappa_a_hz: rad_to_hz(enmo.ancilla.kappa),
            delta_a_hz: OneOrMany::One(rad_to_hz(enmo.ancilla.detuning)),
            kappa_c_hz: rad_to_hz(enmo.meter.kappa),
            delta_c_hz: rad_to_hz(enmo.meter.detuning),
            g_bs_hz: Some(rad_to_hz(enmo.coupling.g_bs)),
            g_dc_hz: Some(rad_to_hz(enmo.coupling.g_dc)),
            g_a_hz: None,
            eta,
            psi_rad: Vec::new(),
            fsr_hz: enmo.ancilla.fsr.map(rad_to_hz),
            variant: Some(enmo.variant),
            cross_term: Some(enmo.cross_term),
        }
    }
}

/// Optomechanical sensor parameters on disk (Hz).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmsConfig {
    pub g_om_hz: f64,
    pub kappa_om_hz: f64,
    #[serde(default)]
    pub delta_om_hz: f64,
    pub omega_m_hz: f64,
    pub gamma_m_hz: f64,
}

impl OmsConfig {
    pub fn to_oms(&self) -> Result<OmsParams> {
        OmsParams::new(
            CavityMode::new(hz_to_rad(self.kappa_om_hz), hz_to_rad(self.delta_om_hz))?,
            MechanicalMode::new(hz_to_rad(self.omega_m_hz), hz_to_rad(self.gamma_m_hz))?,
            hz_to_rad(self.g_om_hz),
        )
    }

    pub fn from_oms(oms: &OmsParams) -> Self {
        Self {
            g_om_hz: rad_to_hz(oms.g_om),
            kappa_om_hz: rad_to_hz(oms.meter.kappa),
            delta_om_hz: rad_to_hz(oms.meter.detuning),
            omega_m_hz: rad_to_hz(oms.mech.omega_m),
            gamma_m_hz: rad_to_hz(oms.mech.gamma_m),
        }
    }
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> EnmoError {
    EnmoError::Parse {
        path: path.display().to_string(),
        line,
        reason: reason.into(),
    }
}

/// Parses trace CSV text; `path` is used in error messages only.
pub fn parse_trace_csv(text: &str, path: &Path) -> Result<Trace> {
    let mut comments = Vec::new();
    let mut scale = None;
    let mut freqs: Vec<f64> = Vec::new();
    let mut values = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if let Some(c) = line.strip_prefix('#') {
            if scale.is_none() {
                comments.push(c.to_string());
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let Some(scale) = scale else {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            scale = match cols.as_slice() {
                ["frequency_hz", "variance_db_rel_shot"] => Some(ValueScale::DbRelShot),
                ["frequency_hz", "variance_linear"] => Some(ValueScale::Linear),
                _ => {
                    return Err(parse_err(
                        path,
                        lineno,
                        format!(
                            "expected header 'frequency_hz,variance_db_rel_shot' or 'frequency_hz,variance_linear', got '{line}'"
                        ),
                    ))
                }
            };
            continue;
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected 2 columns, got {}", fields.len()),
            ));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            let v: f64 = s
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("cannot parse {what} '{s}'")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_err(path, lineno, format!("{what} is not finite")))
            }
        };
        let f = num(fields[0], "frequency")?;
        let v = num(fields[1], "variance")?;
        if f <= 0.0 {
            return Err(parse_err(path, lineno, format!("frequency {f} must be positive")));
        }
        if freqs.last().is_some_and(|&last| f <= last) {
            return Err(parse_err(path, lineno, "frequencies must be strictly increasing"));
        }
        if scale == ValueScale::Linear && v <= 0.0 {
            return Err(parse_err(path, lineno, format!("linear variance {v} must be positive")));
        }
        freqs.push(f);
        values.push(v);
    }
    let Some(scale) = scale else {
        return Err(parse_err(path, text.lines().count().max(1), "missing header"));
    };
    if freqs.is_empty() {
        return Err(parse_err(path, text.lines().count(), "no data rows"));
    }
    Ok(Trace {
        frequencies_hz: freqs,
        values,
        scale,
        angle_label: String::new(),
        detuning_hz: 0.0,
        metadata: BTreeMap::new(),
        comments,
    })
}

pub fn read_trace_csv(path: &Path) -> Result<Trace> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_trace_csv(&text, path)
}

pub fn trace_csv_string(trace: &Trace) -> String {
    let mut s = String::new();
    for c in &trace.comments {
        let _ = writeln!(s, "#{c}");
    }
    let _ = writeln!(s, "frequency_hz,{}", trace.scale.column());
    for (f, v) in trace.frequencies_hz.iter().zip(&trace.values) {
        let _ = writeln!(s, "{f},{v}");
    }
    s
}

pub fn write_trace_csv(path: &Path, trace: &Trace) -> Result<()> {
    write_text(path, &trace_csv_string(trace))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory.
    pub file: String,
    pub detuning_hz: f64,
    pub angle_label: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub provenance: BTreeMap<String, serde_json::Value>,
    pub traces: Vec<ManifestEntry>,
}

pub fn read_trace_set(manifest_path: &Path) -> Result<(Manifest, TraceSet)> {
    let manifest: Manifest = read_json(manifest_path)?;
    let dir = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut traces = Vec::with_capacity(manifest.traces.len());
    for entry in &manifest.traces {
        if !entry.detuning_hz.is_finite() {
            return Err(EnmoError::InvalidData(format!(
                "{}: detuning of {} is not finite",
                manifest_path.display(),
                entry.file
            )));
        }
        let mut t = read_trace_csv(&dir.join(&entry.file))?;
        t.angle_label = entry.angle_label.clone();
        t.detuning_hz = entry.detuning_hz;
        t.metadata = entry.metadata.clone();
        traces.push(t);
    }
    let set = TraceSet::new(traces).map_err(|e| EnmoError::InvalidData(format!("{}: {e}", manifest_path.display())))?;
    Ok((manifest, set))
}

/// Writes `trace_NN.csv` files and `manifest.json` into `dir`; returns the manifest path.
pub fn write_trace_set(dir: &Path, set: &TraceSet, provenance: BTreeMap<String, serde_json::Value>) -> Result<PathBuf> {
    let mut entries = Vec::new();
    for (i, t) in set.traces.iter().enumerate() {
        let file = format!("trace_{i:02}.csv");
        write_trace_csv(&dir.join(&file), t)?;
        entries.push(ManifestEntry {
            file,
            detuning_hz: t.detuning_hz,
            angle_label: t.angle_label.clone(),
            metadata: t.metadata.clone(),
        });
    }
    let path = dir.join("manifest.json");
    write_json(
        &path,
        &Manifest {
            provenance,
            traces: entries,
        },
    )?;
    Ok(path)
}

/// Fitted values in Hz, each with its 1σ (null when the value was held fixed).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitValues<T> {
    pub g_a_hz: T,
    /// Only resolved when the split is known from an independent prior.
    pub g_bs_hz: Option<T>,
    pub g_dc_hz: Option<T>,
    pub kappa_a_hz: T,
    pub delta_a_hz: Vec<T>,
    pub kappa_c_hz: T,
    pub delta_c_hz: T,
    pub eta: T,
    pub psi_rad: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub variant: StrengthVariant,
    pub cross_term: CrossTerm,
    pub converged: bool,
    pub termination: String,
    pub iterations: usize,
    pub values: FitValues<f64>,
    pub uncertainties: FitValues<Option<f64>>,
    pub reduced_chi_square: f64,
    pub dof: usize,
    pub initial_cost: f64,
    pub cost: f64,
    pub residual_space: crate::characterize::ResidualSpace,
    pub frozen: Vec<crate::characterize::FrozenParam>,
    pub non_identifiable: Vec<String>,
    /// Covariance of the free parameters in native units (rad/s, rad).
    pub covariance: CovarianceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceReport {
    pub parameters: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
}

impl FitReport {
    pub fn from_result(r: &FitResult) -> Self {
        let p = &r.params;
        let sig = |name: &str, hz: bool| -> Option<f64> {
            r.estimate(name)
                .and_then(|e| e.sigma)
                .map(|s| if hz { rad_to_hz(s) } else { s })
        };
        let known = p.split_known;
        let values = FitValues {
            g_a_hz: rad_to_hz(p.g_a()),
            g_bs_hz: known.then(|| rad_to_hz(p.g_bs)),
            g_dc_hz: known.then(|| rad_to_hz(p.g_dc)),
            kappa_a_hz: rad_to_hz(p.kappa_a),
            delta_a_hz: p.delta_a.iter().map(|&d| rad_to_hz(d)).collect(),
            kappa_c_hz: rad_to_hz(p.kappa_c),
            delta_c_hz: rad_to_hz(p.delta_c),
            eta: p.eta,
            psi_rad: p.psi.clone(),
        };
        let uncertainties = FitValues {
            g_a_hz: sig("g_a", true),
            g_bs_hz: known.then(|| sig("g_bs", true)),
            g_dc_hz: known.then(|| sig("g_dc", true)),
            kappa_a_hz: sig("kappa_a", true),
            delta_a_hz: (0..p.delta_a.len())
                .map(|g| sig(&format!("delta_a[{g}]"), true))
                .collect(),
            kappa_c_hz: sig("kappa_c", true),
            delta_c_hz: sig("delta_c", true),
            eta: sig("eta", false),
            psi_rad: (0..p.psi.len()).map(|t| sig(&format!("psi[{t}]"), false)).collect(),
        };
        Self {
            variant: p.variant,
            cross_term: p.cross_term,
            converged: r.converged,
            termination: r.termination.clone(),
            iterations: r.iterations,
            values,
            uncertainties,
            reduced_chi_square: r.reduced_chi_square,
            dof: r.dof,
            initial_cost: r.initial_cost,
            cost: r.cost,
            residual_space: r.residual_space,
            frozen: r.frozen.clone(),
            non_identifiable: r.non_identifiable.clone(),
            covariance: CovarianceReport {
                parameters: r.free.clone(),
                matrix: r.covariance.clone(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::reference;

    #[test]
    fn csv_roundtrip_is_byte_identical() {
        let text = "# source: bench 3\n# run 12\nfrequency_hz,variance_db_rel_shot\n50000,1.25\n100000.5,-0.3333333333333333\n2000000,17\n";
        let t = parse_trace_csv(text, Path::new("x.csv")).unwrap();
        assert_eq!(t.comments, vec![" source: bench 3", " run 12"]);
        assert_eq!(trace_csv_string(&t), text);
    }

    #[test]
    fn csv_errors_name_the_line() {
        let text = "frequency_hz,variance_linear\n1,2\n2,abc\n";
        let err = parse_trace_csv(text, Path::new("data/t.csv")).unwrap_err().to_string();
        assert!(err.starts_with("data/t.csv:3:"), "{err}");
        let err = parse_trace_csv("freq,v\n1,2\n", Path::new("t.csv"))
            .unwrap_err()
            .to_string();
        assert!(err.starts_with("t.csv:1:"), "{err}");
        let err = parse_trace_csv("frequency_hz,variance_linear\n2,1\n1,1\n", Path::new("t.csv"))
            .unwrap_err()
            .to_string();
        assert!(err.contains(":3:"), "{err}");
    }

    #[test]
    fn enmo_config_roundtrip() {
        let enmo = reference::enmo();
        let cfg = EnmoConfig::from_enmo(&enmo, 0.54);
        let back = cfg.to_enmo().unwrap();
        assert!((back.ancilla.kappa / enmo.ancilla.kappa - 1.0).abs() < 1e-15);
        assert!((back.g_a() / enmo.g_a() - 1.0).abs() < 1e-15);
        let json = to_json_string(&cfg);
        let again: EnmoConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(to_json_string(&again), json);
    }

    #[test]
    fn coupling_forms() {
        let base = r#""kappa_a_hz": 160000, "delta_a_hz": [-465000, -710000], "kappa_c_hz": 980000"#;
        let a: EnmoConfig = serde_json::from_str(&format!("{{{base}, \"g_a_hz\": 350000}}")).unwrap();
        let p = a.to_fit_params().unwrap();
        assert!(!p.split_known);
        assert_eq!(p.delta_a.len(), 2);
        let b: EnmoConfig =
            serde_json::from_str(&format!("{{{base}, \"g_bs_hz\": 100000, \"g_dc_hz\": 250000}}")).unwrap();
        assert!(b.to_fit_params().unwrap().split_known);
        let c: EnmoConfig = serde_json::from_str(&format!("{{{base}}}")).unwrap();
        assert!(c.to_fit_params().is_err());
        assert!(serde_json::from_str::<EnmoConfig>(&format!("{{{base}, \"g_a_hz\": 1, \"bogus\": 1}}")).is_err());
    }
}
