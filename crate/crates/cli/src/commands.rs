use std::path::Path;

use enmo_core::budget::{budget_consistency, total_efficiency, EfficiencyBudget, Estimate};
use enmo_core::characterize::{
    detected_variance, fit_dataset, infer_efficiency_from_squeezing, synth_dataset, FitOptions, SynthDesign, Trace,
    TraceSet, ValueScale,
};
use enmo_core::io::{
    read_trace_set, write_json, write_text, write_trace_csv, write_trace_set, EnmoConfig, FitReport, OmsConfig,
};
use enmo_core::optics::{matching_report, EnmoParams, MatchingTolerances};
use enmo_core::spectra::{ellipse_spectrum, project_cqnc, Band, ProjectionOptions, Spacing};
use enmo_core::units::{hz_to_rad, variance_to_db, VACUUM};
use serde::Serialize;

use crate::config::{load_run_config, Inputs, Loaded, Provenance};
use crate::svg::{ellipse_strip, line_plot, EllipseGlyph, Series};
use crate::{BudgetArgs, CheckArgs, CliError, Common, FitArgs, SynthArgs};

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

fn config_path(c: &Common) -> Result<&Path, CliError> {
    c.config
        .as_deref()
        .ok_or_else(|| input("--config <path> is required for this command"))
}

/// Applies the command-line variant and cross-term over the file's.
fn apply_flags(c: &Common, cfg: &mut EnmoConfig) {
    if let Some(v) = c.variant {
        cfg.variant = Some(v);
    }
    if let Some(x) = c.cross_term {
        cfg.cross_term = Some(x);
    }
}

fn provenance(
    c: &Common,
    command: &'static str,
    inputs: &Inputs,
    cfg: Option<&EnmoConfig>,
    seed: Option<u64>,
) -> Provenance {
    let variant = cfg.and_then(|e| e.variant).or(c.variant).unwrap_or_default();
    let cross = cfg.and_then(|e| e.cross_term).or(c.cross_term).unwrap_or_default();
    Provenance {
        tool: "enmo",
        version: VERSION,
        command,
        config_sha256: inputs.digest(),
        variant: variant.as_str(),
        cross_term: cross.as_str(),
        seed,
    }
}

fn require_enmo(loaded: &mut Loaded, c: &Common) -> Result<EnmoConfig, CliError> {
    let mut cfg = loaded.enmo.take().ok_or_else(|| input("config has no 'enmo' block"))?;
    apply_flags(c, &mut cfg);
    if !(0.0..=1.0).contains(&cfg.eta) {
        return Err(input(format!("eta must lie in [0, 1], got {}", cfg.eta)));
    }
    Ok(cfg)
}

fn detunings(cfg: &EnmoConfig) -> Result<Vec<f64>, CliError> {
    let d = cfg.delta_a_hz.values();
    if d.is_empty() {
        return Err(input("delta_a_hz lists no detuning"));
    }
    if d.contains(&0.0) {
        return Err(enmo_core::error::EnmoError::SingularDetuning.into());
    }
    Ok(d)
}

/// File-name tag for one detuning; empty when there is only one.
fn detuning_tag(d: f64, many: bool) -> String {
    if many {
        format!("{d:.0}hz_")
    } else {
        String::new()
    }
}

fn default_band() -> Band {
    Band {
        f_min_hz: 50e3,
        f_max_hz: 2e6,
        n_points: 200,
        spacing: Spacing::Linear,
    }
}

fn csv_table(prov: &Provenance, header: &str, rows: impl Iterator<Item = String>) -> String {
    let mut s = String::new();
    for c in prov.comments() {
        s.push('#');
        s.push_str(&c);
        s.push('\n');
    }
    s.push_str(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct Curve {
    detuning_hz: f64,
    psi_rad: f64,
    file: String,
    variance_linear: Vec<f64>,
    variance_db: Vec<f64>,
}

#[derive(Serialize)]
struct SimulationOutput {
    provenance: Provenance,
    eta: f64,
    band: Band,
    frequencies_hz: Vec<f64>,
    curves: Vec<Curve>,
}

pub fn simulate(c: &Common) -> Result<(), CliError> {
    let mut inputs = Inputs::default();
    let mut loaded = load_run_config(config_path(c)?, &mut inputs)?;
    let cfg = require_enmo(&mut loaded, c)?;
    let psi = if loaded.psi_rad.is_empty() {
        cfg.psi_rad.clone()
    } else {
        loaded.psi_rad.clone()
    };
    if psi.is_empty() {
        return Err(input("no detection angles: set psi_rad in the config or the ENMO file"));
    }
    let band = loaded.band.unwrap_or_else(default_band);
    let freqs = band.frequencies_hz();
    let ds = detunings(&cfg)?;
    let prov = provenance(c, "simulate", &inputs, Some(&cfg), None);

    let mut curves = Vec::new();
    for &d in &ds {
        let enmo = cfg.to_enmo_at(d)?;
        for &p in &psi {
            let linear: Vec<f64> = freqs
                .iter()
                .map(|&f| detected_variance(&enmo, cfg.eta, hz_to_rad(f), p) / VACUUM)
                .collect();
            if let Some((f, v)) = freqs.iter().zip(&linear).find(|(_, v)| !(**v > 0.0)) {
                return Err(input(format!(
                    "model variance {v} at {f} Hz (psi = {p}) is not positive; the as-printed cross term is \
                     dimensionful away from psi = 0 and pi/2, try --cross-term normalized"
                )));
            }
            let file = format!("variance_{}{p:.4}.csv", detuning_tag(d, ds.len() > 1));
            if c.format.csv() {
                let mut trace = Trace::new(freqs.clone(), linear.clone(), ValueScale::Linear)?;
                trace.comments = prov.comments();
                trace.comments.push(format!(" detuning_hz: {d}"));
                trace.comments.push(format!(" psi_rad: {p}"));
                write_trace_csv(&c.out.join(&file), &trace)?;
            }
            curves.push(Curve {
                detuning_hz: d,
                psi_rad: p,
                file,
                variance_db: linear.iter().map(|&v| variance_to_db(v * VACUUM)).collect(),
                variance_linear: linear,
            });
        }
    }
    if c.format.json() {
        write_json(
            &c.out.join("simulation.json"),
            &SimulationOutput {
                provenance: prov,
                eta: cfg.eta,
                band,
                frequencies_hz: freqs,
                curves,
            },
        )?;
    }
    Ok(())
}

fn load_pair(c: &Common, loaded: &mut Loaded) -> Result<(EnmoConfig, EnmoParams, OmsConfig), CliError> {
    let cfg = require_enmo(loaded, c)?;
    detunings(&cfg)?;
    let enmo = cfg.to_enmo()?;
    let oms = loaded.oms.take().ok_or_else(|| input("config has no 'oms' block"))?;
    Ok((cfg, enmo, oms))
}

#[derive(Serialize)]
struct ProjectionSummary<'a> {
    provenance: &'a Provenance,
    baseline: &'static str,
    fraction_formula: &'static str,
    options: ProjectionOptions,
    omega_m_hz: f64,
    max_reduction_db: Option<enmo_core::spectra::CurveMaximum>,
    max_fraction: Option<enmo_core::spectra::CurveMaximum>,
    guarded_points: usize,
    cancellation: bool,
    notes: &'a [String],
}

#[derive(Serialize)]
struct ProjectionCurves<'a> {
    provenance: &'a Provenance,
    frequencies_hz: &'a [f64],
    f_over_omega_m: Vec<f64>,
    s_oms_rel_shot: Vec<f64>,
    s_cqnc_rel_shot: Vec<f64>,
    reduction_db: &'a [f64],
    fraction: &'a [Option<f64>],
}

pub fn project(c: &Common) -> Result<(), CliError> {
    let mut inputs = Inputs::default();
    let mut loaded = load_run_config(config_path(c)?, &mut inputs)?;
    let (cfg, enmo, oms_cfg) = load_pair(c, &mut loaded)?;
    let oms = oms_cfg.to_oms()?;
    let band = loaded.band.unwrap_or(Band {
        f_min_hz: 0.1 * oms_cfg.omega_m_hz,
        f_max_hz: 2.0 * oms_cfg.omega_m_hz,
        n_points: 2000,
        spacing: Spacing::Log,
    });
    let options = ProjectionOptions::default();
    let p = project_cqnc(&enmo, &oms, &band, &options)?;
    let prov = provenance(c, "project", &inputs, Some(&cfg), None);

    let x: Vec<f64> = p.frequencies_hz.iter().map(|f| f / oms_cfg.omega_m_hz).collect();
    let rel = |v: &[f64]| v.iter().map(|s| s / VACUUM).collect::<Vec<_>>();
    let (s_oms, s_cqnc) = (rel(&p.s_oms), rel(&p.s_cqnc));

    if c.format.csv() {
        let rows = (0..x.len()).map(|i| {
            let frac = p.fraction[i].map(|v| v.to_string()).unwrap_or_default();
            format!(
                "{},{},{},{},{},{frac}",
                p.frequencies_hz[i], x[i], s_oms[i], s_cqnc[i], p.reduction_db[i]
            )
        });
        write_text(
            &c.out.join("projection.csv"),
            &csv_table(
                &prov,
                "frequency_hz,f_over_omega_m,s_oms_rel_shot,s_cqnc_rel_shot,reduction_db,fraction",
                rows,
            ),
        )?;
    }
    if c.format.json() {
        write_json(
            &c.out.join("projection.json"),
            &ProjectionCurves {
                provenance: &prov,
                frequencies_hz: &p.frequencies_hz,
                f_over_omega_m: x.clone(),
                s_oms_rel_shot: s_oms.clone(),
                s_cqnc_rel_shot: s_cqnc.clone(),
                reduction_db: &p.reduction_db,
                fraction: &p.fraction,
            },
        )?;
    }
    write_json(
        &c.out.join("summary.json"),
        &ProjectionSummary {
            provenance: &prov,
            baseline: p.baseline,
            fraction_formula: p.fraction_formula,
            options: p.options,
            omega_m_hz: oms_cfg.omega_m_hz,
            max_reduction_db: p.max_reduction_db,
            max_fraction: p.max_fraction,
            guarded_points: p.guarded_points,
            cancellation: p.cancellation,
            notes: &p.notes,
        },
    )?;

    let db = |v: &[f64]| {
        x.iter()
            .zip(v)
            .map(|(&a, &s)| (a, 10.0 * s.log10()))
            .collect::<Vec<_>>()
    };
    let svg = line_plot(
        &format!("CQNC projection ({})", p.variant),
        "frequency / omega_m",
        "dB rel. shot noise",
        &[
            Series {
                label: "sensor alone",
                points: db(&s_oms),
            },
            Series {
                label: "ENMO + sensor",
                points: db(&s_cqnc),
            },
            Series {
                label: "reduction",
                points: x.iter().copied().zip(p.reduction_db.iter().copied()).collect(),
            },
        ],
    );
    write_text(&c.out.join("projection.svg"), &svg)?;
    for n in &p.notes {
        eprintln!("note: {n}");
    }
    Ok(())
}

#[derive(Serialize)]
struct EllipseRow {
    frequency_hz: f64,
    v_min: f64,
    v_max: f64,
    angle_rad: f64,
}

#[derive(Serialize)]
struct TomoOutput<'a> {
    provenance: &'a Provenance,
    detuning_hz: f64,
    eta: f64,
    /// Variances are shot-noise normalized (vacuum = 1).
    ellipses: Vec<EllipseRow>,
}

pub fn tomo(c: &Common) -> Result<(), CliError> {
    let mut inputs = Inputs::default();
    let mut loaded = load_run_config(config_path(c)?, &mut inputs)?;
    let cfg = require_enmo(&mut loaded, c)?;
    let ds = detunings(&cfg)?;
    let band = loaded.band.unwrap_or_else(default_band);
    let prov = provenance(c, "tomo", &inputs, Some(&cfg), None);

    for &d in &ds {
        let enmo = cfg.to_enmo_at(d)?;
        let points = ellipse_spectrum(&enmo, cfg.eta, &band).map_err(|e| match e {
            enmo_core::error::EnmoError::NotPositiveDefinite { .. } => input(format!(
                "{e}; the as-printed cross term is dimensionful, try --cross-term normalized"
            )),
            other => other.into(),
        })?;
        let rows: Vec<EllipseRow> = points
            .iter()
            .map(|p| EllipseRow {
                frequency_hz: p.frequency_hz,
                v_min: p.ellipse.v_min / VACUUM,
                v_max: p.ellipse.v_max / VACUUM,
                angle_rad: p.ellipse.angle,
            })
            .collect();
        let stem = if ds.len() > 1 {
            format!("ellipses_{d:.0}hz")
        } else {
            "ellipses".to_string()
        };
        if c.format.csv() {
            let text = csv_table(
                &prov,
                "frequency_hz,v_min,v_max,angle_rad",
                rows.iter()
                    .map(|r| format!("{},{},{},{}", r.frequency_hz, r.v_min, r.v_max, r.angle_rad)),
            );
            write_text(&c.out.join(format!("{stem}.csv")), &text)?;
        }
        let samples = 9.min(rows.len());
        let glyphs: Vec<EllipseGlyph> = (0..samples)
            .map(|k| {
                let r = &rows[k * (rows.len() - 1) / (samples - 1).max(1)];
                EllipseGlyph {
                    frequency_hz: r.frequency_hz,
                    v_min: r.v_min,
                    v_max: r.v_max,
                    angle_rad: r.angle_rad,
                }
            })
            .collect();
        write_text(
            &c.out.join(format!("{stem}.svg")),
            &ellipse_strip(&format!("noise ellipses, detuning {d} Hz"), &glyphs),
        )?;
        if c.format.json() {
            write_json(
                &c.out.join(format!("{stem}.json")),
                &TomoOutput {
                    provenance: &prov,
                    detuning_hz: d,
                    eta: cfg.eta,
                    ellipses: rows,
                },
            )?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct CheckOutput<'a> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    report: &'a enmo_core::optics::MatchingReport,
}

pub fn check(c: &Common, a: &CheckArgs) -> Result<(), CliError> {
    let mut inputs = Inputs::default();
    let (mut enmo_cfg, oms_cfg) = match (&a.enmo, &a.oms) {
        (Some(e), Some(o)) => (inputs.json::<EnmoConfig>(e)?, inputs.json::<OmsConfig>(o)?),
        (None, None) => {
            let mut loaded = load_run_config(config_path(c)?, &mut inputs)?;
            let e = loaded.enmo.take().ok_or_else(|| input("config has no 'enmo' block"))?;
            let o = loaded.oms.take().ok_or_else(|| input("config has no 'oms' block"))?;
            (e, o)
        }
        _ => return Err(input("give both --enmo and --oms, or --config")),
    };
    apply_flags(c, &mut enmo_cfg);
    let enmo = enmo_cfg.to_enmo()?;
    let oms = oms_cfg.to_oms()?;
    let tol = MatchingTolerances {
        relative: a.relative,
        hierarchy_ratio: a.hierarchy_ratio,
    };
    let report = matching_report(&enmo, &oms, &tol);
    let prov = provenance(c, "check", &inputs, Some(&enmo_cfg), None);
    let table = report.to_table();
    write_json(
        &c.out.join("matching_report.json"),
        &CheckOutput {
            provenance: &prov,
            report: &report,
        },
    )?;
    let mut text: String = prov.comments().iter().map(|l| format!("#{l}\n")).collect();
    text.push_str(&table);
    write_text(&c.out.join("matching_report.txt"), &text)?;
    print!("{table}");
    Ok(())
}

#[derive(Serialize)]
struct Measured {
    sqz_db: f64,
    antisqz_db: f64,
    eta: f64,
    squeeze_parameter_r: f64,
    sigma: f64,
}

#[derive(Serialize)]
struct BudgetOutput<'a> {
    provenance: &'a Provenance,
    channels: &'a EfficiencyBudget,
    total: Estimate,
    measured: Measured,
    consistency: enmo_core::budget::ConsistencyReport,
}

pub fn budget(c: &Common, a: &BudgetArgs) -> Result<(), CliError> {
    let mut inputs = Inputs::default();
    let channels: EfficiencyBudget = inputs.json(&a.budget)?;
    channels.validate()?;
    inputs.note("sqz", &a.sqz.to_string());
    inputs.note("antisqz", &a.antisqz.to_string());
    inputs.note("measured_sigma", &a.measured_sigma.to_string());
    inputs.note("k", &a.k.to_string());
    let inferred = infer_efficiency_from_squeezing(a.sqz, a.antisqz)?;
    if !(a.measured_sigma >= 0.0 && a.k > 0.0) {
        return Err(input("--measured-sigma must be >= 0 and --k > 0"));
    }
    let measured = Estimate {
        value: inferred.eta,
        uncertainty: a.measured_sigma,
    };
    let total = total_efficiency(&channels);
    let consistency = budget_consistency(&channels, measured, a.k);
    let prov = provenance(c, "budget", &inputs, None, None);

    let mut text: String = prov.comments().iter().map(|l| format!("#{l}\n")).collect();
    text.push_str(&format!("{:<28} {:>8} {:>8}\n", "channel", "eta", "sigma"));
    for ch in &channels.channels {
        text.push_str(&format!("{:<28} {:>8.4} {:>8.4}\n", ch.name, ch.eta, ch.sigma));
    }
    text.push_str(&format!(
        "{:<28} {:>8.4} {:>8.4}\n",
        "total", total.value, total.uncertainty
    ));
    text.push_str(&format!(
        "{:<28} {:>8.4} {:>8.4}  ({} dB / {} dB, r = {:.4})\n",
        "inferred from squeezing", inferred.eta, a.measured_sigma, a.sqz, a.antisqz, inferred.r
    ));
    text.push_str(&format!(
        "discrepancy {:.4}, combined sigma {:.4}, k = {}: {}\n",
        consistency.discrepancy,
        consistency.combined_sigma,
        a.k,
        if consistency.consistent {
            "consistent"
        } else {
            "INCONSISTENT"
        }
    ));
    write_text(&c.out.join("budget_report.txt"), &text)?;
    write_json(
        &c.out.join("budget_report.json"),
        &BudgetOutput {
            provenance: &prov,
            channels: &channels,
            total,
            measured: Measured {
                sqz_db: a.sqz,
                antisqz_db: a.antisqz,
                eta: inferred.eta,
                squeeze_parameter_r: inferred.r,
                sigma: a.measured_sigma,
            },
            consistency,
        },
    )?;
    print!(
        "{}",
        text.lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| format!("{l}\n"))
            .collect::<String>()
    );
    Ok(())
}

pub fn synth(c: &Common, a: &SynthArgs) -> Result<(), CliError> {
    let mut inputs = Inputs::default();
    let mut truth: EnmoConfig = inputs.json(&a.truth)?;
    let mut design: SynthDesign = inputs.json(&a.design)?;
    apply_flags(c, &mut truth);
    if let Some(seed) = c.seed {
        design.seed = seed;
    }
    let params = truth.to_fit_params()?;
    let set = synth_dataset(&params, &design)?;
    let prov = provenance(c, "synth", &inputs, Some(&truth), Some(design.seed));
    let traces = set
        .traces
        .into_iter()
        .map(|mut t| {
            t.comments = prov.comments();
            t
        })
        .collect();
    let set = TraceSet::new(traces)?;
    let path = write_trace_set(&c.out, &set, prov.to_map())?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct FitOutput<'a> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    report: FitReport,
}

#[derive(Serialize)]
struct Correlated {
    a: String,
    b: String,
    rho: f64,
}

#[derive(Serialize)]
struct Identifiability<'a> {
    provenance: &'a Provenance,
    parameters: &'a [String],
    singular_values: &'a [f64],
    /// Null when the smallest singular value is zero.
    condition_number: Option<f64>,
    non_identifiable: &'a [String],
    frozen: &'a [enmo_core::characterize::FrozenParam],
    strong_correlations: Vec<Correlated>,
    warnings: Vec<String>,
}

const STRONG_CORRELATION: f64 = 0.99;

pub fn fit(c: &Common, a: &FitArgs) -> Result<(), CliError> {
    let mut inputs = Inputs::default();
    let (manifest, set) = read_trace_set(&a.manifest)?;
    inputs.read(&a.manifest)?;
    let dir = a.manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    for entry in &manifest.traces {
        inputs.read(&dir.join(&entry.file))?;
    }
    let mut init_cfg: EnmoConfig = inputs.json(&a.init)?;
    apply_flags(c, &mut init_cfg);
    let init = init_cfg.to_fit_params()?;
    let options = FitOptions {
        free_eta: a.free_eta,
        fit_meter: !a.fix_meter,
        residual_space: a.residual_space,
        noise_sigma: a.noise_sigma,
        max_iterations: a.max_iterations,
        ..FitOptions::default()
    };
    for (k, v) in [
        ("free_eta", a.free_eta.to_string()),
        ("fix_meter", a.fix_meter.to_string()),
        ("residual_space", format!("{:?}", a.residual_space)),
        ("max_iterations", a.max_iterations.to_string()),
        ("noise_sigma", format!("{:?}", a.noise_sigma)),
    ] {
        inputs.note(k, &v);
    }
    let result = fit_dataset(&set, &init, &options)?;
    let prov = provenance(c, "fit", &inputs, Some(&init_cfg), None);

    write_json(
        &c.out.join("fit_result.json"),
        &FitOutput {
            provenance: &prov,
            report: FitReport::from_result(&result),
        },
    )?;

    let column = match result.residual_space {
        enmo_core::characterize::ResidualSpace::Relative => "residual_relative",
        enmo_core::characterize::ResidualSpace::Linear => "residual_linear",
        enmo_core::characterize::ResidualSpace::Db => "residual_db",
    };
    for (i, (t, r)) in set.traces.iter().zip(&result.residuals).enumerate() {
        let rows = t.frequencies_hz.iter().zip(r).map(|(f, v)| format!("{f},{v}"));
        write_text(
            &c.out.join(format!("residuals_{i:02}.csv")),
            &csv_table(&prov, &format!("frequency_hz,{column}"), rows),
        )?;
    }

    let n = result.free.len();
    let mut strong = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let d = (result.covariance[i][i] * result.covariance[j][j]).sqrt();
            if d > 0.0 {
                let rho = result.covariance[i][j] / d;
                if rho.abs() >= STRONG_CORRELATION {
                    strong.push(Correlated {
                        a: result.free[i].clone(),
                        b: result.free[j].clone(),
                        rho,
                    });
                }
            }
        }
    }
    let smax = result.singular_values.first().copied().unwrap_or(0.0);
    let smin = result.singular_values.last().copied().unwrap_or(0.0);
    let condition_number = if smin > 0.0 { smax / smin } else { f64::INFINITY };

    let mut warnings = Vec::new();
    if set.traces.len() == 1 {
        warnings.push(if a.free_eta {
            "single trace: the detection angle and the efficiency trade off against each other".to_string()
        } else {
            "single trace: the detection angle and the efficiency trade off against each other; eta is held at its initial value"
                .to_string()
        });
    }
    for p in &result.non_identifiable {
        warnings.push(format!("{p} is not identifiable from this dataset"));
    }
    for f in &result.frozen {
        warnings.push(format!("{} held fixed: {}", f.name, f.reason));
    }
    for s in &strong {
        warnings.push(format!(
            "{} and {} are strongly correlated (rho = {:.4})",
            s.a, s.b, s.rho
        ));
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    write_json(
        &c.out.join("identifiability.json"),
        &Identifiability {
            provenance: &prov,
            parameters: &result.free,
            singular_values: &result.singular_values,
            condition_number: condition_number.is_finite().then_some(condition_number),
            non_identifiable: &result.non_identifiable,
            frozen: &result.frozen,
            strong_correlations: strong,
            warnings,
        },
    )?;

    if !result.converged {
        return Err(CliError::NonConvergence(format!(
            "{} after {} iterations; results written to {}",
            result.termination,
            result.iterations,
            c.out.display()
        )));
    }
    Ok(())
}
