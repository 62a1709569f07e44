mod common;

use std::fs;
use std::path::{Path, PathBuf};

use common::*;
use serde_json::{json, Value};
use tempfile::tempdir;

fn synth(out: &Path, design: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec![
        "synth",
        "--truth",
        fixture("truth.json").to_str().unwrap().to_string().leak(),
        "--design",
        design.to_str().unwrap().to_string().leak(),
        "--out",
        out.to_str().unwrap().to_string().leak(),
    ];
    args.extend_from_slice(extra);
    assert_ok(&enmo(&args));
    out.join("manifest.json")
}

fn noisy_design(dir: &Path, noise: f64) -> PathBuf {
    let mut d = json(&fixture("design_detuning_sweep.json"));
    d["noise"] = json!(noise);
    let p = dir.join("design.json");
    fs::write(&p, serde_json::to_string_pretty(&d).unwrap()).unwrap();
    p
}

fn fit(manifest: &Path, init: &Path, out: &Path, extra: &[&str]) -> std::process::Output {
    let mut args = vec![
        "fit".to_string(),
        "--manifest".into(),
        manifest.to_str().unwrap().into(),
        "--init".into(),
        init.to_str().unwrap().into(),
        "--out".into(),
        out.to_str().unwrap().into(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    enmo(args)
}

fn perturbed_init(dir: &Path) -> PathBuf {
    enmo_file(
        dir,
        "init.json",
        json!({"g_bs_hz": null, "g_dc_hz": null, "g_a_hz": 320000.0, "kappa_a_hz": 140000.0}),
    )
}

#[test]
fn synth_writes_six_traces_and_manifest() {
    let tmp = tempdir().unwrap();
    let manifest = synth(&tmp.path().join("s"), &fixture("design_detuning_sweep.json"), &[]);
    let m = json(&manifest);
    let traces = m["traces"].as_array().unwrap();
    assert_eq!(traces.len(), 6);
    for (i, t) in traces.iter().enumerate() {
        assert_eq!(t["file"], format!("trace_{i:02}.csv"));
        assert!(t["detuning_hz"].is_f64());
        assert!(t["angle_label"].is_string());
        let (header, rows) = csv_rows(&tmp.path().join("s").join(t["file"].as_str().unwrap()));
        assert_eq!(header, ["frequency_hz", "variance_linear"]);
        assert_eq!(rows.len(), 200);
    }
    assert_eq!(m["provenance"]["command"], "synth");
    assert_eq!(m["provenance"]["seed"], 7);
}

#[test]
fn synth_is_reproducible_for_a_seed() {
    let tmp = tempdir().unwrap();
    let design = noisy_design(tmp.path(), 0.01);
    synth(&tmp.path().join("a"), &design, &[]);
    synth(&tmp.path().join("b"), &design, &[]);
    synth(&tmp.path().join("c"), &design, &["--seed", "8"]);
    let a = snapshot(&tmp.path().join("a"));
    assert_eq!(a, snapshot(&tmp.path().join("b")));
    let c = snapshot(&tmp.path().join("c"));
    assert_ne!(a[Path::new("trace_00.csv")], c[Path::new("trace_00.csv")]);
}

#[test]
fn noiseless_synth_equals_simulate() {
    let tmp = tempdir().unwrap();
    synth(&tmp.path().join("s"), &fixture("design_detuning_sweep.json"), &[]);
    let cfg = tmp.path().join("run.json");
    let enmo_path = enmo_file(tmp.path(), "enmo.json", json!({"delta_a_hz": -710000.0}));
    fs::write(
        &cfg,
        serde_json::to_string(&json!({
            "enmo": enmo_path,
            "band": json(&fixture("design_detuning_sweep.json"))["band"],
            "psi_rad": [0.0, std::f64::consts::FRAC_PI_2]
        }))
        .unwrap(),
    )
    .unwrap();
    assert_ok(&enmo([
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().join("m").to_str().unwrap(),
    ]));
    // traces 2 and 3 sit at -710 kHz
    assert_eq!(
        csv_rows(&tmp.path().join("s/trace_02.csv")),
        csv_rows(&tmp.path().join("m/variance_0.0000.csv"))
    );
    assert_eq!(
        csv_rows(&tmp.path().join("s/trace_03.csv")),
        csv_rows(&tmp.path().join("m/variance_1.5708.csv"))
    );
}

#[test]
fn fit_recovers_noiseless_truth() {
    let tmp = tempdir().unwrap();
    let manifest = synth(&tmp.path().join("s"), &fixture("design_detuning_sweep.json"), &[]);
    let out = tmp.path().join("fit");
    let o = fit(&manifest, &perturbed_init(tmp.path()), &out, &[]);
    assert_ok(&o);
    let r = json(&out.join("fit_result.json"));
    assert_eq!(r["converged"], true);
    let v = &r["values"];
    let rel = |got: &Value, want: f64| (got.as_f64().unwrap() - want).abs() / want.abs();
    assert!(rel(&v["g_a_hz"], 350e3) < 1e-6, "{}", v["g_a_hz"]);
    assert!(rel(&v["kappa_a_hz"], 160e3) < 1e-6, "{}", v["kappa_a_hz"]);
    for (got, want) in v["delta_a_hz"].as_array().unwrap().iter().zip([-600e3, -710e3, -820e3]) {
        assert!(rel(got, want) < 1e-6, "{got}");
    }
    for (got, want) in v["psi_rad"]
        .as_array()
        .unwrap()
        .iter()
        .zip([0.0, std::f64::consts::FRAC_PI_2].repeat(3))
    {
        assert!((got.as_f64().unwrap() - want).abs() < 1e-6, "{got}");
    }
    assert_eq!(r["provenance"]["command"], "fit");
    for i in 0..6 {
        let (header, rows) = csv_rows(&out.join(format!("residuals_{i:02}.csv")));
        assert_eq!(header, ["frequency_hz", "residual_db"]);
        assert_eq!(rows.len(), 200);
    }
    let id = json(&out.join("identifiability.json"));
    assert!(id["parameters"].as_array().unwrap().len() >= 5);
    assert!(id["warnings"].is_array());
}

#[test]
fn single_trace_fit_reports_identifiability_warnings() {
    let tmp = tempdir().unwrap();
    let manifest = synth(&tmp.path().join("s"), &fixture("design_detuning_sweep.json"), &[]);
    let mut m = json(&manifest);
    m["traces"] = json!([m["traces"][2].clone()]);
    let one = tmp.path().join("s/one.json");
    fs::write(&one, serde_json::to_string(&m).unwrap()).unwrap();
    let out = tmp.path().join("fit");
    let o = fit(&one, &fixture("enmo_reference.json"), &out, &[]);
    assert_ok(&o);
    let id = json(&out.join("identifiability.json"));
    let warnings = id["warnings"].as_array().unwrap();
    assert!(!warnings.is_empty());
    // meter parameters have an identically zero Jacobian column here
    let frozen: Vec<&str> = id["frozen"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["name"].as_str().unwrap())
        .collect();
    assert!(frozen.contains(&"kappa_c") && frozen.contains(&"delta_c"));
    assert!(stderr(&o).contains("warning:"));
}

#[test]
fn truncated_csv_names_file_and_line() {
    let tmp = tempdir().unwrap();
    let manifest = synth(&tmp.path().join("s"), &fixture("design_detuning_sweep.json"), &[]);
    let path = tmp.path().join("s/trace_01.csv");
    let text = fs::read_to_string(&path).unwrap();
    let cut = text.rfind(',').unwrap() + 1;
    fs::write(&path, &text[..cut]).unwrap();
    let bad_line = text[..cut].lines().count();
    let o = fit(&manifest, &fixture("enmo_reference.json"), &tmp.path().join("fit"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains(&format!("trace_01.csv:{bad_line}")), "{err}");
}

#[test]
fn missing_trace_file_is_an_input_error() {
    let tmp = tempdir().unwrap();
    let manifest = synth(&tmp.path().join("s"), &fixture("design_detuning_sweep.json"), &[]);
    fs::remove_file(tmp.path().join("s/trace_04.csv")).unwrap();
    let o = fit(&manifest, &fixture("enmo_reference.json"), &tmp.path().join("fit"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("trace_04.csv"));
}

#[test]
fn non_convergence_exits_3_and_still_writes() {
    let tmp = tempdir().unwrap();
    let manifest = synth(&tmp.path().join("s"), &noisy_design(tmp.path(), 0.01), &[]);
    let out = tmp.path().join("fit");
    let o = fit(&manifest, &perturbed_init(tmp.path()), &out, &["--max-iterations", "1"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let r = json(&out.join("fit_result.json"));
    assert_eq!(r["converged"], false);
    assert!(out.join("identifiability.json").exists());
}

#[test]
fn fit_is_deterministic() {
    let tmp = tempdir().unwrap();
    let manifest = synth(&tmp.path().join("s"), &noisy_design(tmp.path(), 0.01), &[]);
    let init = perturbed_init(tmp.path());
    assert_ok(&fit(&manifest, &init, &tmp.path().join("a"), &[]));
    assert_ok(&fit(&manifest, &init, &tmp.path().join("b"), &[]));
    assert_eq!(snapshot(&tmp.path().join("a")), snapshot(&tmp.path().join("b")));
}
