mod common;

use std::fs;

use common::*;
use enmo_core::characterize::detected_variance;
use enmo_core::io::{parse_trace_csv, trace_csv_string, EnmoConfig, OmsConfig};
use enmo_core::spectra::{project_cqnc, Band, ProjectionOptions, Spacing};
use enmo_core::units::{hz_to_rad, VACUUM};
use serde_json::json;
use tempfile::tempdir;

fn run_config(dir: &std::path::Path, body: serde_json::Value) -> std::path::PathBuf {
    let p = dir.join("run.json");
    fs::write(&p, serde_json::to_string_pretty(&body).unwrap()).unwrap();
    p
}

#[test]
fn simulate_writes_one_csv_per_angle_matching_the_model() {
    let tmp = tempdir().unwrap();
    let out = tmp.path().join("sim");
    let o = enmo([
        "simulate",
        "--config",
        fixture("run.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_ok(&o);

    let cfg: EnmoConfig = serde_json::from_value(json(&fixture("enmo_reference.json"))).unwrap();
    let model = cfg.to_enmo().unwrap();
    for (file, psi) in [
        ("variance_0.0000.csv", 0.0),
        ("variance_1.5708.csv", std::f64::consts::FRAC_PI_2),
    ] {
        let (header, rows) = csv_rows(&out.join(file));
        assert_eq!(header, ["frequency_hz", "variance_linear"]);
        assert_eq!(rows.len(), 200);
        for r in &rows {
            let want = detected_variance(&model, cfg.eta, hz_to_rad(r[0]), psi) / VACUUM;
            assert!(
                (r[1] - want).abs() <= 1e-12 * want,
                "{file} at {} Hz: {} vs {want}",
                r[0],
                r[1]
            );
        }
    }

    let j = json(&out.join("simulation.json"));
    assert_eq!(j["provenance"]["command"], "simulate");
    assert_eq!(j["provenance"]["variant"], "as-printed");
    assert_eq!(j["provenance"]["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(j["curves"].as_array().unwrap().len(), 2);
    assert_eq!(j["curves"][1]["file"], "variance_1.5708.csv");
    assert_eq!(j["frequencies_hz"].as_array().unwrap().len(), 200);
}

#[test]
fn zero_coupling_gives_shot_noise() {
    let tmp = tempdir().unwrap();
    let params = enmo_file(
        tmp.path(),
        "enmo.json",
        json!({"g_bs_hz": null, "g_dc_hz": null, "g_a_hz": 0.0, "eta": 1.0}),
    );
    let cfg = run_config(
        tmp.path(),
        json!({"enmo": params, "psi_rad": [0.0, 0.7, std::f64::consts::FRAC_PI_2]}),
    );
    let out = tmp.path().join("out");
    assert_ok(&enmo([
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    let j = json(&out.join("simulation.json"));
    for curve in j["curves"].as_array().unwrap() {
        for v in curve["variance_db"].as_array().unwrap() {
            assert!(v.as_f64().unwrap().abs() < 1e-12);
        }
    }
}

#[test]
fn malformed_parameter_file_exits_2_with_location() {
    let tmp = tempdir().unwrap();
    let bad = tmp.path().join("enmo.json");
    fs::write(&bad, "{\n  \"kappa_a_hz\": 160000.0,\n  \"delta_a_hz\": oops\n}\n").unwrap();
    let cfg = run_config(tmp.path(), json!({"enmo": bad, "psi_rad": [0.0]}));
    let o = enmo([
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("enmo.json") && err.contains("line 3"), "{err}");
}

#[test]
fn unknown_key_is_an_input_error() {
    let tmp = tempdir().unwrap();
    let params = enmo_file(tmp.path(), "enmo.json", json!({"kappa_typo_hz": 1.0}));
    let cfg = run_config(tmp.path(), json!({"enmo": params, "psi_rad": [0.0]}));
    let o = enmo([
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kappa_typo_hz"));
}

#[test]
fn missing_config_and_bad_variant_are_input_errors() {
    assert_eq!(enmo(["simulate"]).status.code(), Some(2));
    let o = enmo([
        "simulate",
        "--config",
        fixture("run.json").to_str().unwrap(),
        "--variant",
        "sideways",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unphysical_angle_under_printed_cross_term_is_rejected() {
    let tmp = tempdir().unwrap();
    let cfg = run_config(
        tmp.path(),
        json!({"enmo": fixture("enmo_reference.json"), "psi_rad": [0.3, 1.8707963267948966]}),
    );
    let out = tmp.path().join("o");
    let o = enmo([
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--cross-term normalized"));
    let o = enmo([
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--cross-term",
        "normalized",
    ]);
    assert_ok(&o);
    assert!(out.join("variance_0.3000.csv").exists() && out.join("variance_1.8708.csv").exists());
}

#[test]
fn format_flag_selects_outputs() {
    let tmp = tempdir().unwrap();
    let cfg = fixture("run.json");
    let csv = tmp.path().join("csv");
    let js = tmp.path().join("json");
    assert_ok(&enmo([
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
        "--format",
        "csv",
    ]));
    assert_ok(&enmo([
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        js.to_str().unwrap(),
        "--format",
        "json",
    ]));
    assert!(csv.join("variance_0.0000.csv").exists() && !csv.join("simulation.json").exists());
    assert!(!js.join("variance_0.0000.csv").exists() && js.join("simulation.json").exists());
}

#[test]
fn outputs_round_trip_byte_for_byte() {
    let tmp = tempdir().unwrap();
    let out = tmp.path().join("o");
    assert_ok(&enmo([
        "simulate",
        "--config",
        fixture("run.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    let path = out.join("variance_0.0000.csv");
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(trace_csv_string(&parse_trace_csv(&text, &path).unwrap()), text);

    let text = fs::read_to_string(out.join("simulation.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string_pretty(&v).unwrap() + "\n", text);
}

#[test]
fn project_summary_matches_library_and_is_deterministic() {
    let tmp = tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let cfg = fixture("project.json");
    for dir in [&a, &b] {
        assert_ok(&enmo([
            "project",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
        ]));
    }
    assert_eq!(snapshot(&a), snapshot(&b));

    let enmo_cfg: EnmoConfig = serde_json::from_value(json(&fixture("enmo_reference.json"))).unwrap();
    let oms_cfg: OmsConfig = serde_json::from_value(json(&fixture("oms_reference.json"))).unwrap();
    let band = Band::new(71e3, 1.42e6, 2000, Spacing::Log).unwrap();
    let p = project_cqnc(
        &enmo_cfg.to_enmo().unwrap(),
        &oms_cfg.to_oms().unwrap(),
        &band,
        &ProjectionOptions::default(),
    )
    .unwrap();
    let s = json(&a.join("summary.json"));
    let m = p.max_reduction_db.unwrap();
    assert_eq!(s["max_reduction_db"]["value"].as_f64().unwrap(), m.value);
    assert_eq!(s["max_reduction_db"]["frequency_hz"].as_f64().unwrap(), m.frequency_hz);
    assert_eq!(s["provenance"]["variant"], "as-printed");
    assert!(s["baseline"].as_str().unwrap().starts_with("reconstructed"));

    let (header, rows) = csv_rows(&a.join("projection.csv"));
    assert_eq!(
        header,
        [
            "frequency_hz",
            "f_over_omega_m",
            "s_oms_rel_shot",
            "s_cqnc_rel_shot",
            "reduction_db",
            "fraction"
        ]
    );
    assert_eq!(rows.len(), 2000);
    assert!((rows[0][1] - 0.1).abs() < 1e-12 && (rows[1999][1] - 2.0).abs() < 1e-12);
    let svg = fs::read_to_string(a.join("projection.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("frequency / omega_m") && svg.contains("dB rel. shot noise"));
}

#[test]
fn project_variant_flag_is_recorded() {
    let tmp = tempdir().unwrap();
    let out = tmp.path().join("o");
    assert_ok(&enmo([
        "project",
        "--config",
        fixture("project.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--variant",
        "meter-analogy",
    ]));
    let s = json(&out.join("summary.json"));
    assert_eq!(s["provenance"]["variant"], "meter-analogy");
    assert!(fs::read_to_string(out.join("projection.csv"))
        .unwrap()
        .contains("# variant: meter-analogy"));
}

#[test]
fn tomo_writes_ellipse_table_and_strip() {
    let tmp = tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = enmo([
        "tomo",
        "--config",
        fixture("run.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--cross-term",
        "normalized",
    ]);
    assert_ok(&o);
    let (header, rows) = csv_rows(&out.join("ellipses.csv"));
    assert_eq!(header, ["frequency_hz", "v_min", "v_max", "angle_rad"]);
    assert_eq!(rows.len(), 200);
    for r in &rows {
        assert!(r[1] <= r[2] && r[1] > 0.0);
        assert!((0.0..std::f64::consts::PI).contains(&r[3]));
    }
    let svg = fs::read_to_string(out.join("ellipses.svg")).unwrap();
    assert_eq!(svg.matches("<ellipse").count(), 9);
    assert_eq!(
        json(&out.join("ellipses.json"))["ellipses"].as_array().unwrap().len(),
        200
    );
}

#[test]
fn tomo_vacuum_is_a_unit_circle() {
    let tmp = tempdir().unwrap();
    let params = enmo_file(
        tmp.path(),
        "enmo.json",
        json!({"g_bs_hz": null, "g_dc_hz": null, "g_a_hz": 0.0}),
    );
    let cfg = run_config(tmp.path(), json!({"enmo": params}));
    let out = tmp.path().join("o");
    assert_ok(&enmo([
        "tomo",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    for r in csv_rows(&out.join("ellipses.csv")).1 {
        assert!((r[1] - 1.0).abs() < 1e-12 && (r[2] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn tomo_rejects_non_positive_covariance() {
    let tmp = tempdir().unwrap();
    let o = enmo([
        "tomo",
        "--config",
        fixture("run.json").to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not positive definite"));
}
