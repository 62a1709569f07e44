use enmo_core::optics::{CavityMode, Coupling, CrossTerm, EnmoParams, MechanicalMode, OmsParams, StrengthVariant};
use enmo_core::spectra::{enmo_covariance, s_cqnc_terms, s_oms_only};
use serde::Deserialize;

#[derive(Deserialize)]
struct Input {
    kappa_a: f64,
    delta_a: f64,
    kappa_c: f64,
    delta_c: f64,
    g_bs: f64,
    g_dc: f64,
    omega_m: f64,
    gamma_m: f64,
    g_om: f64,
    kappa_om: f64,
    delta_om: f64,
    omega: f64,
    variant: String,
}

#[derive(Deserialize)]
struct Expected {
    vxx: f64,
    vxp: f64,
    vxp_normalized: f64,
    vpp: f64,
    s_cqnc: f64,
    s_cqnc_backaction: f64,
    s_cqnc_loss: f64,
    s_oms: f64,
}

#[derive(Deserialize)]
struct Point {
    input: Input,
    expected: Expected,
}

fn points() -> Vec<Point> {
    serde_json::from_str(include_str!("fixtures/oracle_points.json")).unwrap()
}

fn build(i: &Input) -> (EnmoParams, OmsParams) {
    let variant = match i.variant.as_str() {
        "as_printed" => StrengthVariant::AsPrinted,
        "meter_analogy" => StrengthVariant::MeterAnalogy,
        other => panic!("unknown variant {other}"),
    };
    let enmo = EnmoParams {
        meter: CavityMode {
            kappa: i.kappa_c,
            detuning: i.delta_c,
            fsr: None,
        },
        ancilla: CavityMode {
            kappa: i.kappa_a,
            detuning: i.delta_a,
            fsr: None,
        },
        coupling: Coupling {
            g_bs: i.g_bs,
            g_dc: i.g_dc,
        },
        variant,
        cross_term: CrossTerm::AsPrinted,
    };
    let oms = OmsParams {
        meter: CavityMode {
            kappa: i.kappa_om,
            detuning: i.delta_om,
            fsr: None,
        },
        mech: MechanicalMode {
            omega_m: i.omega_m,
            gamma_m: i.gamma_m,
        },
        g_om: i.g_om,
    };
    (enmo, oms)
}

fn close(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol * want.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn covariance_matches_term_by_term_evaluation() {
    let pts = points();
    assert_eq!(pts.len(), 100);
    for (k, p) in pts.iter().enumerate() {
        let (enmo, _) = build(&p.input);
        let c = enmo_covariance(&enmo, p.input.omega).unwrap();
        assert!(close(c.vxx, p.expected.vxx, 1e-12), "point {k} vxx");
        assert!(
            close(c.vxp, p.expected.vxp, 1e-12),
            "point {k} vxp {} vs {}",
            c.vxp,
            p.expected.vxp
        );
        assert!(
            close(c.vpp, p.expected.vpp, 1e-12),
            "point {k} vpp {} vs {}",
            c.vpp,
            p.expected.vpp
        );
        let n = enmo_covariance(&enmo.with_cross_term(CrossTerm::Normalized), p.input.omega).unwrap();
        assert!(
            close(n.vxp, p.expected.vxp_normalized, 1e-12),
            "point {k} normalized vxp"
        );
    }
}

#[test]
fn cqnc_spectrum_matches_term_by_term_evaluation() {
    for (k, p) in points().iter().enumerate() {
        let (enmo, oms) = build(&p.input);
        let t = s_cqnc_terms(&enmo, &oms, p.input.omega).unwrap();
        assert!(
            close(t.total, p.expected.s_cqnc, 1e-12),
            "point {k} total {} vs {}",
            t.total,
            p.expected.s_cqnc
        );
        assert!(
            close(t.backaction, p.expected.s_cqnc_backaction, 1e-12),
            "point {k} backaction"
        );
        assert!(close(t.loss, p.expected.s_cqnc_loss, 1e-12), "point {k} loss");
        assert!(
            close(s_oms_only(&oms, p.input.omega), p.expected.s_oms, 1e-12),
            "point {k} oms"
        );
    }
}
