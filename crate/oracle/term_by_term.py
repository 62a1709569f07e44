#!/usr/bin/env python3
"""Independent high-precision evaluation of the ENMO covariance and the
cascaded CQNC / OMS spectra, term by term, with mpmath at 50 digits.

Writes crates/core/tests/fixtures/oracle_points.json (random parameter
points) and crates/core/tests/fixtures/oracle_values.json (the named
reference values used by the unit tests). Inputs are stored as the exact
f64 values that the Rust tests parse back, so both sides evaluate the
same arguments.

    python3 oracle/term_by_term.py
"""
import json
import math
import os
import random

from mpmath import mp, mpf, mpc, sqrt, log10, fabs, pi

mp.dps = 50
TWO_PI = 2 * pi


def chi_cav(kappa, delta, w):
    return 1 / mpc(kappa / 2, -(w + delta))


def chi_mech(wm, gm, w):
    return -1 / mpc(gm / 2, -(w - wm))


def strength(g, kappa, chi):
    return g * g * kappa * fabs(chi) ** 2


def enmo_terms(p, w, variant):
    ka, da, kc, dc = mpf(p["kappa_a"]), mpf(p["delta_a"]), mpf(p["kappa_c"]), mpf(p["delta_c"])
    ga = mpf(p["g_bs"]) + mpf(p["g_dc"])
    xa = chi_cav(ka, da, w)
    if variant == "as_printed":
        G = strength(ga, ka, xa)
    else:
        G = strength(ga, kc, chi_cav(kc, dc, w))
    xa2 = fabs(xa) ** 2
    loss = G * ka * xa2 / 2 * ((w * w + ka * ka / 4) / (da * da) + 1)
    return G, xa, loss


def covariance(p, w, variant):
    G, xa, loss = enmo_terms(p, w, variant)
    vpp = mpf(1) / 2 + G * G / 2 * fabs(xa) ** 2 + loss
    return {
        "vxx": mpf(1) / 2,
        "vxp": -G,
        "vxp_normalized": -G * fabs(xa) / 2,
        "vpp": vpp,
    }


def s_cqnc(p, w, variant):
    G, xa, loss = enmo_terms(p, w, variant)
    xm = chi_mech(mpf(p["omega_m"]), mpf(p["gamma_m"]), w)
    t2 = G * G / 2 * fabs(xm + xa) ** 2
    return mpf(1) / 2 + t2 + loss, t2, loss


def s_oms(p, w):
    xom = chi_cav(mpf(p["kappa_om"]), mpf(p["delta_om"]), w)
    Gom = strength(mpf(p["g_om"]), mpf(p["kappa_om"]), xom)
    xm = chi_mech(mpf(p["omega_m"]), mpf(p["gamma_m"]), w)
    return mpf(1) / 2 + Gom * Gom / 2 * fabs(xm) ** 2


def f(x):
    return float(x)


def random_points(n, seed):
    rng = random.Random(seed)
    tp = 2 * math.pi
    pts = []
    for i in range(n):
        wm = tp * rng.uniform(200e3, 1.5e6)
        p = {
            "kappa_a": tp * rng.uniform(1e3, 400e3),
            "delta_a": -tp * rng.uniform(200e3, 1.5e6),
            "kappa_c": tp * rng.uniform(300e3, 2e6),
            "delta_c": tp * rng.uniform(-100e3, 100e3),
            "g_bs": tp * rng.uniform(0, 300e3),
            "g_dc": tp * rng.uniform(0, 300e3),
            "omega_m": wm,
            "gamma_m": tp * rng.uniform(0.1, 100.0),
            "g_om": tp * rng.uniform(0, 500e3),
            "kappa_om": tp * rng.uniform(300e3, 2e6),
            "delta_om": tp * rng.uniform(-100e3, 100e3),
            "omega": tp * rng.uniform(10e3, 3e6),
            "variant": "as_printed" if i % 2 == 0 else "meter_analogy",
        }
        # keep clear of the mechanical line so f64 rounding of the input is immaterial
        if abs(p["omega"] - wm) < 1e3 * p["gamma_m"]:
            p["omega"] = wm * 0.8
        pts.append(p)
    return pts


def evaluate(p):
    w = mpf(p["omega"])
    cov = covariance(p, w, p["variant"])
    total, t2, t3 = s_cqnc(p, w, p["variant"])
    return {
        "vxx": f(cov["vxx"]),
        "vxp": f(cov["vxp"]),
        "vxp_normalized": f(cov["vxp_normalized"]),
        "vpp": f(cov["vpp"]),
        "s_cqnc": f(total),
        "s_cqnc_backaction": f(t2),
        "s_cqnc_loss": f(t3),
        "s_oms": f(s_oms(p, w)),
    }


def named_values():
    tp = TWO_PI
    out = {}
    # cavity susceptibility magnitude off resonance
    out["chi_cavity_abs_k160_dm710_w0"] = f(fabs(chi_cav(tp * 160e3, -tp * 710e3, mpf(0))))
    out["chi_cavity_resonance_k160"] = f(2 / (tp * 160e3))
    out["chi_mech_abs_g1_wm710_w709"] = f(fabs(chi_mech(tp * 710e3, tp * 1, tp * 709e3)))
    ga, ka = tp * 350e3, tp * 160e3
    out["g_strength_peak_reference"] = f(strength(ga, ka, chi_cav(ka, -tp * 710e3, tp * 710e3)))
    out["normal_mode_splitting_100k_175k"] = f(2 * sqrt((tp * 100e3 / 2) ** 2 + (tp * 175e3) ** 2))
    raw, shot, dark = mpf(10) ** (-9.0), mpf(10) ** (-9.3), mpf(10) ** (-10.3)
    out["shot_noise_normalize_dbm"] = f((raw - dark) / (shot - dark))
    # reference parameters at omega = 2 pi 710 kHz, printed variant
    t1 = {
        "kappa_a": tp * 160e3, "delta_a": -tp * 710e3, "kappa_c": tp * 980e3, "delta_c": mpf(0),
        "g_bs": tp * 175e3, "g_dc": tp * 175e3,
        "omega_m": tp * 710e3, "gamma_m": tp * 1, "g_om": tp * 350e3,
        "kappa_om": tp * 1e6, "delta_om": mpf(0),
    }
    for variant in ("as_printed", "meter_analogy"):
        cov = covariance(t1, tp * 710e3, variant)
        out[f"reference_cov_710k_{variant}"] = {k: f(v) for k, v in cov.items()}
        w = mpf("0.67") * tp * 710e3
        total, t2, t3 = s_cqnc(t1, w, variant)
        out[f"reference_s_cqnc_067_{variant}"] = {"total": f(total), "backaction": f(t2), "loss": f(t3)}
        # model variance with loss eta = 0.54, psi = 0
        eta = mpf("0.54")
        out[f"reference_model_psi0_eta054_710k_{variant}"] = f(eta * cov["vpp"] + (1 - eta) / 2)
    out["reference_s_oms_067"] = f(s_oms(t1, mpf("0.67") * tp * 710e3))
    # single-mode squeezer efficiency from (-2.6 dB, +6.0 dB)
    vp, vm = mpf(10) ** mpf("0.6"), mpf(10) ** mpf("-0.26")
    a, b = vp - 1, vm - 1
    eta = -a * b / (a + b)
    out["sms_eta_m26_p60"] = f(eta)
    out["sms_r_m26_p60"] = f(mp.log((a + eta) / eta) / 2)
    return out


def main():
    here = os.path.dirname(os.path.abspath(__file__))
    fix = os.path.join(here, "..", "crates", "core", "tests", "fixtures")
    os.makedirs(fix, exist_ok=True)
    pts = random_points(100, 20240611)
    rows = [{"input": p, "expected": evaluate(p)} for p in pts]
    with open(os.path.join(fix, "oracle_points.json"), "w") as fh:
        json.dump(rows, fh, indent=1)
    with open(os.path.join(fix, "oracle_values.json"), "w") as fh:
        json.dump(named_values(), fh, indent=1, sort_keys=True)


if __name__ == "__main__":
    main()
