//! Values from an independent solver (SCS through cvxpy, formulated in the
//! Jamiolkowski variable with an explicit partial-transpose cone constraint)
//! and hand-derived closed forms.

use stote_ot::linalg::{ComplexMatrix, HermitianMatrix, C64};
use stote_ot::stote::DensityMatrix;
use stote_ot::transport::*;

fn state(rows: &[&[(f64, f64)]]) -> DensityMatrix {
    let n = rows.len();
    let m = ComplexMatrix::from_fn(n, n, |i, j| C64::new(rows[i][j].0, rows[i][j].1));
    DensityMatrix::new(HermitianMatrix::new(m).unwrap()).unwrap()
}

fn qubit(a: f64, re: f64, im: f64) -> DensityMatrix {
    state(&[&[(a, 0.0), (re, im)], &[(re, -im), (1.0 - a, 0.0)]])
}

fn opts() -> SdpOptions {
    SdpOptions::default()
}

#[test]
fn qubit_costs_match_external_solver() {
    let r = qubit(0.7, 0.2, 0.1);
    let s = qubit(0.4, -0.1, 0.25);
    let t = qubit(0.9, 0.1, 0.0);
    let k = unitary_invariant_k(2, true);
    let cases = [
        (&r, &s, 0.392_456_285_025_571_8),
        (&s, &t, 0.583_892_038_862_456_6),
        (&r, &t, 0.282_055_709_489_342_4),
    ];
    for (a, b, want) in cases {
        let v = transport_cost(&k, a, b, opts()).unwrap().value;
        assert!((v - want).abs() < 1e-6, "{v} vs {want}");
    }
}

#[test]
fn triangle_margin_on_a_fixed_triple() {
    // K(r,s) + K(s,t) - K(r,t) from the external values.
    let r = qubit(0.7, 0.2, 0.1);
    let s = qubit(0.4, -0.1, 0.25);
    let t = qubit(0.9, 0.1, 0.0);
    let k = unitary_invariant_k(2, true);
    let cost = |a, b| transport_cost(&k, a, b, opts()).unwrap().value;
    let margin = cost(&r, &s) + cost(&s, &t) - cost(&r, &t);
    assert!((margin - 0.694_292_614_398_686).abs() < 2e-6);
}

#[test]
fn qutrit_cost_matches_external_solver() {
    let r = state(&[
        &[(0.5, 0.0), (0.0, 0.1), (0.05, 0.0)],
        &[(0.0, -0.1), (0.3, 0.0), (0.0, 0.0)],
        &[(0.05, 0.0), (0.0, 0.0), (0.2, 0.0)],
    ]);
    let s = DensityMatrix::from_diag(&[0.2, 0.3, 0.5]).unwrap();
    let v = transport_cost(&unitary_invariant_k(3, true), &r, &s, opts()).unwrap().value;
    assert!((v - 0.304_984_939_472_958_9).abs() < 1e-6, "{v}");
}

#[test]
fn limit_matches_external_solver() {
    let v = k_infinity(&qubit(0.7, 0.2, 0.1), &qubit(0.4, -0.1, 0.25), opts()).unwrap();
    assert!((v - 0.239_183_374_514_923_2).abs() < 1e-6, "{v}");
}

#[test]
fn commuting_formula_by_hand() {
    // p = (0.5, 0.3, 0.2), q = (0.2, 0.5, 0.3): retention (0.4, 1, 1).
    let keep = 0.4f64.sqrt();
    let n = 0.5 * keep + 0.3 + 0.2;
    let m = keep + 2.0;
    let want = 1.0 - n * m / 3.0;
    let got = commuting_cost(&[0.5, 0.3, 0.2], &[0.2, 0.5, 0.3]).unwrap();
    assert!((got.value - want).abs() < 1e-15);
    // Leftover mass 0.6 from state 0 goes to the deficits 0.2 and 0.1.
    assert!((got.plan.p_given[1][0] - 0.4).abs() < 1e-15);
    assert!((got.plan.p_given[2][0] - 0.2).abs() < 1e-15);
    let sdp = transport_cost(
        &unitary_invariant_k(3, true),
        &DensityMatrix::from_diag(&[0.5, 0.3, 0.2]).unwrap(),
        &DensityMatrix::from_diag(&[0.2, 0.5, 0.3]).unwrap(),
        opts(),
    )
    .unwrap();
    assert!((sdp.value - want).abs() < 1e-5);
}

#[test]
fn discontinuity_endpoint() {
    // alpha = 1/sqrt 2 in the pure-state formula at d = 2.
    let a = std::f64::consts::FRAC_1_SQRT_2;
    let want = (1.0 - a) * (2.0 + 2.0 * a) / 2.0;
    assert!((want - 0.5).abs() < 1e-15);
    assert!((pure_state_cost(a, 2).unwrap().normalized - want).abs() < 1e-15);
}
