// reference digits are kept as printed by the 50-digit evaluation
#![allow(clippy::excessive_precision)]

use flowlab::expansiveness::epsilon0_estimate;
use flowlab::field::estimate_lipschitz;
use flowlab::reparam::delta_for_epsilon;
use flowlab::{flow, flow_point, Domain, VectorFieldSpec};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Classical fixed-step RK4 for Lorenz, written out independently of the
/// library integrator.
fn lorenz_rk4(mut s: [f64; 3], t: f64, steps: usize) -> [f64; 3] {
    let (sigma, rho, beta) = (10.0, 28.0, 8.0 / 3.0);
    let rhs = |p: [f64; 3]| [sigma * (p[1] - p[0]), p[0] * (rho - p[2]) - p[1], p[0] * p[1] - beta * p[2]];
    let h = t / steps as f64;
    let add = |p: [f64; 3], k: [f64; 3], c: f64| [p[0] + c * k[0], p[1] + c * k[1], p[2] + c * k[2]];
    for _ in 0..steps {
        let k1 = rhs(s);
        let k2 = rhs(add(s, k1, h / 2.0));
        let k3 = rhs(add(s, k2, h / 2.0));
        let k4 = rhs(add(s, k3, h));
        for i in 0..3 {
            s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    s
}

#[test]
fn lorenz_matches_fixed_step_rk4() {
    let f = VectorFieldSpec::lorenz_standard();
    for start in [[1.0, 1.0, 20.0], [-5.0, 3.0, 25.0], [0.5, -0.2, 10.0]] {
        let x = DVector::from_column_slice(&start);
        let y = flow_point(&f, &x, 1.0, 1e-12).unwrap();
        let fine = lorenz_rk4(start, 1.0, 40_000);
        let coarse = lorenz_rk4(start, 1.0, 20_000);
        let oracle = DVector::from_column_slice(&fine);
        // the halved step confirms the oracle itself has converged
        assert!((oracle.clone() - DVector::from_column_slice(&coarse)).norm() < 1e-9);
        assert!((y - oracle).norm() < 1e-7);
    }
}

#[test]
fn linear_flow_and_variational_closed_form() {
    let diag = [-1.5, 0.3, 2.0];
    let f = VectorFieldSpec::diagonal(&diag, 100.0);
    let x = DVector::from_vec(vec![0.7, -1.2, 0.4]);
    let t = 1.3;
    let (y, phi) = flow(&f, &x, t, 1e-12).unwrap();
    let exp = DMatrix::from_diagonal(&DVector::from_iterator(3, diag.iter().map(|a| (a * t).exp())));
    assert!((y - &exp * &x).norm() < 1e-9);
    assert!((phi - exp).norm() < 1e-9);

    let rot = VectorFieldSpec::rotation(3.0);
    let p = DVector::from_vec(vec![1.0, 0.5]);
    let (q, phi) = flow(&rot, &p, t, 1e-12).unwrap();
    let r = DMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]);
    assert!((q - &r * &p).norm() < 1e-10);
    assert!((phi - r).norm() < 1e-10);
}

#[test]
fn frozen_delta_values() {
    // reference values evaluated with 50-digit arithmetic
    let cases = [
        ((1.05, 0.25, 0.1), 3.1764773411011430461e-5),
        ((1.05, 0.25, 0.3), 9.5294320233034282567e-5),
        ((28.0, 0.01, 0.1), 1.1911790029129286927e-6),
        ((1e-3, 1e-4, 0.3), 4.5485041837665660995e-6),
    ];
    for ((l, c, eps), want) in cases {
        let got = delta_for_epsilon(l, c, eps);
        assert!((got / want - 1.0).abs() < 1e-14, "{l} {c} {eps}: {got:e}");
    }
}

#[test]
fn frozen_epsilon0_values() {
    let cases = [
        ((1.05, 1.0), 1.2958352196082740123e-3),
        ((1e-3, 20.0), 0.74480005115071033416),
        ((2.1, 1.0), 7.9341676298823824942e-5),
        ((60.0, 0.01), 5.5776705909667053541e-5),
    ];
    for ((l, t), want) in cases {
        let got = epsilon0_estimate(l, t).unwrap();
        assert!((got / want - 1.0).abs() < 1e-14, "{l} {t}: {got:e}");
    }
    // the floor makes r0 = 10, so the horizon must exceed it
    assert!(epsilon0_estimate(1e-3, 1.0).is_err());
    let mut last = f64::INFINITY;
    for l in [0.5, 1.0, 2.0, 4.0, 8.0] {
        let e = epsilon0_estimate(l, 1.0).unwrap();
        assert!(e < last);
        last = e;
    }
}

fn fields() -> Vec<VectorFieldSpec> {
    vec![
        VectorFieldSpec::diagonal(&[1.0, -1.0, -2.0], 100.0),
        VectorFieldSpec::rotation(3.0),
        VectorFieldSpec::lorenz_standard(),
        VectorFieldSpec::saddle_suspension(1.0, 1.0, 1.0, Domain::cube(3, 50.0)).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn group_property(k in 0usize..4, a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0,
                      s in -0.3f64..0.3, t in -0.3f64..0.3) {
        let f = &fields()[k];
        let x = match k {
            1 => DVector::from_vec(vec![a, b]),
            2 => DVector::from_vec(vec![5.0 * a, 5.0 * b, 25.0 + 5.0 * c]),
            _ => DVector::from_vec(vec![a, b, c]),
        };
        // Lorenz is only integrated forward: backward orbits leave the box fast
        let (s, t) = if k == 2 { (s.abs(), t.abs()) } else { (s, t) };
        let direct = flow_point(f, &x, s + t, 1e-12).unwrap();
        let composed = flow_point(f, &flow_point(f, &x, s, 1e-12).unwrap(), t, 1e-12).unwrap();
        prop_assert!((&direct - composed).norm() <= 1e-8 * (1.0 + direct.norm()));
    }

    #[test]
    fn speed_ratio_within_lipschitz_growth(a in -8.0f64..8.0, b in -8.0f64..8.0, c in 15.0f64..35.0, t in 0.0f64..0.2) {
        let f = VectorFieldSpec::lorenz_standard();
        let l = estimate_lipschitz(&f, &f.domain, 2048, 1).unwrap();
        let x = DVector::from_vec(vec![a, b, c]);
        prop_assume!(f.speed(&x) > 1e-3);
        let y = flow_point(&f, &x, t, 1e-12).unwrap();
        let ratio = f.speed(&y) / f.speed(&x);
        let bound = (l * t.abs()).exp();
        prop_assert!(ratio <= bound && ratio >= 1.0 / bound);
    }
}
