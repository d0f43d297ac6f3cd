mod common;

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use bloch_ensemble::bloch::endpoint_operator;
use bloch_ensemble::bracket::{
    bracket_schedule, descent_functional, descent_step, equator_prerotation, find_descent_polys, h1_descent_loop,
    poly_schedule, rotate_to_pole, Axis, RealPolynomial, DEFAULT_TAU0,
};
use bloch_ensemble::so3::{omega_x, omega_y, so3_exp};
use bloch_ensemble::{simulate, EnsembleState, Error, Mat3, OmegaGrid, PulseEvent, Vec3};
use proptest::prelude::*;

const TAUS: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-5];

fn sine_state(eps: f64) -> EnsembleState {
    EnsembleState::from_fn(OmegaGrid::half_period(), |w| Vec3::new((eps * w).sin(), 0.0, (eps * w).cos())).unwrap()
}

fn poly(c: &[f64]) -> RealPolynomial {
    RealPolynomial::new(c.to_vec())
}

/// `‖E(ω) − (I + τ(P(ω)Ω_x + Q(ω)Ω_y))‖_F` for the schedule built at `tau`.
fn poly_error(p: &RealPolynomial, q: &RealPolynomial, tau: f64, w: f64) -> f64 {
    let sch = poly_schedule(p, q, tau).unwrap();
    let target = Mat3::identity() + (omega_x() * p.eval(w) + omega_y() * q.eval(w)) * tau;
    (endpoint_operator(&sch, w) - target).norm()
}

#[test]
fn degree_zero_is_one_pulse() {
    let sch = bracket_schedule(0, 0.3, 1.0, Axis::X).unwrap();
    assert_eq!(sch.events, vec![PulseEvent::dirac(0.0, 0.3, 0.0)]);
    for w in [0.0, 1.0, 2.5] {
        assert!((endpoint_operator(&sch, w) - so3_exp(&Vec3::new(0.3, 0.0, 0.0))).norm() < 1e-15);
    }
}

#[test]
fn first_bracket_has_order_three_halves() {
    let err: Vec<f64> = TAUS
        .iter()
        .map(|&t| {
            let sch = bracket_schedule(1, t, 1.0, Axis::Y).unwrap();
            (endpoint_operator(&sch, 1.0) - (Mat3::identity() + omega_y() * t)).norm()
        })
        .collect();
    let slope = common::loglog_slope(&TAUS, &err);
    assert!((1.4..=1.6).contains(&slope), "slope {slope}");
}

#[test]
fn second_bracket_with_negative_sign() {
    for w in [0.5, 1.0, 2.0] {
        let rel: Vec<f64> = TAUS
            .iter()
            .map(|&t| {
                let sch = bracket_schedule(2, t, -1.0, Axis::X).unwrap();
                let target = Mat3::identity() - omega_x() * (t * w * w);
                (endpoint_operator(&sch, w) - target).norm() / t
            })
            .collect();
        assert!(rel.windows(2).all(|p| p[1] < p[0]), "omega {w}: {rel:?}");
        assert!(rel[3] < 0.2 * rel[0]);
    }
}

#[test]
fn durations_follow_the_recursion() {
    for (m, factor) in [(1usize, 2.0), (2, 6.0), (3, 14.0)] {
        for tau in [1e-2, 1e-4] {
            let sch = bracket_schedule(m, tau, 1.0, Axis::X).unwrap();
            let expect = factor * tau.powf(1.0 / (m as f64 + 1.0));
            assert!((sch.horizon - expect).abs() < 1e-12 * expect.max(1.0), "m={m}");
        }
    }
}

#[test]
fn oversized_tau_is_rejected() {
    assert!(matches!(bracket_schedule(1, 4.0, 1.0, Axis::X), Err(Error::TauTooLarge { .. })));
}

#[test]
fn polynomial_schedules() {
    let one = poly_schedule(&poly(&[1.0]), &RealPolynomial::zero(), 0.2).unwrap();
    assert_eq!(one.events.len(), 1);
    assert_eq!(one.dirac_count(), 1);

    let q = poly(&[0.0, 1.0]);
    let err: Vec<f64> = TAUS.iter().map(|&t| poly_error(&RealPolynomial::zero(), &q, t, 1.3)).collect();
    assert!(common::loglog_slope(&TAUS, &err) >= 1.4);

    let p = poly(&[0.0, 0.0, 1.0]);
    for w in [0.5, 1.5] {
        let rel: Vec<f64> = TAUS.iter().map(|&t| poly_error(&p, &q, t, w) / t).collect();
        assert!(rel.windows(2).all(|r| r[1] < r[0]), "{rel:?}");
    }
}

#[test]
fn functional_vanishes_on_constants() {
    let s = EnsembleState::constant(OmegaGrid::half_period(), Vec3::new(0.6, 0.0, 0.8)).unwrap();
    assert!(descent_functional(&s, &poly(&[1.0, 2.0]), &poly(&[0.0, -1.0, 3.0])).abs() < 1e-14);
}

#[test]
fn functional_on_the_sine_state() {
    for eps in [0.1, 0.5] {
        let a = descent_functional(&sine_state(eps), &RealPolynomial::zero(), &poly(&[0.0, 1.0]));
        let expect = eps * PI;
        assert!((a - expect).abs() < 0.02 * expect, "{a} vs {expect}");
    }
}

/// Half the squared `L²` norm of `d/dω`: second-order differences, Simpson's rule.
fn half_energy(nodes: &[f64], m: &[Vec3]) -> f64 {
    let h = nodes[1] - nodes[0];
    let n = nodes.len();
    let deriv = |i: usize| -> Vec3 {
        if i == 0 {
            (-3.0 * m[0] + 4.0 * m[1] - m[2]) / (2.0 * h)
        } else if i == n - 1 {
            (3.0 * m[n - 1] - 4.0 * m[n - 2] + m[n - 3]) / (2.0 * h)
        } else {
            (m[i + 1] - m[i - 1]) / (2.0 * h)
        }
    };
    let acc: f64 = (0..n)
        .map(|i| {
            let wt = if i == 0 || i == n - 1 { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            wt * deriv(i).norm_squared()
        })
        .sum();
    0.5 * acc * h / 3.0
}

#[test]
fn functional_matches_a_one_sided_difference() {
    let grid = OmegaGrid::uniform(0.0, PI, 4097).unwrap();
    let s = EnsembleState::from_fn(grid.clone(), |w| {
        Vec3::new(0.3 * (0.7 * w).sin(), 0.2 * (1.1 * w).cos(), 1.0).normalize()
    })
    .unwrap();
    let cases = [(poly(&[0.0, 1.0]), poly(&[0.5])), (poly(&[0.1, 0.0, -0.3]), poly(&[0.0, 0.4]))];
    for (p, q) in cases {
        let moved = |tau: f64| -> Vec<Vec3> {
            grid.nodes
                .iter()
                .zip(&s.m)
                .map(|(&w, m)| (Mat3::identity() + (omega_x() * p.eval(w) + omega_y() * q.eval(w)) * tau) * m)
                .collect()
        };
        let tau = 1e-6;
        let fd = (half_energy(&grid.nodes, &moved(tau)) - half_energy(&grid.nodes, &moved(0.0))) / tau;
        let a = descent_functional(&s, &p, &q);
        assert!((fd - a).abs() < 1e-4 * a.abs().max(1.0), "{fd} vs {a}");
    }
}

#[test]
fn descent_polynomials() {
    let constant = EnsembleState::constant(OmegaGrid::half_period(), Vec3::new(0.0, 0.6, 0.8)).unwrap();
    assert!(matches!(find_descent_polys(&constant, 2), Err(Error::DegenerateState)));

    let s = sine_state(0.1);
    let (p, q) = find_descent_polys(&s, 2).unwrap();
    let a2 = descent_functional(&s, &p, &q);
    assert!(a2 < 0.0);
    let (p4, q4) = find_descent_polys(&s, 4).unwrap();
    assert!(descent_functional(&s, &p4, &q4) <= a2 + 1e-12);
}

#[test]
fn descent_step_lowers_the_seminorm() {
    let s = sine_state(0.1);
    let (_, next, rep) = descent_step(&s, 3, DEFAULT_TAU0).unwrap();
    assert!(rep.h1_after < rep.h1_before);
    assert!((next.h1_seminorm() - rep.h1_after).abs() < 1e-15);

    let constant = EnsembleState::constant(OmegaGrid::half_period(), Vec3::x()).unwrap();
    assert!(matches!(descent_step(&constant, 3, DEFAULT_TAU0), Err(Error::DegenerateState)));
}

#[test]
fn equatorial_states_are_prerotated() {
    let s = EnsembleState::from_fn(OmegaGrid::half_period(), |w| Vec3::new((0.2 * w).cos(), (0.2 * w).sin(), 0.0)).unwrap();
    let pre = simulate(&s, &equator_prerotation()).unwrap();
    for (a, b) in pre.m.iter().zip(&s.m) {
        assert!((a - Vec3::new(b.x, 0.0, b.y)).norm() < 1e-12);
    }
    let (sch, _, rep) = descent_step(&s, 3, DEFAULT_TAU0).unwrap();
    assert!(rep.h1_after < rep.h1_before);
    assert_eq!(sch.events[..2], equator_prerotation().events[..]);
}

#[test]
fn rotation_to_the_pole() {
    let m = Vec3::new(0.0, FRAC_1_SQRT_2, FRAC_1_SQRT_2);
    let r = rotate_to_pole(&m, Axis::X).unwrap();
    assert!((r.result - Vec3::z()).norm() < 1e-12);
    assert!((r.theta - PI / 4.0).abs() < 1e-12);
    assert_eq!(r.axis, Axis::X);

    let r = rotate_to_pole(&Vec3::x(), Axis::X).unwrap();
    assert_eq!(r.axis, Axis::Y);
    assert!((r.result - Vec3::z()).norm() < 1e-12);

    assert!(matches!(rotate_to_pole(&Vec3::z(), Axis::X), Err(Error::AlreadyAtPole)));
}

#[test]
fn pole_rotation_is_frequency_independent() {
    let m = Vec3::new(0.3, -0.5, 0.2).normalize();
    for axis in [Axis::X, Axis::Y] {
        let r = rotate_to_pole(&m, axis).unwrap();
        let grid = OmegaGrid::uniform(-4.0, 4.0, 161).unwrap();
        let e0 = endpoint_operator(&r.schedule, grid.nodes[0]);
        let spread = grid.nodes.iter().map(|&w| (endpoint_operator(&r.schedule, w) - e0).norm()).fold(0.0, f64::max);
        assert!(spread < 1e-12);
        assert!((e0 * m - r.result).norm() < 1e-12);
    }
}

#[test]
fn loop_on_a_constant_state_only_rotates() {
    let s = EnsembleState::constant(OmegaGrid::half_period(), Vec3::new(0.0, 0.6, -0.8)).unwrap();
    let out = h1_descent_loop(&s, 1e-3, 10, 3).unwrap();
    assert!(out.reports.is_empty());
    assert!(out.rotations >= 1);
    assert!(out.pole_distance < 1e-12);
}

#[test]
fn loop_reports_are_monotone() {
    let reports = match h1_descent_loop(&sine_state(0.1), 1e-3, 12, 3) {
        Ok(out) => out.reports,
        Err(Error::MaxIterExceeded { reports }) => reports,
        Err(e) => panic!("{e}"),
    };
    assert!(!reports.is_empty());
    assert!(reports.iter().all(|r| r.h1_after < r.h1_before));
    assert!(reports.windows(2).all(|p| (p[1].h1_before - p[0].h1_after).abs() < 1e-15));
}

#[test]
fn zero_iterations_on_a_varying_state() {
    assert!(matches!(h1_descent_loop(&sine_state(0.1), 1e-3, 0, 3), Err(Error::MaxIterExceeded { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rotation_never_moves_away(x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64) {
        let v = Vec3::new(x, y, z);
        prop_assume!(v.norm() > 1e-3);
        let m = v.normalize();
        prop_assume!((m - Vec3::z()).norm() > 1e-9);
        if let Ok(r) = rotate_to_pole(&m, Axis::X) {
            prop_assert!((r.result - Vec3::z()).norm() <= (m - Vec3::z()).norm() + 1e-14);
        }
    }

    #[test]
    fn functional_is_linear(a in -2.0..2.0f64, b in -2.0..2.0f64,
                            p1 in prop::collection::vec(-1.0..1.0f64, 3),
                            p2 in prop::collection::vec(-1.0..1.0f64, 3),
                            q in prop::collection::vec(-1.0..1.0f64, 3)) {
        let s = EnsembleState::from_fn(OmegaGrid::uniform(0.0, PI, 257).unwrap(), |w| {
            Vec3::new((0.4 * w).sin(), 0.3 * (0.9 * w).cos(), 1.0).normalize()
        }).unwrap();
        let q = poly(&q);
        let mix = poly(&p1.iter().zip(&p2).map(|(u, v)| a * u + b * v).collect::<Vec<_>>());
        let lhs = descent_functional(&s, &mix, &q);
        let zero = RealPolynomial::zero();
        let rhs = a * descent_functional(&s, &poly(&p1), &zero) + b * descent_functional(&s, &poly(&p2), &zero)
            + descent_functional(&s, &zero, &q);
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }
}
