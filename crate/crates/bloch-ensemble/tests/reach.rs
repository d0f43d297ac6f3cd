mod common;

use bloch_ensemble::linear::SampledControl;
use bloch_ensemble::quad::{integrate, simpson_complex};
use bloch_ensemble::reach::{
    cauchy_riemann_check, cubic_transform, fixed_point_solve, fixed_point_solve_at, phi_w, tangent_demo,
    third_order_check, PICARD_C,
};
use bloch_ensemble::{ControlSchedule, Error, PulseEvent, Vec3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn constant(t: f64, v: Complex64) -> SampledControl {
    SampledControl::from_fn(0.0, t, 1025, |_| v).unwrap()
}

#[test]
fn zero_control_stays_at_the_pole() {
    let sol = fixed_point_solve(&constant(1.0, c(0.0, 0.0)), 1.0, 40.0, 1e-14, 50).unwrap();
    assert_eq!(sol.sup_norm(), 0.0);
}

#[test]
fn mild_solution_matches_the_bloch_flow() {
    let w = constant(1.0, c(0.1, 0.0));
    let omegas = [-7.0, -1.0, 0.0, 0.5, 3.0, 12.0];
    let sol = fixed_point_solve_at(&w, 1.0, &omegas, 1e-14, 100).unwrap();
    for (k, &om) in omegas.iter().enumerate() {
        // w = 0.1 real means u = 0, v = -0.1
        let m = common::rk4(Vec3::z(), om, 0.0, 1.0, 4000, |_| (0.0, -0.1));
        let z = sol.final_values()[k];
        assert!((z - c(m.x, m.y)).norm() < 1e-6, "omega {om}");
    }
}

#[test]
fn iteration_count_follows_the_contraction_rate() {
    let w = constant(1.0, c(0.1, 0.05));
    let tol = 1e-12;
    let sol = fixed_point_solve(&w, 1.0, 40.0, tol, 100).unwrap();
    let rate = sol.contraction_bound();
    let bound = (tol.ln() / rate.ln()).ceil() as usize + 3;
    assert!(sol.iterations <= bound, "{} > {bound}", sol.iterations);
}

#[test]
fn oversized_control_is_refused() {
    assert!(matches!(
        fixed_point_solve(&constant(1.0, c(0.6, 0.0)), 1.0, 40.0, 1e-12, 50),
        Err(Error::ControlTooLarge { .. })
    ));
}

/// Smooth control with `‖w‖_{L²}√T` drawn from `[lo, hi)`.
fn random_control(rng: &mut ChaCha8Rng, t: f64, lo: f64, hi: f64) -> SampledControl {
    let size = rng.gen_range(lo..hi) / t.sqrt();
    let a: Vec<Complex64> = (0..4).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let raw = SampledControl::from_fn(0.0, t, 1025, |s| {
        a.iter().enumerate().map(|(k, v)| v * (k as f64 * s).cos()).sum()
    })
    .unwrap();
    let n = raw.l2_norm();
    raw.scaled(size / n)
}

#[test]
fn a_priori_bounds_and_geometric_decay() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..5 {
        let t = rng.gen_range(0.5..2.0);
        let w = random_control(&mut rng, t, 0.05, 0.3);
        let sol = fixed_point_solve(&w, t, 40.0 / t, 1e-13, 200).unwrap();
        assert!(sol.sup_norm() <= t.sqrt() * sol.w_l2 + 1e-8);
        let cap = 2.0 * (2.0 * std::f64::consts::PI).sqrt() * sol.w_l2 + 1e-8;
        assert!((0..sol.times.len()).step_by(64).all(|j| sol.window_l2(j) <= cap));
        let rate = PICARD_C * t.sqrt() * sol.w_l2 * 1.1;
        for p in sol.diffs.windows(2) {
            if p[0] > 1e-13 {
                assert!(p[1] / p[0] <= rate, "ratio {} above {rate}", p[1] / p[0]);
            }
        }
    }
}

#[test]
fn lipschitz_in_the_control() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let omegas: Vec<f64> = (0..21).map(|k| -10.0 + k as f64).collect();
    for _ in 0..20 {
        let t = rng.gen_range(0.5..2.0);
        let w1 = random_control(&mut rng, t, 0.05, 0.4);
        let w2 = random_control(&mut rng, t, 0.05, 0.4);
        let z1 = fixed_point_solve_at(&w1, t, &omegas, 1e-14, 200).unwrap();
        let z2 = fixed_point_solve_at(&w2, t, &omegas, 1e-14, 200).unwrap();
        let gap = z1.z.iter().flatten().zip(z2.z.iter().flatten()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        let dw = SampledControl::new(0.0, t, w1.samples.iter().zip(&w2.samples).map(|(a, b)| a - b).collect())
            .unwrap()
            .l2_norm();
        assert!(gap <= 2.0 * t.sqrt() * dw + 1e-12);
    }
}

#[test]
fn cubic_kernel_values() {
    let w = constant(1.0, c(1.0, 0.0));
    assert!((phi_w(&w, 1.5).re - 0.0625).abs() < 1e-6);
    assert_eq!(phi_w(&w, 2.5), c(0.0, 0.0));
    assert_eq!(phi_w(&w, -0.1), c(0.0, 0.0));
    assert_eq!(phi_w(&w, 2.0), c(0.0, 0.0));

    // W = 1: the inner integral is the length of [max(0, x−τ), min(τ, x)]
    let x = 1.0;
    let len = |tau: f64| (tau.min(x) - (x - tau).max(0.0)).max(0.0);
    let oracle: f64 = [(0.0, 0.5), (0.5, 1.0)].iter().map(|&(a, b)| integrate(len, a, b, 1e-14)).sum();
    assert!((oracle - 0.25).abs() < 1e-12);
    assert!((phi_w(&w, x).re - oracle).abs() < 1e-6);
}

#[test]
fn tangent_demo_values_and_scaling() {
    let one = tangent_demo(1.0).unwrap();
    let i = one.x.iter().position(|&x| (x - 1.5).abs() < 1e-12).unwrap();
    assert!((one.phi[i].re - 0.0625).abs() < 1e-6);
    assert!(one.max_beyond_t >= 0.0625 - 1e-6);
    assert_eq!(phi_w(&constant(1.0, c(1.0, 0.0)), -0.5), c(0.0, 0.0));

    let two = tangent_demo(2.0).unwrap();
    for (k, (p1, p2)) in one.phi.iter().zip(&two.phi).enumerate() {
        assert!((two.x[k] - 2.0 * one.x[k]).abs() < 1e-12);
        assert!((p2 - 4.0 * p1).norm() < 1e-6, "x={}: {p2} vs {}", one.x[k], 4.0 * p1);
    }
    assert!(tangent_demo(0.0).is_err());
}

#[test]
fn third_order_term_for_a_constant_pulse() {
    let w = constant(1.0, c(1.0, 0.0));
    let om: f64 = 2.0;
    let probe = &third_order_check(&w, 1.0, &[om], &[0.1, 0.05, 0.025]).unwrap()[0];
    // |Z₁(τ)|² = 2(1 − cos ωτ)/ω² for W = 1
    let f = |tau: f64| 2.0 * (1.0 - (om * tau).cos()) / (om * om) * Complex64::from_polar(1.0, -om * tau);
    let integral = c(integrate(|t| f(t).re, 0.0, 1.0, 1e-14), integrate(|t| f(t).im, 0.0, 1.0, 1e-14));
    let z3 = 0.5 * Complex64::from_polar(1.0, om) * integral;
    assert!((probe.z3 - z3).norm() < 1e-6 * z3.norm());
    let err = (probe.extrapolated - z3).norm() / z3.norm();
    assert!(err < 0.05, "relative error {err}");
    // the opposite sign is nowhere near
    assert!((probe.extrapolated + z3).norm() / z3.norm() > 1.5);

    let zero = third_order_check(&constant(1.0, c(0.0, 0.0)), 1.0, &[om], &[0.1, 0.05]).unwrap();
    assert_eq!(zero[0].z3, c(0.0, 0.0));
    assert!(zero[0].ratios.iter().all(|r| r.norm() == 0.0));
}

#[test]
fn kernel_transform_identity() {
    let t = 1.0;
    let w = SampledControl::from_fn(0.0, t, 1025, |s| c(1.0 + 0.5 * s, 0.3 * (2.0 * s).sin())).unwrap();
    let n = 400;
    let h = 2.0 * t / n as f64;
    let phi: Vec<Complex64> = (0..=n).map(|k| phi_w(&w, h * k as f64)).collect();
    for i in 0..16 {
        let om = -6.0 + 0.8 * i as f64;
        let f: Vec<Complex64> =
            phi.iter().enumerate().map(|(k, p)| p * Complex64::from_polar(1.0, -om * h * k as f64)).collect();
        let lhs = simpson_complex(&f, h);
        let rhs = cubic_transform(&w, om);
        assert!((lhs - rhs).norm() < 1e-5, "omega {om}: {lhs} vs {rhs}");
    }
}

#[test]
fn analyticity_of_the_complex_endpoint() {
    let empty = ControlSchedule::free(1.0);
    assert_eq!(cauchy_riemann_check(&empty, (0.0, 3.0), (-0.5, 0.5), 1e-3).unwrap().max_residual, 0.0);

    let seg = ControlSchedule::new(vec![PulseEvent::Constant { t0: 0.0, t1: 1.0, u: 1.0, v: 0.0 }], 1.0).unwrap();
    let r1 = cauchy_riemann_check(&seg, (0.0, 3.0), (-0.5, 0.5), 1e-3).unwrap().max_residual;
    let r2 = cauchy_riemann_check(&seg, (0.0, 3.0), (-0.5, 0.5), 5e-4).unwrap().max_residual;
    assert!(r1 < 1e-4);
    assert!((3.5..=4.5).contains(&(r1 / r2)), "ratio {}", r1 / r2);
}
