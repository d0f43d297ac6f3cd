#![allow(dead_code)]

use bloch_ensemble::Vec3;

/// `Ṁ = (ωΩ_z + uΩ_x + vΩ_y)M` written out as a cross product.
pub fn bloch_rhs(m: &Vec3, omega: f64, u: f64, v: f64) -> Vec3 {
    Vec3::new(u, v, omega).cross(m)
}

/// Classical RK4 for `Ṁ = (ωΩ_z + u(t)Ω_x + v(t)Ω_y)M` on `[t0, t1]`.
pub fn rk4(m0: Vec3, omega: f64, t0: f64, t1: f64, steps: usize, ctrl: impl Fn(f64) -> (f64, f64)) -> Vec3 {
    let h = (t1 - t0) / steps as f64;
    let mut m = m0;
    for i in 0..steps {
        let t = t0 + h * i as f64;
        let f = |t: f64, m: &Vec3| {
            let (u, v) = ctrl(t);
            bloch_rhs(m, omega, u, v)
        };
        let k1 = f(t, &m);
        let k2 = f(t + 0.5 * h, &(m + 0.5 * h * k1));
        let k3 = f(t + 0.5 * h, &(m + 0.5 * h * k2));
        let k4 = f(t + h, &(m + h * k3));
        m += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    m
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}
