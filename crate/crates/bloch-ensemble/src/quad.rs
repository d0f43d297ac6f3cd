//! Quadrature helpers: adaptive Gauss–Kronrod, composite rules on samples,
//! and product trapezoid weights for `∫ f(t) e^{−iωt} dt`.

use num_complex::Complex64;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive 15-point Gauss–Kronrod with global bisection of the worst panel.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let mut panels = vec![(a, b, gk15(&f, a, b))];
    for _ in 0..2000 {
        let err: f64 = panels.iter().map(|p| p.2 .1).sum();
        if err <= tol {
            break;
        }
        let (i, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .unwrap();
        let (lo, hi, _) = panels.swap_remove(i);
        let mid = 0.5 * (lo + hi);
        panels.push((lo, mid, gk15(&f, lo, mid)));
        panels.push((mid, hi, gk15(&f, mid, hi)));
    }
    panels.sort_by(|x, y| x.0.total_cmp(&y.0));
    panels.iter().map(|p| p.2 .0).sum()
}

/// Composite Simpson on equally spaced samples; the last panel falls back to
/// the trapezoid when the panel count is odd.
pub fn simpson(f: &[f64], h: f64) -> f64 {
    let n = f.len();
    if n < 2 {
        return 0.0;
    }
    let panels = n - 1;
    let even = panels - panels % 2;
    let mut s = 0.0;
    for i in (0..even).step_by(2) {
        s += f[i] + 4.0 * f[i + 1] + f[i + 2];
    }
    s *= h / 3.0;
    if even < panels {
        s += 0.5 * h * (f[n - 2] + f[n - 1]);
    }
    s
}

pub fn simpson_complex(f: &[Complex64], h: f64) -> Complex64 {
    let re: Vec<f64> = f.iter().map(|c| c.re).collect();
    let im: Vec<f64> = f.iter().map(|c| c.im).collect();
    Complex64::new(simpson(&re, h), simpson(&im, h))
}

/// Weights `(α, β)` with `∫₀^h (f_a(1−s/h) + f_b s/h) e^{−iωs} ds = α f_a + β f_b`.
pub fn product_trapezoid_weights(omega: f64, h: f64) -> (Complex64, Complex64) {
    let th = omega * h;
    let i = Complex64::i();
    let (full, first) = if th.abs() < 1e-3 {
        let t2 = th * th;
        (
            Complex64::new(1.0 - t2 / 6.0, -th / 2.0 + th * t2 / 24.0),
            Complex64::new(0.5 - t2 / 8.0, -th / 3.0 + th * t2 / 30.0),
        )
    } else {
        let e = Complex64::from_polar(1.0, -th);
        ((1.0 - e) / (i * th), i * e / th - (1.0 - e) / (th * th))
    };
    ((full - first) * h, first * h)
}

/// Running integrals `∫₀^{t_j} f(t) e^{−iωt} dt` on a uniform grid `t_j = j h`,
/// with `f` taken piecewise linear between samples.
pub fn cumulative_oscillatory(f: &[Complex64], h: f64, omega: f64) -> Vec<Complex64> {
    let (a, b) = product_trapezoid_weights(omega, h);
    let mut out = Vec::with_capacity(f.len());
    let mut acc = Complex64::new(0.0, 0.0);
    let mut phase = Complex64::new(1.0, 0.0);
    out.push(acc);
    for j in 1..f.len() {
        acc += phase * (a * f[j - 1] + b * f[j]);
        phase = Complex64::from_polar(1.0, -omega * h * j as f64);
        out.push(acc);
    }
    out
}

pub fn oscillatory(f: &[Complex64], h: f64, omega: f64) -> Complex64 {
    *cumulative_oscillatory(f, h, omega).last().unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_kronrod_on_smooth_integrand() {
        let v = integrate(|x| x.sin(), 0.0, std::f64::consts::PI, 1e-13);
        assert!((v - 2.0).abs() < 1e-13);
    }

    #[test]
    fn simpson_exact_on_cubics() {
        let h = 0.1;
        let f: Vec<f64> = (0..=10).map(|i| (i as f64 * h).powi(3)).collect();
        assert!((simpson(&f, h) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn product_rule_exact_for_linear_f() {
        let (om, h, n) = (7.3, 0.05, 41);
        let f: Vec<Complex64> = (0..n).map(|j| Complex64::new(1.0 + 2.0 * j as f64 * h, 0.5)).collect();
        let got = oscillatory(&f, h, om);
        let t = h * (n - 1) as f64;
        let i = Complex64::i();
        let e = Complex64::from_polar(1.0, -om * t);
        // ∫₀ᵗ (1 + 0.5i + 2s) e^{−iωs} ds in closed form.
        let c0 = Complex64::new(1.0, 0.5) * (1.0 - e) / (i * om);
        let c1 = 2.0 * (i * t * e / om + (e - 1.0) / (om * om));
        assert!((got - (c0 + c1)).norm() < 1e-13, "{got} vs {}", c0 + c1);
    }

    #[test]
    fn small_angle_weights_match_closed_form() {
        let (a1, b1) = product_trapezoid_weights(0.99e-3, 1.0);
        let (a2, b2) = product_trapezoid_weights(1.01e-3, 1.0);
        assert!((a1 - a2).norm() < 1e-5 && (b1 - b2).norm() < 1e-5);
    }
}
