//! The linearized transverse dynamics `Ż = iωZ − w` around the north pole:
//! endpoint map, polynomial fits in `iω`, and mollified derivative-of-bump
//! controls realizing them.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::OmegaGrid;
use crate::error::{Error, Result};
use crate::quad;

#[derive(Clone, Debug, PartialEq)]
pub struct SampledControl {
    pub t0: f64,
    pub t1: f64,
    pub samples: Vec<Complex64>,
}

impl SampledControl {
    pub fn new(t0: f64, t1: f64, samples: Vec<Complex64>) -> Result<Self> {
        if !(t0 < t1) || samples.len() < 2 {
            return Err(Error::InvalidSchedule(format!(
                "sampled control needs t0 < t1 and >= 2 samples (t0={t0}, t1={t1}, n={})",
                samples.len()
            )));
        }
        Ok(SampledControl { t0, t1, samples })
    }

    pub fn from_fn(t0: f64, t1: f64, n: usize, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let h = (t1 - t0) / (n - 1) as f64;
        Self::new(t0, t1, (0..n).map(|j| f(t0 + h * j as f64)).collect())
    }

    pub fn step(&self) -> f64 {
        (self.t1 - self.t0) / (self.samples.len() - 1) as f64
    }

    pub fn time(&self, j: usize) -> f64 {
        self.t0 + self.step() * j as f64
    }

    /// Linear interpolation, zero outside `[t0, t1]` (up to rounding slack).
    pub fn at(&self, t: f64) -> Complex64 {
        let slack = 1e-12 * (self.t1 - self.t0);
        if t < self.t0 - slack || t > self.t1 + slack {
            return Complex64::new(0.0, 0.0);
        }
        let x = ((t - self.t0) / self.step()).clamp(0.0, (self.samples.len() - 1) as f64);
        let j = (x.floor() as usize).min(self.samples.len() - 2);
        let f = x - j as f64;
        self.samples[j] * (1.0 - f) + self.samples[j + 1] * f
    }

    /// Trapezoid estimate of `‖w‖_{L²}`.
    pub fn l2_norm(&self) -> f64 {
        let sq: Vec<f64> = self.samples.iter().map(|c| c.norm_sqr()).collect();
        let h = self.step();
        let inner: f64 = sq[1..sq.len() - 1].iter().sum();
        (h * (inner + 0.5 * (sq[0] + sq[sq.len() - 1]))).sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        let a: Vec<f64> = self.samples.iter().map(|c| c.norm()).collect();
        let h = self.step();
        h * (a[1..a.len() - 1].iter().sum::<f64>() + 0.5 * (a[0] + a[a.len() - 1]))
    }

    pub fn scaled(&self, s: f64) -> Self {
        SampledControl { t0: self.t0, t1: self.t1, samples: self.samples.iter().map(|c| c * s).collect() }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,re_w,im_w\n");
        for (j, w) in self.samples.iter().enumerate() {
            out.push_str(&format!("{:.12e},{:.12e},{:.12e}\n", self.time(j), w.re, w.im));
        }
        out
    }
}

/// `∫_{t0}^{t1} w(τ) e^{−iωτ} dτ` with `w` piecewise linear.
pub fn control_transform(w: &SampledControl, omega: f64) -> Complex64 {
    quad::oscillatory(&w.samples, w.step(), omega) * Complex64::from_polar(1.0, -omega * w.t0)
}

/// `Z(T,ω) = (Z₀(ω) − ∫₀ᵀ w(τ)e^{−iωτ}dτ) e^{iωT}`.
pub fn lin_endpoint(z0: &[Complex64], grid: &OmegaGrid, w: &SampledControl, t_final: f64) -> Result<Vec<Complex64>> {
    if w.t0 < 0.0 || w.t1 > t_final + 1e-12 {
        return Err(Error::InvalidSchedule(format!(
            "control support [{}, {}] not inside [0, {t_final}]",
            w.t0, w.t1
        )));
    }
    Ok(grid
        .nodes
        .par_iter()
        .zip(z0.par_iter())
        .map(|(&om, z)| (z - control_transform(w, om)) * Complex64::from_polar(1.0, om * t_final))
        .collect())
}

/// Polynomial in `iω` with complex coefficients.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComplexPolynomial {
    pub coefficients: Vec<Complex64>,
}

impl ComplexPolynomial {
    pub fn degree(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }

    /// `P(iω) = Σ p_j (iω)^j`.
    pub fn eval_i(&self, omega: f64) -> Complex64 {
        let x = Complex64::new(0.0, omega);
        self.coefficients.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * x + c)
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.iter().all(|c| c.norm() == 0.0)
    }
}

fn least_squares(grid: &OmegaGrid, target: &[Complex64], deg: usize) -> ComplexPolynomial {
    let scale = grid.nodes.iter().fold(0.0f64, |m, w| m.max(w.abs())).max(1e-300);
    let rows = grid.len();
    let a = DMatrix::from_fn(rows, deg + 1, |r, j| Complex64::new(0.0, grid.nodes[r] / scale).powu(j as u32));
    let b = DVector::from_column_slice(target);
    let sol = a.svd(true, true).solve(&b, 1e-14).expect("svd with vectors");
    ComplexPolynomial {
        coefficients: (0..=deg).map(|j| sol[j] / scale.powi(j as i32)).collect(),
    }
}

/// Lowest-degree least-squares fit of `Z_f(ω)e^{−iωT/2}` by `P(iω)` with sup
/// residual below `eta/2`.
pub fn weierstrass_fit(
    zf: &[Complex64],
    grid: &OmegaGrid,
    t_final: f64,
    eta: f64,
    deg_max: usize,
) -> Result<(ComplexPolynomial, f64)> {
    if !(eta > 0.0) {
        return Err(Error::PreconditionViolated { quantity: "eta".into(), value: eta });
    }
    let target: Vec<Complex64> = grid
        .nodes
        .iter()
        .zip(zf)
        .map(|(&w, z)| z * Complex64::from_polar(1.0, -0.5 * w * t_final))
        .collect();
    let mut best = f64::INFINITY;
    for deg in 0..=deg_max {
        let p = least_squares(grid, &target, deg);
        let res = grid
            .nodes
            .iter()
            .zip(&target)
            .map(|(&w, g)| (p.eval_i(w) - g).norm())
            .fold(0.0, f64::max);
        if res < 0.5 * eta {
            return Ok((p, res));
        }
        best = best.min(res);
    }
    Err(Error::DegreeInsufficient { deg_max, target: 0.5 * eta, best })
}

pub const MAX_BUMP_DERIVATIVE: usize = 20;

/// Numerators `N_n` with `g^{(n)}(y) = N_n(y) / (1−y²)^{2n} · g(y)`, from
/// `N_{n+1} = N_n′(1−y²)² + (4n y(1−y²) − 2y) N_n`.
fn bump_numerators() -> &'static Vec<Vec<f64>> {
    static CELL: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    CELL.get_or_init(|| {
        let mul = |a: &[f64], b: &[f64]| {
            let mut out = vec![0.0; a.len() + b.len() - 1];
            for (i, x) in a.iter().enumerate() {
                for (j, y) in b.iter().enumerate() {
                    out[i + j] += x * y;
                }
            }
            out
        };
        let add = |a: &[f64], b: &[f64]| {
            let mut out = vec![0.0; a.len().max(b.len())];
            for (i, x) in a.iter().enumerate() {
                out[i] += x;
            }
            for (i, x) in b.iter().enumerate() {
                out[i] += x;
            }
            out
        };
        let one_minus_y2 = [1.0, 0.0, -1.0];
        let sq = mul(&one_minus_y2, &one_minus_y2);
        let mut nums = vec![vec![1.0]];
        for n in 0..MAX_BUMP_DERIVATIVE {
            let cur = &nums[n];
            let d: Vec<f64> = if cur.len() > 1 {
                cur.iter().enumerate().skip(1).map(|(i, c)| i as f64 * c).collect()
            } else {
                vec![0.0]
            };
            let nf = n as f64;
            // 4n y (1 − y²) − 2y
            let factor = [0.0, 4.0 * nf - 2.0, 0.0, -4.0 * nf];
            let next = add(&mul(&d, &sq), &mul(&factor, cur));
            nums.push(next);
        }
        nums
    })
}

fn bump_raw(y: f64) -> f64 {
    if y.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - y * y)).exp()
    }
}

/// Normalizing constant making the bump integrate to one.
fn bump_constant() -> f64 {
    static CELL: OnceLock<f64> = OnceLock::new();
    *CELL.get_or_init(|| 1.0 / quad::integrate(bump_raw, -1.0, 1.0, 1e-15))
}

/// `g^{(n)}(y)` for the unit-mass bump supported in `(−1, 1)`.
pub fn bump_derivative(n: usize, y: f64) -> f64 {
    assert!(n <= MAX_BUMP_DERIVATIVE, "derivative order {n} above {MAX_BUMP_DERIVATIVE}");
    let g = bump_raw(y);
    if g == 0.0 {
        return 0.0;
    }
    let num = &bump_numerators()[n];
    let p = num.iter().rev().fold(0.0, |acc, c| acc * y + c);
    bump_constant() * g * p / (1.0 - y * y).powi(2 * n as i32)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MollifierSpec {
    pub center: f64,
    pub eps: f64,
    pub poly: ComplexPolynomial,
}

/// Samples of `w_ε = −Σ p_j g_ε^{(j)}` on `[0, T]`, `g_ε(t) = g((t−c)/ε)/ε`.
pub fn mollified_control(spec: &MollifierSpec, t_final: f64, n_samples: usize) -> Result<SampledControl> {
    if !(spec.eps > 0.0) || spec.center - spec.eps < 0.0 || spec.center + spec.eps > t_final {
        return Err(Error::PreconditionViolated { quantity: "mollifier support".into(), value: spec.eps });
    }
    if spec.poly.degree() > MAX_BUMP_DERIVATIVE {
        return Err(Error::PreconditionViolated {
            quantity: "polynomial degree".into(),
            value: spec.poly.degree() as f64,
        });
    }
    SampledControl::from_fn(0.0, t_final, n_samples, |t| {
        let y = (t - spec.center) / spec.eps;
        if y.abs() >= 1.0 {
            return Complex64::new(0.0, 0.0);
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, p) in spec.poly.coefficients.iter().enumerate() {
            acc += p * bump_derivative(j, y) * spec.eps.powi(-(j as i32) - 1);
        }
        -acc
    })
}

/// `∫ g(y) e^{−iωεy} dy` for the unit bump.
pub fn bump_transform(omega_eps: f64) -> Complex64 {
    // g is even, so the transform is real.
    let re = quad::integrate(|y| bump_constant() * bump_raw(y) * (omega_eps * y).cos(), -1.0, 1.0, 1e-13);
    Complex64::new(re, 0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachReport {
    pub degree: usize,
    pub fit_residual: f64,
    pub eps: f64,
    pub closed_form_error: f64,
    pub sampled_error: f64,
    pub cross_check: f64,
    pub n_samples: usize,
}

/// Approximately steers `Z₀ = 0` to `Z_f` in time `T` with a mollified
/// polynomial-derivative control.
pub fn approx_reach(
    zf: &[Complex64],
    grid: &OmegaGrid,
    t_final: f64,
    eta: f64,
    deg_max: usize,
) -> Result<(SampledControl, ReachReport)> {
    let (poly, fit_residual) = weierstrass_fit(zf, grid, t_final, eta, deg_max)?;
    let center = 0.5 * t_final;
    let zero = vec![Complex64::new(0.0, 0.0); grid.len()];
    let mut eps = 0.25 * t_final;
    loop {
        if eps < 1e-6 * t_final {
            return Err(Error::EpsUnderflow(eps));
        }
        // P(iω) ĝ_ε(ω) e^{iωT}, with ĝ_ε(ω) = e^{−iωT/2} ∫ g(y) e^{−iωεy} dy.
        let closed: Vec<Complex64> = grid
            .nodes
            .par_iter()
            .map(|&w| poly.eval_i(w) * bump_transform(w * eps) * Complex64::from_polar(1.0, 0.5 * w * t_final))
            .collect();
        let closed_form_error = sup_diff(&closed, zf);
        if closed_form_error < eta {
            let n_samples = ((t_final / eps) * 400.0).ceil().max(4096.0) as usize + 1;
            let spec = MollifierSpec { center, eps, poly: poly.clone() };
            let w = mollified_control(&spec, t_final, n_samples)?;
            let z_t = lin_endpoint(&zero, grid, &w, t_final)?;
            let cross_check = sup_diff(&z_t, &closed);
            let sampled_error = sup_diff(&z_t, zf);
            let report = ReachReport {
                degree: poly.degree(),
                fit_residual,
                eps,
                closed_form_error,
                sampled_error,
                cross_check,
                n_samples,
            };
            if cross_check >= 2e-3 {
                return Err(Error::ConclusionViolated(format!(
                    "sampled control disagrees with the closed form by {cross_check:.3e}"
                )));
            }
            return Ok((w, report));
        }
        eps *= 0.5;
    }
}

fn sup_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}
