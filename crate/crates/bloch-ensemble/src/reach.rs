//! Reachability numerics on the full frequency line: the mild transverse
//! equation solved by Picard iteration, the cubic kernel `Φ_W`, and a
//! Cauchy–Riemann probe of the complexified endpoint map.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::{ControlSchedule, PulseEvent};
use crate::error::{Error, Result};
use crate::linear::SampledControl;
use crate::quad;
use crate::so3::so3_exp;

pub const TIME_STEPS: usize = 1024;
pub const WINDOW_NODES: usize = 801;
/// Contraction constant of the Picard map on the ball of radius 1/2.
pub const PICARD_C: f64 = 0.577_350_269_189_625_8;

#[derive(Clone, Debug)]
pub struct MildSolution {
    pub times: Vec<f64>,
    pub omegas: Vec<f64>,
    /// `z[k][j] = Z(t_j, ω_k)`.
    pub z: Vec<Vec<Complex64>>,
    pub w: SampledControl,
    pub w_l2: f64,
    pub iterations: usize,
    /// Sup-norm difference between consecutive iterates.
    pub diffs: Vec<f64>,
}

impl MildSolution {
    pub fn final_values(&self) -> Vec<Complex64> {
        self.z.iter().map(|col| *col.last().unwrap()).collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.z.iter().flatten().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Trapezoid `L²` norm over the frequency window at time index `j`.
    pub fn window_l2(&self, j: usize) -> f64 {
        let f: Vec<f64> = self.z.iter().map(|col| col[j].norm_sqr()).collect();
        let mut acc = 0.0;
        for k in 0..f.len() - 1 {
            acc += 0.5 * (self.omegas[k + 1] - self.omegas[k]) * (f[k] + f[k + 1]);
        }
        acc.sqrt()
    }

    pub fn contraction_bound(&self) -> f64 {
        PICARD_C * self.times.last().unwrap().sqrt() * self.w_l2
    }
}

fn resample(w: &SampledControl, t_final: f64) -> SampledControl {
    if w.t0 == 0.0 && w.t1 == t_final && w.samples.len() == TIME_STEPS + 1 {
        return w.clone();
    }
    SampledControl::from_fn(0.0, t_final, TIME_STEPS + 1, |t| w.at(t)).expect("valid grid")
}

/// Picard iteration of `Θ(ξ)(t,ω) = −e^{iωt}∫₀ᵗ w(τ)√(1−|ξ|²)e^{−iωτ}dτ` on
/// `WINDOW_NODES` frequencies in `[−Ω, Ω]`.
pub fn fixed_point_solve(
    w: &SampledControl,
    t_final: f64,
    omega_window: f64,
    tol: f64,
    max_iter: usize,
) -> Result<MildSolution> {
    let n = WINDOW_NODES;
    let omegas: Vec<f64> = (0..n).map(|k| -omega_window + 2.0 * omega_window * k as f64 / (n - 1) as f64).collect();
    fixed_point_solve_at(w, t_final, &omegas, tol, max_iter)
}

pub fn fixed_point_solve_at(
    w: &SampledControl,
    t_final: f64,
    omegas: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<MildSolution> {
    let w = resample(w, t_final);
    let h = t_final / TIME_STEPS as f64;
    let times: Vec<f64> = (0..=TIME_STEPS).map(|j| h * j as f64).collect();
    let w_l2 = w.l2_norm();
    let bound = 0.5 / t_final.sqrt();
    if w_l2 >= bound {
        return Err(Error::ControlTooLarge { norm: w_l2, bound });
    }
    let step = |om: f64, xi: &[Complex64]| -> Vec<Complex64> {
        let f: Vec<Complex64> = w
            .samples
            .iter()
            .zip(xi)
            .map(|(wv, x)| wv * (1.0 - x.norm_sqr()).max(0.0).sqrt())
            .collect();
        quad::cumulative_oscillatory(&f, h, om)
            .into_iter()
            .zip(&times)
            .map(|(v, &t)| -v * Complex64::from_polar(1.0, om * t))
            .collect()
    };
    let mut z = vec![vec![Complex64::new(0.0, 0.0); TIME_STEPS + 1]; omegas.len()];
    let mut diffs = Vec::new();
    for it in 1..=max_iter {
        let next: Vec<Vec<Complex64>> = omegas.par_iter().zip(z.par_iter()).map(|(&om, col)| step(om, col)).collect();
        let d = next
            .iter()
            .zip(&z)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max);
        z = next;
        diffs.push(d);
        if d < tol {
            return Ok(MildSolution { times, omegas: omegas.to_vec(), z, w, w_l2, iterations: it, diffs });
        }
    }
    Err(Error::NoConvergence(max_iter))
}

/// Default truncation of the frequency line, `Ω = 40/T`.
pub fn default_window(t_final: f64) -> f64 {
    40.0 / t_final
}

const PHI_NODES: usize = 512;

fn trapezoid_nodes(a: f64, b: f64, n: usize) -> impl Iterator<Item = (f64, f64)> {
    let h = (b - a) / (n - 1) as f64;
    (0..n).map(move |i| {
        let wgt = if i == 0 || i == n - 1 { 0.5 * h } else { h };
        (a + h * i as f64, wgt)
    })
}

/// `Φ_W(x) = ∫₀ᵀ ∫_{max(0,x−τ)}^{min(τ,x)} W(τ)W(σ)conj(W(τ+σ−x)) dσ dτ` for
/// `x ∈ (0, 2T)`, zero elsewhere.
pub fn phi_w(w: &SampledControl, x: f64) -> Complex64 {
    let t_final = w.t1;
    if !(x > 0.0 && x < 2.0 * t_final) {
        return Complex64::new(0.0, 0.0);
    }
    let mut cuts = vec![0.0, t_final];
    for c in [0.5 * x, x, x - t_final] {
        if c > 0.0 && c < t_final {
            cuts.push(c);
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let inner = |tau: f64| -> Complex64 {
        let lo = (x - tau).max(0.0);
        let hi = tau.min(x);
        if hi <= lo {
            return Complex64::new(0.0, 0.0);
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (s, wt) in trapezoid_nodes(lo, hi, PHI_NODES) {
            acc += w.at(s) * w.at(tau + s - x).conj() * wt;
        }
        acc * w.at(tau)
    };
    cuts.windows(2)
        .map(|p| {
            let nodes: Vec<(f64, f64)> = trapezoid_nodes(p[0], p[1], PHI_NODES).collect();
            nodes.par_iter().map(|&(tau, wt)| inner(tau) * wt).collect::<Vec<_>>().into_iter().sum::<Complex64>()
        })
        .sum()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CubicReport {
    pub t_final: f64,
    pub x: Vec<f64>,
    pub phi: Vec<Complex64>,
    pub phi_mid: f64,
    pub phi_mid_expected: f64,
    pub max_beyond_t: f64,
    pub residuals: Vec<f64>,
}

impl CubicReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,re_phi,im_phi\n");
        for (x, p) in self.x.iter().zip(&self.phi) {
            out.push_str(&format!("{:.12e},{:.12e},{:.12e}\n", x, p.re, p.im));
        }
        out
    }
}

/// `Φ₁` for the indicator of `[0, T]` on 65 points of `[0, 2T]`.
pub fn tangent_demo(t_final: f64) -> Result<CubicReport> {
    if !(t_final > 0.0) {
        return Err(Error::PreconditionViolated { quantity: "T".into(), value: t_final });
    }
    let w = SampledControl::from_fn(0.0, t_final, TIME_STEPS + 1, |_| Complex64::new(1.0, 0.0))?;
    let n = 64;
    let x: Vec<f64> = (0..=n).map(|i| 2.0 * t_final * i as f64 / n as f64).collect();
    let phi: Vec<Complex64> = x.iter().map(|&xi| phi_w(&w, xi)).collect();
    let mid = phi_w(&w, 1.5 * t_final).re;
    let expected = t_final * t_final / 16.0;
    let max_beyond_t = x
        .iter()
        .zip(&phi)
        .filter(|(xi, _)| **xi > t_final && **xi < 2.0 * t_final)
        .map(|(_, p)| p.norm())
        .fold(0.0, f64::max);
    let rel = (mid - expected).abs() / expected;
    Ok(CubicReport {
        t_final,
        x,
        phi,
        phi_mid: mid,
        phi_mid_expected: expected,
        max_beyond_t,
        residuals: vec![rel],
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThirdOrderProbe {
    pub omega: f64,
    pub z3: Complex64,
    pub ratios: Vec<Complex64>,
    pub extrapolated: Complex64,
    pub relative_error: f64,
}

/// `Z₁(t_j, ω) = −e^{iωt_j}∫₀^{t_j} W e^{−iωτ}dτ` on the solver grid.
fn linear_column(w: &SampledControl, omega: f64) -> Vec<Complex64> {
    let h = w.step();
    quad::cumulative_oscillatory(&w.samples, h, omega)
        .into_iter()
        .enumerate()
        .map(|(j, v)| -v * Complex64::from_polar(1.0, omega * h * j as f64))
        .collect()
}

/// Compares `(Z(T;εW) − εZ₁(T))/ε³` with the cubic term
/// `Z₃(T,ω) = ½ e^{iωT}∫₀ᵀ W(τ)|Z₁(τ,ω)|² e^{−iωτ}dτ`.
pub fn third_order_check(
    w: &SampledControl,
    t_final: f64,
    probes: &[f64],
    eps_list: &[f64],
) -> Result<Vec<ThirdOrderProbe>> {
    let w = resample(w, t_final);
    let h = w.step();
    let mut out = Vec::new();
    for &om in probes {
        let z1 = linear_column(&w, om);
        let f: Vec<Complex64> = w.samples.iter().zip(&z1).map(|(wv, z)| wv * z.norm_sqr()).collect();
        let z3 = 0.5 * quad::oscillatory(&f, h, om) * Complex64::from_polar(1.0, om * t_final);
        let z1_t = *z1.last().unwrap();
        let mut ratios = Vec::new();
        for &eps in eps_list {
            let sol = fixed_point_solve_at(&w.scaled(eps), t_final, &[om], 1e-15, 200)?;
            let zt = sol.final_values()[0];
            ratios.push((zt - eps * z1_t) / eps.powi(3));
        }
        // Z is odd in ε, so the ratio is Z₃ + O(ε²).
        let extrapolated = match (ratios.len(), eps_list.len()) {
            (n, _) if n >= 2 => {
                let (e1, e2) = (eps_list[n - 2], eps_list[n - 1]);
                let r = (e1 / e2).powi(2);
                (r * ratios[n - 1] - ratios[n - 2]) / (r - 1.0)
            }
            (1, _) => ratios[0],
            _ => z3,
        };
        let relative_error = if z3.norm() == 0.0 { extrapolated.norm() } else { (extrapolated - z3).norm() / z3.norm() };
        out.push(ThirdOrderProbe { omega: om, z3, ratios, extrapolated, relative_error });
    }
    Ok(out)
}

/// `∫₀ᵀ W(τ)|Z₁(τ,ω)|² e^{−iωτ}dτ`, the right-hand side of the `Φ_W` identity.
pub fn cubic_transform(w: &SampledControl, omega: f64) -> Complex64 {
    let z1 = linear_column(w, omega);
    let f: Vec<Complex64> = w.samples.iter().zip(&z1).map(|(wv, z)| wv * z.norm_sqr()).collect();
    quad::oscillatory(&f, w.step(), omega) * Complex64::from_polar(1.0, -omega * w.t0)
}

type CMat3 = Matrix3<Complex64>;
type CVec3 = Vector3<Complex64>;

/// Matrix exponential by scaling and squaring with a 13-term Taylor series.
pub fn expm_complex(a: &CMat3) -> CMat3 {
    let norm1 = (0..3).map(|j| (0..3).map(|i| a[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max);
    let s = if norm1 > 0.5 { (norm1 / 0.5).log2().ceil() as i32 } else { 0 };
    let b = a / Complex64::new(2f64.powi(s), 0.0);
    let mut term = CMat3::identity();
    let mut sum = CMat3::identity();
    for k in 1..=13 {
        term = term * b / Complex64::new(k as f64, 0.0);
        sum += term;
    }
    for _ in 0..s {
        sum = sum * sum;
    }
    sum
}

fn complex_free(m: CVec3, angle: Complex64) -> CVec3 {
    let (c, s) = (angle.cos(), angle.sin());
    CVec3::new(c * m.x - s * m.y, s * m.x + c * m.y, m.z)
}

/// `Z(T, ω)` for complex `ω`, starting from `e₃`.
pub fn complex_endpoint(schedule: &ControlSchedule, omega: Complex64) -> Complex64 {
    let lift = |r: &crate::so3::Mat3| r.map(|v| Complex64::new(v, 0.0));
    let mut m = CVec3::new(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0));
    let mut t = 0.0;
    for e in &schedule.events {
        match *e {
            PulseEvent::Dirac { t: te, beta, gamma } => {
                m = complex_free(m, omega * (te - t));
                t = te;
                m = lift(&so3_exp(&crate::so3::Vec3::new(beta, gamma, 0.0))) * m;
            }
            PulseEvent::Constant { t0, t1, u, v } => {
                m = complex_free(m, omega * (t0 - t));
                let dt = t1 - t0;
                let zero = Complex64::new(0.0, 0.0);
                let (a, b, c) = (Complex64::new(u * dt, 0.0), Complex64::new(v * dt, 0.0), omega * dt);
                let gen = CMat3::new(zero, -c, b, c, zero, -a, -b, a, zero);
                m = expm_complex(&gen) * m;
                t = t1;
            }
        }
    }
    m = complex_free(m, omega * (schedule.horizon - t));
    m.x + Complex64::i() * m.y
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CauchyRiemannReport {
    pub h: f64,
    pub grid: (usize, usize),
    pub max_residual: f64,
}

/// Max over a grid of `|∂Z/∂ω₂ − i ∂Z/∂ω₁|` by centered differences.
pub fn cauchy_riemann_check(
    schedule: &ControlSchedule,
    omega1: (f64, f64),
    omega2: (f64, f64),
    h: f64,
) -> Result<CauchyRiemannReport> {
    schedule.validate()?;
    let (n1, n2) = (31usize, 11usize);
    let nodes: Vec<(f64, f64)> = (0..n1)
        .flat_map(|i| {
            (0..n2).map(move |j| {
                (
                    omega1.0 + (omega1.1 - omega1.0) * i as f64 / (n1 - 1) as f64,
                    omega2.0 + (omega2.1 - omega2.0) * j as f64 / (n2 - 1) as f64,
                )
            })
        })
        .collect();
    let max_residual = nodes
        .par_iter()
        .map(|&(a, b)| {
            let f = |da: f64, db: f64| complex_endpoint(schedule, Complex64::new(a + da, b + db));
            let d1 = (f(h, 0.0) - f(-h, 0.0)) / (2.0 * h);
            let d2 = (f(0.0, h) - f(0.0, -h)) / (2.0 * h);
            (d2 - Complex64::i() * d1).norm()
        })
        .reduce(|| 0.0, f64::max);
    Ok(CauchyRiemannReport { h, grid: (n1, n2), max_residual })
}
