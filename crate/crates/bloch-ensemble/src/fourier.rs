//! Fourier coefficients of even extensions to `(−π, π)` and the ℓ¹
//! coefficient norm `N(f) = Σ |c_n(f)|`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::{EnsembleState, OmegaGrid};
use crate::error::{Error, Result};

pub const DEFAULT_N_MAX: usize = 256;

/// Coefficients `c_n` for `n ∈ [−n_max, n_max]`, stored at `n + n_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub n_max: usize,
    c: Vec<Complex64>,
}

impl Spectrum {
    pub fn zeros(n_max: usize) -> Self {
        Spectrum { n_max, c: vec![Complex64::new(0.0, 0.0); 2 * n_max + 1] }
    }

    pub fn from_pairs(n_max: usize, pairs: &[(i64, Complex64)]) -> Self {
        let mut s = Self::zeros(n_max);
        for &(n, v) in pairs {
            s.set(n, v);
        }
        s
    }

    /// Coefficient `c_n`; zero outside the stored range.
    pub fn get(&self, n: i64) -> Complex64 {
        if n.unsigned_abs() as usize > self.n_max {
            Complex64::new(0.0, 0.0)
        } else {
            self.c[(n + self.n_max as i64) as usize]
        }
    }

    pub fn set(&mut self, n: i64, v: Complex64) {
        assert!(n.unsigned_abs() as usize <= self.n_max, "index {n} beyond n_max {}", self.n_max);
        self.c[(n + self.n_max as i64) as usize] = v;
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let off = self.n_max as i64;
        self.c.iter().enumerate().map(move |(i, v)| (i as i64 - off, *v))
    }

    /// Heuristic size of the discarded tail, `|c_{n_max}|·n_max`.
    pub fn tail_estimate(&self) -> f64 {
        let n = self.n_max as i64;
        self.get(n).norm().max(self.get(-n).norm()) * self.n_max as f64
    }

    /// `Σ_{|n| ≥ k} |c_n|` for every `k = 0..=n_max+1`.
    pub fn tail_sums(&self) -> Vec<f64> {
        let n = self.n_max;
        let mut out = vec![0.0; n + 2];
        for k in (0..=n).rev() {
            let ki = k as i64;
            let here = if k == 0 { self.get(0).norm() } else { self.get(ki).norm() + self.get(-ki).norm() };
            out[k] = out[k + 1] + here;
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct CoefJson {
    n: i64,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct SpectrumJson {
    n_max: usize,
    coefficients: Vec<CoefJson>,
}

impl Serialize for Spectrum {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SpectrumJson {
            n_max: self.n_max,
            coefficients: self.iter().map(|(n, v)| CoefJson { n, re: v.re, im: v.im }).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Spectrum {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = SpectrumJson::deserialize(d)?;
        let mut s = Spectrum::zeros(j.n_max);
        for c in j.coefficients {
            if c.n.unsigned_abs() as usize > j.n_max {
                return Err(serde::de::Error::custom(format!("coefficient index {} beyond n_max", c.n)));
            }
            s.set(c.n, Complex64::new(c.re, c.im));
        }
        Ok(s)
    }
}

fn check_half_period(grid: &OmegaGrid) -> Result<()> {
    let tol = 1e-12;
    if let Some(&w) = grid.nodes.iter().find(|&&w| w < -tol || w > PI + tol) {
        return Err(Error::GridOutsideHalfPeriod(w));
    }
    Ok(())
}

/// `c_n = (1/π)∫₀^π f(ω)cos(nω)dω` by the trapezoid rule on the grid.
pub fn even_extension_spectrum(grid: &OmegaGrid, samples: &[Complex64], n_max: usize) -> Result<Spectrum> {
    check_half_period(grid)?;
    if samples.len() != grid.len() {
        return Err(Error::InvalidState(format!("{} samples for {} nodes", samples.len(), grid.len())));
    }
    let w = grid.trapezoid_weights();
    let half: Vec<Complex64> = (0..=n_max)
        .into_par_iter()
        .map(|n| {
            let mut acc = Complex64::new(0.0, 0.0);
            for ((x, wi), f) in grid.nodes.iter().zip(&w).zip(samples) {
                acc += f * (wi * (n as f64 * x).cos());
            }
            acc / PI
        })
        .collect();
    let mut s = Spectrum::zeros(n_max);
    for (n, v) in half.into_iter().enumerate() {
        s.set(n as i64, v);
        s.set(-(n as i64), v);
    }
    Ok(s)
}

pub fn even_extension_spectrum_real(grid: &OmegaGrid, samples: &[f64], n_max: usize) -> Result<Spectrum> {
    let c: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    even_extension_spectrum(grid, &c, n_max)
}

/// `c_n = (1/2π)∫_{−π}^{π} f(ω)e^{−inω}dω` for samples on a grid spanning
/// exactly one period; the trapezoid rule there is the periodic rule.
pub fn full_period_spectrum(grid: &OmegaGrid, samples: &[Complex64], n_max: usize) -> Result<Spectrum> {
    if (grid.omega_min + PI).abs() > 1e-12 || (grid.omega_max - PI).abs() > 1e-12 {
        return Err(Error::InvalidGrid("full-period spectrum needs a grid on [-pi, pi]".into()));
    }
    let w = grid.trapezoid_weights();
    let n = n_max as i64;
    let c: Vec<Complex64> = (-n..=n)
        .into_par_iter()
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for ((x, wi), f) in grid.nodes.iter().zip(&w).zip(samples) {
                acc += f * Complex64::from_polar(*wi, -(k as f64) * x);
            }
            acc / (2.0 * PI)
        })
        .collect();
    Ok(Spectrum { n_max, c })
}

/// Truncated ℓ¹ norm, summed in index order.
pub fn n_norm(s: &Spectrum) -> f64 {
    s.c.iter().map(|v| v.norm()).sum()
}

pub fn synthesize(s: &Spectrum, omega: f64) -> Complex64 {
    s.iter().map(|(n, c)| c * Complex64::from_polar(1.0, n as f64 * omega)).sum()
}

/// Cauchy product of two coefficient sequences.
pub fn convolve(a: &Spectrum, b: &Spectrum) -> Spectrum {
    let mut out = Spectrum::zeros(a.n_max + b.n_max);
    for (n, x) in a.iter() {
        if x == Complex64::new(0.0, 0.0) {
            continue;
        }
        for (m, y) in b.iter() {
            let i = n + m;
            let cur = out.get(i);
            out.set(i, cur + x * y);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoleDistanceReport {
    pub n_x: f64,
    pub n_y: f64,
    pub n_z_shift: f64,
    pub n_transverse: f64,
    pub pole: i8,
    pub tail: f64,
}

impl PoleDistanceReport {
    /// `N(M − pole·e₃) = N(x) + N(y) + N(z − pole)`.
    pub fn total(&self) -> f64 {
        self.n_x + self.n_y + self.n_z_shift
    }
}

pub fn pole_distance(state: &EnsembleState, pole: i8, n_max: usize) -> Result<PoleDistanceReport> {
    let p = if pole >= 0 { 1.0 } else { -1.0 };
    let g = &state.grid;
    let sx = even_extension_spectrum_real(g, &state.component(0), n_max)?;
    let sy = even_extension_spectrum_real(g, &state.component(1), n_max)?;
    let zs: Vec<f64> = state.m.iter().map(|v| v.z - p).collect();
    let sz = even_extension_spectrum_real(g, &zs, n_max)?;
    let st = even_extension_spectrum(g, &state.transverse(), n_max)?;
    Ok(PoleDistanceReport {
        n_x: n_norm(&sx),
        n_y: n_norm(&sy),
        n_z_shift: n_norm(&sz),
        n_transverse: n_norm(&st),
        pole: p as i8,
        tail: sx.tail_estimate() + sy.tail_estimate() + sz.tail_estimate(),
    })
}

/// Same as [`pole_distance`] for a state sampled over one full period.
pub fn pole_distance_periodic(state: &EnsembleState, pole: i8, n_max: usize) -> Result<PoleDistanceReport> {
    let p = if pole >= 0 { 1.0 } else { -1.0 };
    let g = &state.grid;
    let cx = |c: usize, shift: f64| -> Vec<Complex64> {
        state.m.iter().map(|v| Complex64::new(v[c] - shift, 0.0)).collect()
    };
    let sx = full_period_spectrum(g, &cx(0, 0.0), n_max)?;
    let sy = full_period_spectrum(g, &cx(1, 0.0), n_max)?;
    let sz = full_period_spectrum(g, &cx(2, p), n_max)?;
    let st = full_period_spectrum(g, &state.transverse(), n_max)?;
    Ok(PoleDistanceReport {
        n_x: n_norm(&sx),
        n_y: n_norm(&sy),
        n_z_shift: n_norm(&sz),
        n_transverse: n_norm(&st),
        pole: p as i8,
        tail: sx.tail_estimate() + sy.tail_estimate() + sz.tail_estimate(),
    })
}
