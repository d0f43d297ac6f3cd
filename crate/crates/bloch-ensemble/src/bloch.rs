//! Ensemble states on a frequency grid and exact propagation under
//! Dirac impulses, constant control segments and free precession.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::so3::{rotate_about_z, rot_z, so3_exp, Mat3, Vec3};

pub const DEFAULT_NODES: usize = 1025;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaGrid {
    pub omega_min: f64,
    pub omega_max: f64,
    pub nodes: Vec<f64>,
}

impl OmegaGrid {
    /// `n` equally spaced nodes including both endpoints.
    pub fn uniform(omega_min: f64, omega_max: f64, n: usize) -> Result<Self> {
        if n < 2 || !(omega_min < omega_max) {
            return Err(Error::InvalidGrid(format!(
                "need n >= 2 and min < max, got n={n}, [{omega_min}, {omega_max}]"
            )));
        }
        let h = (omega_max - omega_min) / (n - 1) as f64;
        let mut nodes: Vec<f64> = (0..n).map(|i| omega_min + h * i as f64).collect();
        nodes[n - 1] = omega_max;
        Ok(OmegaGrid { omega_min, omega_max, nodes })
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidGrid("fewer than 2 nodes".into()));
        }
        if nodes.windows(2).any(|w| !(w[0] < w[1])) || nodes.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidGrid("nodes must be finite and strictly increasing".into()));
        }
        Ok(OmegaGrid { omega_min: nodes[0], omega_max: *nodes.last().unwrap(), nodes })
    }

    /// Default grid on `(0, π)`.
    pub fn half_period() -> Self {
        Self::uniform(0.0, std::f64::consts::PI, DEFAULT_NODES).unwrap()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Composite trapezoid weights.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let x = &self.nodes;
        let n = x.len();
        let mut w = vec![0.0; n];
        for i in 0..n - 1 {
            let h = 0.5 * (x[i + 1] - x[i]);
            w[i] += h;
            w[i + 1] += h;
        }
        w
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.trapezoid_weights().iter().zip(f).map(|(w, v)| w * v).sum()
    }

    /// Second-order finite-difference derivative, one-sided at the ends.
    pub fn derivative(&self, f: &[f64]) -> Vec<f64> {
        let x = &self.nodes;
        let n = x.len();
        if n == 2 {
            let d = (f[1] - f[0]) / (x[1] - x[0]);
            return vec![d, d];
        }
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            let hl = x[i] - x[i - 1];
            let hr = x[i + 1] - x[i];
            d[i] = (hl * hl * f[i + 1] - hr * hr * f[i - 1] + (hr * hr - hl * hl) * f[i])
                / (hl * hr * (hl + hr));
        }
        let (h1, h2) = (x[1] - x[0], x[2] - x[1]);
        d[0] = -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * f[0] + (h1 + h2) / (h1 * h2) * f[1]
            - h1 / (h2 * (h1 + h2)) * f[2];
        let (h1, h2) = (x[n - 1] - x[n - 2], x[n - 2] - x[n - 3]);
        d[n - 1] = (2.0 * h1 + h2) / (h1 * (h1 + h2)) * f[n - 1] - (h1 + h2) / (h1 * h2) * f[n - 2]
            + h1 / (h2 * (h1 + h2)) * f[n - 3];
        d
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleState {
    pub grid: OmegaGrid,
    pub m: Vec<Vec3>,
}

impl EnsembleState {
    pub fn new(grid: OmegaGrid, m: Vec<Vec3>) -> Result<Self> {
        if m.len() != grid.len() {
            return Err(Error::InvalidState(format!(
                "{} vectors for {} nodes",
                m.len(),
                grid.len()
            )));
        }
        if let Some((i, v)) = m.iter().enumerate().find(|(_, v)| (v.norm() - 1.0).abs() > 1e-9) {
            return Err(Error::InvalidState(format!("node {i} has norm {}", v.norm())));
        }
        Ok(EnsembleState { grid, m })
    }

    pub fn from_fn(grid: OmegaGrid, f: impl Fn(f64) -> Vec3) -> Result<Self> {
        let m = grid.nodes.iter().map(|&w| f(w)).collect();
        Self::new(grid, m)
    }

    pub fn constant(grid: OmegaGrid, v: Vec3) -> Result<Self> {
        Self::from_fn(grid, |_| v)
    }

    /// State with transverse part `z_t` and longitudinal part of sign `pole`.
    pub fn from_transverse(grid: OmegaGrid, z_t: &[Complex64], pole: f64) -> Result<Self> {
        let m = z_t
            .iter()
            .map(|z| Vec3::new(z.re, z.im, pole.signum() * (1.0 - z.norm_sqr()).max(0.0).sqrt()))
            .collect();
        Self::new(grid, m)
    }

    pub fn transverse(&self) -> Vec<Complex64> {
        self.m.iter().map(|v| Complex64::new(v.x, v.y)).collect()
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        self.m.iter().map(|v| v[c]).collect()
    }

    /// Discrete H¹ seminorm `‖∂M/∂ω‖_{L²}`.
    pub fn h1_seminorm(&self) -> f64 {
        let mut acc = vec![0.0; self.m.len()];
        for c in 0..3 {
            let d = self.grid.derivative(&self.component(c));
            for (a, v) in acc.iter_mut().zip(d) {
                *a += v * v;
            }
        }
        self.grid.integrate(&acc).sqrt()
    }

    pub fn max_norm_defect(&self) -> f64 {
        self.m.iter().map(|v| (v.norm() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Largest pointwise distance `|M(ω) − target|`.
    pub fn sup_distance(&self, target: &Vec3) -> f64 {
        self.m.iter().map(|v| (v - target).norm()).fold(0.0, f64::max)
    }

    fn map_nodes(&self, f: impl Fn(f64, &Vec3) -> Vec3 + Sync) -> EnsembleState {
        let m = self
            .grid
            .nodes
            .par_iter()
            .zip(self.m.par_iter())
            .map(|(&w, v)| f(w, v))
            .collect();
        EnsembleState { grid: self.grid.clone(), m }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum PulseEvent {
    #[serde(rename = "dirac")]
    Dirac { t: f64, beta: f64, gamma: f64 },
    #[serde(rename = "const")]
    Constant { t0: f64, t1: f64, u: f64, v: f64 },
}

impl PulseEvent {
    pub fn dirac(t: f64, beta: f64, gamma: f64) -> Self {
        PulseEvent::Dirac { t, beta, gamma }
    }

    pub fn start(&self) -> f64 {
        match *self {
            PulseEvent::Dirac { t, .. } => t,
            PulseEvent::Constant { t0, .. } => t0,
        }
    }

    pub fn end(&self) -> f64 {
        match *self {
            PulseEvent::Dirac { t, .. } => t,
            PulseEvent::Constant { t1, .. } => t1,
        }
    }

    fn shifted(&self, dt: f64) -> Self {
        match *self {
            PulseEvent::Dirac { t, beta, gamma } => PulseEvent::Dirac { t: t + dt, beta, gamma },
            PulseEvent::Constant { t0, t1, u, v } => PulseEvent::Constant { t0: t0 + dt, t1: t1 + dt, u, v },
        }
    }

    fn describe(&self, i: usize) -> String {
        match *self {
            PulseEvent::Dirac { t, .. } => format!("event {i} (dirac at t={t})"),
            PulseEvent::Constant { t0, t1, .. } => format!("event {i} (const on [{t0}, {t1}])"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    pub events: Vec<PulseEvent>,
    pub horizon: f64,
}

impl ControlSchedule {
    pub fn new(events: Vec<PulseEvent>, horizon: f64) -> Result<Self> {
        let s = ControlSchedule { events, horizon };
        s.validate()?;
        Ok(s)
    }

    pub fn free(horizon: f64) -> Self {
        ControlSchedule { events: Vec::new(), horizon }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSchedule(msg));
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return bad(format!("horizon {} must be finite and >= 0", self.horizon));
        }
        let mut last_const: Option<(usize, f64)> = None;
        let mut last_start = f64::NEG_INFINITY;
        for (i, e) in self.events.iter().enumerate() {
            match *e {
                PulseEvent::Dirac { t, beta, gamma } => {
                    if !(t.is_finite() && beta.is_finite() && gamma.is_finite()) || t < 0.0 {
                        return bad(format!("{} has non-finite or negative data", e.describe(i)));
                    }
                }
                PulseEvent::Constant { t0, t1, u, v } => {
                    if !(t0.is_finite() && t1.is_finite() && u.is_finite() && v.is_finite()) || t0 < 0.0 {
                        return bad(format!("{} has non-finite or negative data", e.describe(i)));
                    }
                    if !(t1 > t0) {
                        return bad(format!("{} has nonpositive length", e.describe(i)));
                    }
                }
            }
            if e.start() < last_start {
                return bad(format!("{} starts before its predecessor", e.describe(i)));
            }
            if let Some((j, end)) = last_const {
                if e.start() < end {
                    return bad(format!(
                        "{} overlaps {}",
                        e.describe(i),
                        self.events[j].describe(j)
                    ));
                }
            }
            if e.end() > self.horizon {
                return bad(format!("{} ends after the horizon {}", e.describe(i), self.horizon));
            }
            last_start = e.start();
            if let PulseEvent::Constant { t1, .. } = *e {
                last_const = Some((i, t1));
            }
        }
        Ok(())
    }

    pub fn dirac_count(&self) -> usize {
        self.events.iter().filter(|e| matches!(e, PulseEvent::Dirac { .. })).count()
    }

    /// Number of impulses large enough to move a spin between hemispheres.
    pub fn trip_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| match **e {
                PulseEvent::Dirac { beta, gamma, .. } => beta.abs() + gamma.abs() >= std::f64::consts::FRAC_PI_2,
                PulseEvent::Constant { .. } => false,
            })
            .count()
    }

    /// Runs `self` then `other`, with `other` shifted to start at `self.horizon`.
    pub fn then(&self, other: &ControlSchedule) -> ControlSchedule {
        let mut events = self.events.clone();
        events.extend(other.events.iter().map(|e| e.shifted(self.horizon)));
        ControlSchedule { events, horizon: self.horizon + other.horizon }
    }

    pub fn concat(parts: &[ControlSchedule]) -> ControlSchedule {
        parts.iter().fold(ControlSchedule::free(0.0), |acc, p| acc.then(p))
    }

    /// Splits at time `s` into `[0, s]` and `[s, horizon]`, the second part
    /// re-based to start at 0. Constant segments straddling `s` are cut.
    /// Diracs exactly at `s` go to the second part.
    pub fn split_at(&self, s: f64) -> Result<(ControlSchedule, ControlSchedule)> {
        if !(0.0..=self.horizon).contains(&s) {
            return Err(Error::InvalidSchedule(format!("split point {s} outside [0, {}]", self.horizon)));
        }
        let mut a = Vec::new();
        let mut b = Vec::new();
        for e in &self.events {
            match *e {
                PulseEvent::Dirac { t, .. } => {
                    if t < s {
                        a.push(*e)
                    } else {
                        b.push(e.shifted(-s))
                    }
                }
                PulseEvent::Constant { t0, t1, u, v } => {
                    if t1 <= s {
                        a.push(*e)
                    } else if t0 >= s {
                        b.push(e.shifted(-s))
                    } else {
                        a.push(PulseEvent::Constant { t0, t1: s, u, v });
                        b.push(PulseEvent::Constant { t0: 0.0, t1: t1 - s, u, v });
                    }
                }
            }
        }
        Ok((
            ControlSchedule { events: a, horizon: s },
            ControlSchedule { events: b, horizon: self.horizon - s },
        ))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: ControlSchedule = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

pub fn free_evolve(state: &EnsembleState, dt: f64) -> Result<EnsembleState> {
    if dt < 0.0 {
        return Err(Error::NegativeDuration(dt));
    }
    Ok(state.map_nodes(|w, v| rotate_about_z(v, w * dt)))
}

pub fn apply_dirac(state: &EnsembleState, beta: f64, gamma: f64) -> EnsembleState {
    let r = so3_exp(&Vec3::new(beta, gamma, 0.0));
    state.map_nodes(|_, v| r * v)
}

pub fn apply_constant(state: &EnsembleState, u: f64, v: f64, dt: f64) -> Result<EnsembleState> {
    if !(dt > 0.0) {
        return Err(Error::NegativeDuration(dt));
    }
    Ok(state.map_nodes(|w, m| so3_exp(&Vec3::new(u * dt, v * dt, w * dt)) * m))
}

/// Applies `schedule` at a single frequency. `free` handles precession over a
/// duration and `rot` a general rotation; both act on the running value.
fn walk<T>(
    schedule: &ControlSchedule,
    omega: f64,
    mut acc: T,
    free: impl Fn(T, f64) -> T,
    rot: impl Fn(T, &Mat3) -> T,
    diracs: &[Mat3],
) -> T {
    let mut t = 0.0;
    let mut k = 0;
    for e in &schedule.events {
        match *e {
            PulseEvent::Dirac { t: te, .. } => {
                if te > t {
                    acc = free(acc, omega * (te - t));
                    t = te;
                }
                acc = rot(acc, &diracs[k]);
                k += 1;
            }
            PulseEvent::Constant { t0, t1, u, v } => {
                if t0 > t {
                    acc = free(acc, omega * (t0 - t));
                }
                let dt = t1 - t0;
                acc = rot(acc, &so3_exp(&Vec3::new(u * dt, v * dt, omega * dt)));
                t = t1;
            }
        }
    }
    if schedule.horizon > t {
        acc = free(acc, omega * (schedule.horizon - t));
    }
    acc
}

fn dirac_matrices(schedule: &ControlSchedule) -> Vec<Mat3> {
    schedule
        .events
        .iter()
        .filter_map(|e| match *e {
            PulseEvent::Dirac { beta, gamma, .. } => Some(so3_exp(&Vec3::new(beta, gamma, 0.0))),
            PulseEvent::Constant { .. } => None,
        })
        .collect()
}

pub fn simulate(state: &EnsembleState, schedule: &ControlSchedule) -> Result<EnsembleState> {
    schedule.validate()?;
    let diracs = dirac_matrices(schedule);
    Ok(state.map_nodes(|w, v| {
        walk(schedule, w, *v, |m, a| rotate_about_z(&m, a), |m, r| r * m, &diracs)
    }))
}

/// Product of all rotations the schedule applies at frequency `omega`.
pub fn endpoint_operator(schedule: &ControlSchedule, omega: f64) -> Mat3 {
    let diracs = dirac_matrices(schedule);
    walk(schedule, omega, Mat3::identity(), |m, a| rot_z(a) * m, |m, r| r * m, &diracs)
}

/// Replaces every Dirac by a rectangle of width `eps` that starts where the
/// impulse sat; everything after it is pushed back by `eps` so the free
/// flights between pulses keep their length.
pub fn rectangularize(schedule: &ControlSchedule, eps: f64) -> Result<ControlSchedule> {
    schedule.validate()?;
    if !(eps > 0.0) {
        return Err(Error::InvalidSchedule(format!("eps must be positive, got {eps}")));
    }
    let times: Vec<f64> = schedule
        .events
        .iter()
        .filter_map(|e| match e {
            PulseEvent::Dirac { t, .. } => Some(*t),
            _ => None,
        })
        .collect();
    let gap = times.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    if eps >= gap {
        return Err(Error::EpsTooLargeForGaps { eps, gap });
    }
    let mut shift = 0.0;
    let mut events = Vec::with_capacity(schedule.events.len());
    for e in &schedule.events {
        match *e {
            PulseEvent::Dirac { t, beta, gamma } => {
                let t0 = t + shift;
                events.push(PulseEvent::Constant { t0, t1: t0 + eps, u: beta / eps, v: gamma / eps });
                shift += eps;
            }
            PulseEvent::Constant { .. } => events.push(e.shifted(shift)),
        }
    }
    ControlSchedule::new(events, schedule.horizon + shift)
}
