//! Explicit pulse trains that halve `N(Z)` near the south pole, and their
//! iteration toward `−e₃`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bloch::{simulate, ControlSchedule, EnsembleState, OmegaGrid, PulseEvent};
use crate::error::{Error, Result};
use crate::fourier::{even_extension_spectrum, n_norm, Spectrum, DEFAULT_N_MAX};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalvingConfig {
    pub delta: f64,
    pub tail_fraction: f64,
    pub n_max: usize,
    pub z_guard: f64,
}

impl Default for HalvingConfig {
    fn default() -> Self {
        HalvingConfig { delta: 0.02, tail_fraction: 0.0625, n_max: DEFAULT_N_MAX, z_guard: 0.5 }
    }
}

impl HalvingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::PreconditionViolated { quantity: "delta".into(), value: self.delta });
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction < 0.5) {
            return Err(Error::PreconditionViolated { quantity: "tail_fraction".into(), value: self.tail_fraction });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub k: usize,
    pub n_before: f64,
    pub n_after: f64,
    /// Largest `z` over the grid (closest approach to the equator).
    pub z_extreme_before: f64,
    pub z_extreme_after: f64,
    pub pulse_count: usize,
    pub elapsed_model_time: f64,
    pub tail_before: f64,
    pub tail_after: f64,
}

impl CycleReport {
    pub fn ratio(&self) -> f64 {
        if self.n_before == 0.0 {
            0.0
        } else {
            self.n_after / self.n_before
        }
    }
}

/// Smallest `k ≥ 1` whose tail `Σ_{|n|≥k}|c_n|` is below `tail_fraction·N`,
/// provided the truncation tail is itself small enough to trust.
pub fn choose_k(spectrum: &Spectrum, cfg: &HalvingConfig) -> Result<usize> {
    let norm = n_norm(spectrum);
    if norm == 0.0 {
        return Err(Error::ZeroSpectrum);
    }
    let budget = cfg.tail_fraction * norm;
    let tail = spectrum.tail_estimate();
    let no_k = || Error::NoValidK { n_max: spectrum.n_max, tail, norm };
    if tail >= 0.5 * budget {
        return Err(no_k());
    }
    let sums = spectrum.tail_sums();
    (1..=spectrum.n_max).find(|&k| sums[k] < budget).ok_or_else(no_k)
}

/// π-pulse at `k`, coefficient-cancelling pulses at `k+1 … 3k−1`, π-pulse at `3k`.
pub fn build_halving_schedule(spectrum: &Spectrum, k: usize) -> ControlSchedule {
    assert!(k >= 1, "k must be at least 1");
    let kf = k as f64;
    let mut events = Vec::with_capacity(2 * k + 1);
    events.push(PulseEvent::dirac(kf, PI, 0.0));
    for p in 1..2 * k {
        let c = spectrum.get(p as i64 - k as i64);
        events.push(PulseEvent::dirac(kf + p as f64, -c.im, -c.re));
    }
    events.push(PulseEvent::dirac(3.0 * kf, PI, 0.0));
    ControlSchedule { events, horizon: 3.0 * kf }
}

fn z_max(state: &EnsembleState) -> f64 {
    state.m.iter().map(|v| v.z).fold(f64::NEG_INFINITY, f64::max)
}

fn transverse_spectrum(state: &EnsembleState, n_max: usize) -> Result<Spectrum> {
    even_extension_spectrum(&state.grid, &state.transverse(), n_max)
}

pub fn halving_cycle(state: &EnsembleState, cfg: &HalvingConfig) -> Result<(EnsembleState, CycleReport)> {
    cfg.validate()?;
    let zb = z_max(state);
    if zb >= -cfg.z_guard {
        return Err(Error::PreconditionViolated { quantity: "max z".into(), value: zb });
    }
    let spec = transverse_spectrum(state, cfg.n_max)?;
    let n_before = n_norm(&spec);
    if n_before >= cfg.delta {
        return Err(Error::PreconditionViolated { quantity: "N(Z)".into(), value: n_before });
    }
    if n_before == 0.0 {
        let report = CycleReport {
            k: 0,
            n_before: 0.0,
            n_after: 0.0,
            z_extreme_before: zb,
            z_extreme_after: zb,
            pulse_count: 0,
            elapsed_model_time: 0.0,
            tail_before: 0.0,
            tail_after: 0.0,
        };
        return Ok((state.clone(), report));
    }
    let k = choose_k(&spec, cfg)?;
    let schedule = build_halving_schedule(&spec, k);
    let next = simulate(state, &schedule)?;
    let after = transverse_spectrum(&next, cfg.n_max)?;
    let report = CycleReport {
        k,
        n_before,
        n_after: n_norm(&after),
        z_extreme_before: zb,
        z_extreme_after: z_max(&next),
        pulse_count: schedule.events.len(),
        elapsed_model_time: schedule.horizon,
        tail_before: spec.tail_estimate(),
        tail_after: after.tail_estimate(),
    };
    if !(report.n_after < 0.5 * report.n_before) {
        return Err(Error::ConclusionViolated(format!(
            "k={k}: N went {:.4e} -> {:.4e}",
            report.n_before, report.n_after
        )));
    }
    if report.z_extreme_after >= -cfg.z_guard {
        return Err(Error::ConclusionViolated(format!("k={k}: max z = {}", report.z_extreme_after)));
    }
    Ok((next, report))
}

pub fn drive_to_pole(
    state: &EnsembleState,
    cfg: &HalvingConfig,
    tol: f64,
    max_cycles: usize,
) -> Result<(EnsembleState, Vec<CycleReport>)> {
    let mut cur = state.clone();
    let mut reports = Vec::new();
    loop {
        let n = n_norm(&transverse_spectrum(&cur, cfg.n_max)?);
        if n < tol {
            return Ok((cur, reports));
        }
        if reports.len() >= max_cycles {
            return Err(Error::MaxCyclesExceeded { reports });
        }
        let (next, rep) = halving_cycle(&cur, cfg)?;
        cur = next;
        reports.push(rep);
    }
}

pub fn cycle_csv(reports: &[CycleReport]) -> String {
    let mut out = String::from("cycle,k,n_before,n_after,z_min,pulses,model_time\n");
    for (i, r) in reports.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{:.12e},{:.12e},{:.12e},{},{}\n",
            i + 1,
            r.k,
            r.n_before,
            r.n_after,
            r.z_extreme_after,
            r.pulse_count,
            r.elapsed_model_time
        ));
    }
    out
}

/// Random band-limited state near `−e₃`:
/// `Z₀(ω) = Σ_{n≤K} r_n e^{iφ_n} cos(nω)` rescaled so that `N(Z₀)` is uniform
/// in `(n_lo, n_hi)`.
pub fn random_south_state<R: Rng>(rng: &mut R, grid: &OmegaGrid, n_lo: f64, n_hi: f64) -> EnsembleState {
    let band = rng.gen_range(1..=4usize);
    let coef: Vec<Complex64> = (0..=band)
        .map(|_| Complex64::from_polar(rng.gen_range(0.2..1.0), rng.gen_range(0.0..2.0 * PI)))
        .collect();
    // N of Σ a_n cos(nω) is |a_0| + Σ_{n≥1} |a_n|.
    let raw: f64 = coef.iter().map(|c| c.norm()).sum();
    let scale = rng.gen_range(n_lo..n_hi) / raw;
    let z: Vec<Complex64> = grid
        .nodes
        .iter()
        .map(|&w| coef.iter().enumerate().map(|(n, c)| c * (n as f64 * w).cos()).sum::<Complex64>() * scale)
        .collect();
    EnsembleState::from_transverse(grid.clone(), &z, -1.0).expect("unit vectors by construction")
}
