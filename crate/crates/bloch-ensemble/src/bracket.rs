//! Pulse words whose endpoint approximates `I + τ ω^m Ω_axis`, the H¹
//! descent step built on them, and the final rotation onto the pole.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::bloch::{simulate, ControlSchedule, EnsembleState, PulseEvent};
use crate::error::{Error, Result};
use crate::so3::{so3_exp, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    fn pulse(self, angle: f64) -> (f64, f64) {
        match self {
            Axis::X => (angle, 0.0),
            Axis::Y => (0.0, angle),
        }
    }

    pub fn unit(self) -> Vec3 {
        match self {
            Axis::X => Vec3::x(),
            Axis::Y => Vec3::y(),
        }
    }

    pub fn other(self) -> Axis {
        match self {
            Axis::X => Axis::Y,
            Axis::Y => Axis::X,
        }
    }
}

/// `ad_{Ω_z}^m(Ω_a)` as a signed axis, using `[Ω_z,Ω_x] = Ω_y`, `[Ω_z,Ω_y] = −Ω_x`.
fn ad_z_power(a: Axis, m: usize) -> (f64, Axis) {
    let mut cur = (1.0, a);
    for _ in 0..m {
        cur = match cur.1 {
            Axis::X => (cur.0, Axis::Y),
            Axis::Y => (-cur.0, Axis::X),
        };
    }
    cur
}

#[derive(Clone, Copy, Debug)]
enum Factor {
    Pulse(f64, f64),
    /// Free precession for `dt`; `reversed` runs it backwards by
    /// conjugating with π-pulses about x.
    Flight { dt: f64, reversed: bool },
}

fn inverse(word: &[Factor]) -> Vec<Factor> {
    word.iter()
        .rev()
        .map(|f| match *f {
            Factor::Pulse(b, g) => Factor::Pulse(-b, -g),
            Factor::Flight { dt, reversed } => Factor::Flight { dt, reversed: !reversed },
        })
        .collect()
}

fn wrap_angle(a: f64) -> f64 {
    a - 2.0 * PI * (a / (2.0 * PI)).round()
}

fn compile(word: &[Factor]) -> ControlSchedule {
    let mut events: Vec<PulseEvent> = Vec::new();
    let mut t = 0.0;
    let push = |events: &mut Vec<PulseEvent>, t: f64, b: f64, g: f64| {
        if let Some(PulseEvent::Dirac { t: tl, beta, gamma }) = events.last_mut() {
            let same_axis = (g == 0.0 && *gamma == 0.0) || (b == 0.0 && *beta == 0.0);
            if *tl == t && same_axis {
                *beta = wrap_angle(*beta + b);
                *gamma = wrap_angle(*gamma + g);
                if beta.abs() < 1e-15 && gamma.abs() < 1e-15 {
                    events.pop();
                }
                return;
            }
        }
        events.push(PulseEvent::dirac(t, b, g));
    };
    for f in word {
        match *f {
            Factor::Pulse(b, g) => push(&mut events, t, b, g),
            Factor::Flight { dt, reversed: false } => t += dt,
            Factor::Flight { dt, reversed: true } => {
                push(&mut events, t, PI, 0.0);
                t += dt;
                push(&mut events, t, PI, 0.0);
            }
        }
    }
    ControlSchedule { events, horizon: t }
}

/// Schedule with endpoint `I + sign·τ·ω^m·Ω_axis + o(τ)`.
///
/// `U_0 = exp(σ s Ω_a)` and `U_m = e^{−Bs} U_{m−1}^{−1} e^{Bs} U_{m−1}` with
/// `B = ωΩ_z` and `s = τ^{1/(m+1)}`; the base axis `a` and sign `σ` are picked
/// so that `σ·ad_{Ω_z}^m(Ω_a) = sign·Ω_axis`.
pub fn bracket_schedule(m: usize, tau: f64, sign: f64, axis: Axis) -> Result<ControlSchedule> {
    if !(tau > 0.0) {
        return Err(Error::TauTooLarge { tau, angle: tau });
    }
    let s = tau.powf(1.0 / (m as f64 + 1.0));
    if s >= FRAC_PI_2 {
        return Err(Error::TauTooLarge { tau, angle: s });
    }
    let (base, sigma) = [Axis::X, Axis::Y]
        .iter()
        .find_map(|&a| {
            let (pm, got) = ad_z_power(a, m);
            (got == axis).then_some((a, sign.signum() * pm))
        })
        .expect("one base axis always matches");
    let (b, g) = base.pulse(sigma * s);
    let mut word = vec![Factor::Pulse(b, g)];
    for _ in 0..m {
        let inv = inverse(&word);
        let mut next = word.clone();
        next.push(Factor::Flight { dt: s, reversed: false });
        next.extend(inv);
        next.push(Factor::Flight { dt: s, reversed: true });
        word = next;
    }
    Ok(compile(&word))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RealPolynomial {
    pub coefficients: Vec<f64>,
}

impl RealPolynomial {
    pub fn new(mut coefficients: Vec<f64>) -> Self {
        while coefficients.last() == Some(&0.0) {
            coefficients.pop();
        }
        RealPolynomial { coefficients }
    }

    pub fn zero() -> Self {
        RealPolynomial { coefficients: Vec::new() }
    }

    pub fn monomial(deg: usize, c: f64) -> Self {
        let mut v = vec![0.0; deg + 1];
        v[deg] = c;
        Self::new(v)
    }

    pub fn degree(&self) -> Option<usize> {
        self.coefficients.len().checked_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        Self::new(self.coefficients.iter().enumerate().skip(1).map(|(i, c)| i as f64 * c).collect())
    }
}

/// Concatenation of one bracket schedule per nonzero monomial, P's monomials
/// first, each in ascending degree.
pub fn poly_schedule(p: &RealPolynomial, q: &RealPolynomial, tau: f64) -> Result<ControlSchedule> {
    let mut parts = Vec::new();
    for (poly, axis) in [(p, Axis::X), (q, Axis::Y)] {
        for (deg, &c) in poly.coefficients.iter().enumerate() {
            if c != 0.0 {
                parts.push(bracket_schedule(deg, c.abs() * tau, c.signum(), axis)?);
            }
        }
    }
    Ok(ControlSchedule::concat(&parts))
}

pub use crate::bloch::endpoint_operator;

/// `A(P,Q) = ∫ P′(−z y′ + y z′) + Q′(z x′ − x z′) dω`, the first-order change
/// of `‖M′‖²/2` along `(PΩ_x + QΩ_y)M`.
pub fn descent_functional(state: &EnsembleState, p: &RealPolynomial, q: &RealPolynomial) -> f64 {
    let g = &state.grid;
    let (x, y, z) = (state.component(0), state.component(1), state.component(2));
    let (dx, dy, dz) = (g.derivative(&x), g.derivative(&y), g.derivative(&z));
    let (dp, dq) = (p.derivative(), q.derivative());
    let f: Vec<f64> = (0..g.len())
        .map(|i| {
            let w = g.nodes[i];
            dp.eval(w) * (-z[i] * dy[i] + y[i] * dz[i]) + dq.eval(w) * (z[i] * dx[i] - x[i] * dz[i])
        })
        .collect();
    g.integrate(&f)
}

/// Direction of steepest decrease of `A` over polynomials of degree `≤ max_deg`,
/// scaled so that `A(P,Q) = −‖gradient‖`.
pub fn find_descent_polys(state: &EnsembleState, max_deg: usize) -> Result<(RealPolynomial, RealPolynomial)> {
    let zero = RealPolynomial::zero();
    let a: Vec<f64> = (0..=max_deg)
        .map(|i| descent_functional(state, &RealPolynomial::monomial(i, 1.0), &zero))
        .collect();
    let b: Vec<f64> = (0..=max_deg)
        .map(|i| descent_functional(state, &zero, &RealPolynomial::monomial(i, 1.0)))
        .collect();
    if a.iter().chain(&b).all(|v| v.abs() < 1e-12) {
        return Err(Error::DegenerateState);
    }
    let norm = a.iter().chain(&b).map(|v| v * v).sum::<f64>().sqrt();
    // components at quadrature-noise level would only add useless pulses
    let keep = |v: &f64| if v.abs() < 1e-8 * norm { 0.0 } else { -v / norm };
    Ok((
        RealPolynomial::new(a.iter().map(keep).collect()),
        RealPolynomial::new(b.iter().map(keep).collect()),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescentReport {
    pub a_value: f64,
    pub tau: f64,
    pub h1_before: f64,
    pub h1_after: f64,
    pub schedule_duration: f64,
    pub trip_count: usize,
    pub pulse_count: usize,
}

/// Exact rotation by π/2 about x, `(x, y, 0) ↦ (x, 0, y)`, for states lying in
/// the equatorial plane.
pub fn equator_prerotation() -> ControlSchedule {
    ControlSchedule {
        events: vec![PulseEvent::dirac(0.0, 1.5 * PI, 0.0), PulseEvent::dirac(1.0, PI, 0.0)],
        horizon: 2.0,
    }
}

const MAX_HALVINGS: usize = 30;

pub fn descent_step(
    state: &EnsembleState,
    max_deg: usize,
    tau0: f64,
) -> Result<(ControlSchedule, EnsembleState, DescentReport)> {
    let h1_before = state.h1_seminorm();
    if h1_before == 0.0 {
        return Err(Error::DegenerateState);
    }
    let (pre, start) = if state.m.iter().all(|v| v.z.abs() < 1e-12) {
        let pre = equator_prerotation();
        let s = simulate(state, &pre)?;
        (pre, s)
    } else {
        (ControlSchedule::free(0.0), state.clone())
    };
    let (p, q) = find_descent_polys(&start, max_deg)?;
    let a_value = descent_functional(&start, &p, &q);
    let mut tau = tau0;
    for _ in 0..=MAX_HALVINGS {
        if let Ok(sch) = poly_schedule(&p, &q, tau) {
            let next = simulate(&start, &sch)?;
            let h1_after = next.h1_seminorm();
            if h1_after < h1_before {
                let full = pre.then(&sch);
                let report = DescentReport {
                    a_value,
                    tau,
                    h1_before,
                    h1_after,
                    schedule_duration: full.horizon,
                    trip_count: full.trip_count(),
                    pulse_count: full.dirac_count(),
                };
                return Ok((full, next, report));
            }
        }
        tau *= 0.5;
    }
    Err(Error::BacktrackFailed { halvings: MAX_HALVINGS })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoleRotation {
    pub schedule: ControlSchedule,
    pub result: Vec3,
    pub axis: Axis,
    pub theta: f64,
}

fn rotation_toward_pole(m: &Vec3, axis: Axis) -> (f64, Vec3) {
    let theta = match axis {
        Axis::X => FRAC_PI_2 - m.z.atan2(m.y),
        Axis::Y => -m.x.atan2(m.z),
    };
    let theta = wrap_angle(theta);
    (theta, so3_exp(&(axis.unit() * theta)) * m)
}

/// Two-pulse schedule (`π` at t=1, `π+θ` at t=2) whose endpoint is the
/// frequency-independent rotation `exp(θΩ_axis)` bringing `m` closest to `e₃`.
/// Falls back to the other axis when the requested one cannot move `m` up.
pub fn rotate_to_pole(m: &Vec3, axis: Axis) -> Result<PoleRotation> {
    if (m - Vec3::z()).norm() < 1e-12 {
        return Err(Error::AlreadyAtPole);
    }
    let gain = |a: Axis| rotation_toward_pole(m, a).1.z - m.z;
    let axis = if gain(axis) > 1e-14 { axis } else { axis.other() };
    if gain(axis) <= 1e-14 {
        return Err(Error::AlreadyAtPole);
    }
    let (theta, result) = rotation_toward_pole(m, axis);
    let (b1, g1) = axis.pulse(PI);
    let (b2, g2) = axis.pulse(PI + theta);
    let schedule = ControlSchedule {
        events: vec![PulseEvent::dirac(1.0, b1, g1), PulseEvent::dirac(2.0, b2, g2)],
        horizon: 2.0,
    };
    Ok(PoleRotation { schedule, result, axis, theta })
}

#[derive(Clone, Debug)]
pub struct DescentOutcome {
    pub state: EnsembleState,
    pub schedule: ControlSchedule,
    pub reports: Vec<DescentReport>,
    pub rotations: usize,
    pub pole_distance: f64,
}

pub const DEFAULT_TAU0: f64 = 0.05;

pub fn h1_descent_loop(
    state: &EnsembleState,
    tol_h1: f64,
    max_iter: usize,
    max_deg: usize,
) -> Result<DescentOutcome> {
    let mut cur = state.clone();
    let mut schedule = ControlSchedule::free(0.0);
    let mut reports = Vec::new();
    while cur.h1_seminorm() >= tol_h1 {
        if reports.len() >= max_iter {
            return Err(Error::MaxIterExceeded { reports });
        }
        let (sch, next, rep) = match descent_step(&cur, max_deg, DEFAULT_TAU0) {
            Ok(r) => r,
            Err(Error::BacktrackFailed { .. }) | Err(Error::DegenerateState) => {
                return Err(Error::MaxIterExceeded { reports })
            }
            Err(e) => return Err(e),
        };
        schedule = schedule.then(&sch);
        cur = next;
        reports.push(rep);
    }
    let mut rotations = 0;
    let mut axis = Axis::X;
    while rotations < 2 {
        let mean: Vec3 = cur.m.iter().sum::<Vec3>() / cur.m.len() as f64;
        if mean.norm() == 0.0 {
            break;
        }
        match rotate_to_pole(&mean.normalize(), axis) {
            Ok(rot) => {
                cur = simulate(&cur, &rot.schedule)?;
                schedule = schedule.then(&rot.schedule);
                axis = rot.axis.other();
                rotations += 1;
            }
            Err(Error::AlreadyAtPole) => break,
            Err(e) => return Err(e),
        }
    }
    let pole_distance = cur.sup_distance(&Vec3::z());
    Ok(DescentOutcome { state: cur, schedule, reports, rotations, pole_distance })
}

pub fn descent_csv(reports: &[DescentReport]) -> String {
    let mut out = String::from("iter,a_value,tau,h1_before,h1_after,duration,trips\n");
    for (i, r) in reports.iter().enumerate() {
        out.push_str(&format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}\n",
            i + 1,
            r.a_value,
            r.tau,
            r.h1_before,
            r.h1_after,
            r.schedule_duration,
            r.trip_count
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ad_powers_cycle_with_period_four() {
        assert_eq!(ad_z_power(Axis::X, 1), (1.0, Axis::Y));
        assert_eq!(ad_z_power(Axis::X, 2), (-1.0, Axis::X));
        assert_eq!(ad_z_power(Axis::Y, 1), (-1.0, Axis::X));
        assert_eq!(ad_z_power(Axis::X, 4), (1.0, Axis::X));
    }

    #[test]
    fn degree_zero_is_a_single_pulse() {
        let s = bracket_schedule(0, 0.3, 1.0, Axis::X).unwrap();
        assert_eq!(s.events, vec![PulseEvent::dirac(0.0, 0.3, 0.0)]);
        assert_eq!(s.horizon, 0.0);
    }

    #[test]
    fn inverse_word_undoes_word() {
        let w = vec![
            Factor::Pulse(0.2, 0.0),
            Factor::Flight { dt: 0.4, reversed: false },
            Factor::Pulse(0.0, -0.1),
            Factor::Flight { dt: 0.3, reversed: true },
        ];
        let mut both = w.clone();
        both.extend(inverse(&w));
        let sch = compile(&both);
        for &om in &[0.0, 0.7, 2.3] {
            let e = endpoint_operator(&sch, om);
            assert!((e - crate::so3::Mat3::identity()).norm() < 1e-14);
        }
    }

    #[test]
    fn polynomial_eval_and_derivative() {
        let p = RealPolynomial::new(vec![1.0, -2.0, 3.0, 0.0]);
        assert_eq!(p.degree(), Some(2));
        assert_eq!(p.eval(2.0), 9.0);
        assert_eq!(p.derivative().coefficients, vec![-2.0, 6.0]);
    }
}
