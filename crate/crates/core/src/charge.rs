//! Trapped-charge build-up and decay.
//!
//! The trapped charge `q` (expressed as the bias-voltage shift it causes, mV)
//! follows `dq/dt = P(t) − (q/Γ)^{1/β}`, whose fixed point for constant pump
//! `P` is `Γ·P^β`. Time is in ms, `P` in model pump units.

use serde::{Deserialize, Serialize};

use crate::error::{ChargeError, ModelError, Violation};
use crate::feedback::DEFAULT_BETA;

/// Memory coefficient that reproduces the measured build-up and decay.
pub const DEFAULT_GAMMA_C: f64 = 10.0;
/// Default RK4 step, ms.
pub const DEFAULT_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargeModel {
    /// Γ, mV per (pump unit)^β.
    pub gamma_c: f64,
    pub beta: f64,
    /// Initial trapped charge, mV.
    pub q0: f64,
}

impl Default for ChargeModel {
    fn default() -> Self {
        Self {
            gamma_c: DEFAULT_GAMMA_C,
            beta: DEFAULT_BETA,
            q0: 0.0,
        }
    }
}

impl ChargeModel {
    pub fn with_q0(self, q0: f64) -> Self {
        Self { q0, ..self }
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let ty = "ChargeModel";
        if !(self.gamma_c.is_finite() && self.gamma_c > 0.0) {
            out.push(Violation::new(ty, "gamma_c must be finite and > 0"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            out.push(Violation::new(ty, "beta must satisfy 0 < beta < 1"));
        }
        if !(self.q0.is_finite() && self.q0 >= 0.0) {
            out.push(Violation::new(ty, "q0 must be finite and >= 0"));
        }
        out
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self.violations().into_iter().next() {
            Some(v) => Err(ModelError::Invalid(v)),
            None => Ok(()),
        }
    }

    /// Loss term `(q/Γ)^{1/β}`; zero for `q ≤ 0`.
    pub fn decay_rate(&self, q: f64) -> f64 {
        if q <= 0.0 {
            return 0.0;
        }
        ((q / self.gamma_c).ln() / self.beta).exp()
    }

    pub fn rate(&self, q: f64, p: f64) -> f64 {
        p - self.decay_rate(q)
    }
}

/// Charge reached under a constant pump, `Γ·p^β`.
pub fn equilibrium_charge(model: &ChargeModel, p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    model.gamma_c * p.powf(model.beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpSegment {
    pub t_start: f64,
    pub t_end: f64,
    pub power: f64,
}

/// Piecewise-constant pump; zero outside every segment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PumpSchedule {
    pub segments: Vec<PumpSegment>,
}

impl PumpSchedule {
    pub fn new(segments: Vec<PumpSegment>) -> Result<Self, ChargeError> {
        let s = Self { segments };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(t_start: f64, t_end: f64, power: f64) -> Self {
        Self {
            segments: vec![PumpSegment {
                t_start,
                t_end,
                power,
            }],
        }
    }

    pub fn off() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), ChargeError> {
        for s in &self.segments {
            if !(s.t_start.is_finite() && s.t_end.is_finite() && s.t_start < s.t_end) {
                return Err(ChargeError::InvalidSchedule("segment needs t_start < t_end"));
            }
            if !(s.power.is_finite() && s.power >= 0.0) {
                return Err(ChargeError::InvalidSchedule("pump power must be >= 0"));
            }
        }
        if self.segments.windows(2).any(|w| w[1].t_start < w[0].t_end) {
            return Err(ChargeError::InvalidSchedule(
                "segments must be ordered and non-overlapping",
            ));
        }
        Ok(())
    }

    /// Pump power on `[t, t + dt)`; segments are half-open.
    pub fn power_at(&self, t: f64) -> f64 {
        self.segments
            .iter()
            .find(|s| s.t_start <= t && t < s.t_end)
            .map_or(0.0, |s| s.power)
    }

    /// First switching time strictly after `t`.
    fn next_switch(&self, t: f64) -> Option<f64> {
        self.segments
            .iter()
            .flat_map(|s| [s.t_start, s.t_end])
            .filter(|&x| x > t)
            .min_by(|a, b| a.total_cmp(b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeTrajectory {
    /// ms, strictly increasing.
    pub t: Vec<f64>,
    /// mV.
    pub q: Vec<f64>,
    /// Nominal integration step, ms.
    pub step: f64,
    pub schedule: PumpSchedule,
}

impl ChargeTrajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// First time the trajectory reaches `level`, linearly interpolated
    /// between samples.
    pub fn first_crossing(&self, level: f64) -> Option<f64> {
        let above = |q: f64| q >= level;
        let start = above(*self.q.first()?);
        for i in 1..self.q.len() {
            if above(self.q[i]) != start {
                let (q0, q1) = (self.q[i - 1], self.q[i]);
                let (t0, t1) = (self.t[i - 1], self.t[i]);
                let frac = if q1 == q0 { 0.0 } else { (level - q0) / (q1 - q0) };
                return Some(t0 + frac * (t1 - t0));
            }
        }
        None
    }
}

/// Integrate the charge ODE with classical RK4, sampling at `t_grid`.
///
/// Between samples the interval is cut at every pump switch and each piece is
/// covered by equal sub-steps no longer than `step`, so a switch never falls
/// inside an RK4 step. `q` is clamped at zero from below.
pub fn integrate(
    model: &ChargeModel,
    schedule: &PumpSchedule,
    t_grid: &[f64],
    step: f64,
) -> Result<ChargeTrajectory, ChargeError> {
    model.validate()?;
    schedule.validate()?;
    if t_grid.is_empty() {
        return Err(ChargeError::InvalidGrid("time grid is empty"));
    }
    if !t_grid.iter().all(|t| t.is_finite()) || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ChargeError::InvalidGrid("times must be finite and strictly increasing"));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(ChargeError::InvalidGrid("step must be finite and > 0"));
    }

    let tol = 1e-9 * model.gamma_c.max(model.q0);
    let mut q = model.q0;
    let mut out = Vec::with_capacity(t_grid.len());
    out.push(q);
    for w in t_grid.windows(2) {
        let (mut t, t_end) = (w[0], w[1]);
        while t < t_end {
            let piece_end = match schedule.next_switch(t) {
                Some(s) if s < t_end => s,
                _ => t_end,
            };
            let p = schedule.power_at(t);
            let span = piece_end - t;
            let n = (span / step * (1.0 - 1e-12)).ceil().max(1.0) as usize;
            let h = span / n as f64;
            for _ in 0..n {
                q = rk4_step(model, q, p, h);
                if !q.is_finite() || q < -tol {
                    return Err(ChargeError::Unstable { t, q, step });
                }
                q = q.max(0.0);
            }
            t = piece_end;
        }
        out.push(q);
    }

    Ok(ChargeTrajectory {
        t: t_grid.to_vec(),
        q: out,
        step,
        schedule: schedule.clone(),
    })
}

fn rk4_step(model: &ChargeModel, q: f64, p: f64, h: f64) -> f64 {
    let k1 = model.rate(q, p);
    let k2 = model.rate(q + 0.5 * h * k1, p);
    let k3 = model.rate(q + 0.5 * h * k2, p);
    let k4 = model.rate(q + h * k3, p);
    q + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// `n` equally spaced sample times on `[t_start, t_stop]`.
pub fn time_grid(t_start: f64, t_stop: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    let dt = (t_stop - t_start) / (n - 1) as f64;
    (0..n)
        .map(|i| if i + 1 == n { t_stop } else { t_start + i as f64 * dt })
        .collect()
}

/// Bias voltage at which the QD is resonant with the cavity: `v_res0 − q(t)`.
pub fn resonance_voltage_trace(traj: &ChargeTrajectory, v_res0: f64) -> Vec<(f64, f64)> {
    traj.t
        .iter()
        .zip(&traj.q)
        .map(|(&t, &q)| (t, v_res0 - q))
        .collect()
}

/// Steady-state resonance voltage `v_res0 − Γ·p^β` for each pump power.
pub fn steady_state_voltage_curve(model: &ChargeModel, p_grid: &[f64], v_res0: f64) -> Vec<(f64, f64)> {
    p_grid
        .iter()
        .map(|&p| (p, v_res0 - equilibrium_charge(model, p)))
        .collect()
}
