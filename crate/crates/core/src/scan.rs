//! Quasi-static laser sweeps, hysteresis metrics, bias-voltage series and
//! two-laser pump–probe maps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, ScanError, Violation};
use crate::feedback::{
    find_all_roots, qd_shift, FeedbackModel, FeedbackParams, SolverSettings,
};
use crate::model::{
    mixed_reflectivity, transmission_amplitude, transmittivity, CavityParams, QdParams,
};

/// Default reflectivity difference that counts as hysteresis.
pub const DEFAULT_EPS_H: f64 = 0.02;

/// Everything needed to simulate the device apart from the drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct System {
    pub cavity: CavityParams,
    pub qd: QdParams,
    pub feedback: FeedbackModel,
    pub solver: SolverSettings,
}

impl System {
    pub fn new(cavity: CavityParams, qd: QdParams, feedback: FeedbackModel) -> Self {
        Self {
            cavity,
            qd,
            feedback,
            solver: SolverSettings::default(),
        }
    }

    pub fn with_f_0(self, f_0: f64) -> Self {
        Self {
            qd: QdParams { f_0, ..self.qd },
            ..self
        }
    }

    pub fn feedback_at(&self, p_in: f64) -> FeedbackParams {
        self.feedback.at_power(p_in, self.cavity.eta_out())
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let mut v = self.cavity.violations();
        v.extend(self.qd.violations());
        v.extend(self.solver.violations());
        if !(self.feedback.beta > 0.0 && self.feedback.beta < 1.0) {
            v.push(Violation::new("FeedbackParams", "beta must satisfy 0 < beta < 1"));
        }
        match v.into_iter().next() {
            Some(v) => Err(ModelError::Invalid(v)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "up" => Ok(Direction::Up),
            "down" => Ok(Direction::Down),
            other => Err(format!("unknown sweep direction {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub f_start: f64,
    pub f_stop: f64,
    pub n_points: usize,
    pub direction: Direction,
    /// Incident power, pW.
    pub p_in: f64,
}

impl SweepSpec {
    pub fn new(f_start: f64, f_stop: f64, n_points: usize, direction: Direction, p_in: f64) -> Self {
        Self {
            f_start,
            f_stop,
            n_points,
            direction,
            p_in,
        }
    }

    pub fn reversed(self) -> Self {
        let direction = match self.direction {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
        };
        Self { direction, ..self }
    }

    pub fn with_direction(self, direction: Direction) -> Self {
        Self { direction, ..self }
    }

    pub fn with_power(self, p_in: f64) -> Self {
        Self { p_in, ..self }
    }

    pub fn step(&self) -> f64 {
        (self.f_stop - self.f_start) / (self.n_points - 1) as f64
    }

    /// The `i`-th grid frequency counted from `f_start`.
    pub fn frequency(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.f_stop
        } else {
            self.f_start + i as f64 * self.step()
        }
    }

    /// Grid frequencies in the order they are visited.
    pub fn frequencies(&self) -> Vec<f64> {
        let asc = (0..self.n_points).map(|i| self.frequency(i));
        match self.direction {
            Direction::Up => asc.collect(),
            Direction::Down => {
                let mut v: Vec<f64> = asc.collect();
                v.reverse();
                v
            }
        }
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(self.f_start.is_finite() && self.f_stop.is_finite() && self.f_start < self.f_stop) {
            out.push(Violation::new("SweepSpec", "f_start < f_stop, both finite"));
        }
        if self.n_points < 2 {
            out.push(Violation::new("SweepSpec", "n_points >= 2"));
        }
        if !(self.p_in.is_finite() && self.p_in >= 0.0) {
            out.push(Violation::new("SweepSpec", "p_in must be finite and >= 0"));
        }
        out
    }

    fn check(&self) -> Result<(), ScanError> {
        match self.violations().first() {
            Some(v) => Err(ScanError::InvalidSweep(v.rule)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    pub f_laser: f64,
    pub r_prime: f64,
    pub f_qd: f64,
    /// Number of coexisting self-consistent solutions at this frequency.
    pub n_roots: usize,
}

/// Parameters a spectrum was computed with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSnapshot {
    pub cavity: CavityParams,
    pub qd: QdParams,
    pub feedback: FeedbackParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub direction: Direction,
    /// Points in the order they were swept.
    pub points: Vec<SpectrumPoint>,
    pub snapshot: Option<ParamSnapshot>,
}

impl Spectrum {
    /// Points sorted by ascending laser frequency.
    pub fn ascending(&self) -> Vec<SpectrumPoint> {
        let mut pts = self.points.clone();
        if self.direction == Direction::Down {
            pts.reverse();
        }
        if !pts.windows(2).all(|w| w[0].f_laser <= w[1].f_laser) {
            pts.sort_by(|a, b| a.f_laser.total_cmp(&b.f_laser));
        }
        pts
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest solved QD shift `f_qd − f_0` along the sweep.
    pub fn peak_shift(&self) -> Option<f64> {
        let f_0 = self.snapshot?.qd.f_0;
        self.points
            .iter()
            .map(|p| p.f_qd - f_0)
            .max_by(|a, b| a.total_cmp(b))
    }
}

/// One quasi-static sweep with branch tracking.
pub fn sweep(sys: &System, spec: &SweepSpec) -> Result<Spectrum, ScanError> {
    spec.check()?;
    let fb = sys.feedback_at(spec.p_in);
    fb.validate()?;
    sweep_with(&sys.cavity, &sys.qd, &fb, &sys.solver, spec)
}

fn sweep_with(
    cav: &CavityParams,
    qd: &QdParams,
    fb: &FeedbackParams,
    solver: &SolverSettings,
    spec: &SweepSpec,
) -> Result<Spectrum, ScanError> {
    let freqs = spec.frequencies();
    let mut prev = match spec.direction {
        Direction::Up => qd.f_0,
        Direction::Down => {
            // entering from the blue side: start from the uncoupled prediction
            let t0 = transmission_amplitude(cav, &qd.uncoupled(), freqs[0], qd.f_0)?;
            qd.f_0 + qd_shift(fb, transmittivity(t0))
        }
    };
    let mut points = Vec::with_capacity(freqs.len());
    for f_laser in freqs {
        let mut res = find_all_roots(cav, qd, fb, f_laser, solver)
            .map_err(|source| ScanError::Solver { f_laser, source })?;
        let f_qd = res.select_nearest(prev);
        let r_prime = mixed_reflectivity(cav, qd, f_laser, f_qd)?;
        points.push(SpectrumPoint {
            f_laser,
            r_prime,
            f_qd,
            n_roots: res.len(),
        });
        prev = f_qd;
    }
    Ok(Spectrum {
        direction: spec.direction,
        points,
        snapshot: Some(ParamSnapshot {
            cavity: *cav,
            qd: *qd,
            feedback: *fb,
        }),
    })
}

/// Upward and downward sweeps over the same grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPair {
    pub up: Spectrum,
    pub down: Spectrum,
}

impl SweepPair {
    pub fn hysteresis_width(&self, eps_h: f64) -> Result<f64, ScanError> {
        hysteresis_width(&self.up, &self.down, eps_h)
    }

    /// `max |R′_up − R′_down|` over the shared grid.
    pub fn max_difference(&self) -> Result<f64, ScanError> {
        let (up, down) = aligned(&self.up, &self.down)?;
        Ok(up
            .iter()
            .zip(&down)
            .map(|(u, d)| (u.r_prime - d.r_prime).abs())
            .fold(0.0, f64::max))
    }
}

pub fn sweep_pair(sys: &System, spec: &SweepSpec) -> Result<SweepPair, ScanError> {
    let up = sweep(sys, &spec.with_direction(Direction::Up))?;
    let down = sweep(sys, &spec.with_direction(Direction::Down))?;
    Ok(SweepPair { up, down })
}

fn aligned(a: &Spectrum, b: &Spectrum) -> Result<(Vec<SpectrumPoint>, Vec<SpectrumPoint>), ScanError> {
    let a = a.ascending();
    let b = b.ascending();
    if a.len() != b.len() {
        return Err(ScanError::GridMismatch);
    }
    for (p, q) in a.iter().zip(&b) {
        let scale = p.f_laser.abs().max(q.f_laser.abs()).max(1.0);
        if (p.f_laser - q.f_laser).abs() > 1e-12 * scale {
            return Err(ScanError::GridMismatch);
        }
    }
    Ok((a, b))
}

/// Length of the longest contiguous run of grid cells where the two sweeps
/// differ by more than `eps_h` in `R′`, in GHz (run length × grid step).
pub fn hysteresis_width(up: &Spectrum, down: &Spectrum, eps_h: f64) -> Result<f64, ScanError> {
    let (up, down) = aligned(up, down)?;
    if up.len() < 2 {
        return Ok(0.0);
    }
    let step = (up[up.len() - 1].f_laser - up[0].f_laser) / (up.len() - 1) as f64;
    let mut best = 0usize;
    let mut run = 0usize;
    for (u, d) in up.iter().zip(&down) {
        if (u.r_prime - d.r_prime).abs() > eps_h {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    Ok(best as f64 * step)
}

/// QD shift at a laser parked on the cavity resonance, taking the solution
/// closest to `f_0`.
pub fn resonant_shift(sys: &System, p_in: f64) -> Result<f64, ScanError> {
    let fb = sys.feedback_at(p_in);
    let f_laser = sys.cavity.f_c;
    let mut res = find_all_roots(&sys.cavity, &sys.qd, &fb, f_laser, &sys.solver)
        .map_err(|source| ScanError::Solver { f_laser, source })?;
    Ok(res.select_nearest(sys.qd.f_0) - sys.qd.f_0)
}

/// Zero-intensity QD frequency that places the blueshifted QD at `f_target`
/// while the laser sits on the cavity resonance. This is the bias setting that
/// keeps the QD–cavity detuning fixed as the power changes.
pub fn f0_for_detuning(sys: &System, p_in: f64, f_target: f64) -> Result<f64, ScanError> {
    let fb = sys.feedback_at(p_in);
    let t = transmission_amplitude(&sys.cavity, &sys.qd, sys.cavity.f_c, f_target)?;
    Ok(f_target - qd_shift(&fb, transmittivity(t)))
}

/// Linear bias-voltage tuning `f_0(V) = f_ref + slope·(V − v_ref)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StarkMap {
    /// GHz per mV.
    pub slope: f64,
    /// mV.
    pub v_ref: f64,
    /// GHz.
    pub f_ref: f64,
}

impl Default for StarkMap {
    fn default() -> Self {
        // placeholder slope, not calibrated against any measurement
        Self {
            slope: 1.0,
            v_ref: 0.0,
            f_ref: 0.0,
        }
    }
}

impl StarkMap {
    pub fn f_0(&self, voltage: f64) -> f64 {
        self.f_ref + self.slope * (voltage - self.v_ref)
    }

    pub fn voltage(&self, f_0: f64) -> f64 {
        self.v_ref + (f_0 - self.f_ref) / self.slope
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(self.slope.is_finite() && self.slope != 0.0) {
            out.push(Violation::new("StarkMap", "slope must be finite and non-zero"));
        }
        if !(self.v_ref.is_finite() && self.f_ref.is_finite()) {
            out.push(Violation::new("StarkMap", "v_ref and f_ref must be finite"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageScan {
    /// mV.
    pub voltage: f64,
    pub f_0: f64,
    pub sweeps: SweepPair,
}

/// Paired sweeps for each bias voltage. Voltages run in parallel.
pub fn voltage_scan(
    sys: &System,
    stark: &StarkMap,
    voltages: &[f64],
    spec: &SweepSpec,
) -> Result<Vec<VoltageScan>, ScanError> {
    voltages
        .par_iter()
        .map(|&voltage| {
            let f_0 = stark.f_0(voltage);
            let sweeps = sweep_pair(&sys.with_f_0(f_0), spec)?;
            Ok(VoltageScan {
                voltage,
                f_0,
                sweeps,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoLaserSpec {
    /// Pump power, pW.
    pub p_pump: f64,
    /// Probe sweep; its `p_in` is the probe power.
    pub probe: SweepSpec,
    /// Whether the pump field is modified by the QD (otherwise it sees the
    /// empty cavity).
    pub pump_sees_qd: bool,
}

impl TwoLaserSpec {
    /// Non-fatal remarks about the setup.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.probe.p_in > self.p_pump / 10.0 {
            w.push(format!(
                "probe power {} pW is not small against pump power {} pW",
                self.probe.p_in, self.p_pump
            ));
        }
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLaserMap {
    pub pump_frequencies: Vec<f64>,
    /// Pump-induced QD frequency at each pump step, GHz.
    pub pump_f_qd: Vec<f64>,
    /// `pump_f_qd − f_0`, GHz.
    pub shift_trace: Vec<f64>,
    pub probe_spectra: Vec<Spectrum>,
}

impl TwoLaserMap {
    /// Pump frequency of the largest shift.
    pub fn argmax_shift(&self) -> Option<f64> {
        self.shift_trace
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| self.pump_frequencies[i])
    }
}

/// Step the pump across `pump_grid` (in the given order); at each step solve
/// the pump's self-consistent QD frequency, freeze it, and sweep the probe.
pub fn two_laser_map(
    sys: &System,
    spec: &TwoLaserSpec,
    pump_grid: &[f64],
) -> Result<TwoLaserMap, ScanError> {
    spec.probe.check()?;
    if !(spec.p_pump.is_finite() && spec.p_pump >= 0.0) {
        return Err(ScanError::InvalidSweep("p_pump must be finite and >= 0"));
    }
    let cav = &sys.cavity;
    let pump_fb = sys.feedback_at(spec.p_pump);
    pump_fb.validate()?;
    let pump_qd = if spec.pump_sees_qd {
        sys.qd
    } else {
        sys.qd.uncoupled()
    };

    let mut pump_f_qd = Vec::with_capacity(pump_grid.len());
    let mut prev = sys.qd.f_0;
    for &f_pump in pump_grid {
        let mut res = find_all_roots(cav, &pump_qd, &pump_fb, f_pump, &sys.solver)
            .map_err(|source| ScanError::Solver {
                f_laser: f_pump,
                source,
            })?;
        prev = res.select_nearest(prev);
        pump_f_qd.push(prev);
    }

    let probe_fb = sys.feedback_at(spec.probe.p_in);
    let probe_spectra = pump_f_qd
        .par_iter()
        .map(|&f_qd| {
            let qd = QdParams { f_0: f_qd, ..sys.qd };
            sweep_with(cav, &qd, &probe_fb, &sys.solver, &spec.probe)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let shift_trace = pump_f_qd.iter().map(|f| f - sys.qd.f_0).collect();
    Ok(TwoLaserMap {
        pump_frequencies: pump_grid.to_vec(),
        pump_f_qd,
        shift_trace,
        probe_spectra,
    })
}

/// `α·L(f)^β` with `L` a unit-peak Lorentzian of full width `width` centered
/// on `f_c`.
pub fn lorentzian_powerlaw_reference(
    f_pump_grid: &[f64],
    f_c: f64,
    width: f64,
    fb: &FeedbackParams,
) -> Vec<f64> {
    f_pump_grid
        .iter()
        .map(|&f| {
            let x = 2.0 * (f - f_c) / width;
            qd_shift(fb, 1.0 / (1.0 + x * x))
        })
        .collect()
}
