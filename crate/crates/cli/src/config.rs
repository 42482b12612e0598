//! Experiment configuration.
//!
//! A config is a TOML document. Every section is optional except `[qd]`,
//! which must give `cooperativity` and `gamma`; every key that is left out
//! takes the default listed on its field. Unknown keys are errors.
//!
//! ```toml
//! seed = 7                 # noise seed for synthetic fits
//!
//! [cavity]                 # kappa = 77, kappa_m = 11 (ns^-1), f_c = 0 GHz, wavelength_nm = 940
//! [qd]                     # f_0 = 0 GHz, cooperativity, gamma (ns^-1), mix_weight = 0.8
//! [feedback]               # beta = 0.35, coefficient = 1.5 GHz, alpha = <fixed GHz, optional>
//! [solver]                 # h_root = 0.01, tol_root = 1e-6, root_merge_tol = 1e-4, upper_margin = 1
//! [stark]                  # slope = 1 GHz/mV, v_ref = 0 mV, f_ref = 0 GHz, calibrated = false
//! [charge]                 # gamma_c = 10, beta = <feedback.beta>, q0 = 0, step = 1e-3, v_res0 = 713, calibrated = false
//! [scan]                   # f_start, f_stop, n_points, p_in, eps_h, voltages = []
//! [twolaser]               # p_pump, pump_start, pump_stop, pump_points, p_probe, probe_*, pump_sees_qd
//! [dynamics]               # t_stop, n_samples, [[dynamics.segments]] {t_start, t_end, power}, steady_powers
//! [fit]                    # input, free, [fit.initial], noise_sigma, f_start, f_stop, n_points, max_iter
//! [powerlaw]               # input, powers
//! [fig2]                   # powers, detuning, f_start, f_stop, n_points, eps_h
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use qdfeedback::charge::PumpSegment;
use qdfeedback::feedback::{Calibration, ALPHA_CALIBRATION_GHZ, DEFAULT_BETA};
use qdfeedback::scan::DEFAULT_EPS_H;
use qdfeedback::{
    CavityParams, ChargeModel, Direction, FeedbackModel, FeedbackParams, FitParam, FitSettings,
    PumpSchedule, QdParams, SolverSettings, StarkMap, SweepSpec, System, TwoLaserSpec,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

const FIG2_POWERS: [f64; 5] = [11.0, 40.0, 150.0, 550.0, 1000.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CavitySection {
    pub kappa: f64,
    pub kappa_m: f64,
    pub f_c: f64,
    pub wavelength_nm: f64,
}

impl Default for CavitySection {
    fn default() -> Self {
        let c = CavityParams::default();
        Self {
            kappa: c.kappa,
            kappa_m: c.kappa_m,
            f_c: c.f_c,
            wavelength_nm: c.wavelength_nm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QdSection {
    pub f_0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cooperativity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub mix_weight: f64,
}

impl Default for QdSection {
    fn default() -> Self {
        Self {
            f_0: 0.0,
            cooperativity: None,
            gamma: None,
            mix_weight: qdfeedback::model::DEFAULT_MIX_WEIGHT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeedbackSection {
    pub beta: f64,
    /// GHz; `α = coefficient·(P_in/η_out²)^β`.
    pub coefficient: f64,
    /// Power-independent α in GHz; replaces the power-law calibration.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl Default for FeedbackSection {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA,
            coefficient: ALPHA_CALIBRATION_GHZ,
            alpha: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StarkSection {
    pub slope: f64,
    pub v_ref: f64,
    pub f_ref: f64,
    pub calibrated: bool,
}

impl Default for StarkSection {
    fn default() -> Self {
        let s = StarkMap::default();
        Self {
            slope: s.slope,
            v_ref: s.v_ref,
            f_ref: s.f_ref,
            calibrated: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChargeSection {
    pub gamma_c: f64,
    /// Falls back to `feedback.beta`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub q0: f64,
    pub step: f64,
    /// Resonance voltage with no trapped charge, mV.
    pub v_res0: f64,
    pub calibrated: bool,
}

impl Default for ChargeSection {
    fn default() -> Self {
        Self {
            gamma_c: qdfeedback::charge::DEFAULT_GAMMA_C,
            beta: None,
            q0: 0.0,
            step: qdfeedback::charge::DEFAULT_STEP,
            v_res0: 713.0,
            calibrated: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanSection {
    pub f_start: f64,
    pub f_stop: f64,
    pub n_points: usize,
    pub p_in: f64,
    pub eps_h: f64,
    /// Bias voltages (mV) mapped through `[stark]`; empty scans at `qd.f_0`.
    pub voltages: Vec<f64>,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            f_start: -30.0,
            f_stop: 30.0,
            n_points: 1001,
            p_in: 1.0,
            eps_h: DEFAULT_EPS_H,
            voltages: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoLaserSection {
    pub p_pump: f64,
    pub pump_start: f64,
    pub pump_stop: f64,
    pub pump_points: usize,
    pub p_probe: f64,
    pub probe_start: f64,
    pub probe_stop: f64,
    pub probe_points: usize,
    pub pump_sees_qd: bool,
}

impl Default for TwoLaserSection {
    fn default() -> Self {
        Self {
            p_pump: 1000.0,
            pump_start: -30.0,
            pump_stop: 30.0,
            pump_points: 61,
            p_probe: 1.0,
            probe_start: -30.0,
            probe_stop: 30.0,
            probe_points: 241,
            pump_sees_qd: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentSection {
    pub t_start: f64,
    pub t_end: f64,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsSection {
    /// ms.
    pub t_stop: f64,
    pub n_samples: usize,
    pub segments: Vec<SegmentSection>,
    /// Pump powers for the steady-state voltage curve.
    pub steady_powers: Vec<f64>,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self {
            t_stop: 60.0,
            n_samples: 601,
            segments: vec![SegmentSection {
                t_start: 0.0,
                t_end: 10.0,
                power: 10.0,
            }],
            steady_powers: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitSection {
    /// CSV spectrum to fit; without it a noisy spectrum is synthesized from
    /// the model parameters.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    pub free: Vec<String>,
    /// Starting values; parameters not listed start at their model value.
    pub initial: BTreeMap<String, f64>,
    pub noise_sigma: f64,
    pub f_start: f64,
    pub f_stop: f64,
    pub n_points: usize,
    pub max_iter: usize,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            input: None,
            free: ["cooperativity", "gamma", "kappa", "eta_out", "f_c", "f_0"]
                .map(String::from)
                .to_vec(),
            initial: BTreeMap::new(),
            noise_sigma: 0.01,
            f_start: -30.0,
            f_stop: 30.0,
            n_points: 1001,
            max_iter: FitSettings::default().max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerLawSection {
    /// Two-column CSV `(x, y)`; without it the on-resonance shift is
    /// simulated at `powers`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    pub powers: Vec<f64>,
}

impl Default for PowerLawSection {
    fn default() -> Self {
        Self {
            input: None,
            powers: FIG2_POWERS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Fig2Section {
    pub powers: Vec<f64>,
    /// QD-cavity detuning held fixed for the voltage and width columns, GHz.
    pub detuning: f64,
    pub f_start: f64,
    pub f_stop: f64,
    pub n_points: usize,
    pub eps_h: f64,
}

impl Default for Fig2Section {
    fn default() -> Self {
        Self {
            powers: FIG2_POWERS.to_vec(),
            detuning: -7.0,
            f_start: -40.0,
            f_stop: 40.0,
            n_points: 8001,
            eps_h: DEFAULT_EPS_H,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub cavity: CavitySection,
    pub qd: QdSection,
    pub feedback: FeedbackSection,
    pub solver: SolverSettings,
    pub stark: StarkSection,
    pub charge: ChargeSection,
    pub scan: ScanSection,
    pub twolaser: TwoLaserSection,
    pub dynamics: DynamicsSection,
    pub fit: FitSection,
    pub powerlaw: PowerLawSection,
    pub fig2: Fig2Section,
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("cavity", &["kappa", "kappa_m", "f_c", "wavelength_nm"]),
    ("qd", &["f_0", "cooperativity", "gamma", "mix_weight"]),
    ("feedback", &["beta", "coefficient", "alpha"]),
    ("solver", &["h_root", "tol_root", "root_merge_tol", "upper_margin"]),
    ("stark", &["slope", "v_ref", "f_ref", "calibrated"]),
    ("charge", &["gamma_c", "beta", "q0", "step", "v_res0", "calibrated"]),
    ("scan", &["f_start", "f_stop", "n_points", "p_in", "eps_h", "voltages"]),
    (
        "twolaser",
        &[
            "p_pump",
            "pump_start",
            "pump_stop",
            "pump_points",
            "p_probe",
            "probe_start",
            "probe_stop",
            "probe_points",
            "pump_sees_qd",
        ],
    ),
    ("dynamics", &["t_stop", "n_samples", "segments", "steady_powers"]),
    (
        "fit",
        &["input", "free", "initial", "noise_sigma", "f_start", "f_stop", "n_points", "max_iter"],
    ),
    ("powerlaw", &["input", "powers"]),
    ("fig2", &["powers", "detuning", "f_start", "f_stop", "n_points", "eps_h"]),
];

/// Every key in `doc` that the schema does not know, as dotted paths.
pub fn unknown_keys(doc: &toml::Table) -> Vec<String> {
    let mut out = Vec::new();
    for (key, value) in doc {
        if key == "seed" {
            continue;
        }
        let Some((_, known)) = SECTIONS.iter().find(|(name, _)| name == key) else {
            out.push(key.clone());
            continue;
        };
        let Some(table) = value.as_table() else {
            continue;
        };
        for (k, v) in table {
            if !known.contains(&k.as_str()) {
                out.push(format!("{key}.{k}"));
                continue;
            }
            match (key.as_str(), k.as_str()) {
                ("dynamics", "segments") => {
                    for (i, seg) in v.as_array().into_iter().flatten().enumerate() {
                        for sk in seg.as_table().into_iter().flat_map(|t| t.keys()) {
                            if !["t_start", "t_end", "power"].contains(&sk.as_str()) {
                                out.push(format!("dynamics.segments[{i}].{sk}"));
                            }
                        }
                    }
                }
                ("fit", "initial") => {
                    for ik in v.as_table().into_iter().flat_map(|t| t.keys()) {
                        if FitParam::from_name(ik).is_none() {
                            out.push(format!("fit.initial.{ik}"));
                        }
                    }
                }
                _ => {}
            }
        }
    }
    out
}

/// Parse and validate a config, reporting every problem found.
pub fn parse_config(text: &str) -> Result<Config, CliError> {
    let doc: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::Config(vec![e.to_string()]))?;
    let mut problems: Vec<String> = unknown_keys(&doc)
        .into_iter()
        .map(|k| format!("unknown key `{k}`"))
        .collect();
    let cfg: Config = match Config::deserialize(doc) {
        Ok(c) => c,
        Err(e) => {
            problems.push(e.to_string());
            return Err(CliError::Config(problems));
        }
    };
    problems.extend(cfg.violations());
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Config(problems))
    }
}

/// Read a config file; relative input paths are resolved against the file's
/// directory.
pub fn load_config(path: &Path) -> Result<Config, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
    let mut cfg = parse_config(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    for input in [&mut cfg.fit.input, &mut cfg.powerlaw.input].into_iter().flatten() {
        if input.is_relative() {
            *input = base.join(&*input);
        }
        if let Ok(abs) = input.canonicalize() {
            *input = abs;
        }
    }
    Ok(cfg)
}

fn positive_list(out: &mut Vec<String>, name: &str, xs: &[f64]) {
    if xs.is_empty() {
        out.push(format!("{name} must not be empty"));
    } else if !xs.iter().all(|p| p.is_finite() && *p > 0.0) {
        out.push(format!("{name} must be finite and > 0"));
    }
}

impl Config {
    /// All invariant violations, as `Type: rule` messages.
    pub fn violations(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let push = |out: &mut Vec<String>, v: Vec<qdfeedback::error::Violation>| {
            out.extend(v.into_iter().map(|v| v.to_string()))
        };
        if self.qd.cooperativity.is_none() {
            out.push("missing key `qd.cooperativity`".into());
        }
        if self.qd.gamma.is_none() {
            out.push("missing key `qd.gamma`".into());
        }
        let cav = self.cavity();
        push(&mut out, cav.violations());
        if self.qd.cooperativity.is_some() && self.qd.gamma.is_some() {
            push(&mut out, self.qd().violations());
        }
        let fb = self.feedback().at_power(1.0, cav.eta_out());
        push(&mut out, fb.violations());
        if !(self.feedback.coefficient.is_finite() && self.feedback.coefficient >= 0.0) {
            out.push("FeedbackParams: coefficient must be finite and >= 0".into());
        }
        push(&mut out, self.solver.violations());
        push(&mut out, self.stark().violations());
        push(&mut out, self.charge_model().violations());
        if !(self.charge.step.is_finite() && self.charge.step > 0.0) {
            out.push("ChargeModel: step must be finite and > 0".into());
        }
        if !self.charge.v_res0.is_finite() {
            out.push("charge.v_res0 must be finite".into());
        }

        for (name, spec) in [
            ("scan", self.scan_spec()),
            ("twolaser probe", self.two_laser_spec().probe),
            ("fig2", self.fig2_spec(1.0)),
        ] {
            out.extend(spec.violations().into_iter().map(|v| format!("{v} ({name})")));
        }
        for (name, eps) in [("scan.eps_h", self.scan.eps_h), ("fig2.eps_h", self.fig2.eps_h)] {
            if !(eps.is_finite() && eps >= 0.0) {
                out.push(format!("{name} must be finite and >= 0"));
            }
        }
        if !self.scan.voltages.iter().all(|v| v.is_finite()) {
            out.push("scan.voltages must be finite".into());
        }
        let tl = &self.twolaser;
        if !(tl.p_pump.is_finite() && tl.p_pump >= 0.0) {
            out.push("TwoLaserSpec: p_pump must be finite and >= 0".into());
        }
        if !(tl.pump_start.is_finite() && tl.pump_stop.is_finite() && tl.pump_start < tl.pump_stop) {
            out.push("TwoLaserSpec: pump_start < pump_stop, both finite".into());
        }
        if tl.pump_points < 2 {
            out.push("TwoLaserSpec: pump_points >= 2".into());
        }

        let d = &self.dynamics;
        if !(d.t_stop.is_finite() && d.t_stop > 0.0) {
            out.push("dynamics.t_stop must be finite and > 0".into());
        }
        if d.n_samples < 2 {
            out.push("dynamics.n_samples must be >= 2".into());
        }
        if let Err(e) = self.schedule() {
            out.push(e.to_string());
        }
        if !d.steady_powers.is_empty() {
            positive_list(&mut out, "dynamics.steady_powers", &d.steady_powers);
        }

        let f = &self.fit;
        if f.free.is_empty() {
            out.push("fit.free must name at least one parameter".into());
        }
        for name in &f.free {
            if FitParam::from_name(name).is_none() {
                out.push(format!("fit.free: unknown parameter `{name}`"));
            }
        }
        if !(f.noise_sigma.is_finite() && f.noise_sigma >= 0.0) {
            out.push("fit.noise_sigma must be finite and >= 0".into());
        }
        if !(f.f_start.is_finite() && f.f_stop.is_finite() && f.f_start < f.f_stop) || f.n_points < 2 {
            out.push("fit: f_start < f_stop and n_points >= 2".into());
        }
        if f.max_iter == 0 {
            out.push("fit.max_iter must be >= 1".into());
        }
        if !f.initial.values().all(|v| v.is_finite()) {
            out.push("fit.initial values must be finite".into());
        }

        positive_list(&mut out, "powerlaw.powers", &self.powerlaw.powers);
        positive_list(&mut out, "fig2.powers", &self.fig2.powers);
        if !self.fig2.detuning.is_finite() {
            out.push("fig2.detuning must be finite".into());
        }
        out
    }

    pub fn cavity(&self) -> CavityParams {
        let c = &self.cavity;
        CavityParams {
            kappa: c.kappa,
            kappa_m: c.kappa_m,
            f_c: c.f_c,
            wavelength_nm: c.wavelength_nm,
        }
    }

    /// Panics if the required QD keys are missing; only call on validated configs.
    pub fn qd(&self) -> QdParams {
        let q = &self.qd;
        let mut qd = QdParams::new(
            q.f_0,
            q.cooperativity.expect("validated config"),
            q.gamma.expect("validated config"),
        );
        qd.mix_weight = q.mix_weight;
        qd
    }

    pub fn feedback(&self) -> FeedbackModel {
        let f = &self.feedback;
        FeedbackModel {
            beta: f.beta,
            calibration: match f.alpha {
                Some(alpha) => Calibration::Fixed { alpha },
                None => Calibration::PowerLaw {
                    coefficient: f.coefficient,
                },
            },
        }
    }

    pub fn feedback_at(&self, p_in: f64) -> FeedbackParams {
        self.feedback().at_power(p_in, self.cavity().eta_out())
    }

    pub fn system(&self) -> System {
        System {
            solver: self.solver,
            ..System::new(self.cavity(), self.qd(), self.feedback())
        }
    }

    pub fn stark(&self) -> StarkMap {
        StarkMap {
            slope: self.stark.slope,
            v_ref: self.stark.v_ref,
            f_ref: self.stark.f_ref,
        }
    }

    pub fn charge_model(&self) -> ChargeModel {
        ChargeModel {
            gamma_c: self.charge.gamma_c,
            beta: self.charge.beta.unwrap_or(self.feedback.beta),
            q0: self.charge.q0,
        }
    }

    pub fn schedule(&self) -> Result<PumpSchedule, qdfeedback::error::ChargeError> {
        PumpSchedule::new(
            self.dynamics
                .segments
                .iter()
                .map(|s| PumpSegment {
                    t_start: s.t_start,
                    t_end: s.t_end,
                    power: s.power,
                })
                .collect(),
        )
    }

    pub fn scan_spec(&self) -> SweepSpec {
        let s = &self.scan;
        SweepSpec::new(s.f_start, s.f_stop, s.n_points, Direction::Up, s.p_in)
    }

    pub fn two_laser_spec(&self) -> TwoLaserSpec {
        let t = &self.twolaser;
        TwoLaserSpec {
            p_pump: t.p_pump,
            probe: SweepSpec::new(t.probe_start, t.probe_stop, t.probe_points, Direction::Up, t.p_probe),
            pump_sees_qd: t.pump_sees_qd,
        }
    }

    pub fn pump_grid(&self) -> Vec<f64> {
        let t = &self.twolaser;
        let step = (t.pump_stop - t.pump_start) / (t.pump_points - 1) as f64;
        (0..t.pump_points)
            .map(|i| if i + 1 == t.pump_points { t.pump_stop } else { t.pump_start + step * i as f64 })
            .collect()
    }

    pub fn fig2_spec(&self, p_in: f64) -> SweepSpec {
        let f = &self.fig2;
        SweepSpec::new(f.f_start, f.f_stop, f.n_points, Direction::Up, p_in)
    }

    /// Resolved config as TOML; loading it reproduces this config exactly.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }
}
