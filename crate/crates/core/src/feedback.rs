//! Self-consistent QD frequency under intensity-dependent blueshift.
//!
//! The QD sits at `f_qd = f_0 + α·|t(f_qd)|^{2β}`. Since `t` itself depends
//! on `f_qd`, the equation can have several solutions at one laser
//! frequency. [`find_all_roots`] brackets every sign change of the residual
//! `g(f) = f − f_0 − α|t(f)|^{2β}` on a grid and bisects each bracket;
//! [`track_branch`] picks the solution closest to the previous one, which is
//! what turns multiple roots into sweep-direction-dependent spectra.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, SolveError, Violation};
use crate::model::{transmission_amplitude, transmittivity, CavityParams, QdParams};

/// Shift at unit normalised intracavity power, GHz.
pub const ALPHA_CALIBRATION_GHZ: f64 = 1.5;
/// Power-law exponent of the charge-induced blueshift.
pub const DEFAULT_BETA: f64 = 0.35;

/// Blueshift law at one incident power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackParams {
    /// Blueshift amplitude, GHz.
    pub alpha: f64,
    pub beta: f64,
    /// Incident power the amplitude belongs to, pW.
    pub p_in: f64,
}

impl FeedbackParams {
    /// `α = 1.5·(P_in/η_out²)^β` GHz with `P_in` in pW.
    pub fn calibrated(p_in: f64, eta_out: f64, beta: f64) -> Self {
        Self::with_coefficient(ALPHA_CALIBRATION_GHZ, p_in, eta_out, beta)
    }

    pub fn with_coefficient(coefficient: f64, p_in: f64, eta_out: f64, beta: f64) -> Self {
        Self {
            alpha: coefficient * (p_in / (eta_out * eta_out)).powf(beta),
            beta,
            p_in,
        }
    }

    pub fn none() -> Self {
        Self {
            alpha: 0.0,
            beta: DEFAULT_BETA,
            p_in: 0.0,
        }
    }

    /// Largest possible shift, reached when `|t| = η_out` (empty cavity on
    /// resonance).
    pub fn peak_shift(&self, eta_out: f64) -> f64 {
        qd_shift(self, eta_out * eta_out)
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let ty = "FeedbackParams";
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            out.push(Violation::new(ty, "alpha must be finite and >= 0"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            out.push(Violation::new(ty, "beta must satisfy 0 < beta < 1"));
        }
        if !(self.p_in.is_finite() && self.p_in >= 0.0) {
            out.push(Violation::new(ty, "p_in must be finite and >= 0"));
        }
        out
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self.violations().into_iter().next() {
            Some(v) => Err(ModelError::Invalid(v)),
            None => Ok(()),
        }
    }
}

/// How the blueshift amplitude follows the incident power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    /// `α = coefficient·(P_in/η_out²)^β`.
    PowerLaw { coefficient: f64 },
    /// `α` independent of power.
    Fixed { alpha: f64 },
}

/// Power-independent description of the feedback, turned into
/// [`FeedbackParams`] once the incident power is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackModel {
    pub beta: f64,
    pub calibration: Calibration,
}

impl Default for FeedbackModel {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA,
            calibration: Calibration::PowerLaw {
                coefficient: ALPHA_CALIBRATION_GHZ,
            },
        }
    }
}

impl FeedbackModel {
    pub fn fixed(alpha: f64, beta: f64) -> Self {
        Self {
            beta,
            calibration: Calibration::Fixed { alpha },
        }
    }

    pub fn at_power(&self, p_in: f64, eta_out: f64) -> FeedbackParams {
        match self.calibration {
            Calibration::PowerLaw { coefficient } => {
                FeedbackParams::with_coefficient(coefficient, p_in, eta_out, self.beta)
            }
            Calibration::Fixed { alpha } => FeedbackParams {
                alpha,
                beta: self.beta,
                p_in,
            },
        }
    }
}

/// Shift `α·(|t|²)^β` of the QD relative to `f_0`, GHz.
pub fn qd_shift(fb: &FeedbackParams, t_sq: f64) -> f64 {
    if t_sq <= 0.0 || fb.alpha == 0.0 {
        return 0.0;
    }
    fb.alpha * t_sq.powf(fb.beta)
}

/// `g(f) = f − f_0 − α|t(f)|^{2β}`, GHz.
pub fn self_consistency_residual(
    cav: &CavityParams,
    qd: &QdParams,
    fb: &FeedbackParams,
    f_laser: f64,
    f_qd_trial: f64,
) -> Result<f64, ModelError> {
    let t = transmission_amplitude(cav, qd, f_laser, f_qd_trial)?;
    Ok(f_qd_trial - qd.f_0 - qd_shift(fb, transmittivity(t)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Bracketing grid step, GHz.
    pub h_root: f64,
    /// Bound on `|g|` at an accepted root, GHz.
    pub tol_root: f64,
    /// Roots closer than this are merged, GHz.
    pub root_merge_tol: f64,
    /// Added above the analytic upper bound of the search interval, GHz.
    pub upper_margin: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            h_root: 0.01,
            tol_root: 1e-6,
            root_merge_tol: 1e-4,
            upper_margin: 1.0,
        }
    }
}

impl SolverSettings {
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let ty = "SolverSettings";
        for (v, rule) in [
            (self.h_root, "h_root must be finite and > 0"),
            (self.tol_root, "tol_root must be finite and > 0"),
            (self.root_merge_tol, "root_merge_tol must be finite and > 0"),
        ] {
            if !(v.is_finite() && v > 0.0) {
                out.push(Violation::new(ty, rule));
            }
        }
        if !(self.upper_margin.is_finite() && self.upper_margin >= 0.0) {
            out.push(Violation::new(ty, "upper_margin must be finite and >= 0"));
        }
        out
    }
}

/// All self-consistent QD frequencies at one laser frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    /// Ascending, GHz.
    pub roots: Vec<f64>,
    /// Index into `roots` of the branch-tracked solution.
    pub selected: usize,
    /// `|g|` at each root, GHz.
    pub residuals: Vec<f64>,
}

impl FixedPointResult {
    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    pub fn is_multistable(&self) -> bool {
        self.roots.len() > 1
    }

    pub fn selected_root(&self) -> f64 {
        self.roots[self.selected]
    }

    /// Select the root nearest `prev_f_qd` and return it.
    pub fn select_nearest(&mut self, prev_f_qd: f64) -> f64 {
        self.selected = nearest_index(&self.roots, prev_f_qd);
        self.roots[self.selected]
    }
}

fn nearest_index(roots: &[f64], target: f64) -> usize {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (i, &r) in roots.iter().enumerate() {
        let d = (r - target).abs();
        // strict comparison keeps the lower root on ties
        if d < best_dist {
            best = i;
            best_dist = d;
        }
    }
    best
}

/// The root nearest `prev_f_qd`; ties go to the lower root.
///
/// Panics if `result` holds no roots.
pub fn track_branch(prev_f_qd: f64, result: &FixedPointResult) -> f64 {
    result.roots[nearest_index(&result.roots, prev_f_qd)]
}

/// Search interval `[f_0, f_0 + α·max(1, η_out²)^β + margin]`.
pub fn search_interval(
    cav: &CavityParams,
    qd: &QdParams,
    fb: &FeedbackParams,
    settings: &SolverSettings,
) -> (f64, f64) {
    let eta_sq = cav.eta_out().powi(2);
    let upper = fb.alpha * eta_sq.max(1.0).powf(fb.beta);
    (qd.f_0, qd.f_0 + upper + settings.upper_margin)
}

/// Enumerate every self-consistent QD frequency at `f_laser`.
pub fn find_all_roots(
    cav: &CavityParams,
    qd: &QdParams,
    fb: &FeedbackParams,
    f_laser: f64,
    settings: &SolverSettings,
) -> Result<FixedPointResult, SolveError> {
    let (lo, hi) = search_interval(cav, qd, fb, settings);
    let g = |f: f64| -> Result<f64, SolveError> {
        let v = self_consistency_residual(cav, qd, fb, f_laser, f)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(SolveError::NonFiniteResidual { f_qd: f })
        }
    };

    let n_cells = ((hi - lo) / settings.h_root).ceil().max(1.0) as usize;
    let node = |i: usize| {
        if i == n_cells {
            hi
        } else {
            lo + i as f64 * settings.h_root
        }
    };

    let mut roots: Vec<(f64, f64)> = Vec::new();
    let mut x_prev = node(0);
    let mut g_prev = g(x_prev)?;
    if g_prev == 0.0 {
        roots.push((x_prev, 0.0));
    }
    for i in 1..=n_cells {
        let x = node(i);
        let gx = g(x)?;
        if gx == 0.0 {
            roots.push((x, 0.0));
        } else if g_prev != 0.0 && (g_prev < 0.0) != (gx < 0.0) {
            roots.push(refine(&g, x_prev, g_prev, x, gx, settings.tol_root)?);
        }
        x_prev = x;
        g_prev = gx;
    }

    if roots.is_empty() {
        return Err(SolveError::NoRoot { lo, hi });
    }

    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(roots.len());
    for (r, res) in roots {
        match merged.last_mut() {
            Some(last) if r - last.0 <= settings.root_merge_tol => {
                if res < last.1 {
                    *last = (r, res);
                }
            }
            _ => merged.push((r, res)),
        }
    }

    let (roots, residuals) = merged.into_iter().unzip();
    Ok(FixedPointResult {
        roots,
        selected: 0,
        residuals,
    })
}

/// Bisection on a sign-changing bracket, finished with one secant step
/// inside the final bracket. Returns `(root, |g(root)|)`.
fn refine<G>(
    g: &G,
    mut a: f64,
    mut ga: f64,
    mut b: f64,
    mut gb: f64,
    tol_root: f64,
) -> Result<(f64, f64), SolveError>
where
    G: Fn(f64) -> Result<f64, SolveError>,
{
    let width_tol = tol_root * 1e-3;
    for _ in 0..200 {
        if b - a <= width_tol {
            break;
        }
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let gm = g(m)?;
        if gm == 0.0 {
            return Ok((m, 0.0));
        }
        if (gm < 0.0) == (ga < 0.0) {
            a = m;
            ga = gm;
        } else {
            b = m;
            gb = gm;
        }
    }
    let secant = (a - ga * (b - a) / (gb - ga)).clamp(a, b);
    let candidates = [secant, a, b];
    let mut best = (secant, f64::INFINITY);
    for x in candidates {
        let gx = g(x)?.abs();
        if gx < best.1 {
            best = (x, gx);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bistable() -> (CavityParams, QdParams, FeedbackParams) {
        let cav = CavityParams::default();
        let qd = QdParams::new(-15.0, 1.0, 5.0);
        let fb = FeedbackParams::calibrated(1000.0, cav.eta_out(), DEFAULT_BETA);
        (cav, qd, fb)
    }

    #[test]
    fn calibrated_amplitude() {
        let fb = FeedbackParams::calibrated(1.0, 0.3, 0.35);
        let oracle = 1.5 * (0.35 * (1.0f64 / 0.09).ln()).exp();
        assert!((fb.alpha - oracle).abs() < 1e-12);
        assert!((fb.alpha - 3.48).abs() < 0.01);
    }

    #[test]
    fn shift_values() {
        let fb = FeedbackParams::calibrated(1.0, 0.3, 0.35);
        assert_eq!(qd_shift(&fb, 0.0), 0.0);
        let oracle = |p: f64, t_sq: f64| 1.5 * (0.35 * (p * t_sq / 0.09).ln()).exp();
        assert!((qd_shift(&fb, 0.09) - oracle(1.0, 0.09)).abs() < 1e-12);
        assert!((qd_shift(&fb, 0.09) - 1.50).abs() < 1e-9);
        let fb = FeedbackParams::calibrated(1000.0, 0.3, 0.35);
        let s = qd_shift(&fb, 0.09);
        assert!((s - oracle(1000.0, 0.09)).abs() < 1e-10);
        assert!((s - 16.8).abs() < 0.05, "{s}");
    }

    #[test]
    fn residual_without_feedback() {
        let cav = CavityParams::default();
        let qd = QdParams::new(-2.0, 1.0, 5.0);
        let fb = FeedbackParams::none();
        assert_eq!(self_consistency_residual(&cav, &qd, &fb, 0.3, -2.0).unwrap(), 0.0);
        assert_eq!(self_consistency_residual(&cav, &qd, &fb, 0.3, -1.0).unwrap(), 1.0);
    }

    #[test]
    fn no_feedback_single_root_at_f0() {
        let cav = CavityParams::default();
        let qd = QdParams::new(-2.0, 1.0, 5.0);
        let res = find_all_roots(&cav, &qd, &FeedbackParams::none(), 1.0, &Default::default()).unwrap();
        assert_eq!(res.roots, vec![-2.0]);
    }

    fn dense_sign_changes(cav: &CavityParams, qd: &QdParams, fb: &FeedbackParams, f_laser: f64) -> usize {
        let step = 1e-3;
        let hi = qd.f_0 + fb.alpha;
        let n = ((hi - qd.f_0) / step).ceil() as usize;
        let mut count = 0;
        let mut prev = self_consistency_residual(cav, qd, fb, f_laser, qd.f_0).unwrap();
        for i in 1..=n {
            let x = qd.f_0 + i as f64 * step;
            let v = self_consistency_residual(cav, qd, fb, f_laser, x).unwrap();
            if (v < 0.0) != (prev < 0.0) {
                count += 1;
            }
            prev = v;
        }
        count
    }

    #[test]
    fn bistable_configuration_has_three_roots() {
        let (cav, qd, fb) = bistable();
        // laser red of the cavity, inside the window where up/down sweeps disagree
        let f_laser = -5.0;
        assert_eq!(dense_sign_changes(&cav, &qd, &fb, f_laser), 3);
        let res = find_all_roots(&cav, &qd, &fb, f_laser, &Default::default()).unwrap();
        assert_eq!(res.len(), 3);
        for (&r, &e) in res.roots.iter().zip(&res.residuals) {
            assert!(e <= 1e-6);
            assert!(r >= qd.f_0 && r <= qd.f_0 + fb.alpha);
        }
        assert!(res.roots.windows(2).all(|w| w[1] - w[0] > 1e-4));
    }

    #[test]
    fn weak_drive_has_single_root() {
        let cav = CavityParams::default();
        let fb = FeedbackParams::calibrated(1.0, cav.eta_out(), DEFAULT_BETA);
        for f_0 in [-10.0, -3.0, 0.0, 4.0] {
            let qd = QdParams::new(f_0, 1.0, 5.0);
            for f_laser in [-20.0, -5.0, -1.0, 0.0, 2.5, 10.0] {
                assert_eq!(dense_sign_changes(&cav, &qd, &fb, f_laser), 1);
                let res = find_all_roots(&cav, &qd, &fb, f_laser, &Default::default()).unwrap();
                assert_eq!(res.len(), 1, "f_0 {f_0} f_laser {f_laser}");
            }
        }
    }

    #[test]
    fn tracking_rules() {
        let single = FixedPointResult {
            roots: vec![1.0],
            selected: 0,
            residuals: vec![0.0],
        };
        assert_eq!(track_branch(-50.0, &single), 1.0);
        let three = FixedPointResult {
            roots: vec![1.0, 2.0, 3.0],
            selected: 0,
            residuals: vec![0.0; 3],
        };
        assert_eq!(track_branch(1.0, &three), 1.0);
        assert_eq!(track_branch(2.9, &three), 3.0);
        assert_eq!(track_branch(1.5, &three), 1.0);
        let mut r = three.clone();
        assert_eq!(r.select_nearest(2.5), 2.0);
        assert_eq!(r.selected, 1);
    }

    #[test]
    fn linear_residual_is_solved_to_rounding() {
        // with the QD uncoupled the shift does not depend on f_qd
        let cav = CavityParams::default();
        let qd = QdParams::new(-3.0, 0.0, 5.0);
        let fb = FeedbackParams::calibrated(1000.0, cav.eta_out(), DEFAULT_BETA);
        let res = find_all_roots(&cav, &qd, &fb, 2.0, &Default::default()).unwrap();
        let t = transmission_amplitude(&cav, &qd, 2.0, 0.0).unwrap();
        let exact = qd.f_0 + qd_shift(&fb, transmittivity(t));
        assert_eq!(res.len(), 1);
        assert!((res.roots[0] - exact).abs() < 1e-12);
    }

    #[test]
    fn selected_root_tends_to_f0_with_alpha() {
        let cav = CavityParams::default();
        let qd = QdParams::new(-4.0, 1.0, 5.0);
        let mut prev = f64::INFINITY;
        for alpha in [2.0, 1.0, 0.5, 0.1, 0.01, 0.0] {
            let fb = FeedbackParams { alpha, beta: 0.35, p_in: 1.0 };
            let res = find_all_roots(&cav, &qd, &fb, cav.f_c, &Default::default()).unwrap();
            let r = track_branch(qd.f_0, &res);
            assert!(r - qd.f_0 < prev);
            prev = r - qd.f_0;
        }
        assert_eq!(prev, 0.0);
    }
}
