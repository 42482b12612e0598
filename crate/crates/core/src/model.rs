//! Dipole-in-cavity transmission and reflection.
//!
//! Frequencies are linear GHz offsets from a common reference; rates (`kappa`,
//! `kappa_m`, `gamma`) are angular, in ns⁻¹. A linear offset `δf` in GHz maps
//! to `2π·δf` rad/ns, which is what gets divided by the rates.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Violation};

/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Field transmission amplitude `t` (dimensionless).
pub type Amplitude = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    /// Total intensity damping rate, ns⁻¹.
    pub kappa: f64,
    /// Loss rate through one mirror, ns⁻¹.
    pub kappa_m: f64,
    /// Cavity center, GHz offset.
    pub f_c: f64,
    /// Only used to convert power to photon flux.
    pub wavelength_nm: f64,
}

impl Default for CavityParams {
    fn default() -> Self {
        Self {
            kappa: 77.0,
            kappa_m: 11.0,
            f_c: 0.0,
            wavelength_nm: 940.0,
        }
    }
}

impl CavityParams {
    /// Output coupling efficiency `2·κ_m/κ`.
    pub fn eta_out(&self) -> f64 {
        2.0 * self.kappa_m / self.kappa
    }

    /// Cavity with the same linewidth and center but a given output coupling.
    pub fn with_eta_out(self, eta_out: f64) -> Self {
        Self {
            kappa_m: 0.5 * eta_out * self.kappa,
            ..self
        }
    }

    /// Full width at half maximum of the empty-cavity intensity response, GHz.
    pub fn linewidth_ghz(&self) -> f64 {
        self.kappa / (2.0 * PI)
    }

    /// Optical angular frequency at `wavelength_nm`, rad/ns.
    pub fn optical_angular_frequency(&self) -> f64 {
        2.0 * PI * SPEED_OF_LIGHT / (self.wavelength_nm * 1e-9) * 1e-9
    }

    pub fn q_factor(&self) -> f64 {
        self.optical_angular_frequency() / self.kappa
    }

    /// Photon energy `hc/λ` in joules.
    pub fn photon_energy(&self) -> f64 {
        PLANCK * SPEED_OF_LIGHT / (self.wavelength_nm * 1e-9)
    }

    /// Relative cavity detuning `Δ = 2(ω − ω_c)/κ`.
    pub fn relative_detuning(&self, f_laser: f64) -> f64 {
        4.0 * PI * (f_laser - self.f_c) / self.kappa
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let ty = "CavityParams";
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            out.push(Violation::new(ty, "kappa must be finite and > 0"));
        }
        if !(self.kappa_m.is_finite() && self.kappa_m > 0.0 && self.kappa_m <= 0.5 * self.kappa) {
            out.push(Violation::new(ty, "kappa_m must satisfy 0 < kappa_m <= kappa/2"));
        }
        if !self.f_c.is_finite() {
            out.push(Violation::new(ty, "f_c must be finite"));
        }
        if !(self.wavelength_nm.is_finite() && self.wavelength_nm > 0.0) {
            out.push(Violation::new(ty, "wavelength_nm must be finite and > 0"));
        }
        out
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        first_violation(self.violations())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QdParams {
    /// QD transition frequency at vanishing intracavity intensity, GHz offset.
    pub f_0: f64,
    pub cooperativity: f64,
    /// Dephasing rate, ns⁻¹.
    pub gamma: f64,
    /// Weight `x` of the coupled-cavity reflectivity in `R′ = xR + (1−x)R₀`.
    pub mix_weight: f64,
}

impl QdParams {
    pub fn new(f_0: f64, cooperativity: f64, gamma: f64) -> Self {
        Self {
            f_0,
            cooperativity,
            gamma,
            mix_weight: DEFAULT_MIX_WEIGHT,
        }
    }

    /// Same QD with the coupling switched off.
    pub fn uncoupled(self) -> Self {
        Self {
            cooperativity: 0.0,
            ..self
        }
    }

    /// Relative QD detuning `Δ′ = (ω − ω_QD)/γ`.
    pub fn relative_detuning(&self, f_laser: f64, f_qd: f64) -> f64 {
        2.0 * PI * (f_laser - f_qd) / self.gamma
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let ty = "QdParams";
        if !self.f_0.is_finite() {
            out.push(Violation::new(ty, "f_0 must be finite"));
        }
        if !(self.cooperativity.is_finite() && self.cooperativity >= 0.0) {
            out.push(Violation::new(ty, "cooperativity must be finite and >= 0"));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            out.push(Violation::new(ty, "gamma must be finite and > 0"));
        }
        if !(0.0..=1.0).contains(&self.mix_weight) {
            out.push(Violation::new(ty, "mix_weight must lie in [0, 1]"));
        }
        out
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        first_violation(self.violations())
    }
}

/// Saturation mixing weight used throughout the simulations.
pub const DEFAULT_MIX_WEIGHT: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    /// Incident power, pW.
    pub p_in: f64,
    /// Laser frequency, GHz offset.
    pub f_laser: f64,
}

impl DriveParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut v = Vec::new();
        if !(self.p_in.is_finite() && self.p_in >= 0.0) {
            v.push(Violation::new("DriveParams", "p_in must be finite and >= 0"));
        }
        if !self.f_laser.is_finite() {
            v.push(Violation::new("DriveParams", "f_laser must be finite"));
        }
        first_violation(v)
    }
}

fn first_violation(v: Vec<Violation>) -> Result<(), ModelError> {
    match v.into_iter().next() {
        Some(v) => Err(ModelError::Invalid(v)),
        None => Ok(()),
    }
}

/// Transmission amplitude of the cavity with the dipole at `f_qd`:
///
/// `t = η_out / (1 − iΔ + 2C/(1 − iΔ′))`.
pub fn transmission_amplitude(
    cav: &CavityParams,
    qd: &QdParams,
    f_laser: f64,
    f_qd: f64,
) -> Result<Amplitude, ModelError> {
    if !f_laser.is_finite() || !f_qd.is_finite() {
        return Err(ModelError::NonFinite("laser or QD frequency"));
    }
    let delta = cav.relative_detuning(f_laser);
    let mut denom = Complex64::new(1.0, -delta);
    if qd.cooperativity != 0.0 {
        let delta_qd = qd.relative_detuning(f_laser, f_qd);
        denom += 2.0 * qd.cooperativity / Complex64::new(1.0, -delta_qd);
    }
    let t = cav.eta_out() / denom;
    if t.is_finite() {
        Ok(t)
    } else {
        Err(ModelError::NonFinite("transmission amplitude"))
    }
}

/// `R = |1 − t|²`. Not clamped; values above 1 are possible for some `t`.
pub fn reflectivity(t: Amplitude) -> f64 {
    (Complex64::new(1.0, 0.0) - t).norm_sqr()
}

/// `T = |t|²`.
pub fn transmittivity(t: Amplitude) -> f64 {
    t.norm_sqr()
}

/// Saturation-weighted reflectivity `x·R + (1 − x)·R₀`, where `R₀` is the
/// empty-cavity reflectivity at the same laser frequency.
pub fn mixed_reflectivity(
    cav: &CavityParams,
    qd: &QdParams,
    f_laser: f64,
    f_qd: f64,
) -> Result<f64, ModelError> {
    let x = qd.mix_weight;
    let coupled = reflectivity(transmission_amplitude(cav, qd, f_laser, f_qd)?);
    if x == 1.0 {
        return Ok(coupled);
    }
    let bare = reflectivity(transmission_amplitude(cav, &qd.uncoupled(), f_laser, f_qd)?);
    Ok(x * coupled + (1.0 - x) * bare)
}

/// Mean intracavity photon number `P_out / (κ_m·ħω)` for an output power in pW.
pub fn mean_photon_number(cav: &CavityParams, p_out_pw: f64) -> f64 {
    let p_out_w = p_out_pw * 1e-12;
    let kappa_m_per_s = cav.kappa_m * 1e9;
    p_out_w / (kappa_m_per_s * cav.photon_energy())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cav_with_eta(eta: f64) -> CavityParams {
        CavityParams::default().with_eta_out(eta)
    }

    /// Laser offset that gives a chosen relative cavity detuning.
    fn laser_at_delta(cav: &CavityParams, delta: f64) -> f64 {
        cav.f_c + delta * cav.kappa / (4.0 * PI)
    }

    #[test]
    fn empty_cavity_on_resonance() {
        let cav = cav_with_eta(0.3);
        let qd = QdParams::new(0.0, 0.0, 5.0);
        let t = transmission_amplitude(&cav, &qd, 0.0, 0.0).unwrap();
        assert!((t.re - 0.3).abs() < 1e-15 && t.im.abs() < 1e-15);
        assert!((reflectivity(t) - 0.49).abs() < 1e-15);
        assert!((transmittivity(t) - 0.09).abs() < 1e-15);
    }

    #[test]
    fn coupled_fully_resonant() {
        let cav = cav_with_eta(0.3);
        let qd = QdParams::new(0.0, 1.0, 5.0);
        let t = transmission_amplitude(&cav, &qd, 0.0, 0.0).unwrap();
        assert!((t.re - 0.1).abs() < 1e-15 && t.im.abs() < 1e-15);
        assert!((reflectivity(t) - 0.81).abs() < 1e-14);
    }

    #[test]
    fn empty_cavity_at_unit_detuning() {
        let cav = cav_with_eta(0.3);
        let qd = QdParams::new(0.0, 0.0, 5.0);
        let f = laser_at_delta(&cav, 1.0);
        let t = transmission_amplitude(&cav, &qd, f, 0.0).unwrap();
        // 0.3 / (1 - i) evaluated by hand
        assert!((t.re - 0.15).abs() < 1e-14);
        assert!((t.im - 0.15).abs() < 1e-14);
        assert!((reflectivity(t) - 0.745).abs() < 1e-14);
        assert!((transmittivity(t) - 0.045).abs() < 1e-14);
    }

    #[test]
    fn transmittivity_of_zero() {
        assert_eq!(transmittivity(Complex64::new(0.0, 0.0)), 0.0);
    }

    #[test]
    fn mixing_endpoints_and_interior() {
        let cav = cav_with_eta(0.3);
        let mut qd = QdParams::new(0.0, 1.0, 5.0);
        qd.mix_weight = 0.8;
        let r = mixed_reflectivity(&cav, &qd, 0.0, 0.0).unwrap();
        assert!((r - 0.746).abs() < 1e-14);

        qd.mix_weight = 1.0;
        let r1 = mixed_reflectivity(&cav, &qd, 1.3, 0.4).unwrap();
        let direct = reflectivity(transmission_amplitude(&cav, &qd, 1.3, 0.4).unwrap());
        assert_eq!(r1, direct);

        qd.mix_weight = 0.0;
        let r0 = mixed_reflectivity(&cav, &qd, 1.3, 0.4).unwrap();
        let bare = reflectivity(transmission_amplitude(&cav, &qd.uncoupled(), 1.3, 0.4).unwrap());
        assert!((r0 - bare).abs() < 1e-15);
    }

    #[test]
    fn non_finite_frequency_is_rejected() {
        let cav = CavityParams::default();
        let qd = QdParams::new(0.0, 1.0, 5.0);
        assert!(transmission_amplitude(&cav, &qd, f64::NAN, 0.0).is_err());
        assert!(transmission_amplitude(&cav, &qd, 0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn photon_number() {
        let cav = CavityParams::default();
        assert_eq!(mean_photon_number(&cav, 0.0), 0.0);
        let n = mean_photon_number(&cav, 0.99);
        assert!((n - 4e-4).abs() / 4e-4 < 0.1, "{n}");
        let n = mean_photon_number(&cav, 2.32);
        assert!((n - 1.0e-3).abs() / 1.0e-3 < 0.01, "{n}");
    }

    #[test]
    fn derived_cavity_quantities() {
        let cav = CavityParams::default();
        assert!((cav.eta_out() - 22.0 / 77.0).abs() < 1e-15);
        assert!((cav.q_factor() - 2.6e4).abs() / 2.6e4 < 0.05);
    }

    #[test]
    fn violations_are_collected() {
        let cav = CavityParams {
            kappa: 10.0,
            kappa_m: 6.0,
            f_c: f64::NAN,
            wavelength_nm: 940.0,
        };
        assert_eq!(cav.violations().len(), 2);
        let qd = QdParams {
            f_0: 0.0,
            cooperativity: -1.0,
            gamma: 0.0,
            mix_weight: 1.5,
        };
        assert_eq!(qd.violations().len(), 3);
        assert!(matches!(qd.validate(), Err(ModelError::Invalid(_))));
    }
}
