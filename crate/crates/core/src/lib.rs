//! Simulation and estimation for a quantum dot in a micropillar cavity whose
//! transition blueshifts with the intracavity intensity through charges
//! trapped in a long-lived memory.
//!
//! - [`model`]: transmission/reflection of the dipole-in-cavity system.
//! - [`feedback`]: self-consistent QD frequency and branch enumeration.
//! - [`scan`]: laser sweeps, hysteresis, voltage series, pump–probe maps.
//! - [`charge`]: time-domain charge build-up and decay.
//! - [`estimate`]: spectrum fits and power-law regression.

pub mod charge;
pub mod error;
pub mod estimate;
pub mod feedback;
pub mod model;
pub mod scan;

pub use charge::{
    equilibrium_charge, integrate, resonance_voltage_trace, steady_state_voltage_curve,
    ChargeModel, ChargeTrajectory, PumpSchedule, PumpSegment,
};
pub use error::{ChargeError, FitError, ModelError, ScanError, SolveError, Violation};
pub use estimate::{
    fit_power_law, fit_spectrum, FitParam, FitProblem, FitResult, FitSettings, FreeParam,
    PowerLawFit,
};
pub use feedback::{
    find_all_roots, qd_shift, self_consistency_residual, track_branch, Calibration,
    FeedbackModel, FeedbackParams, FixedPointResult, SolverSettings,
};
pub use model::{
    mean_photon_number, mixed_reflectivity, reflectivity, transmission_amplitude,
    transmittivity, Amplitude, CavityParams, DriveParams, QdParams,
};
pub use scan::{
    hysteresis_width, lorentzian_powerlaw_reference, sweep, sweep_pair, two_laser_map,
    voltage_scan, Direction, Spectrum, SpectrumPoint, StarkMap, SweepPair, SweepSpec, System,
    TwoLaserMap, TwoLaserSpec,
};
