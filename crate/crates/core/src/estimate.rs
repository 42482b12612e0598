//! Spectrum fitting and power-law regression.
//!
//! [`fit_spectrum`] is a Levenberg–Marquardt least-squares fit of the
//! low-power reflection lineshape (no feedback) to measured samples. Positive
//! parameters are fitted in log space; every parameter is kept inside its
//! bounds by projection after each step.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::FitError;
use crate::model::{mixed_reflectivity, CavityParams, QdParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitParam {
    Cooperativity,
    Gamma,
    Kappa,
    EtaOut,
    CavityCenter,
    QdCenter,
    MixWeight,
}

impl FitParam {
    pub const ALL: [FitParam; 7] = [
        FitParam::Cooperativity,
        FitParam::Gamma,
        FitParam::Kappa,
        FitParam::EtaOut,
        FitParam::CavityCenter,
        FitParam::QdCenter,
        FitParam::MixWeight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FitParam::Cooperativity => "cooperativity",
            FitParam::Gamma => "gamma",
            FitParam::Kappa => "kappa",
            FitParam::EtaOut => "eta_out",
            FitParam::CavityCenter => "f_c",
            FitParam::QdCenter => "f_0",
            FitParam::MixWeight => "mix_weight",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    fn log_scaled(self) -> bool {
        matches!(
            self,
            FitParam::Cooperativity | FitParam::Gamma | FitParam::Kappa | FitParam::EtaOut
        )
    }

    fn default_bounds(self) -> (f64, f64) {
        match self {
            FitParam::Cooperativity => (1e-12, 1e3),
            FitParam::Gamma | FitParam::Kappa => (1e-6, 1e6),
            FitParam::EtaOut => (1e-9, 1.0),
            FitParam::MixWeight => (0.0, 1.0),
            FitParam::CavityCenter | FitParam::QdCenter => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    fn to_internal(self, v: f64) -> f64 {
        if self.log_scaled() {
            v.ln()
        } else {
            v
        }
    }

    fn to_natural(self, u: f64) -> f64 {
        if self.log_scaled() {
            u.exp()
        } else {
            u
        }
    }

    pub fn get(self, cav: &CavityParams, qd: &QdParams) -> f64 {
        match self {
            FitParam::Cooperativity => qd.cooperativity,
            FitParam::Gamma => qd.gamma,
            FitParam::Kappa => cav.kappa,
            FitParam::EtaOut => cav.eta_out(),
            FitParam::CavityCenter => cav.f_c,
            FitParam::QdCenter => qd.f_0,
            FitParam::MixWeight => qd.mix_weight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeParam {
    pub param: FitParam,
    pub initial: f64,
    pub lower: f64,
    pub upper: f64,
}

impl FreeParam {
    pub fn new(param: FitParam, initial: f64) -> Self {
        let (lower, upper) = param.default_bounds();
        Self {
            param,
            initial,
            lower,
            upper,
        }
    }

    pub fn bounded(param: FitParam, initial: f64, lower: f64, upper: f64) -> Self {
        Self {
            param,
            initial,
            lower,
            upper,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub max_iter: usize,
    pub initial_damping: f64,
    pub rel_ssr_tol: f64,
    pub step_tol: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            max_iter: 200,
            initial_damping: 1e-3,
            rel_ssr_tol: 1e-10,
            step_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitProblem {
    /// Laser frequencies, GHz.
    pub frequencies: Vec<f64>,
    /// Measured reflectivity at each frequency.
    pub reflectivity: Vec<f64>,
    /// Values of every parameter that is not fitted.
    pub cavity: CavityParams,
    pub qd: QdParams,
    pub free: Vec<FreeParam>,
    pub settings: FitSettings,
}

impl FitProblem {
    pub fn new(
        samples: &[(f64, f64)],
        cavity: CavityParams,
        qd: QdParams,
        free: Vec<FreeParam>,
    ) -> Self {
        Self {
            frequencies: samples.iter().map(|s| s.0).collect(),
            reflectivity: samples.iter().map(|s| s.1).collect(),
            cavity,
            qd,
            free,
            settings: FitSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<(), FitError> {
        let bad = |m: String| Err(FitError::InvalidProblem(m));
        if self.frequencies.len() != self.reflectivity.len() {
            return bad("frequency and reflectivity columns differ in length".into());
        }
        if self.free.is_empty() {
            return bad("no free parameters".into());
        }
        if self.frequencies.len() < 2 * self.free.len() {
            return bad(format!(
                "{} samples for {} free parameters; need at least twice as many",
                self.frequencies.len(),
                self.free.len()
            ));
        }
        if self
            .frequencies
            .iter()
            .chain(&self.reflectivity)
            .any(|v| !v.is_finite())
        {
            return bad("data contain non-finite values".into());
        }
        for (i, f) in self.free.iter().enumerate() {
            if self.free[..i].iter().any(|g| g.param == f.param) {
                return bad(format!("{} listed twice", f.param.name()));
            }
            if f.lower.is_nan() || f.upper.is_nan() || f.lower >= f.upper {
                return bad(format!("{}: lower bound must be below upper bound", f.param.name()));
            }
            if f.param.log_scaled() && f.lower <= 0.0 {
                return bad(format!("{}: lower bound must be > 0", f.param.name()));
            }
            if !(f.initial.is_finite() && f.initial >= f.lower && f.initial <= f.upper) {
                return bad(format!("{}: initial guess outside bounds", f.param.name()));
            }
        }
        Ok(())
    }

    /// Model parameters with the fitted values substituted.
    pub fn fitted_params(&self, result: &FitResult) -> (CavityParams, QdParams) {
        let values: Vec<f64> = self
            .free
            .iter()
            .map(|f| result.get(f.param).unwrap_or(f.initial))
            .collect();
        self.apply(&values)
    }

    fn apply(&self, natural: &[f64]) -> (CavityParams, QdParams) {
        let mut cav = self.cavity;
        let mut qd = self.qd;
        let mut eta = cav.eta_out();
        for (f, &v) in self.free.iter().zip(natural) {
            match f.param {
                FitParam::Cooperativity => qd.cooperativity = v,
                FitParam::Gamma => qd.gamma = v,
                FitParam::Kappa => cav.kappa = v,
                FitParam::EtaOut => eta = v,
                FitParam::CavityCenter => cav.f_c = v,
                FitParam::QdCenter => qd.f_0 = v,
                FitParam::MixWeight => qd.mix_weight = v,
            }
        }
        (cav.with_eta_out(eta), qd)
    }

    fn natural(&self, u: &DVector<f64>) -> Vec<f64> {
        self.free
            .iter()
            .zip(u.iter())
            .map(|(f, &u)| f.param.to_natural(u))
            .collect()
    }

    fn residuals(&self, u: &DVector<f64>) -> Option<DVector<f64>> {
        let (cav, qd) = self.apply(&self.natural(u));
        let mut r = DVector::zeros(self.frequencies.len());
        for (i, (&f, &data)) in self.frequencies.iter().zip(&self.reflectivity).enumerate() {
            let model = mixed_reflectivity(&cav, &qd, f, qd.f_0).ok()?;
            if !model.is_finite() {
                return None;
            }
            r[i] = model - data;
        }
        Some(r)
    }

    fn project(&self, u: &mut DVector<f64>) {
        for (f, u) in self.free.iter().zip(u.iter_mut()) {
            let lo = if f.param.log_scaled() { f.lower.ln() } else { f.lower };
            let hi = if f.param.log_scaled() { f.upper.ln() } else { f.upper };
            *u = u.clamp(lo, hi);
        }
    }

    fn jacobian(&self, u: &DVector<f64>, r: &DVector<f64>) -> Option<DMatrix<f64>> {
        let mut jac = DMatrix::zeros(r.len(), u.len());
        for j in 0..u.len() {
            let h = (1e-6 * u[j].abs()).max(1e-9);
            let mut probe = u.clone();
            probe[j] += h;
            let rp = self.residuals(&probe)?;
            jac.set_column(j, &((rp - r) / h));
        }
        Some(jac)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub param: FitParam,
    pub value: f64,
    /// Infinite when the parameter is not identifiable from the data.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub estimates: Vec<Estimate>,
    pub ssr: f64,
    pub initial_ssr: f64,
    /// SSR after every accepted step, starting with the initial guess.
    pub ssr_history: Vec<f64>,
    pub converged: bool,
    /// Set when the Jacobian is (numerically) rank deficient at the optimum.
    pub degenerate: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn get(&self, param: FitParam) -> Option<f64> {
        self.estimates.iter().find(|e| e.param == param).map(|e| e.value)
    }

    pub fn std_error(&self, param: FitParam) -> Option<f64> {
        self.estimates
            .iter()
            .find(|e| e.param == param)
            .map(|e| e.std_error)
    }
}

/// Least-squares fit of `R′(f)` to the data in `problem`.
pub fn fit_spectrum(problem: &FitProblem) -> Result<FitResult, FitError> {
    problem.validate()?;
    let s = &problem.settings;
    let mut u = DVector::from_iterator(
        problem.free.len(),
        problem.free.iter().map(|f| f.param.to_internal(f.initial)),
    );
    problem.project(&mut u);
    let mut r = problem
        .residuals(&u)
        .ok_or_else(|| FitError::InvalidProblem("model is not finite at the initial guess".into()))?;
    let mut ssr = r.norm_squared();
    let initial_ssr = ssr;
    let mut history = vec![ssr];
    let mut lambda = s.initial_damping;
    let mut converged = ssr == 0.0;
    let mut iterations = 0;

    while !converged && iterations < s.max_iter {
        iterations += 1;
        let Some(jac) = problem.jacobian(&u, &r) else {
            break;
        };
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        let max_diag = jtj.diagonal().max();
        let mut accepted = false;
        while lambda < 1e16 {
            let mut damped = jtj.clone();
            for i in 0..damped.nrows() {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12 * max_diag).max(f64::MIN_POSITIVE);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-&grad));
            let mut trial = &u + &delta;
            problem.project(&mut trial);
            let trial_r = problem.residuals(&trial);
            match trial_r {
                Some(tr) if tr.norm_squared() < ssr => {
                    let new_ssr = tr.norm_squared();
                    let rel = (ssr - new_ssr) / ssr;
                    let step = (&trial - &u).norm();
                    u = trial;
                    r = tr;
                    ssr = new_ssr;
                    history.push(ssr);
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    if rel < s.rel_ssr_tol || step < s.step_tol || ssr == 0.0 {
                        converged = true;
                    }
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        if !accepted {
            // no descent direction left at any damping: stationary point
            converged = true;
        }
    }

    let (std_errors_internal, degenerate) = match problem.jacobian(&u, &r) {
        Some(jac) => internal_std_errors(&jac, ssr),
        None => (vec![f64::INFINITY; u.len()], true),
    };
    let natural = problem.natural(&u);
    let estimates = problem
        .free
        .iter()
        .zip(&natural)
        .zip(&std_errors_internal)
        .map(|((f, &value), &se)| Estimate {
            param: f.param,
            value,
            std_error: if f.param.log_scaled() { se * value } else { se },
        })
        .collect();

    Ok(FitResult {
        estimates,
        ssr,
        initial_ssr,
        ssr_history: history,
        converged,
        degenerate,
        iterations,
    })
}

fn internal_std_errors(jac: &DMatrix<f64>, ssr: f64) -> (Vec<f64>, bool) {
    let (m, n) = jac.shape();
    let jtj = jac.transpose() * jac;
    // scale to unit diagonal before judging conditioning
    let d: Vec<f64> = (0..n).map(|i| jtj[(i, i)].sqrt()).collect();
    if d.iter().any(|&v| v == 0.0 || !v.is_finite()) {
        return (vec![f64::INFINITY; n], true);
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| jtj[(i, j)] / (d[i] * d[j]));
    let eig = scaled.clone().symmetric_eigen();
    let min = eig.eigenvalues.min();
    let max = eig.eigenvalues.max();
    let degenerate = min.is_nan() || max.is_nan() || min <= 1e-12 * max;
    let sigma_sq = if m > n { ssr / (m - n) as f64 } else { f64::NAN };
    let se = match scaled.try_inverse() {
        Some(inv) if !degenerate => (0..n)
            .map(|i| (sigma_sq * inv[(i, i)]).sqrt() / d[i])
            .collect(),
        _ => vec![f64::INFINITY; n],
    };
    (se, degenerate)
}

/// `y = amplitude · x^exponent`, from least squares on `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub amplitude: f64,
    pub r_squared: f64,
}

pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<PowerLawFit, FitError> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(FitError::Degenerate);
    }
    if let Some(index) = xs
        .iter()
        .zip(ys)
        .position(|(&x, &y)| !(x > 0.0 && y > 0.0) || !x.is_finite() || !y.is_finite())
    {
        return Err(FitError::NonPositive { index });
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(FitError::Degenerate);
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(PowerLawFit {
        exponent: slope,
        amplitude: intercept.exp(),
        r_squared,
    })
}
