//! One driver per experiment family. Drivers only compute; they return the
//! rendered files and leave writing to the caller.

use std::str::FromStr;

use qdfeedback::charge::time_grid;
use qdfeedback::scan::{f0_for_detuning, resonant_shift};
use qdfeedback::{
    equilibrium_charge, fit_power_law, fit_spectrum, integrate, lorentzian_powerlaw_reference,
    mixed_reflectivity, resonance_voltage_trace, steady_state_voltage_curve, sweep_pair,
    two_laser_map, voltage_scan, FeedbackParams, FitParam, FitProblem, FreeParam, PowerLawFit,
};
use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::Config;
use crate::csvio::{read_spectrum_csv, spectrum_rows, to_csv, SPECTRUM_HEADER};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Scan,
    TwoLaser,
    Dynamics,
    Fit,
    PowerLaw,
    Fig2,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Scan => "scan",
            Experiment::TwoLaser => "twolaser",
            Experiment::Dynamics => "dynamics",
            Experiment::Fit => "fit",
            Experiment::PowerLaw => "powerlaw",
            Experiment::Fig2 => "fig2",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Experiment::Scan,
            Experiment::TwoLaser,
            Experiment::Dynamics,
            Experiment::Fit,
            Experiment::PowerLaw,
            Experiment::Fig2,
        ]
        .into_iter()
        .find(|e| e.as_str() == s)
        .ok_or_else(|| format!("unknown experiment `{s}`"))
    }
}

/// Everything a run produces, ready to be written.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    /// `(file name, contents)`, including `summary.json`, `manifest.json` and
    /// `resolved_config.toml`.
    pub files: Vec<(String, String)>,
    pub summary: Value,
    pub warnings: Vec<String>,
}

struct Partial {
    files: Vec<(String, String)>,
    summary: Value,
    warnings: Vec<String>,
}

/// Run one experiment. The config's seed is made explicit (default 0) so the
/// resolved config reproduces the run.
pub fn run_experiment(cfg: &Config, exp: Experiment) -> Result<RunOutput, CliError> {
    let mut cfg = cfg.clone();
    cfg.seed = Some(cfg.seed.unwrap_or(0));
    let problems = cfg.violations();
    if !problems.is_empty() {
        return Err(CliError::Config(problems));
    }

    let Partial {
        mut files,
        summary,
        warnings,
    } = match exp {
        Experiment::Scan => scan(&cfg)?,
        Experiment::TwoLaser => twolaser(&cfg)?,
        Experiment::Dynamics => dynamics(&cfg)?,
        Experiment::Fit => fit(&cfg)?,
        Experiment::PowerLaw => powerlaw(&cfg)?,
        Experiment::Fig2 => fig2(&cfg)?,
    };
    for w in &warnings {
        log::warn!("{w}");
    }

    let mut outputs: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
    outputs.extend(["summary.json", "resolved_config.toml", "manifest.json"]);
    let manifest = json!({
        "tool": "qdfeedback",
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": exp.as_str(),
        "seed": cfg.seed,
        "uncalibrated": {
            "stark_slope": !cfg.stark.calibrated,
            "dynamics_units": !cfg.charge.calibrated,
        },
        "outputs": outputs,
        "warnings": warnings,
        "config": cfg,
    });
    files.push(("summary.json".into(), pretty(&summary)));
    files.push(("resolved_config.toml".into(), cfg.to_toml()));
    files.push(("manifest.json".into(), pretty(&manifest)));
    Ok(RunOutput {
        files,
        summary,
        warnings,
    })
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values always serialize");
    s.push('\n');
    s
}

fn scan(cfg: &Config) -> Result<Partial, CliError> {
    let sys = cfg.system();
    let spec = cfg.scan_spec();
    let eps = cfg.scan.eps_h;

    if cfg.scan.voltages.is_empty() {
        let pair = sweep_pair(&sys, &spec).map_err(CliError::numeric)?;
        let width = pair.hysteresis_width(eps).map_err(CliError::numeric)?;
        let max_diff = pair.max_difference().map_err(CliError::numeric)?;
        let summary = json!({
            "hysteresis_width_GHz": width,
            "max_abs_difference": max_diff,
            "peak_shift_GHz": { "up": pair.up.peak_shift(), "down": pair.down.peak_shift() },
            "eps_h": eps,
            "snapshot": pair.up.snapshot,
        });
        return Ok(Partial {
            files: vec![
                ("scan_up.csv".into(), to_csv(&SPECTRUM_HEADER, spectrum_rows(&pair.up))?),
                ("scan_down.csv".into(), to_csv(&SPECTRUM_HEADER, spectrum_rows(&pair.down))?),
            ],
            summary,
            warnings: Vec::new(),
        });
    }

    let stark = cfg.stark();
    let scans = voltage_scan(&sys, &stark, &cfg.scan.voltages, &spec).map_err(CliError::numeric)?;
    let mut rows = Vec::new();
    let mut table = Vec::new();
    let mut per_voltage = Vec::new();
    for vs in &scans {
        let width = vs.sweeps.hysteresis_width(eps).map_err(CliError::numeric)?;
        table.push((vs.voltage, vs.f_0, width));
        per_voltage.push(json!({
            "voltage_mV": vs.voltage,
            "f_0_GHz": vs.f_0,
            "hysteresis_width_GHz": width,
            "peak_shift_GHz": { "up": vs.sweeps.up.peak_shift(), "down": vs.sweeps.down.peak_shift() },
        }));
        for s in [&vs.sweeps.up, &vs.sweeps.down] {
            rows.extend(spectrum_rows(s).into_iter().map(|(f, r, q, d)| (f, r, q, d, vs.voltage)));
        }
    }
    let mut header = SPECTRUM_HEADER.to_vec();
    header.push("voltage_mV");
    Ok(Partial {
        files: vec![
            ("scan_spectra.csv".into(), to_csv(&header, rows)?),
            (
                "scan_voltages.csv".into(),
                to_csv(&["voltage_mV", "f_0_GHz", "hysteresis_width_GHz"], table)?,
            ),
        ],
        summary: json!({ "eps_h": eps, "voltages": per_voltage, "stark": stark }),
        warnings: Vec::new(),
    })
}

fn twolaser(cfg: &Config) -> Result<Partial, CliError> {
    let sys = cfg.system();
    let spec = cfg.two_laser_spec();
    let pumps = cfg.pump_grid();
    let map = two_laser_map(&sys, &spec, &pumps).map_err(CliError::numeric)?;

    let pump_fb = sys.feedback_at(spec.p_pump);
    let ref_fb = FeedbackParams {
        alpha: pump_fb.peak_shift(sys.cavity.eta_out()),
        ..pump_fb
    };
    let reference = lorentzian_powerlaw_reference(&pumps, sys.cavity.f_c, sys.cavity.linewidth_ghz(), &ref_fb);
    let pump_rows: Vec<_> = (0..pumps.len())
        .map(|i| (pumps[i], map.pump_f_qd[i], map.shift_trace[i], reference[i]))
        .collect();
    let mut probe_rows = Vec::new();
    for (s, &f_pump) in map.probe_spectra.iter().zip(&pumps) {
        probe_rows.extend(spectrum_rows(s).into_iter().map(|(f, r, q, d)| (f, r, q, d, f_pump)));
    }
    let max_ref_dev = map
        .shift_trace
        .iter()
        .zip(&reference)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let max_shift = map.shift_trace.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut probe_header = SPECTRUM_HEADER.to_vec();
    probe_header.push("f_pump_GHz");
    Ok(Partial {
        files: vec![
            (
                "twolaser_pump.csv".into(),
                to_csv(&["f_pump_GHz", "f_qd_GHz", "shift_GHz", "reference_GHz"], pump_rows)?,
            ),
            ("twolaser_probe.csv".into(), to_csv(&probe_header, probe_rows)?),
        ],
        summary: json!({
            "argmax_shift_f_pump_GHz": map.argmax_shift(),
            "max_shift_GHz": max_shift,
            "f_c_GHz": sys.cavity.f_c,
            "pump_sees_qd": spec.pump_sees_qd,
            "max_abs_reference_deviation_GHz": max_ref_dev,
        }),
        warnings: spec.warnings(),
    })
}

fn dynamics(cfg: &Config) -> Result<Partial, CliError> {
    let model = cfg.charge_model();
    let schedule = cfg.schedule().map_err(|e| CliError::Config(vec![e.to_string()]))?;
    let grid = time_grid(0.0, cfg.dynamics.t_stop, cfg.dynamics.n_samples);
    let traj = integrate(&model, &schedule, &grid, cfg.charge.step).map_err(CliError::numeric)?;
    let v_res0 = cfg.charge.v_res0;
    let volts = resonance_voltage_trace(&traj, v_res0);
    let rows: Vec<_> = traj.t.iter().zip(&traj.q).zip(&volts).map(|((&t, &q), &(_, v))| (t, q, v)).collect();
    let mut files = vec![("trajectory.csv".into(), to_csv(&["t_ms", "q", "v_res_mV"], rows)?)];

    let peak = traj.q.iter().cloned().fold(0.0, f64::max);
    let segments: Vec<Value> = schedule
        .segments
        .iter()
        .map(|s| {
            let q_eq = equilibrium_charge(&model, s.power);
            json!({
                "t_start_ms": s.t_start,
                "t_end_ms": s.t_end,
                "power": s.power,
                "equilibrium_q": q_eq,
                "t_half_build_ms": traj.first_crossing(0.5 * q_eq),
            })
        })
        .collect();
    let mut summary = json!({
        "q_peak": peak,
        "q_final": traj.q.last(),
        "v_res_min_mV": v_res0 - peak,
        "segments": segments,
    });
    if !cfg.dynamics.steady_powers.is_empty() {
        let curve = steady_state_voltage_curve(&model, &cfg.dynamics.steady_powers, v_res0);
        let shifts: Vec<f64> = curve.iter().map(|(_, v)| v_res0 - v).collect();
        let fit = fit_power_law(&cfg.dynamics.steady_powers, &shifts).map_err(CliError::numeric)?;
        summary["steady_state_fit"] = power_law_json(&fit);
        files.push(("steady_state.csv".into(), to_csv(&["power", "v_res_mV"], curve)?));
    }
    Ok(Partial {
        files,
        summary,
        warnings: Vec::new(),
    })
}

fn fit(cfg: &Config) -> Result<Partial, CliError> {
    let cav = cfg.cavity();
    let qd = cfg.qd();
    let f = &cfg.fit;
    let mut warnings = Vec::new();

    let samples = match &f.input {
        Some(path) => {
            let file = read_spectrum_csv(path)?;
            warnings.extend(file.warnings);
            file.samples
        }
        None => {
            let mut rng = StdRng::seed_from_u64(cfg.seed.unwrap_or(0));
            let noise = Normal::new(0.0, f.noise_sigma).map_err(CliError::numeric)?;
            let step = (f.f_stop - f.f_start) / (f.n_points - 1) as f64;
            (0..f.n_points)
                .map(|i| {
                    let x = f.f_start + step * i as f64;
                    let r = mixed_reflectivity(&cav, &qd, x, qd.f_0).map_err(CliError::numeric)?;
                    Ok((x, r + noise.sample(&mut rng)))
                })
                .collect::<Result<Vec<_>, CliError>>()?
        }
    };

    let free: Vec<FreeParam> = f
        .free
        .iter()
        .map(|name| {
            let p = FitParam::from_name(name).expect("validated config");
            FreeParam::new(p, f.initial.get(name).copied().unwrap_or_else(|| p.get(&cav, &qd)))
        })
        .collect();
    let mut problem = FitProblem::new(&samples, cav, qd, free);
    problem.settings.max_iter = f.max_iter;
    let result = fit_spectrum(&problem).map_err(|e| match e {
        qdfeedback::FitError::InvalidProblem(m) => CliError::Input(m),
        other => CliError::numeric(other),
    })?;
    if !result.converged {
        warnings.push(format!("fit did not converge in {} iterations", result.iterations));
    }
    if result.degenerate {
        warnings.push("fit Jacobian is rank deficient; some parameters are not identifiable".into());
    }

    let (fcav, fqd) = problem.fitted_params(&result);
    let rows = samples
        .iter()
        .map(|&(x, r)| Ok((x, r, mixed_reflectivity(&fcav, &fqd, x, fqd.f_0).map_err(CliError::numeric)?)))
        .collect::<Result<Vec<_>, CliError>>()?;

    let mut report = String::from("parameter        value            std_error\n");
    for e in &result.estimates {
        report.push_str(&format!("{:<16} {:<16.9e} {:.3e}\n", e.param.name(), e.value, e.std_error));
    }
    report.push_str(&format!(
        "ssr {:.9e} (initial {:.9e}), iterations {}, converged {}, degenerate {}\n",
        result.ssr, result.initial_ssr, result.iterations, result.converged, result.degenerate
    ));

    let estimates: Vec<Value> = result
        .estimates
        .iter()
        .map(|e| json!({ "param": e.param.name(), "value": e.value, "std_error": e.std_error }))
        .collect();
    Ok(Partial {
        files: vec![
            ("fit_curve.csv".into(), to_csv(&["f_GHz", "r_data", "r_model"], rows)?),
            ("fit_report.txt".into(), report),
        ],
        summary: json!({
            "source": f.input.as_ref().map_or("synthetic".to_string(), |p| p.display().to_string()),
            "n_samples": samples.len(),
            "estimates": estimates,
            "ssr": result.ssr,
            "initial_ssr": result.initial_ssr,
            "iterations": result.iterations,
            "converged": result.converged,
            "degenerate": result.degenerate,
        }),
        warnings,
    })
}

fn power_law_json(fit: &PowerLawFit) -> Value {
    json!({ "exponent": fit.exponent, "amplitude": fit.amplitude, "r_squared": fit.r_squared })
}

fn powerlaw(cfg: &Config) -> Result<Partial, CliError> {
    let mut warnings = Vec::new();
    let (xs, ys, header) = match &cfg.powerlaw.input {
        Some(path) => {
            let file = read_spectrum_csv(path)?;
            warnings.extend(file.warnings);
            let (xs, ys) = file.samples.into_iter().unzip();
            (xs, ys, ["x", "y"])
        }
        None => {
            let sys = cfg.system();
            let ys = cfg
                .powerlaw
                .powers
                .par_iter()
                .map(|&p| resonant_shift(&sys, p))
                .collect::<Result<Vec<_>, _>>()
                .map_err(CliError::numeric)?;
            (cfg.powerlaw.powers.clone(), ys, ["p_in_pW", "shift_GHz"])
        }
    };
    let fit = fit_power_law(&xs, &ys).map_err(|e| CliError::Input(e.to_string()))?;
    let rows: Vec<_> = xs.iter().copied().zip(ys.iter().copied()).collect();
    Ok(Partial {
        files: vec![("powerlaw.csv".into(), to_csv(&header, rows)?)],
        summary: json!({ "fit": power_law_json(&fit), "n_points": xs.len() }),
        warnings,
    })
}

#[derive(Debug, Clone, Copy)]
struct Fig2Row {
    p_in_pw: f64,
    shift_ghz: f64,
    bias_mv: f64,
    voltage_shift_mv: f64,
    width_ghz: f64,
}

fn fig2(cfg: &Config) -> Result<Partial, CliError> {
    let sys = cfg.system();
    let stark = cfg.stark();
    let target = cfg.fig2.detuning + sys.cavity.f_c;
    let v_target = stark.voltage(target);
    let rows = cfg
        .fig2
        .powers
        .par_iter()
        .map(|&p| {
            let shift = resonant_shift(&sys, p)?;
            let f_0 = f0_for_detuning(&sys, p, target)?;
            let width = sweep_pair(&sys.with_f_0(f_0), &cfg.fig2_spec(p))?.hysteresis_width(cfg.fig2.eps_h)?;
            let bias = stark.voltage(f_0);
            Ok(Fig2Row {
                p_in_pw: p,
                shift_ghz: shift,
                bias_mv: bias,
                voltage_shift_mv: v_target - bias,
                width_ghz: width,
            })
        })
        .collect::<Result<Vec<_>, qdfeedback::ScanError>>()
        .map_err(CliError::numeric)?;

    let mut warnings = Vec::new();
    let mut fits = serde_json::Map::new();
    type Column = (&'static str, fn(&Fig2Row) -> f64);
    let columns: [Column; 3] = [
        ("shift", |r| r.shift_ghz),
        ("voltage", |r| r.voltage_shift_mv.abs()),
        ("width", |r| r.width_ghz),
    ];
    for (name, col) in columns {
        let ys: Vec<f64> = rows.iter().map(col).collect();
        let value = match fit_power_law(&cfg.fig2.powers, &ys) {
            Ok(f) => power_law_json(&f),
            Err(e) => {
                warnings.push(format!("{name} power-law fit failed: {e}"));
                Value::Null
            }
        };
        fits.insert(name.to_string(), value);
    }
    Ok(Partial {
        files: vec![(
            "fig2.csv".into(),
            to_csv(
                &["p_in_pW", "shift_GHz", "bias_mV", "voltage_shift_mV", "hysteresis_width_GHz"],
                rows.iter().map(|r| (r.p_in_pw, r.shift_ghz, r.bias_mv, r.voltage_shift_mv, r.width_ghz)),
            )?,
        )],
        summary: json!({
            "detuning_GHz": cfg.fig2.detuning,
            "eps_h": cfg.fig2.eps_h,
            "fits": fits,
        }),
        warnings,
    })
}
