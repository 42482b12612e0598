use std::fs;
use std::path::Path;
use std::process::Command;

use qdfeedback::charge::time_grid;
use qdfeedback::{integrate, ChargeModel, PumpSchedule};
use qdfeedback_cli::{
    load_config, parse_config, read_spectrum_csv, run_experiment, write_outputs, CliError, Config,
    Experiment,
};

const MINIMAL: &str = "[qd]\ncooperativity = 1\ngamma = 5\n";

fn config(extra: &str) -> Config {
    parse_config(&format!("{MINIMAL}{extra}")).unwrap()
}

fn config_errors(text: &str) -> Vec<String> {
    match parse_config(text) {
        Err(CliError::Config(m)) => m,
        other => panic!("expected a config error, got {other:?}"),
    }
}

fn file<'a>(files: &'a [(String, String)], name: &str) -> &'a str {
    &files.iter().find(|(n, _)| n == name).unwrap_or_else(|| panic!("no {name}")).1
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qdfeedback"))
}

#[test]
fn defaults_are_the_published_constants() {
    let cfg = config("");
    let cav = cfg.cavity();
    assert_eq!((cav.kappa, cav.kappa_m, cav.wavelength_nm), (77.0, 11.0, 940.0));
    assert_eq!(cfg.qd().mix_weight, 0.8);
    assert_eq!(cfg.feedback.beta, 0.35);
    assert_eq!(cfg.feedback.coefficient, 1.5);
    assert_eq!(cfg.charge_model().gamma_c, 10.0);
    assert_eq!(cfg.charge_model().beta, 0.35);
    assert_eq!(cfg.solver.h_root, 0.01);
    assert_eq!(cfg.scan.eps_h, 0.02);
    let fb = cfg.feedback_at(100.0);
    let eta = cav.eta_out();
    assert!((fb.alpha - 1.5 * (100.0 / (eta * eta)).powf(0.35)).abs() < 1e-12);
}

#[test]
fn out_of_range_beta_is_rejected() {
    let msgs = config_errors(&format!("{MINIMAL}[feedback]\nbeta = 1.5\n"));
    assert!(msgs.iter().any(|m| m.starts_with("FeedbackParams:") && m.contains("beta")), "{msgs:?}");
}

#[test]
fn over_coupled_mirror_is_rejected() {
    let msgs = config_errors(&format!("{MINIMAL}[cavity]\nkappa = 40\nkappa_m = 21\n"));
    assert!(msgs.iter().any(|m| m.starts_with("CavityParams:") && m.contains("kappa_m")), "{msgs:?}");
}

#[test]
fn cooperativity_and_gamma_are_required() {
    let msgs = config_errors("[qd]\nf_0 = -3\n");
    assert!(msgs.iter().any(|m| m.contains("qd.cooperativity")));
    assert!(msgs.iter().any(|m| m.contains("qd.gamma")));
}

#[test]
fn type_errors_are_reported() {
    let msgs = config_errors(&format!("{MINIMAL}[scan]\nn_points = \"many\"\n"));
    assert!(msgs.iter().any(|m| m.contains("n_points")), "{msgs:?}");
}

#[test]
fn low_power_scan_is_reversible() {
    let cfg = config("");
    let cfg = Config {
        qd: qdfeedback_cli::config::QdSection { f_0: -10.0, ..cfg.qd },
        ..cfg
    };
    let out = run_experiment(&cfg, Experiment::Scan).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(dir.path(), &out.files).unwrap();
    let up = read_spectrum_csv(&dir.path().join("scan_up.csv")).unwrap();
    let down = read_spectrum_csv(&dir.path().join("scan_down.csv")).unwrap();
    assert_eq!(up.samples.len(), 1001);
    for (a, b) in up.samples.iter().zip(&down.samples) {
        assert_eq!(a.0, b.0);
        assert!((a.1 - b.1).abs() < 1e-6);
    }
    assert!(file(&out.files, "scan_up.csv").starts_with("f_laser_GHz,r_prime,f_qd_GHz,direction\n"));
    assert_eq!(out.summary["hysteresis_width_GHz"], 0.0);
}

#[test]
fn spectrum_csv_round_trips() {
    let cfg = config("[scan]\np_in = 1000\nn_points = 301\n");
    let out = run_experiment(&cfg, Experiment::Scan).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(dir.path(), &out.files).unwrap();
    let text = file(&out.files, "scan_down.csv");
    let expected: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let mut it = l.split(',').map(|x| x.parse::<f64>().unwrap_or(f64::NAN));
            (it.next().unwrap(), it.next().unwrap())
        })
        .collect();
    let read = read_spectrum_csv(&dir.path().join("scan_down.csv")).unwrap();
    assert!(read.warnings.is_empty());
    assert_eq!(read.samples.len(), expected.len());
    for (a, b) in read.samples.iter().zip(&expected) {
        assert!((a.0 - b.0).abs() <= 1e-9 * b.0.abs().max(1.0));
        assert!((a.1 - b.1).abs() <= 1e-9 * b.1.abs().max(1e-300));
    }
}

#[test]
fn rerun_from_manifest_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.toml");
    fs::write(
        &cfg_path,
        format!("{MINIMAL}[fit]\nnoise_sigma = 0.02\nn_points = 201\nfree = [\"cooperativity\", \"gamma\"]\n"),
    )
    .unwrap();
    for exp in [Experiment::Scan, Experiment::Fit, Experiment::Dynamics, Experiment::TwoLaser] {
        let mut cfg = load_config(&cfg_path).unwrap();
        cfg.seed = Some(17);
        if exp == Experiment::TwoLaser {
            cfg.twolaser.pump_points = 11;
            cfg.twolaser.probe_points = 41;
        }
        let first = run_experiment(&cfg, exp).unwrap();
        let out = dir.path().join(exp.as_str());
        write_outputs(&out, &first.files).unwrap();

        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["uncalibrated"]["stark_slope"], true);
        assert_eq!(manifest["uncalibrated"]["dynamics_units"], true);
        assert_eq!(manifest["seed"], 17);

        let again = load_config(&out.join("resolved_config.toml")).unwrap();
        assert_eq!(again, cfg);
        let second = run_experiment(&again, exp).unwrap();
        assert_eq!(first.files, second.files, "{}", exp.as_str());
    }
}

#[test]
fn seed_changes_synthetic_fit_only_through_noise() {
    let mut cfg = config("[fit]\nn_points = 201\nfree = [\"cooperativity\"]\n");
    cfg.seed = Some(1);
    let a = run_experiment(&cfg, Experiment::Fit).unwrap();
    cfg.seed = Some(2);
    let b = run_experiment(&cfg, Experiment::Fit).unwrap();
    assert_ne!(file(&a.files, "fit_curve.csv"), file(&b.files, "fit_curve.csv"));
    let c_hat = |o: &qdfeedback_cli::RunOutput| o.summary["estimates"][0]["value"].as_f64().unwrap();
    assert!((c_hat(&a) - 1.0).abs() < 0.1 && (c_hat(&b) - 1.0).abs() < 0.1);
}

#[test]
fn fit_reads_scan_output() {
    let dir = tempfile::tempdir().unwrap();
    // without feedback the swept spectrum is the static lineshape
    let cfg = config("[feedback]\nalpha = 0\n");
    let scan = run_experiment(&cfg, Experiment::Scan).unwrap();
    write_outputs(dir.path(), &scan.files).unwrap();
    let cfg_path = dir.path().join("fit.toml");
    fs::write(
        &cfg_path,
        "[qd]\ncooperativity = 0.6\ngamma = 8\n[fit]\ninput = \"scan_up.csv\"\nfree = [\"cooperativity\", \"gamma\"]\n",
    )
    .unwrap();
    let fit_cfg = load_config(&cfg_path).unwrap();
    assert!(fit_cfg.fit.input.as_ref().unwrap().is_absolute());
    let out = run_experiment(&fit_cfg, Experiment::Fit).unwrap();
    let est = &out.summary["estimates"];
    assert!((est[0]["value"].as_f64().unwrap() - 1.0).abs() < 1e-6, "{est}");
    assert!((est[1]["value"].as_f64().unwrap() - 5.0).abs() < 1e-5, "{est}");
}

#[test]
fn dynamics_trajectory_matches_library() {
    let cfg = config("[dynamics]\nt_stop = 30\nn_samples = 301\n[[dynamics.segments]]\nt_start = 2\nt_end = 12\npower = 4\n");
    let out = run_experiment(&cfg, Experiment::Dynamics).unwrap();
    let text = file(&out.files, "trajectory.csv");
    assert!(text.starts_with("t_ms,q,v_res_mV\n"));
    let sched = PumpSchedule::constant(2.0, 12.0, 4.0);
    let traj = integrate(&ChargeModel::default(), &sched, &time_grid(0.0, 30.0, 301), 1e-3).unwrap();
    for (line, (&t, &q)) in text.lines().skip(1).zip(traj.t.iter().zip(&traj.q)) {
        let cols: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(cols[0], t);
        assert_eq!(cols[1], q);
        assert_eq!(cols[2], 713.0 - q);
    }
}

#[test]
fn fig2_exponents_match_the_power_law() {
    let cfg = parse_config("[qd]\nf_0 = -40\ncooperativity = 2\ngamma = 1\n").unwrap();
    let out = run_experiment(&cfg, Experiment::Fig2).unwrap();
    for name in ["shift", "voltage", "width"] {
        let b = out.summary["fits"][name]["exponent"].as_f64().unwrap();
        assert!((b - 0.35).abs() <= 0.05, "{name} exponent {b}");
    }
    assert_eq!(file(&out.files, "fig2.csv").lines().count(), 6);
}

#[test]
fn two_laser_reference_identity() {
    let mut cfg = config("[twolaser]\npump_sees_qd = false\npump_points = 21\nprobe_points = 41\n");
    cfg.qd.f_0 = -30.0;
    let out = run_experiment(&cfg, Experiment::TwoLaser).unwrap();
    let dev = out.summary["max_abs_reference_deviation_GHz"].as_f64().unwrap();
    assert!(dev <= 1e-9, "{dev}");
    assert_eq!(out.summary["argmax_shift_f_pump_GHz"], 0.0);
}

fn run_bin(dir: &Path, args: &[&str]) -> std::process::Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("ok.toml"), format!("{MINIMAL}[scan]\nn_points = 101\n")).unwrap();
    fs::write(d.join("bad.toml"), format!("{MINIMAL}[feedback]\nbeta = 1.5\nbogus = 1\n")).unwrap();
    fs::write(
        d.join("unstable.toml"),
        format!("{MINIMAL}[charge]\nq0 = 1000\nstep = 1\n[dynamics]\nt_stop = 5\nn_samples = 6\n"),
    )
    .unwrap();

    let ok = run_bin(d, &["scan", "--config", "ok.toml", "--out", "ok", "--threads", "2"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    for f in ["scan_up.csv", "scan_down.csv", "summary.json", "manifest.json", "resolved_config.toml"] {
        assert!(d.join("ok").join(f).exists(), "{f}");
    }

    let bad = run_bin(d, &["scan", "--config", "bad.toml", "--out", "bad"]);
    assert_eq!(bad.status.code(), Some(2));
    let err = String::from_utf8_lossy(&bad.stderr);
    assert!(err.contains("feedback.bogus") && err.contains("FeedbackParams"), "{err}");
    assert!(!d.join("bad").exists());

    let unstable = run_bin(d, &["dynamics", "--config", "unstable.toml", "--out", "unstable"]);
    assert_eq!(unstable.status.code(), Some(3), "{}", String::from_utf8_lossy(&unstable.stderr));
    assert!(!d.join("unstable").exists());

    let missing = run_bin(d, &["scan", "--out", "x"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn failed_write_leaves_nothing_behind() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let files = vec![
        ("a.csv".to_string(), "x\n".to_string()),
        ("missing/b.csv".to_string(), "y\n".to_string()),
    ];
    assert!(matches!(write_outputs(&out, &files), Err(CliError::Io(_))));
    assert!(!out.exists());
}
