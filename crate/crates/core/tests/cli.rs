use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hingefit::cli::read_report_value;
use hingefit::dataio::{read_backbone_csv, read_csv_columns, read_spectrum_csv, read_sweep_csv, read_timeseries_csv};

fn hingefit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hingefit"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = hingefit(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn report(dir: &Path, name: &str, key: &str) -> f64 {
    read_report_value(dir.join(name), key).unwrap().parse().unwrap()
}

#[test]
fn direct_fit_of_cubic_meets_error_bound() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["synth", "--forces", "cubic:p2=10", "--out", "cubic.csv"]);
    write(p, "grid.cfg", "method = direct\ngrid.M = 128\ngrid.N = 128\n");
    ok(p, &["fit-direct", "--input", "cubic.csv", "--config", "grid.cfg", "--out", "cubic.model"]);
    assert!(report(p, "cubic_report.txt", "max_rel_error") < 0.01);
    assert!(p.join("cubic_coefficients.csv").exists());
}

#[test]
fn gap_spike_shows_in_coefficient_table() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["synth", "--forces", "gap:p2=10,L=0.5", "--samples", "2001", "--out", "gap.csv"]);
    write(p, "grid.cfg", "grid.M = 256\ngrid.N = 256\n");
    ok(p, &["fit-direct", "--input", "gap.csv", "--config", "grid.cfg", "--out", "gap.model"]);
    let t = read_csv_columns(p.join("gap_coefficients.csv")).unwrap();
    let gaps = t.column("gap").unwrap();
    let coef = t.column("coefficient").unwrap();
    let i = (0..coef.len()).max_by(|&a, &b| coef[a].abs().total_cmp(&coef[b].abs())).unwrap();
    let spacing = 10.0 / 255.0;
    assert!((gaps[i] - 0.5).abs() <= spacing, "spike at {}", gaps[i]);
}

#[test]
fn empty_and_short_inputs_exit_one() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    write(p, "empty.csv", "x,f\n");
    let out = hingefit(p, &["fit-direct", "--input", "empty.csv", "--out", "m.model"]);
    assert_eq!(code(&out), 1);
    assert!(!String::from_utf8_lossy(&out.stderr).trim().is_empty());
    assert!(!p.join("m.model").exists());

    write(p, "short.csv", "t,x\n0,1\n0.001,0.5\n");
    let out = hingefit(p, &["fit-indirect", "--input", "short.csv", "--out", "m.model"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn bad_config_and_flags_exit_one() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    write(p, "neg.cfg", "integrate.dt = -0.01\n");
    let out = hingefit(p, &["simulate", "--exact", "linear", "--config", "neg.cfg", "--out", "t.csv"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("integrate.dt"));
    let out = hingefit(p, &["simulate", "--exact", "linear", "--out", "t.csv", "--frobnicate"]);
    assert_eq!(code(&out), 1);
    let out = hingefit(p, &["simulate", "--exact", "quartic:p2=1", "--out", "t.csv"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn divergence_exits_two() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    // strongly softening cubic released far out escapes to infinity
    write(p, "run.cfg", "integrate.x0 = 3\nintegrate.t_end = 20\nintegrate.dt = 0.01\n");
    let out = hingefit(p, &["simulate", "--exact", "cubic:p2=-10", "--config", "run.cfg", "--out", "t.csv"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
}

#[test]
fn zero_model_decays_linearly() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    write(
        p,
        "zero.model",
        "format_version = 1\nkind = hinge\nnormalized_by_mass = false\nterm = max_hinge 5.0e-1 0\n",
    );
    write(p, "run.cfg", "integrate.x0 = 1\nintegrate.t_end = 40\n");
    ok(p, &["simulate", "--model", "zero.model", "--config", "run.cfg", "--out", "t.csv"]);
    let ch = read_timeseries_csv(p.join("t.csv")).unwrap();
    let x = &ch[0];
    // m = 1, c = 0.1, k = 1: envelope e^{-0.05 t}
    let late = x.values[x.len() - 6300..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(late < 1.05 * (-0.05f64 * (40.0 - 2.0 * std::f64::consts::PI)).exp());
    assert!(late > 0.1);
}

#[test]
fn simulate_reports_rmse_against_reference() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    write(p, "run.cfg", "integrate.x0 = -4\nintegrate.t_end = 10\n");
    ok(p, &["simulate", "--exact", "cubic:p2=10", "--config", "run.cfg", "--out", "ref.csv"]);
    ok(p, &["simulate", "--exact", "cubic:p2=10", "--config", "run.cfg", "--out", "same.csv", "--reference", "ref.csv"]);
    assert_eq!(report(p, "same_report.txt", "rmse_x"), 0.0);
    ok(p, &["simulate", "--exact", "cubic:p2=9", "--config", "run.cfg", "--out", "off.csv", "--reference", "ref.csv"]);
    assert!(report(p, "off_report.txt", "rmse_x") > 0.01);
}

#[test]
fn indirect_fit_reports_and_scans() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["synth", "--system", "duffing", "--duration", "10", "--out", "duff.csv"]);
    let mut forecast = Vec::new();
    for n in [8, 128] {
        write(p, "g.cfg", &format!("grid.M = {n}\ngrid.N = {n}\n"));
        let model = format!("d{n}.model");
        let mut args = vec!["fit-indirect", "--input", "duff.csv", "--config", "g.cfg", "--out", &model];
        if n == 8 {
            args.push("--scan-fit-fraction");
        }
        ok(p, &args);
        forecast.push(report(p, &format!("d{n}_report.txt"), "forecast_rmse"));
    }
    assert!(forecast[1] < forecast[0], "{forecast:?}");
    let scan = read_csv_columns(p.join("d8_fraction_scan.csv")).unwrap();
    assert_eq!(scan.column("fit_fraction").unwrap().len(), 9);
    assert_eq!(scan.header, ["fit_fraction", "fit_rmse", "validation_rmse", "forecast_rmse"]);
}

#[test]
fn potential_fit_from_noisy_displacement() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["synth", "--system", "surrogate", "--noise", "1.2e-4", "--seed", "3", "--out", "rec.csv"]);
    let ch = read_timeseries_csv(p.join("rec.csv")).unwrap();
    assert_eq!(ch.len(), 1);
    assert_eq!(ch[0].len(), 5000);
    write(
        p,
        "pot.cfg",
        "method = potential\noscillator.zeta = 0.0054\noscillator.omega_n = 65.2\ngrid.psi_count = 32\npreprocess.cutoff_hz = 100\n",
    );
    ok(p, &["fit-potential", "--input", "rec.csv", "--config", "pot.cfg", "--out", "pot.model", "--scan-psi-count", "20,32,40"]);
    let scan = read_csv_columns(p.join("pot_psi_scan.csv")).unwrap();
    assert_eq!(scan.column("psi_count").unwrap(), [20.0, 32.0, 40.0]);
    let fit = scan.column("fit_rmse").unwrap();
    assert!(fit[0] > fit[1] && fit[1] > fit[2], "{fit:?}");
    let text = std::fs::read_to_string(p.join("pot.model")).unwrap();
    assert!(text.contains("kind = potential"));
}

#[test]
fn linear_sweeps_agree_both_ways() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let base = "forcing.kind = harmonic\nforcing.amplitude = 0.1\nsweep.f_lo = 0.07957747154594767\nsweep.f_hi = 0.238732414637843\nsweep.n_points = 11\nsweep.steps_per_cycle = 200\n";
    write(p, "up.cfg", &format!("{base}sweep.direction = up\n"));
    write(p, "down.cfg", &format!("{base}sweep.direction = down\n"));
    ok(p, &["sweep", "--exact", "linear", "--config", "up.cfg", "--out", "up.csv"]);
    ok(p, &["sweep", "--exact", "linear", "--config", "down.cfg", "--out", "down.csv"]);
    let up = read_sweep_csv(p.join("up.csv")).unwrap();
    let down = read_sweep_csv(p.join("down.csv")).unwrap();
    for (i, a) in up.amplitudes.iter().enumerate() {
        let b = down.amplitudes[down.amplitudes.len() - 1 - i];
        assert!((a - b).abs() < 1e-3 * a, "{a} vs {b}");
    }
    // textbook FRF: the grid hits f_n, where X/X_st = 1/(2ζ) = 10
    let i = up.peak_index().unwrap();
    assert_eq!(i, 5);
    assert!((up.amp_over_xst()[i] - 10.0).abs() < 1.0);
}

#[test]
fn base_sweep_writes_transmissibility_and_phase() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    write(
        p,
        "base.cfg",
        "oscillator.zeta = 0.01\noscillator.omega_n = 6.283185307179586\nforcing.kind = base\nforcing.amplitude = 0.001\nsweep.f_lo = 0.5\nsweep.f_hi = 3\nsweep.n_points = 6\nsweep.steps_per_cycle = 200\n",
    );
    ok(p, &["sweep", "--exact", "linear", "--config", "base.cfg", "--out", "base.csv"]);
    let t = read_csv_columns(p.join("base.csv")).unwrap();
    let phase = t.column("phase_deg").unwrap();
    assert!(t.column("transmissibility").is_some());
    // far above resonance the tip moves against the base; at f/f_n = 3 the
    // analytic lag is 180° − atan(2ζr³ / (r² − 1 − 4ζ²r²)) ≈ 176.1°
    assert!((phase[5] - 176.14).abs() < 0.5, "{phase:?}");
    assert!(phase[0] < 15.0);
}

#[test]
fn backbone_of_linear_decay_is_flat() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    write(p, "run.cfg", "oscillator.c = 0.01\nintegrate.x0 = 1\nintegrate.t_end = 100\n");
    ok(p, &["simulate", "--exact", "linear", "--config", "run.cfg", "--out", "t.csv"]);
    ok(p, &["backbone", "--input", "t.csv", "--out", "bb.csv"]);
    let bb = read_backbone_csv(p.join("bb.csv")).unwrap();
    let fd = (1.0f64 - 0.005f64.powi(2)).sqrt() / (2.0 * std::f64::consts::PI);
    assert!(bb.frequencies.iter().all(|f| (f - fd).abs() < 0.005 * fd));

    write(p, "flat.csv", "t,x\n0,0\n0.1,0\n0.2,0\n0.3,0\n");
    let out = hingefit(p, &["backbone", "--input", "flat.csv", "--out", "bb2.csv"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn duffing_backbone_bends_upward() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    write(p, "run.cfg", "oscillator.c = 0.05\nintegrate.x0 = 2\nintegrate.t_end = 120\n");
    ok(p, &["simulate", "--exact", "cubic:p2=10", "--config", "run.cfg", "--out", "t.csv"]);
    ok(p, &["backbone", "--input", "t.csv", "--out", "bb.csv"]);
    let bb = read_backbone_csv(p.join("bb.csv")).unwrap();
    let n = bb.frequencies.len();
    assert!(bb.amplitudes[0] > bb.amplitudes[n - 1]);
    assert!(bb.frequencies[0] > 1.5 * bb.frequencies[n - 1]);
}

#[test]
fn superharmonic_shows_in_spectrum() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let f_n = 1.0 / (2.0 * std::f64::consts::PI);
    let fe = 0.622 * f_n;
    let cycles = 200.0;
    write(
        p,
        "run.cfg",
        &format!(
            "forcing.kind = harmonic\nforcing.amplitude = 0.6\nforcing.freq_hz = {fe}\nintegrate.dt = {}\nintegrate.t_end = {}\n",
            1.0 / (fe * 200.0),
            cycles / fe
        ),
    );
    ok(p, &["simulate", "--exact", "gap:p2=10,L=0.5", "--config", "run.cfg", "--out", "ss.csv"]);
    let skip = format!("{}", 180.0 / fe);
    let fe_s = format!("{fe}");
    ok(p, &["spectrum", "--input", "ss.csv", "--fe", &fe_s, "--skip", &skip, "--out", "spec.csv"]);
    let s = read_spectrum_csv(p.join("spec.csv")).unwrap();
    let ratio = s.magnitude_near(2.0 * fe, 2) / s.magnitude_near(fe, 2);
    assert!(ratio > 0.5, "ratio {ratio}");
    let t = read_csv_columns(p.join("spec.csv")).unwrap();
    assert_eq!(t.header, ["f_hz", "f_over_fe", "magnitude"]);
}

#[test]
fn commands_are_reproducible_and_leave_inputs_alone() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["synth", "--forces", "gap:p2=10,L=0.5", "--samples", "401", "--out", "gap.csv"]);
    let input = std::fs::read(p.join("gap.csv")).unwrap();
    write(p, "g.cfg", "grid.M = 32\ngrid.N = 32\n");
    ok(p, &["fit-direct", "--input", "gap.csv", "--config", "g.cfg", "--out", "a.model"]);
    ok(p, &["fit-direct", "--input", "gap.csv", "--config", "g.cfg", "--out", "b.model"]);
    assert_eq!(std::fs::read(p.join("a.model")).unwrap(), std::fs::read(p.join("b.model")).unwrap());
    assert_eq!(
        std::fs::read(p.join("a_coefficients.csv")).unwrap(),
        std::fs::read(p.join("b_coefficients.csv")).unwrap()
    );
    assert_eq!(std::fs::read(p.join("gap.csv")).unwrap(), input);
}

#[test]
fn help_lists_every_subcommand_and_units() {
    let d = tempfile::tempdir().unwrap();
    let out = hingefit(d.path(), &["--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["synth", "fit-direct", "fit-indirect", "fit-potential", "simulate", "sweep", "backbone", "spectrum"] {
        assert!(text.contains(sub), "missing {sub}");
        let out = hingefit(d.path(), &[sub, "--help"]);
        assert_eq!(code(&out), 0, "{sub} --help");
        assert!(String::from_utf8_lossy(&out.stdout).contains("--out"));
    }
    let out = hingefit(d.path(), &["spectrum", "--help"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("[Hz]"));
}
