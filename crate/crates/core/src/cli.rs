//! Batch front end. Every subcommand reads files, writes files, and reports
//! through a [`CommandOutcome`]; the binary only prints and exits.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::basis::{psi_gap_grid, uniform_gap_grid, BasisSpec};
use crate::dataio::{
    fmt_f64, load_model, read_config, read_csv_columns, read_timeseries_csv, save_model, sibling,
    write_backbone_csv, write_columns_csv, write_spectrum_csv, write_sweep_csv, write_timeseries_csv, ForcingKind,
    Model, ModelFile, RunConfig,
};
use crate::dynamics::{
    frequency_sweep, integrate, integrate_sampled, Forcing, Nonlinearity, OscillatorModel, SteadyStateOptions,
};
use crate::error::{Error, Result};
use crate::regress::{
    fit_direct_with, fit_indirect_with, fit_potential_constrained_with, FitOptions, FitReport, PotentialOptions,
};
use crate::series::TimeSeries;
use crate::sigproc::{backbone_from_free_response, derive_states, fft_spectrum, rmse, split_fit_validate, Partition, Window};
use crate::synth;

/// Result of one command: exit code 0 on success, 1 for bad input or
/// configuration, 2 for a numerical failure (divergence, no root).
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutcome {
    pub exit_code: i32,
    pub artifacts_written: Vec<PathBuf>,
    pub summary: String,
}

impl CommandOutcome {
    fn failure(err: &Error) -> Self {
        CommandOutcome {
            exit_code: if err.is_numerical() { 2 } else { 1 },
            artifacts_written: Vec::new(),
            summary: format!("error: {err}"),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hingefit", version, about = "Identify restoring forces as gapped spring networks and simulate the identified oscillators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a benchmark record: a free response (t,x,v,a) or sampled forces (x,f).
    Synth(SynthArgs),
    /// Fit hinge coefficients to sampled force values (columns x,f).
    FitDirect(FitDirectArgs),
    /// Fit a hinge network from a measured free response (columns t,x[,v,a]).
    FitIndirect(FitResponseArgs),
    /// Fit a conservative ψ-spring model from a measured free response.
    FitPotential(FitPotentialArgs),
    /// Integrate an oscillator and write its trajectory.
    Simulate(SimulateArgs),
    /// Steady-state frequency sweep.
    Sweep(SweepArgs),
    /// Extract the backbone curve of a free decay.
    Backbone(BackboneArgs),
    /// Single-sided amplitude spectrum of a record.
    Spectrum(SpectrumArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Free response of a benchmark: duffing, pwl or surrogate.
    #[arg(long, conflicts_with = "forces", required_unless_present = "forces")]
    pub system: Option<String>,
    /// Sampled force law instead: cubic:p2=<N/m³> or gap:p2=<N/m>,L=<m>.
    #[arg(long)]
    pub forces: Option<String>,
    /// Initial displacement [m]; defaults to -4 (duffing), -2 (pwl), 0.012 (surrogate).
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<f64>,
    /// Initial velocity [m/s].
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub v0: f64,
    /// Sampling interval [s].
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// Record length [s]; defaults to 30 (duffing), 60 (pwl), 5 (surrogate).
    #[arg(long)]
    pub duration: Option<f64>,
    /// RK4 steps per output sample.
    #[arg(long, default_value_t = 10)]
    pub substeps: usize,
    /// Standard deviation of white noise added to x [m]; noisy records carry x only.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Seed of the noise generator.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Force sampling range as lo,hi [m].
    #[arg(long, default_value = "-5,5", allow_hyphen_values = true)]
    pub range: String,
    /// Number of force samples.
    #[arg(long, default_value_t = 1001)]
    pub samples: usize,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitDirectArgs {
    /// Force samples with columns x [m], f [N].
    #[arg(long)]
    pub input: PathBuf,
    /// Run configuration (grid.M, grid.N, grid.x_lo, grid.x_hi, fit.*).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitResponseArgs {
    /// Free response with columns t [s], x [m] and optionally v [m/s], a [m/s²].
    #[arg(long)]
    pub input: PathBuf,
    /// Run configuration (oscillator.*, grid.*, preprocess.*, integrate.dt).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Derive v and a from x even when the input carries them.
    #[arg(long)]
    pub from_displacement: bool,
    /// Also refit at fit fractions 0.1, 0.2, …, 0.9 and write the RMSE table.
    #[arg(long)]
    pub scan_fit_fraction: bool,
}

#[derive(Debug, Args)]
pub struct FitPotentialArgs {
    #[command(flatten)]
    pub common: FitResponseArgs,
    /// Also refit with each listed ψ-gap count (e.g. 20,32,40) and write the RMSE table.
    #[arg(long, value_delimiter = ',')]
    pub scan_psi_count: Vec<usize>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ModelSource {
    /// Identified model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Built-in nonlinearity: linear, cubic:p2=<N/m³> or gap:p2=<N/m>,L=<m>.
    #[arg(long)]
    pub exact: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub source: ModelSource,
    /// Run configuration (oscillator.*, forcing.*, integrate.*).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Trajectory CSV to write (t,x,v,a).
    #[arg(long)]
    pub out: PathBuf,
    /// Reference trajectory on the same grid; the displacement RMSE is reported.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub source: ModelSource,
    /// Run configuration (oscillator.*, forcing.*, sweep.*).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Sweep CSV to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BackboneArgs {
    /// Free-decay record.
    #[arg(long)]
    pub input: PathBuf,
    /// Channel to analyse.
    #[arg(long, default_value = "x")]
    pub channel: String,
    /// Backbone CSV to write (amplitude [m], frequency_hz [Hz]).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// Record to transform.
    #[arg(long)]
    pub input: PathBuf,
    /// Channel to analyse.
    #[arg(long, default_value = "x")]
    pub channel: String,
    /// Excitation frequency [Hz]; adds an f/f_e column.
    #[arg(long)]
    pub fe: Option<f64>,
    /// Leading stretch to discard before transforming [s].
    #[arg(long, default_value_t = 0.0)]
    pub skip: f64,
    /// Window: none or hann.
    #[arg(long, default_value = "hann")]
    pub window: String,
    /// Spectrum CSV to write.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parse `args` (program name first) and run the command.
pub fn run_from_args<I, T>(args: I) -> CommandOutcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => match e.kind() {
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => CommandOutcome {
                exit_code: 0,
                artifacts_written: Vec::new(),
                summary: e.to_string(),
            },
            _ => CommandOutcome {
                exit_code: 1,
                artifacts_written: Vec::new(),
                summary: e.to_string(),
            },
        },
    }
}

pub fn run(cli: Cli) -> CommandOutcome {
    let mut written = Vec::new();
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a, &mut written),
        Command::FitDirect(a) => cmd_fit_direct(a, &mut written),
        Command::FitIndirect(a) => cmd_fit_indirect(a, &mut written),
        Command::FitPotential(a) => cmd_fit_potential(a, &mut written),
        Command::Simulate(a) => cmd_simulate(a, &mut written),
        Command::Sweep(a) => cmd_sweep(a, &mut written),
        Command::Backbone(a) => cmd_backbone(a, &mut written),
        Command::Spectrum(a) => cmd_spectrum(a, &mut written),
    };
    match result {
        Ok((code, summary)) => CommandOutcome {
            exit_code: code,
            artifacts_written: written,
            summary,
        },
        Err(e) => {
            let mut out = CommandOutcome::failure(&e);
            out.artifacts_written = written;
            out
        }
    }
}

fn config_or_default(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => read_config(p),
        None => Ok(RunConfig::default()),
    }
}

/// `name:key=value,key=value` into the name and its parameters.
fn parse_law(text: &str) -> Result<(String, Vec<(String, f64)>)> {
    let (name, rest) = text.split_once(':').unwrap_or((text, ""));
    let mut params = Vec::new();
    for item in rest.split(',').filter(|s| !s.trim().is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("expected key=value in `{text}`, got `{item}`")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("`{}` in `{text}` is not a number", v.trim())))?;
        params.push((k.trim().to_string(), v));
    }
    Ok((name.trim().to_string(), params))
}

fn param(params: &[(String, f64)], key: &str, law: &str) -> Result<f64> {
    params
        .iter()
        .find(|(k, _)| k == key)
        .map(|&(_, v)| v)
        .ok_or_else(|| Error::invalid(format!("`{law}` needs `{key}=<value>`")))
}

fn exact_nonlinearity(text: &str) -> Result<Nonlinearity> {
    let (name, params) = parse_law(text)?;
    let known: &[&str] = match name.as_str() {
        "linear" => &[],
        "cubic" => &["p2"],
        "gap" => &["p2", "L"],
        other => return Err(Error::invalid(format!("unknown exact nonlinearity `{other}` (linear, cubic, gap)"))),
    };
    if let Some((k, _)) = params.iter().find(|(k, _)| !known.contains(&k.as_str())) {
        return Err(Error::invalid(format!("`{name}` takes no parameter `{k}`")));
    }
    Ok(match name.as_str() {
        "linear" => Nonlinearity::None,
        "cubic" => Nonlinearity::Cubic { p2: param(&params, "p2", text)? },
        _ => Nonlinearity::GapSpring {
            p2: param(&params, "p2", text)?,
            gap: param(&params, "L", text)?,
        },
    })
}

fn oscillator(cfg: &RunConfig, nl: Nonlinearity) -> Result<OscillatorModel> {
    let (m, c, k) = cfg.oscillator.physical();
    OscillatorModel::new(m, c, k, nl)
}

fn model_nonlinearity(model: Model) -> Nonlinearity {
    match model {
        Model::Hinge(h) => Nonlinearity::Fitted(h),
        Model::Potential(p) => Nonlinearity::FittedPotential(p),
    }
}

fn source_nonlinearity(src: &ModelSource) -> Result<(Nonlinearity, String)> {
    match (&src.model, &src.exact) {
        (Some(p), _) => Ok((model_nonlinearity(load_model(p)?.model), p.display().to_string())),
        (None, Some(e)) => Ok((exact_nonlinearity(e)?, e.clone())),
        (None, None) => Err(Error::invalid("give --model or --exact")),
    }
}

fn forcing(cfg: &RunConfig, need_freq: bool) -> Result<Forcing> {
    let freq = || -> Result<f64> {
        match cfg.forcing_freq_hz {
            Some(f) => Ok(f),
            None if !need_freq => Ok(1.0),
            None => Err(Error::config("forcing.freq_hz", "required for forced simulation")),
        }
    };
    Ok(match cfg.forcing_kind {
        ForcingKind::None => Forcing::None,
        ForcingKind::Harmonic => Forcing::Harmonic {
            amplitude: cfg.forcing_amplitude,
            freq_hz: freq()?,
        },
        ForcingKind::Base => Forcing::BaseExcitation {
            amplitude: cfg.forcing_amplitude,
            freq_hz: freq()?,
        },
    })
}

fn fit_options(cfg: &RunConfig) -> FitOptions {
    FitOptions {
        rtol: cfg.rtol,
        threshold: cfg.threshold,
    }
}

fn write_report(path: &Path, lines: &[(&str, String)]) -> Result<()> {
    let mut text = String::new();
    for (k, v) in lines {
        let _ = writeln!(text, "{k} = {v}");
    }
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn report_lines(r: &FitReport) -> Vec<(&'static str, String)> {
    vec![
        ("fit_residual_rms", fmt_f64(r.residual_rms)),
        ("rank_used", r.rank_used.to_string()),
        ("n_columns", r.n_columns.to_string()),
        ("condition_estimate", fmt_f64(r.condition_estimate)),
    ]
}

/// Read a key from a `key = value` report file written by the fit commands.
pub fn read_report_value(path: impl AsRef<Path>, key: &str) -> Result<String> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .filter_map(|l| l.split_once('='))
        .find(|(k, _)| k.trim() == key)
        .map(|(_, v)| v.trim().to_string())
        .ok_or_else(|| Error::format(path, format!("no `{key}` entry")))
}

fn cmd_synth(a: &SynthArgs, written: &mut Vec<PathBuf>) -> Result<(i32, String)> {
    if let Some(law) = &a.forces {
        let (lo, hi) = a
            .range
            .split_once(',')
            .and_then(|(l, h)| Some((l.trim().parse::<f64>().ok()?, h.trim().parse::<f64>().ok()?)))
            .ok_or_else(|| Error::invalid(format!("--range expects lo,hi, got `{}`", a.range)))?;
        if !(hi > lo) || a.samples < 2 {
            return Err(Error::invalid("--range needs lo < hi and --samples ≥ 2"));
        }
        let (name, params) = parse_law(law)?;
        let (x, f) = match name.as_str() {
            "cubic" => synth::cubic_force_samples(param(&params, "p2", law)?, lo, hi, a.samples),
            "gap" => synth::gap_force_samples(param(&params, "p2", law)?, param(&params, "L", law)?, lo, hi, a.samples),
            other => return Err(Error::invalid(format!("unknown force law `{other}` (cubic, gap)"))),
        };
        write_columns_csv(&a.out, &["x", "f"], &[&x, &f])?;
        written.push(a.out.clone());
        return Ok((0, format!("wrote {} samples of `{law}` on [{lo}, {hi}]", x.len())));
    }

    let system = a.system.as_deref().unwrap_or_default();
    let (model, x0, duration) = match system {
        "duffing" => (synth::duffing(), -4.0, 30.0),
        "pwl" => (synth::gap_oscillator(), -2.0, 60.0),
        "surrogate" => (synth::softening_surrogate().oscillator(), 0.012, 5.0),
        other => return Err(Error::invalid(format!("unknown system `{other}` (duffing, pwl, surrogate)"))),
    };
    let x0 = a.x0.unwrap_or(x0);
    let duration = a.duration.unwrap_or(duration);
    if !(a.dt > 0.0) || !(duration > 0.0) {
        return Err(Error::invalid("--dt and --duration must be positive"));
    }
    if !(a.noise >= 0.0) {
        return Err(Error::invalid(format!("--noise must be ≥ 0, got {}", a.noise)));
    }
    let n = (duration / a.dt).round() as usize;
    let tr = synth::free_response(&model, x0, a.v0, a.dt, n, a.substeps)?;
    if a.noise > 0.0 {
        let x = synth::add_noise(&tr.x, a.noise, a.seed)?;
        write_timeseries_csv(&a.out, &[&x])?;
    } else {
        write_timeseries_csv(&a.out, &[&tr.x, &tr.v, &tr.a])?;
    }
    written.push(a.out.clone());
    Ok((
        0,
        format!(
            "{system} free response from x0 = {x0} m: {n} samples at dt = {} s, noise std {} m",
            a.dt, a.noise
        ),
    ))
}

fn cmd_fit_direct(a: &FitDirectArgs, written: &mut Vec<PathBuf>) -> Result<(i32, String)> {
    let cfg = config_or_default(&a.config)?;
    let table = read_csv_columns(&a.input)?;
    let missing = |c: &str| Error::format(&a.input, format!("missing column `{c}`"));
    let x = table.column("x").ok_or_else(|| missing("x"))?;
    let f = table.column("f").ok_or_else(|| missing("f"))?;
    if x.is_empty() {
        return Err(Error::format(&a.input, "no samples"));
    }
    let lo = cfg.grid_x_lo.unwrap_or(x[0]);
    let hi = cfg.grid_x_hi.unwrap_or(x[x.len() - 1]);
    let grid = uniform_gap_grid(lo, hi, cfg.grid_m, cfg.grid_n)?;
    let (model, report) = fit_direct_with(x, f, &grid, &fit_options(&cfg))?;

    let max_err = x.iter().zip(f).map(|(x, f)| (model.eval(*x) - f).abs()).fold(0.0, f64::max);
    let f_max = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rel = if f_max > 0.0 { max_err / f_max } else { 0.0 };

    save_model(&a.out, &ModelFile { model: Model::Hinge(model.clone()), report: Some(report.clone()) })?;
    written.push(a.out.clone());

    let coef_path = sibling(&a.out, "_coefficients.csv");
    let (mut gaps, mut coefs, mut sides) = (Vec::new(), Vec::new(), Vec::new());
    for (spec, k) in model.specs().iter().zip(model.kappa()) {
        let side = match spec {
            BasisSpec::MinHinge(_) => -1.0,
            _ => 1.0,
        };
        gaps.push(spec.gap().unwrap_or(f64::NAN));
        coefs.push(*k);
        sides.push(side);
    }
    write_columns_csv(&coef_path, &["gap", "coefficient", "side"], &[&gaps, &coefs, &sides])?;
    written.push(coef_path);

    let report_path = sibling(&a.out, "_report.txt");
    let mut lines = report_lines(&report);
    lines.push(("max_abs_error", fmt_f64(max_err)));
    lines.push(("max_rel_error", fmt_f64(rel)));
    write_report(&report_path, &lines)?;
    written.push(report_path);

    Ok((
        0,
        format!(
            "direct fit ({}, {}) on {} samples: rank {}/{}, residual rms {:.3e}, max error {:.3e} ({:.3}% of max|f|)",
            cfg.grid_m,
            cfg.grid_n,
            x.len(),
            report.rank_used,
            report.n_columns,
            report.residual_rms,
            max_err,
            100.0 * rel
        ),
    ))
}

/// Identification record: displacement with its first two derivatives.
fn load_response(args: &FitResponseArgs, cfg: &RunConfig) -> Result<Partition> {
    let channels = read_timeseries_csv(&args.input)?;
    let find = |l: &str| channels.iter().find(|s| s.label == l);
    let x = find("x").unwrap_or(&channels[0]);
    if x.len() < 3 {
        return Err(Error::format(&args.input, format!("{} samples; at least 3 needed", x.len())));
    }
    match (find("v"), find("a")) {
        (Some(v), Some(a)) if !args.from_displacement => Ok(Partition {
            x: x.clone(),
            v: v.clone(),
            a: a.clone(),
        }),
        _ => derive_states(x, cfg.cutoff_hz),
    }
}

/// Fit and held-out scores of one identified model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Holdout {
    /// Acceleration residual over the fit window.
    pub fit_rmse: f64,
    /// Acceleration prediction error over the held-out window, with the model
    /// evaluated on the measured states.
    pub validation_rmse: f64,
    /// Displacement error of a free-run forecast across the held-out window,
    /// started from its first measured state.
    pub forecast_rmse: f64,
}

/// Score `model` on a held-out partition. `substeps` RK4 steps are taken per
/// record sample during the forecast.
pub fn holdout_scores(model: &OscillatorModel, fit_rmse: f64, val: &Partition, substeps: usize) -> Result<Holdout> {
    let n = val.x.len();
    let mut se = 0.0;
    for i in 0..n {
        let pred = model.acceleration(val.x.time(i), val.x.values[i], val.v.values[i]);
        se += (pred - val.a.values[i]).powi(2);
    }
    let forecast = integrate_sampled(model, val.x.values[0], val.v.values[0], val.x.t0, val.x.dt, n, substeps)?;
    Ok(Holdout {
        fit_rmse,
        validation_rmse: (se / n as f64).sqrt(),
        forecast_rmse: rmse(&forecast.x, &val.x)?,
    })
}

fn substeps_for(record_dt: f64, cfg: &RunConfig) -> usize {
    ((record_dt / cfg.dt).round() as usize).max(1)
}

#[derive(Clone, Copy)]
enum ResponseFit {
    Indirect,
    Potential { psi_count: usize },
}

fn fit_response(kind: ResponseFit, fit: &Partition, cfg: &RunConfig) -> Result<(Model, FitReport, OscillatorModel)> {
    let (zeta, omega_n) = cfg.oscillator.modal();
    let (m, c, k) = cfg.oscillator.physical();
    match kind {
        ResponseFit::Indirect => {
            let (lo, hi) = fit.x.min_max();
            let grid = uniform_gap_grid(cfg.grid_x_lo.unwrap_or(lo), cfg.grid_x_hi.unwrap_or(hi), cfg.grid_m, cfg.grid_n)?;
            let (model, report) = fit_indirect_with(&fit.x, &fit.v, &fit.a, zeta, omega_n, &grid, &fit_options(cfg))?;
            let osc = OscillatorModel::new(m, c, k, Nonlinearity::Fitted(model.clone()))?;
            Ok((Model::Hinge(model), report, osc))
        }
        ResponseFit::Potential { psi_count } => {
            let (lo, hi) = fit.x.min_max();
            let x_max = cfg.grid_x_hi.unwrap_or(lo.abs().max(hi.abs()));
            let gaps = psi_gap_grid(x_max, psi_count)?;
            let opts = PotentialOptions {
                linear_column: cfg.linear_column,
                fit: fit_options(cfg),
            };
            let (model, report) = fit_potential_constrained_with(&fit.x, &fit.v, &fit.a, zeta, omega_n, &gaps, &opts)?;
            let osc = OscillatorModel::new(m, c, k, Nonlinearity::FittedPotential(model.clone()))?;
            Ok((Model::Potential(model), report, osc))
        }
    }
}

/// One row of a scan table; a diverged forecast is recorded as NaN.
fn scan_row(kind: ResponseFit, data: &Partition, fraction: f64, cfg: &RunConfig) -> Result<[f64; 3]> {
    let (fit, val) = split_fit_validate(&data.x, &data.v, &data.a, fraction)?;
    let (_, report, osc) = fit_response(kind, &fit, cfg)?;
    match holdout_scores(&osc, report.residual_rms, &val, substeps_for(data.x.dt, cfg)) {
        Ok(h) => Ok([h.fit_rmse, h.validation_rmse, h.forecast_rmse]),
        Err(e) if e.is_numerical() => Ok([report.residual_rms, f64::NAN, f64::NAN]),
        Err(e) => Err(e),
    }
}

fn run_response_fit(
    args: &FitResponseArgs,
    kind: ResponseFit,
    psi_scan: &[usize],
    written: &mut Vec<PathBuf>,
) -> Result<(i32, String)> {
    let cfg = config_or_default(&args.config)?;
    let data = load_response(args, &cfg)?;
    let (fit, val) = split_fit_validate(&data.x, &data.v, &data.a, cfg.fit_fraction)?;
    let (model, report, osc) = fit_response(kind, &fit, &cfg)?;
    save_model(&args.out, &ModelFile { model, report: Some(report.clone()) })?;
    written.push(args.out.clone());

    let scores = holdout_scores(&osc, report.residual_rms, &val, substeps_for(data.x.dt, &cfg))?;
    let report_path = sibling(&args.out, "_report.txt");
    let mut lines = report_lines(&report);
    lines.push(("fit_fraction", fmt_f64(cfg.fit_fraction)));
    lines.push(("validation_rmse", fmt_f64(scores.validation_rmse)));
    lines.push(("forecast_rmse", fmt_f64(scores.forecast_rmse)));
    lines.push((
        "sign_convention",
        match kind {
            ResponseFit::Indirect => "m x'' + c x' + k x + f(x) = 0, f stored per unit mass".to_string(),
            ResponseFit::Potential { .. } => "x'' + 2 zeta omega_n x' + omega_n^2 x = f_t(x), f_t = -dV/dx".to_string(),
        },
    ));
    write_report(&report_path, &lines)?;
    written.push(report_path);

    if args.scan_fit_fraction {
        let path = sibling(&args.out, "_fraction_scan.csv");
        let fractions: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        let mut cols = [Vec::new(), Vec::new(), Vec::new()];
        for &fr in &fractions {
            for (c, v) in cols.iter_mut().zip(scan_row(kind, &data, fr, &cfg)?) {
                c.push(v);
            }
        }
        write_columns_csv(
            &path,
            &["fit_fraction", "fit_rmse", "validation_rmse", "forecast_rmse"],
            &[&fractions, &cols[0], &cols[1], &cols[2]],
        )?;
        written.push(path);
    }
    if !psi_scan.is_empty() {
        let path = sibling(&args.out, "_psi_scan.csv");
        let counts: Vec<f64> = psi_scan.iter().map(|&c| c as f64).collect();
        let mut cols = [Vec::new(), Vec::new(), Vec::new()];
        for &count in psi_scan {
            let row = scan_row(ResponseFit::Potential { psi_count: count }, &data, cfg.fit_fraction, &cfg)?;
            for (c, v) in cols.iter_mut().zip(row) {
                c.push(v);
            }
        }
        write_columns_csv(
            &path,
            &["psi_count", "fit_rmse", "validation_rmse", "forecast_rmse"],
            &[&counts, &cols[0], &cols[1], &cols[2]],
        )?;
        written.push(path);
    }

    let what = match kind {
        ResponseFit::Indirect => format!("indirect fit ({}, {})", cfg.grid_m, cfg.grid_n),
        ResponseFit::Potential { psi_count } => format!("potential fit with {psi_count} psi gaps"),
    };
    Ok((
        0,
        format!(
            "{what} on {} of {} samples: rank {}/{}, fit rms {:.4e} m/s², validation rms {:.4e} m/s², forecast rms {:.4e} m",
            fit.x.len(),
            data.x.len(),
            report.rank_used,
            report.n_columns,
            scores.fit_rmse,
            scores.validation_rmse,
            scores.forecast_rmse
        ),
    ))
}

fn cmd_fit_indirect(a: &FitResponseArgs, written: &mut Vec<PathBuf>) -> Result<(i32, String)> {
    run_response_fit(a, ResponseFit::Indirect, &[], written)
}

fn cmd_fit_potential(a: &FitPotentialArgs, written: &mut Vec<PathBuf>) -> Result<(i32, String)> {
    let cfg = config_or_default(&a.common.config)?;
    if a.scan_psi_count.contains(&0) {
        return Err(Error::invalid("--scan-psi-count entries must be ≥ 1"));
    }
    run_response_fit(&a.common, ResponseFit::Potential { psi_count: cfg.psi_count }, &a.scan_psi_count, written)
}

fn find_channel<'a>(channels: &'a [TimeSeries], name: &str, path: &Path) -> Result<&'a TimeSeries> {
    channels
        .iter()
        .find(|s| s.label == name)
        .ok_or_else(|| Error::format(path, format!("no channel `{name}`")))
}

fn cmd_simulate(a: &SimulateArgs, written: &mut Vec<PathBuf>) -> Result<(i32, String)> {
    let cfg = config_or_default(&a.config)?;
    let (nl, label) = source_nonlinearity(&a.source)?;
    let model = oscillator(&cfg, nl)?.with_forcing(forcing(&cfg, true)?)?;
    let tr = integrate(&model, cfg.x0, cfg.v0, cfg.dt, cfg.t_end)?;
    write_timeseries_csv(&a.out, &[&tr.x, &tr.v, &tr.a])?;
    written.push(a.out.clone());
    let mut summary = format!(
        "simulated {label} from x0 = {}, v0 = {} for {} s ({} samples)",
        cfg.x0,
        cfg.v0,
        cfg.t_end,
        tr.x.len()
    );
    if let Some(r) = &a.reference {
        let channels = read_timeseries_csv(r)?;
        let reference = find_channel(&channels, "x", r)?;
        let e = rmse(&tr.x, reference)?;
        let path = sibling(&a.out, "_report.txt");
        write_report(&path, &[("rmse_x", fmt_f64(e))])?;
        written.push(path);
        let _ = write!(summary, "; displacement rmse vs {}: {e:.4e} m", r.display());
    }
    Ok((0, summary))
}

fn cmd_sweep(a: &SweepArgs, written: &mut Vec<PathBuf>) -> Result<(i32, String)> {
    let cfg = config_or_default(&a.config)?;
    let (nl, label) = source_nonlinearity(&a.source)?;
    let f = forcing(&cfg, false)?;
    if f == Forcing::None {
        return Err(Error::config("forcing.kind", "a sweep needs harmonic or base forcing"));
    }
    let model = oscillator(&cfg, nl)?.with_forcing(f)?;
    let lo = cfg.sweep_f_lo.ok_or_else(|| Error::config("sweep.f_lo", "required for a sweep"))?;
    let hi = cfg.sweep_f_hi.ok_or_else(|| Error::config("sweep.f_hi", "required for a sweep"))?;
    let opts = SteadyStateOptions {
        transient_cycles: cfg.transient_cycles,
        measure_cycles: cfg.measure_cycles,
        steps_per_cycle: cfg.steps_per_cycle,
    };
    let sweep = frequency_sweep(&model, lo, hi, cfg.sweep_n_points, cfg.sweep_direction, opts)?;
    write_sweep_csv(&a.out, &sweep)?;
    written.push(a.out.clone());
    let n_valid = sweep.valid.iter().filter(|v| **v).count();
    let mut summary = format!(
        "{} sweep of {label} over [{lo}, {hi}] Hz: {n_valid}/{} points valid",
        sweep.direction.as_str(),
        sweep.frequencies.len()
    );
    if let Some(i) = sweep.peak_index() {
        let _ = write!(
            summary,
            "; peak amplitude {:.4e} m at {:.4} Hz (f/f_n = {:.4})",
            sweep.amplitudes[i],
            sweep.frequencies[i],
            sweep.frequencies[i] / sweep.f_n
        );
    }
    Ok((if n_valid > 0 { 0 } else { 2 }, summary))
}

fn cmd_backbone(a: &BackboneArgs, written: &mut Vec<PathBuf>) -> Result<(i32, String)> {
    let channels = read_timeseries_csv(&a.input)?;
    let series = find_channel(&channels, &a.channel, &a.input)?;
    let mut curve = backbone_from_free_response(series)?;
    curve.source = a.input.display().to_string();
    write_backbone_csv(&a.out, &curve)?;
    written.push(a.out.clone());
    let (f_lo, f_hi) = curve
        .frequencies
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), f| (l.min(*f), h.max(*f)));
    Ok((
        0,
        format!(
            "{} backbone points, frequency {f_lo:.4}–{f_hi:.4} Hz",
            curve.frequencies.len()
        ),
    ))
}

fn cmd_spectrum(a: &SpectrumArgs, written: &mut Vec<PathBuf>) -> Result<(i32, String)> {
    let window = Window::parse(&a.window)
        .ok_or_else(|| Error::invalid(format!("unknown window `{}` (none, hann)", a.window)))?;
    if let Some(fe) = a.fe {
        if !(fe > 0.0) {
            return Err(Error::invalid(format!("--fe must be > 0, got {fe}")));
        }
    }
    let channels = read_timeseries_csv(&a.input)?;
    let series = find_channel(&channels, &a.channel, &a.input)?;
    let skip = (a.skip / series.dt).round().max(0.0) as usize;
    if series.len() < skip + 2 {
        return Err(Error::invalid(format!(
            "skipping {} s leaves fewer than 2 samples",
            a.skip
        )));
    }
    let tail = series.slice(skip, series.len())?;
    let spectrum = fft_spectrum(&tail, window);
    write_spectrum_csv(&a.out, &spectrum, a.fe)?;
    written.push(a.out.clone());
    let mut summary = format!(
        "{} samples, {}-point FFT, df = {:.4e} Hz",
        spectrum.n_samples, spectrum.n_fft, spectrum.df
    );
    if let Some(fe) = a.fe {
        let m1 = spectrum.magnitude_near(fe, 2);
        let m2 = spectrum.magnitude_near(2.0 * fe, 2);
        let _ = write!(summary, "; M(f_e) = {m1:.4e}, M(2 f_e) = {m2:.4e}");
    }
    Ok((0, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_laws_parse() {
        assert_eq!(exact_nonlinearity("linear").unwrap(), Nonlinearity::None);
        assert_eq!(exact_nonlinearity("cubic:p2=10").unwrap(), Nonlinearity::Cubic { p2: 10.0 });
        assert_eq!(
            exact_nonlinearity("gap:p2=10,L=0.5").unwrap(),
            Nonlinearity::GapSpring { p2: 10.0, gap: 0.5 }
        );
        assert!(exact_nonlinearity("gap:p2=10").is_err());
        assert!(exact_nonlinearity("cubic:p3=1").is_err());
        assert!(exact_nonlinearity("quartic:p2=1").is_err());
        assert!(exact_nonlinearity("cubic:p2=abc").is_err());
    }

    #[test]
    fn parse_failures_exit_one() {
        let out = run_from_args(["hingefit", "sweep", "--bogus"]);
        assert_eq!(out.exit_code, 1);
        let out = run_from_args(["hingefit", "sweep", "--help"]);
        assert_eq!(out.exit_code, 0);
        assert!(out.summary.contains("--exact"));
    }

    #[test]
    fn numerical_errors_exit_two() {
        assert_eq!(CommandOutcome::failure(&Error::Divergence { time: 1.0 }).exit_code, 2);
        assert_eq!(CommandOutcome::failure(&Error::invalid("x")).exit_code, 1);
    }

    #[test]
    fn substeps_follow_config_step() {
        let mut cfg = RunConfig::default();
        cfg.dt = 1e-4;
        assert_eq!(substeps_for(1e-3, &cfg), 10);
        cfg.dt = 1e-2;
        assert_eq!(substeps_for(1e-3, &cfg), 1);
    }
}
