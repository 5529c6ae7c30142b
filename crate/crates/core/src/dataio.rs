//! Plain-text persistence: CSV time series and result tables, the model file,
//! and the `key = value` run configuration.
//!
//! Floats are written with 17 significant digits so every value reads back
//! bit-for-bit. Readers reject malformed input instead of repairing it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::basis::BasisSpec;
use crate::dynamics::{SweepDirection, SweepResult};
use crate::error::{Error, Result};
use crate::regress::{FitReport, ForceModel, PotentialForceModel};
use crate::series::{check_same_grid, TimeSeries};
use crate::sigproc::{BackboneCurve, Spectrum, Window};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Relative tolerance on the spacing of the time column.
const GRID_TOL: f64 = 1e-9;

pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// A parsed CSV table: `# key: value` comment metadata, header, and numeric
/// columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub meta: BTreeMap<String, String>,
    pub header: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.header.iter().position(|h| h == name).map(|i| self.columns[i].as_slice())
    }

    fn require(&self, path: &Path, name: &str) -> Result<&[f64]> {
        self.column(name)
            .ok_or_else(|| Error::format(path, format!("missing column `{name}`")))
    }

    fn meta_f64(&self, path: &Path, key: &str) -> Result<f64> {
        let raw = self
            .meta
            .get(key)
            .ok_or_else(|| Error::format(path, format!("missing `# {key}:` line")))?;
        parse_f64(raw).ok_or_else(|| Error::format(path, format!("`{key}` is not a number: {raw}")))
    }

    fn meta_usize(&self, path: &Path, key: &str) -> Result<usize> {
        let raw = self
            .meta
            .get(key)
            .ok_or_else(|| Error::format(path, format!("missing `# {key}:` line")))?;
        raw.trim()
            .parse()
            .map_err(|_| Error::format(path, format!("`{key}` is not a count: {raw}")))
    }
}

/// Read a numeric CSV. Columns may hold `nan` only when `allow_nan` is set.
fn parse_table(path: &Path, text: &str, allow_nan: bool) -> Result<Table> {
    let mut meta = BTreeMap::new();
    let mut header: Option<Vec<String>> = None;
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            if let Some((k, v)) = c.split_once(':') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        match &header {
            None => {
                let h: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
                if h.iter().any(|s| s.is_empty()) {
                    return Err(Error::format(path, format!("line {}: empty column name", lineno + 1)));
                }
                columns = vec![Vec::new(); h.len()];
                header = Some(h);
            }
            Some(h) => {
                let row = columns[0].len();
                let cells: Vec<&str> = line.split(',').collect();
                if cells.len() != h.len() {
                    return Err(Error::format(
                        path,
                        format!("row {row} (line {}): {} cells, expected {}", lineno + 1, cells.len(), h.len()),
                    ));
                }
                for (j, cell) in cells.iter().enumerate() {
                    let v = parse_f64(cell).ok_or_else(|| {
                        Error::format(path, format!("row {row} (line {}): `{}` is not a number", lineno + 1, cell.trim()))
                    })?;
                    if v.is_nan() && !allow_nan {
                        return Err(Error::format(
                            path,
                            format!("row {row} (line {}): NaN in column `{}`", lineno + 1, h[j]),
                        ));
                    }
                    columns[j].push(v);
                }
            }
        }
    }
    let header = header.ok_or_else(|| Error::format(path, "no header row"))?;
    Ok(Table { meta, header, columns })
}

/// Any numeric CSV with a header row; NaN cells are rejected.
pub fn read_csv_columns(path: impl AsRef<Path>) -> Result<Table> {
    let path = path.as_ref();
    parse_table(path, &read_file(path)?, false)
}

fn render_table(meta: &[(&str, String)], header: &[&str], rows: usize, cell: impl Fn(usize, usize) -> String) -> String {
    let mut out = String::new();
    for (k, v) in meta {
        let _ = writeln!(out, "# {k}: {v}");
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for r in 0..rows {
        for c in 0..header.len() {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&cell(r, c));
        }
        out.push('\n');
    }
    out
}

pub fn write_columns_csv(path: impl AsRef<Path>, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    let rows = columns.first().map_or(0, |c| c.len());
    if columns.len() != header.len() || columns.iter().any(|c| c.len() != rows) {
        return Err(Error::invalid("column count or lengths do not match the header"));
    }
    write_file(
        path.as_ref(),
        &render_table(&[], header, rows, |r, c| fmt_f64(columns[c][r])),
    )
}

/// Channels sharing one grid, written as `t,<label>…` with a `# units:` line
/// listing the time unit followed by each channel's unit, and the exact step
/// in `# dt:`.
pub fn write_timeseries_csv(path: impl AsRef<Path>, channels: &[&TimeSeries]) -> Result<()> {
    if channels.is_empty() {
        return Err(Error::invalid("no channels to write"));
    }
    check_same_grid(channels)?;
    let first = channels[0];
    let mut header = vec!["t"];
    header.extend(channels.iter().map(|s| s.label.as_str()));
    let units = std::iter::once("s")
        .chain(channels.iter().map(|s| s.units.as_str()))
        .collect::<Vec<_>>()
        .join(",");
    let meta = [("units", units), ("dt", fmt_f64(first.dt))];
    let text = render_table(&meta, &header, first.len(), |r, c| {
        if c == 0 {
            fmt_f64(first.time(r))
        } else {
            fmt_f64(channels[c - 1].values[r])
        }
    });
    write_file(path.as_ref(), &text)
}

pub fn read_timeseries_csv(path: impl AsRef<Path>) -> Result<Vec<TimeSeries>> {
    let path = path.as_ref();
    let table = parse_table(path, &read_file(path)?, false)?;
    timeseries_from_table(path, &table)
}

fn timeseries_from_table(path: &Path, table: &Table) -> Result<Vec<TimeSeries>> {
    if table.header.first().map(String::as_str) != Some("t") {
        return Err(Error::format(path, "first column must be `t`"));
    }
    if table.header.len() < 2 {
        return Err(Error::format(path, "no data channels after `t`"));
    }
    let t = &table.columns[0];
    if t.len() < 2 {
        return Err(Error::format(path, format!("need at least 2 rows to fix the time step, got {}", t.len())));
    }
    for i in 1..t.len() {
        if !(t[i] > t[i - 1]) {
            return Err(Error::format(path, format!("row {i}: time not strictly increasing")));
        }
    }
    let mut dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    if let Some(raw) = table.meta.get("dt") {
        let declared = parse_f64(raw).ok_or_else(|| Error::format(path, format!("`dt` is not a number: {raw}")))?;
        if (declared - dt).abs() > GRID_TOL * dt {
            return Err(Error::format(path, format!("declared dt {declared} disagrees with time column ({dt})")));
        }
        dt = declared;
    }
    // allow for the decimal rendering of large time stamps
    for (i, &ti) in t.iter().enumerate() {
        let tol = GRID_TOL * dt + 4.0 * f64::EPSILON * ti.abs();
        if (ti - (t[0] + dt * i as f64)).abs() > tol {
            return Err(Error::format(path, format!("row {i}: time grid not uniform")));
        }
    }
    let units: Vec<String> = match table.meta.get("units") {
        Some(u) => {
            let parts: Vec<String> = u.split(',').map(|s| s.trim().to_string()).collect();
            if parts.len() != table.header.len() {
                return Err(Error::format(
                    path,
                    format!("units line lists {} entries for {} columns", parts.len(), table.header.len()),
                ));
            }
            parts
        }
        None => vec![String::new(); table.header.len()],
    };
    table.header[1..]
        .iter()
        .zip(&table.columns[1..])
        .zip(&units[1..])
        .map(|((label, values), unit)| TimeSeries::new(t[0], dt, values.clone(), label.clone(), unit.clone()))
        .collect()
}

pub fn write_sweep_csv(path: impl AsRef<Path>, sweep: &SweepResult) -> Result<()> {
    let n = sweep.frequencies.len();
    if sweep.amplitudes.len() != n || sweep.valid.len() != n || sweep.phase_deg.as_ref().is_some_and(|p| p.len() != n) {
        return Err(Error::invalid("sweep columns differ in length"));
    }
    let mut header = vec!["f_hz", "f_over_fn", "amplitude", "amp_over_xst", "valid", "direction"];
    if sweep.phase_deg.is_some() {
        header.extend(["transmissibility", "phase_deg"]);
    }
    let meta = [
        ("f_n", fmt_f64(sweep.f_n)),
        ("x_st", fmt_f64(sweep.x_st)),
        ("direction", sweep.direction.as_str().to_string()),
        ("transient_cycles", sweep.transient_cycles.to_string()),
        ("measure_cycles", sweep.measure_cycles.to_string()),
    ];
    let dir_code = match sweep.direction {
        SweepDirection::Up => "1",
        SweepDirection::Down => "-1",
        SweepDirection::ColdStart => "0",
    };
    let text = render_table(&meta, &header, n, |r, c| {
        let amp = if sweep.valid[r] { sweep.amplitudes[r] } else { f64::NAN };
        match c {
            0 => fmt_f64(sweep.frequencies[r]),
            1 => fmt_f64(sweep.frequencies[r] / sweep.f_n),
            2 => fmt_f64(amp),
            3 | 6 => fmt_f64(amp / sweep.x_st),
            4 => (sweep.valid[r] as u8).to_string(),
            5 => dir_code.to_string(),
            _ => fmt_f64(sweep.phase_deg.as_ref().expect("phase column")[r]),
        }
    });
    write_file(path.as_ref(), &text)
}

pub fn read_sweep_csv(path: impl AsRef<Path>) -> Result<SweepResult> {
    let path = path.as_ref();
    let t = parse_table(path, &read_file(path)?, true)?;
    let dir_name = t
        .meta
        .get("direction")
        .ok_or_else(|| Error::format(path, "missing `# direction:` line"))?;
    let direction = SweepDirection::parse(dir_name)
        .ok_or_else(|| Error::format(path, format!("unknown sweep direction `{dir_name}`")))?;
    let valid = t
        .require(path, "valid")?
        .iter()
        .enumerate()
        .map(|(i, &v)| match v {
            0.0 => Ok(false),
            1.0 => Ok(true),
            _ => Err(Error::format(path, format!("row {i}: valid flag must be 0 or 1"))),
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(SweepResult {
        frequencies: t.require(path, "f_hz")?.to_vec(),
        amplitudes: t.require(path, "amplitude")?.to_vec(),
        valid,
        direction,
        f_n: t.meta_f64(path, "f_n")?,
        x_st: t.meta_f64(path, "x_st")?,
        transient_cycles: t.meta_usize(path, "transient_cycles")?,
        measure_cycles: t.meta_usize(path, "measure_cycles")?,
        phase_deg: t.column("phase_deg").map(<[f64]>::to_vec),
    })
}

pub fn write_backbone_csv(path: impl AsRef<Path>, curve: &BackboneCurve) -> Result<()> {
    let meta = [("source", curve.source.clone())];
    let text = render_table(&meta, &["amplitude", "frequency_hz"], curve.amplitudes.len(), |r, c| {
        fmt_f64(if c == 0 { curve.amplitudes[r] } else { curve.frequencies[r] })
    });
    write_file(path.as_ref(), &text)
}

pub fn read_backbone_csv(path: impl AsRef<Path>) -> Result<BackboneCurve> {
    let path = path.as_ref();
    let t = parse_table(path, &read_file(path)?, false)?;
    Ok(BackboneCurve {
        amplitudes: t.require(path, "amplitude")?.to_vec(),
        frequencies: t.require(path, "frequency_hz")?.to_vec(),
        source: t.meta.get("source").cloned().unwrap_or_default(),
    })
}

/// Spectrum table; the `f_over_fe` column is present when `f_e` is given.
pub fn write_spectrum_csv(path: impl AsRef<Path>, spectrum: &Spectrum, f_e: Option<f64>) -> Result<()> {
    let mut meta = vec![
        (
            "normalization",
            "single-sided amplitude: 2|X_k|/(N*mean(w)), DC and Nyquist |X_k|/(N*mean(w))".to_string(),
        ),
        ("window", spectrum.window.as_str().to_string()),
        ("n_samples", spectrum.n_samples.to_string()),
        ("n_fft", spectrum.n_fft.to_string()),
        ("df", fmt_f64(spectrum.df)),
    ];
    let mut header = vec!["f_hz"];
    if let Some(fe) = f_e {
        if !(fe > 0.0) {
            return Err(Error::invalid(format!("excitation frequency must be > 0, got {fe}")));
        }
        meta.push(("f_e", fmt_f64(fe)));
        header.push("f_over_fe");
    }
    header.push("magnitude");
    let last = header.len() - 1;
    let text = render_table(&meta, &header, spectrum.frequencies.len(), |r, c| {
        let f = spectrum.frequencies[r];
        match (c, f_e) {
            (0, _) => fmt_f64(f),
            (c, _) if c == last => fmt_f64(spectrum.magnitudes[r]),
            (_, Some(fe)) => fmt_f64(f / fe),
            _ => unreachable!(),
        }
    });
    write_file(path.as_ref(), &text)
}

pub fn read_spectrum_csv(path: impl AsRef<Path>) -> Result<Spectrum> {
    let path = path.as_ref();
    let t = parse_table(path, &read_file(path)?, false)?;
    let window_name = t.meta.get("window").map(String::as_str).unwrap_or("none");
    Ok(Spectrum {
        frequencies: t.require(path, "f_hz")?.to_vec(),
        magnitudes: t.require(path, "magnitude")?.to_vec(),
        df: t.meta_f64(path, "df")?,
        n_samples: t.meta_usize(path, "n_samples")?,
        n_fft: t.meta_usize(path, "n_fft")?,
        window: Window::parse(window_name)
            .ok_or_else(|| Error::format(path, format!("unknown window `{window_name}`")))?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Hinge(ForceModel),
    Potential(PotentialForceModel),
}

impl Model {
    pub fn eval_force(&self, x: f64) -> f64 {
        match self {
            Model::Hinge(m) => m.eval(x),
            Model::Potential(p) => p.eval_force(x),
        }
    }
}

/// A model together with the diagnostics of the fit that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: Model,
    pub report: Option<FitReport>,
}

pub fn render_model(file: &ModelFile) -> String {
    let mut out = String::from("# hingefit model\n");
    let _ = writeln!(out, "format_version = {MODEL_FORMAT_VERSION}");
    match &file.model {
        Model::Hinge(m) => {
            out.push_str("kind = hinge\n");
            let _ = writeln!(out, "normalized_by_mass = {}", m.normalized_by_mass());
            let (lo, hi) = m.fit_range();
            let _ = writeln!(out, "fit_range = {} {}", fmt_f64(lo), fmt_f64(hi));
        }
        Model::Potential(p) => {
            out.push_str("kind = potential\n");
            let _ = writeln!(out, "q1 = {}", fmt_f64(p.q1));
            let _ = writeln!(out, "q2 = {}", fmt_f64(p.q2));
        }
    }
    if let Some(r) = &file.report {
        let _ = writeln!(out, "report.residual_rms = {}", fmt_f64(r.residual_rms));
        let _ = writeln!(out, "report.rank_used = {}", r.rank_used);
        let _ = writeln!(out, "report.n_columns = {}", r.n_columns);
        let _ = writeln!(out, "report.condition_estimate = {}", fmt_f64(r.condition_estimate));
        if let Some(l) = r.linear_column {
            let _ = writeln!(out, "report.linear_column = {l}");
        }
    }
    out.push_str("# term = <kind> <gap> <coefficient>\n");
    match &file.model {
        Model::Hinge(m) => {
            for (spec, k) in m.specs().iter().zip(m.kappa()) {
                let gap = spec.gap().map_or_else(|| "-".to_string(), fmt_f64);
                let _ = writeln!(out, "term = {} {} {}", spec.kind_name(), gap, fmt_f64(*k));
            }
        }
        Model::Potential(p) => {
            for (g, k) in p.gaps.iter().zip(&p.kappa) {
                let _ = writeln!(out, "term = psi {} {}", fmt_f64(*g), fmt_f64(*k));
            }
        }
    }
    out
}

pub fn save_model(path: impl AsRef<Path>, file: &ModelFile) -> Result<()> {
    write_file(path.as_ref(), &render_model(file))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let path = path.as_ref();
    parse_model(path, &read_file(path)?)
}

fn parse_spec(path: &Path, kind: &str, gap: &str) -> Result<BasisSpec> {
    let num = |s: &str| parse_f64(s).ok_or_else(|| Error::format(path, format!("bad gap `{s}`")));
    let spec = match kind {
        "min_hinge" => BasisSpec::MinHinge(num(gap)?),
        "max_hinge" => BasisSpec::MaxHinge(num(gap)?),
        "psi" => BasisSpec::PotentialPsi(num(gap)?),
        "constant" => BasisSpec::Constant,
        "linear" => BasisSpec::Linear,
        other => return Err(Error::format(path, format!("unknown basis kind `{other}`"))),
    };
    spec.validate().map_err(|e| Error::format(path, e.to_string()))?;
    Ok(spec)
}

pub fn parse_model(path: &Path, text: &str) -> Result<ModelFile> {
    let mut keys: BTreeMap<String, String> = BTreeMap::new();
    let mut terms: Vec<(BasisSpec, f64)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(path, format!("line {}: expected `key = value`", lineno + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k == "term" {
            let parts: Vec<&str> = v.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(Error::format(
                    path,
                    format!("line {}: term needs `<kind> <gap> <coefficient>`", lineno + 1),
                ));
            }
            let spec = parse_spec(path, parts[0], parts[1])?;
            let coef = parse_f64(parts[2])
                .filter(|c| c.is_finite())
                .ok_or_else(|| Error::format(path, format!("line {}: bad coefficient `{}`", lineno + 1, parts[2])))?;
            terms.push((spec, coef));
        } else if keys.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::format(path, format!("line {}: duplicate key `{k}`", lineno + 1)));
        }
    }

    let take = |keys: &mut BTreeMap<String, String>, k: &str| keys.remove(k);
    let version = take(&mut keys, "format_version").ok_or_else(|| Error::format(path, "missing format_version"))?;
    if version != MODEL_FORMAT_VERSION.to_string() {
        return Err(Error::format(
            path,
            format!("format_version {version} is not supported (expected {MODEL_FORMAT_VERSION})"),
        ));
    }
    let kind = take(&mut keys, "kind").ok_or_else(|| Error::format(path, "missing kind"))?;
    let num = |keys: &mut BTreeMap<String, String>, k: &str| -> Result<Option<f64>> {
        match keys.remove(k) {
            None => Ok(None),
            Some(v) => parse_f64(&v)
                .map(Some)
                .ok_or_else(|| Error::format(path, format!("`{k}` is not a number: {v}"))),
        }
    };
    let count = |keys: &mut BTreeMap<String, String>, k: &str| -> Result<Option<usize>> {
        match keys.remove(k) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::format(path, format!("`{k}` is not a count: {v}"))),
        }
    };
    let boolean = |keys: &mut BTreeMap<String, String>, k: &str| -> Result<Option<bool>> {
        match keys.remove(k).as_deref() {
            None => Ok(None),
            Some("true") => Ok(Some(true)),
            Some("false") => Ok(Some(false)),
            Some(v) => Err(Error::format(path, format!("`{k}` must be true or false, got {v}"))),
        }
    };

    let residual = num(&mut keys, "report.residual_rms")?;
    let rank = count(&mut keys, "report.rank_used")?;
    let cols = count(&mut keys, "report.n_columns")?;
    let cond = num(&mut keys, "report.condition_estimate")?;
    let linear = boolean(&mut keys, "report.linear_column")?;
    let report = match (residual, rank, cols, cond) {
        (None, None, None, None) => None,
        (Some(residual_rms), Some(rank_used), Some(n_columns), Some(condition_estimate)) => Some(FitReport {
            residual_rms,
            rank_used,
            n_columns,
            condition_estimate,
            linear_column: linear,
        }),
        _ => return Err(Error::format(path, "fit report is incomplete")),
    };

    let model = match kind.as_str() {
        "hinge" => {
            let normalized = boolean(&mut keys, "normalized_by_mass")?.unwrap_or(false);
            let range = match keys.remove("fit_range") {
                None => (f64::NEG_INFINITY, f64::INFINITY),
                Some(v) => {
                    let p: Vec<Option<f64>> = v.split_whitespace().map(parse_f64).collect();
                    match p.as_slice() {
                        [Some(a), Some(b)] => (*a, *b),
                        _ => return Err(Error::format(path, format!("fit_range needs two numbers, got `{v}`"))),
                    }
                }
            };
            let (specs, kappa): (Vec<_>, Vec<_>) = terms.into_iter().unzip();
            Model::Hinge(ForceModel::new(specs, kappa, normalized, range).map_err(|e| Error::format(path, e.to_string()))?)
        }
        "potential" => {
            let q1 = num(&mut keys, "q1")?.unwrap_or(0.0);
            let q2 = num(&mut keys, "q2")?.unwrap_or(0.0);
            let mut gaps = Vec::with_capacity(terms.len());
            let mut kappa = Vec::with_capacity(terms.len());
            for (spec, k) in terms {
                match spec {
                    BasisSpec::PotentialPsi(g) => {
                        gaps.push(g);
                        kappa.push(k);
                    }
                    other => {
                        return Err(Error::format(
                            path,
                            format!("potential models hold only psi terms, found `{}`", other.kind_name()),
                        ))
                    }
                }
            }
            Model::Potential(
                PotentialForceModel::new(q1, q2, kappa, gaps).map_err(|e| Error::format(path, e.to_string()))?,
            )
        }
        other => return Err(Error::format(path, format!("unknown model kind `{other}`"))),
    };
    if let Some(k) = keys.keys().next() {
        return Err(Error::format(path, format!("unknown key `{k}`")));
    }
    Ok(ModelFile { model, report })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Direct,
    Indirect,
    Potential,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::Indirect => "indirect",
            Method::Potential => "potential",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OscillatorParams {
    Physical { m: f64, c: f64, k: f64 },
    Modal { zeta: f64, omega_n: f64 },
}

impl OscillatorParams {
    /// `(ζ, ω_n)` of the linear part.
    pub fn modal(&self) -> (f64, f64) {
        match *self {
            OscillatorParams::Physical { m, c, k } => {
                let wn = (k / m).sqrt();
                (c / (2.0 * m * wn), wn)
            }
            OscillatorParams::Modal { zeta, omega_n } => (zeta, omega_n),
        }
    }

    /// `(m, c, k)`; modal parameters map to unit mass.
    pub fn physical(&self) -> (f64, f64, f64) {
        match *self {
            OscillatorParams::Physical { m, c, k } => (m, c, k),
            OscillatorParams::Modal { zeta, omega_n } => (1.0, 2.0 * zeta * omega_n, omega_n * omega_n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForcingKind {
    None,
    Harmonic,
    Base,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub grid_x_lo: Option<f64>,
    pub grid_x_hi: Option<f64>,
    pub grid_m: usize,
    pub grid_n: usize,
    pub psi_count: usize,
    pub linear_column: bool,
    pub oscillator: OscillatorParams,
    pub forcing_kind: ForcingKind,
    pub forcing_amplitude: f64,
    pub forcing_freq_hz: Option<f64>,
    pub dt: f64,
    pub t_end: f64,
    pub x0: f64,
    pub v0: f64,
    pub sweep_f_lo: Option<f64>,
    pub sweep_f_hi: Option<f64>,
    pub sweep_n_points: usize,
    pub sweep_direction: SweepDirection,
    pub steps_per_cycle: usize,
    pub transient_cycles: usize,
    pub measure_cycles: usize,
    pub cutoff_hz: Option<f64>,
    pub fit_fraction: f64,
    pub threshold: Option<f64>,
    pub rtol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            method: Method::Direct,
            grid_x_lo: None,
            grid_x_hi: None,
            grid_m: 128,
            grid_n: 128,
            psi_count: 32,
            linear_column: true,
            oscillator: OscillatorParams::Physical { m: 1.0, c: 0.1, k: 1.0 },
            forcing_kind: ForcingKind::None,
            forcing_amplitude: 0.0,
            forcing_freq_hz: None,
            dt: 1e-3,
            t_end: 30.0,
            x0: 0.0,
            v0: 0.0,
            sweep_f_lo: None,
            sweep_f_hi: None,
            sweep_n_points: 100,
            sweep_direction: SweepDirection::Up,
            steps_per_cycle: 1000,
            transient_cycles: 180,
            measure_cycles: 20,
            cutoff_hz: None,
            fit_fraction: 0.6,
            threshold: None,
            rtol: crate::regress::DEFAULT_RTOL,
        }
    }
}

const CONFIG_KEYS: &[&str] = &[
    "method",
    "grid.x_lo",
    "grid.x_hi",
    "grid.M",
    "grid.N",
    "grid.psi_count",
    "grid.linear_column",
    "oscillator.m",
    "oscillator.c",
    "oscillator.k",
    "oscillator.zeta",
    "oscillator.omega_n",
    "forcing.kind",
    "forcing.amplitude",
    "forcing.freq_hz",
    "integrate.dt",
    "integrate.t_end",
    "integrate.x0",
    "integrate.v0",
    "sweep.f_lo",
    "sweep.f_hi",
    "sweep.n_points",
    "sweep.direction",
    "sweep.steps_per_cycle",
    "sweep.transient_cycles",
    "sweep.measure_cycles",
    "preprocess.cutoff_hz",
    "preprocess.fit_fraction",
    "fit.threshold",
    "fit.rtol",
];

fn cfg_f64(key: &str, v: &str) -> Result<f64> {
    parse_f64(v)
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::config(key, format!("expected a finite number, got `{v}`")))
}

fn cfg_usize(key: &str, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| Error::config(key, format!("expected a non-negative integer, got `{v}`")))
}

fn cfg_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::config(key, format!("expected true or false, got `{v}`"))),
    }
}

fn ensure(ok: bool, key: &str, constraint: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(key, format!("must satisfy {constraint}")))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut raw: BTreeMap<&str, &str> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", lineno + 1), "expected `key = value`"))?;
            let (k, v) = (k.trim(), v.trim());
            if !CONFIG_KEYS.contains(&k) {
                return Err(Error::config(k, "unknown key"));
            }
            if raw.insert(k, v).is_some() {
                return Err(Error::config(k, "given more than once"));
            }
        }

        let mut c = RunConfig::default();
        let f = |k: &str| raw.get(k).map(|v| cfg_f64(k, v)).transpose();
        let u = |k: &str| raw.get(k).map(|v| cfg_usize(k, v)).transpose();

        if let Some(v) = raw.get("method") {
            c.method = match *v {
                "direct" => Method::Direct,
                "indirect" => Method::Indirect,
                "potential" => Method::Potential,
                other => return Err(Error::config("method", format!("expected direct|indirect|potential, got `{other}`"))),
            };
        }
        c.grid_x_lo = f("grid.x_lo")?;
        c.grid_x_hi = f("grid.x_hi")?;
        c.grid_m = u("grid.M")?.unwrap_or(c.grid_m);
        c.grid_n = u("grid.N")?.unwrap_or(c.grid_n);
        c.psi_count = u("grid.psi_count")?.unwrap_or(c.psi_count);
        if let Some(v) = raw.get("grid.linear_column") {
            c.linear_column = cfg_bool("grid.linear_column", v)?;
        }

        let physical = ["oscillator.m", "oscillator.c", "oscillator.k"].iter().any(|k| raw.contains_key(k));
        let modal = ["oscillator.zeta", "oscillator.omega_n"].iter().any(|k| raw.contains_key(k));
        if physical && modal {
            return Err(Error::config(
                "oscillator.zeta",
                "give either m, c, k or zeta, omega_n, not both",
            ));
        }
        if modal {
            let zeta = f("oscillator.zeta")?
                .ok_or_else(|| Error::config("oscillator.zeta", "required together with omega_n"))?;
            let omega_n = f("oscillator.omega_n")?
                .ok_or_else(|| Error::config("oscillator.omega_n", "required together with zeta"))?;
            ensure(zeta >= 0.0, "oscillator.zeta", "zeta ≥ 0")?;
            ensure(omega_n > 0.0, "oscillator.omega_n", "omega_n > 0")?;
            c.oscillator = OscillatorParams::Modal { zeta, omega_n };
        } else {
            let m = f("oscillator.m")?.unwrap_or(1.0);
            let damping = f("oscillator.c")?.unwrap_or(0.1);
            let k = f("oscillator.k")?.unwrap_or(1.0);
            ensure(m > 0.0, "oscillator.m", "m > 0")?;
            ensure(damping >= 0.0, "oscillator.c", "c ≥ 0")?;
            c.oscillator = OscillatorParams::Physical { m, c: damping, k };
        }

        if let Some(v) = raw.get("forcing.kind") {
            c.forcing_kind = match *v {
                "none" => ForcingKind::None,
                "harmonic" => ForcingKind::Harmonic,
                "base" => ForcingKind::Base,
                other => return Err(Error::config("forcing.kind", format!("expected none|harmonic|base, got `{other}`"))),
            };
        }
        c.forcing_amplitude = f("forcing.amplitude")?.unwrap_or(c.forcing_amplitude);
        c.forcing_freq_hz = f("forcing.freq_hz")?;
        if let Some(fe) = c.forcing_freq_hz {
            ensure(fe > 0.0, "forcing.freq_hz", "freq_hz > 0")?;
        }
        if c.forcing_kind == ForcingKind::Base {
            ensure(c.forcing_amplitude > 0.0, "forcing.amplitude", "amplitude > 0 for base excitation")?;
        }

        c.dt = f("integrate.dt")?.unwrap_or(c.dt);
        ensure(c.dt > 0.0, "integrate.dt", "dt > 0")?;
        c.t_end = f("integrate.t_end")?.unwrap_or(c.t_end);
        ensure(c.t_end > 0.0, "integrate.t_end", "t_end > 0")?;
        c.x0 = f("integrate.x0")?.unwrap_or(c.x0);
        c.v0 = f("integrate.v0")?.unwrap_or(c.v0);

        c.sweep_f_lo = f("sweep.f_lo")?;
        c.sweep_f_hi = f("sweep.f_hi")?;
        if let Some(lo) = c.sweep_f_lo {
            ensure(lo > 0.0, "sweep.f_lo", "f_lo > 0")?;
        }
        if let (Some(lo), Some(hi)) = (c.sweep_f_lo, c.sweep_f_hi) {
            ensure(hi > lo, "sweep.f_hi", "f_hi > f_lo")?;
        }
        c.sweep_n_points = u("sweep.n_points")?.unwrap_or(c.sweep_n_points);
        ensure(c.sweep_n_points >= 2, "sweep.n_points", "n_points ≥ 2")?;
        if let Some(v) = raw.get("sweep.direction") {
            c.sweep_direction = SweepDirection::parse(v)
                .ok_or_else(|| Error::config("sweep.direction", format!("expected up|down|cold-start, got `{v}`")))?;
        }
        c.steps_per_cycle = u("sweep.steps_per_cycle")?.unwrap_or(c.steps_per_cycle);
        ensure(c.steps_per_cycle >= 8, "sweep.steps_per_cycle", "steps_per_cycle ≥ 8")?;
        c.transient_cycles = u("sweep.transient_cycles")?.unwrap_or(c.transient_cycles);
        c.measure_cycles = u("sweep.measure_cycles")?.unwrap_or(c.measure_cycles);
        ensure(c.measure_cycles >= 1, "sweep.measure_cycles", "measure_cycles ≥ 1")?;

        c.cutoff_hz = f("preprocess.cutoff_hz")?;
        if let Some(fc) = c.cutoff_hz {
            ensure(fc > 0.0, "preprocess.cutoff_hz", "cutoff_hz > 0")?;
        }
        c.fit_fraction = f("preprocess.fit_fraction")?.unwrap_or(c.fit_fraction);
        ensure(
            c.fit_fraction > 0.0 && c.fit_fraction < 1.0,
            "preprocess.fit_fraction",
            "0 < fit_fraction < 1",
        )?;
        c.threshold = f("fit.threshold")?;
        if let Some(t) = c.threshold {
            ensure(t >= 0.0, "fit.threshold", "threshold ≥ 0")?;
        }
        c.rtol = f("fit.rtol")?.unwrap_or(c.rtol);
        ensure(c.rtol > 0.0 && c.rtol < 1.0, "fit.rtol", "0 < rtol < 1")?;

        if let (Some(lo), Some(hi)) = (c.grid_x_lo, c.grid_x_hi) {
            ensure(hi > lo, "grid.x_hi", "x_hi > x_lo")?;
        }
        match c.method {
            Method::Direct | Method::Indirect => {
                ensure(c.grid_m + c.grid_n >= 1, "grid.M", "M + N ≥ 1")?;
            }
            Method::Potential => {
                ensure(c.psi_count >= 1, "grid.psi_count", "psi_count ≥ 1")?;
                if let Some(lo) = c.grid_x_lo {
                    ensure(lo >= 0.0, "grid.x_lo", "x_lo ≥ 0 for psi gaps")?;
                }
            }
        }
        Ok(c)
    }

    /// Every effective setting as `key = value` lines; parsing the dump
    /// yields the same config.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("method", self.method.as_str().into());
        if let Some(v) = self.grid_x_lo {
            line("grid.x_lo", fmt_f64(v));
        }
        if let Some(v) = self.grid_x_hi {
            line("grid.x_hi", fmt_f64(v));
        }
        line("grid.M", self.grid_m.to_string());
        line("grid.N", self.grid_n.to_string());
        line("grid.psi_count", self.psi_count.to_string());
        line("grid.linear_column", self.linear_column.to_string());
        match self.oscillator {
            OscillatorParams::Physical { m, c, k } => {
                line("oscillator.m", fmt_f64(m));
                line("oscillator.c", fmt_f64(c));
                line("oscillator.k", fmt_f64(k));
            }
            OscillatorParams::Modal { zeta, omega_n } => {
                line("oscillator.zeta", fmt_f64(zeta));
                line("oscillator.omega_n", fmt_f64(omega_n));
            }
        }
        line(
            "forcing.kind",
            match self.forcing_kind {
                ForcingKind::None => "none",
                ForcingKind::Harmonic => "harmonic",
                ForcingKind::Base => "base",
            }
            .into(),
        );
        line("forcing.amplitude", fmt_f64(self.forcing_amplitude));
        if let Some(v) = self.forcing_freq_hz {
            line("forcing.freq_hz", fmt_f64(v));
        }
        line("integrate.dt", fmt_f64(self.dt));
        line("integrate.t_end", fmt_f64(self.t_end));
        line("integrate.x0", fmt_f64(self.x0));
        line("integrate.v0", fmt_f64(self.v0));
        if let Some(v) = self.sweep_f_lo {
            line("sweep.f_lo", fmt_f64(v));
        }
        if let Some(v) = self.sweep_f_hi {
            line("sweep.f_hi", fmt_f64(v));
        }
        line("sweep.n_points", self.sweep_n_points.to_string());
        line("sweep.direction", self.sweep_direction.as_str().into());
        line("sweep.steps_per_cycle", self.steps_per_cycle.to_string());
        line("sweep.transient_cycles", self.transient_cycles.to_string());
        line("sweep.measure_cycles", self.measure_cycles.to_string());
        if let Some(v) = self.cutoff_hz {
            line("preprocess.cutoff_hz", fmt_f64(v));
        }
        line("preprocess.fit_fraction", fmt_f64(self.fit_fraction));
        if let Some(v) = self.threshold {
            line("fit.threshold", fmt_f64(v));
        }
        line("fit.rtol", fmt_f64(self.rtol));
        out
    }
}

pub fn read_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    RunConfig::parse(&read_file(path)?)
}

/// `path` with its extension replaced, for side artifacts next to an output.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}
