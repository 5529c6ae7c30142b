//! Differentiation, filtering, spectra, envelopes and backbone extraction for
//! uniformly sampled records.

use std::f64::consts::{PI, SQRT_2};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::series::{check_same_grid, TimeSeries};

/// Second-order central differences with one-sided second-order stencils at
/// both ends.
pub fn central_difference(series: &TimeSeries) -> Result<TimeSeries> {
    let x = &series.values;
    let n = x.len();
    if n < 3 {
        return Err(Error::invalid(format!("differentiation needs at least 3 samples, got {n}")));
    }
    let h2 = 2.0 * series.dt;
    let mut d = Vec::with_capacity(n);
    d.push((-3.0 * x[0] + 4.0 * x[1] - x[2]) / h2);
    for i in 1..n - 1 {
        d.push((x[i + 1] - x[i - 1]) / h2);
    }
    d.push((3.0 * x[n - 1] - 4.0 * x[n - 2] + x[n - 3]) / h2);
    let units = if series.units.is_empty() {
        String::new()
    } else {
        format!("{}/s", series.units)
    };
    Ok(series.with_values(d, format!("d{}/dt", series.label), units))
}

#[derive(Debug, Clone, Copy)]
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Biquad {
    /// Butterworth low-pass by the bilinear transform, prewarped at `fc`.
    fn butterworth_low_pass(fc: f64, fs: f64) -> Biquad {
        let k = (PI * fc / fs).tan();
        let norm = 1.0 / (1.0 + SQRT_2 * k + k * k);
        let b0 = k * k * norm;
        Biquad {
            b0,
            b1: 2.0 * b0,
            b2: b0,
            a1: 2.0 * (k * k - 1.0) * norm,
            a2: (1.0 - SQRT_2 * k + k * k) * norm,
        }
    }

    /// Direct form I, started in the steady state of a constant input equal
    /// to the first sample, so DC passes untouched.
    fn run(&self, x: &mut [f64]) {
        let (mut x1, mut x2) = (x[0], x[0]);
        let (mut y1, mut y2) = (x[0], x[0]);
        for s in x.iter_mut() {
            let x0 = *s;
            let y0 = self.b0 * x0 + self.b1 * x1 + self.b2 * x2 - self.a1 * y1 - self.a2 * y2;
            x2 = x1;
            x1 = x0;
            y2 = y1;
            y1 = y0;
            *s = y0;
        }
    }
}

/// About three time constants of the analog prototype, at least 9 samples.
fn filter_padding(fs: f64, cutoff_hz: f64) -> usize {
    ((3.0 * fs / (2.0 * PI * cutoff_hz)).ceil() as usize).max(9)
}

/// Zero-phase low-pass: one Butterworth biquad run forward then backward over
/// an oddly reflected, padded copy of the record.
pub fn low_pass(series: &TimeSeries, cutoff_hz: f64) -> Result<TimeSeries> {
    let fs = 1.0 / series.dt;
    if !(cutoff_hz > 0.0) || cutoff_hz >= 0.5 * fs {
        return Err(Error::invalid(format!(
            "cutoff must lie in (0, {}) Hz, got {cutoff_hz}",
            0.5 * fs
        )));
    }
    let x = &series.values;
    let n = x.len();
    if n < 2 {
        return Ok(series.clone());
    }
    let pad = filter_padding(fs, cutoff_hz).min(n - 1);
    let mut buf = Vec::with_capacity(n + 2 * pad);
    buf.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    buf.extend_from_slice(x);
    buf.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    let bq = Biquad::butterworth_low_pass(cutoff_hz, fs);
    bq.run(&mut buf);
    buf.reverse();
    bq.run(&mut buf);
    buf.reverse();
    Ok(series.with_values(buf[pad..pad + n].to_vec(), series.label.clone(), series.units.clone()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    None,
    Hann,
}

impl Window {
    pub fn parse(s: &str) -> Option<Window> {
        match s {
            "none" | "rect" => Some(Window::None),
            "hann" => Some(Window::Hann),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Window::None => "none",
            Window::Hann => "hann",
        }
    }
}

/// Single-sided amplitude spectrum. A sinusoid of amplitude `A` at an
/// on-grid frequency shows magnitude `A`; the DC and Nyquist bins carry
/// `|X_k| / N` instead of `2|X_k| / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub magnitudes: Vec<f64>,
    pub df: f64,
    /// Samples in the record before zero padding.
    pub n_samples: usize,
    pub n_fft: usize,
    pub window: Window,
}

impl Spectrum {
    /// Frequency axis divided by `f_e`.
    pub fn normalized_axis(&self, f_e: f64) -> Vec<f64> {
        self.frequencies.iter().map(|f| f / f_e).collect()
    }

    /// Largest magnitude within `±bins` of the bin nearest `f`.
    pub fn magnitude_near(&self, f: f64, bins: usize) -> f64 {
        let k = (f / self.df).round().max(0.0) as usize;
        let lo = k.saturating_sub(bins);
        let hi = (k + bins).min(self.magnitudes.len() - 1);
        if lo > hi {
            return 0.0;
        }
        self.magnitudes[lo..=hi].iter().copied().fold(0.0, f64::max)
    }
}

pub fn fft_spectrum(series: &TimeSeries, window: Window) -> Spectrum {
    let n = series.len();
    let n_fft = n.next_power_of_two().max(2);
    let weights: Vec<f64> = match window {
        Window::None => vec![1.0; n],
        Window::Hann => (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect(),
    };
    let gain = weights.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = series
        .values
        .iter()
        .zip(&weights)
        .map(|(&x, &w)| Complex::new(x * w, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(n_fft)
        .collect();
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);

    let half = n_fft / 2;
    let scale = n as f64 * gain;
    let magnitudes = (0..=half)
        .map(|k| {
            let m = buf[k].norm() / scale;
            if k == 0 || k == half {
                m
            } else {
                2.0 * m
            }
        })
        .collect();
    let df = 1.0 / (series.dt * n_fft as f64);
    Spectrum {
        frequencies: (0..=half).map(|k| k as f64 * df).collect(),
        magnitudes,
        df,
        n_samples: n,
        n_fft,
        window,
    }
}

/// Piecewise-linear function of time through a set of knots, held constant
/// beyond the first and last knot.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Envelope {
    pub fn eval(&self, t: f64) -> f64 {
        let ts = &self.times;
        if t <= ts[0] {
            return self.values[0];
        }
        if t >= ts[ts.len() - 1] {
            return self.values[ts.len() - 1];
        }
        let j = ts.partition_point(|&s| s <= t);
        let (t0, t1) = (ts[j - 1], ts[j]);
        let w = (t - t0) / (t1 - t0);
        self.values[j - 1] * (1.0 - w) + self.values[j] * w
    }

    pub fn span(&self) -> (f64, f64) {
        (self.times[0], self.times[self.times.len() - 1])
    }
}

/// Strict local extrema, each refined by the vertex of the parabola through
/// it and its two neighbours.
fn extrema(series: &TimeSeries, maxima: bool) -> Envelope {
    let x = &series.values;
    let sign = if maxima { 1.0 } else { -1.0 };
    let mut times = Vec::new();
    let mut values = Vec::new();
    for i in 1..x.len().saturating_sub(1) {
        let (a, b, c) = (sign * x[i - 1], sign * x[i], sign * x[i + 1]);
        if b > a && b > c {
            let denom = a - 2.0 * b + c;
            let off = 0.5 * (a - c) / denom;
            times.push(series.time(i) + off * series.dt);
            values.push(sign * (b - 0.25 * (a - c) * off));
        }
    }
    Envelope { times, values }
}

/// Upper and lower envelopes through the local maxima and minima.
pub fn envelopes(series: &TimeSeries) -> Result<(Envelope, Envelope)> {
    let upper = extrema(series, true);
    let lower = extrema(series, false);
    if upper.times.len() < 2 || lower.times.len() < 2 {
        return Err(Error::invalid(format!(
            "envelopes need at least 2 maxima and 2 minima, found {} and {}",
            upper.times.len(),
            lower.times.len()
        )));
    }
    Ok((upper, lower))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneCurve {
    pub amplitudes: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub source: String,
}

/// Instantaneous amplitude and frequency along a free decay. Upward crossings
/// of the envelope midline delimit periods; each period yields its inverse
/// length and the half-distance between the envelopes at its midpoint.
pub fn backbone_from_free_response(series: &TimeSeries) -> Result<BackboneCurve> {
    let (upper, lower) = envelopes(series)?;
    let t_lo = upper.span().0.max(lower.span().0);
    let t_hi = upper.span().1.min(lower.span().1);
    let centre = |t: f64| 0.5 * (upper.eval(t) + lower.eval(t));

    let mut crossings = Vec::new();
    let x = &series.values;
    let mut prev = x[0] - centre(series.time(0));
    for i in 1..x.len() {
        let t = series.time(i);
        let d = x[i] - centre(t);
        if prev < 0.0 && d >= 0.0 {
            let tc = t - series.dt * d / (d - prev);
            if tc >= t_lo && tc <= t_hi {
                crossings.push(tc);
            }
        }
        prev = d;
    }
    if crossings.len() < 3 {
        return Err(Error::invalid(format!(
            "backbone needs at least 3 upward centre crossings, found {}",
            crossings.len()
        )));
    }
    let mut out = BackboneCurve {
        amplitudes: Vec::new(),
        frequencies: Vec::new(),
        source: series.label.clone(),
    };
    for w in crossings.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        out.frequencies.push(1.0 / (w[1] - w[0]));
        out.amplitudes.push(0.5 * (upper.eval(mid) - lower.eval(mid)));
    }
    Ok(out)
}

/// Lag `θ` of the fundamental, writing the component as `A sin(2πft − θ)`.
fn fundamental_lag(values: &[f64], t0: f64, dt: f64, f: f64) -> f64 {
    let w = 2.0 * PI * f;
    let (mut s, mut c) = (0.0, 0.0);
    for (i, &x) in values.iter().enumerate() {
        let t = t0 + dt * i as f64;
        s += x * (w * t).sin();
        c += x * (w * t).cos();
    }
    (-c).atan2(s)
}

/// Phase of the signal's fundamental at `f_e` behind the reference's, in
/// degrees within `[0, 360)`. The window is trimmed to a whole number of
/// excitation periods.
pub fn phase_shift(reference: &TimeSeries, signal: &TimeSeries, f_e: f64) -> Result<f64> {
    check_same_grid(&[reference, signal])?;
    if !(f_e > 0.0) {
        return Err(Error::invalid(format!("excitation frequency must be > 0, got {f_e}")));
    }
    let periods = (reference.len() as f64 * reference.dt * f_e + 1e-9).floor();
    if periods < 1.0 {
        return Err(Error::invalid("phase window shorter than one excitation period"));
    }
    let n = ((periods / (f_e * reference.dt)).round() as usize).min(reference.len());
    let lag_ref = fundamental_lag(&reference.values[..n], reference.t0, reference.dt, f_e);
    let lag_sig = fundamental_lag(&signal.values[..n], signal.t0, signal.dt, f_e);
    let deg = (lag_sig - lag_ref).to_degrees().rem_euclid(360.0);
    Ok(if deg >= 360.0 { 0.0 } else { deg })
}

pub fn transmissibility(tip_amplitude: f64, base_amplitude: f64) -> Result<f64> {
    if !(base_amplitude > 0.0) {
        return Err(Error::invalid(format!("base amplitude must be > 0, got {base_amplitude}")));
    }
    Ok(tip_amplitude / base_amplitude)
}

pub fn rmse(a: &TimeSeries, b: &TimeSeries) -> Result<f64> {
    check_same_grid(&[a, b])?;
    let ss: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((ss / a.len() as f64).sqrt())
}

/// Displacement, velocity and acceleration over one contiguous stretch.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub x: TimeSeries,
    pub v: TimeSeries,
    pub a: TimeSeries,
}

/// Displacement, velocity and acceleration from a displacement record:
/// optional low-pass, then two central differences. When filtering, the
/// samples within one padding length of either end are dropped, since the
/// reflected padding distorts the second derivative there.
pub fn derive_states(x: &TimeSeries, cutoff_hz: Option<f64>) -> Result<Partition> {
    let (xf, trim) = match cutoff_hz {
        Some(fc) => (low_pass(x, fc)?, filter_padding(1.0 / x.dt, fc) + 1),
        None => (x.clone(), 0),
    };
    let v = central_difference(&xf)?;
    let a = central_difference(&v)?;
    let n = xf.len();
    if n < 2 * trim + 3 {
        return Err(Error::invalid(format!(
            "record of {n} samples is too short for a {trim}-sample edge trim"
        )));
    }
    Ok(Partition {
        x: xf.slice(trim, n - trim)?,
        v: v.slice(trim, n - trim)?,
        a: a.slice(trim, n - trim)?,
    })
}

/// Prefix of `round(fraction · n)` samples for fitting, remainder for
/// validation.
pub fn split_fit_validate(
    x: &TimeSeries,
    v: &TimeSeries,
    a: &TimeSeries,
    fit_fraction: f64,
) -> Result<(Partition, Partition)> {
    if !(fit_fraction > 0.0 && fit_fraction < 1.0) {
        return Err(Error::invalid(format!("fit fraction must lie in (0, 1), got {fit_fraction}")));
    }
    check_same_grid(&[x, v, a])?;
    let n = x.len();
    let k = (fit_fraction * n as f64).round() as usize;
    if k == 0 || k >= n {
        return Err(Error::invalid(format!(
            "fit fraction {fit_fraction} leaves an empty partition of {n} samples"
        )));
    }
    let part = |s: usize, e: usize| -> Result<Partition> {
        Ok(Partition {
            x: x.slice(s, e)?,
            v: v.slice(s, e)?,
            a: a.slice(s, e)?,
        })
    };
    Ok((part(0, k)?, part(k, n)?))
}
