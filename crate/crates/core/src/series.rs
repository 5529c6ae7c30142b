use crate::error::{Error, Result};

/// A uniformly sampled channel.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
    pub label: String,
    pub units: String,
}

impl TimeSeries {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>, label: impl Into<String>, units: impl Into<String>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid(format!("time step must be positive, got {dt}")));
        }
        if !t0.is_finite() {
            return Err(Error::invalid("start time must be finite"));
        }
        if values.is_empty() {
            return Err(Error::invalid("time series must hold at least one sample"));
        }
        Ok(TimeSeries {
            t0,
            dt,
            values,
            label: label.into(),
            units: units.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + self.dt * i as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    /// Duration covered by the samples, counting each sample as one step.
    pub fn duration(&self) -> f64 {
        self.dt * self.len() as f64
    }

    /// Same grid, new values and label.
    pub fn with_values(&self, values: Vec<f64>, label: impl Into<String>, units: impl Into<String>) -> TimeSeries {
        TimeSeries {
            t0: self.t0,
            dt: self.dt,
            values,
            label: label.into(),
            units: units.into(),
        }
    }

    /// Samples `[start, end)` as a new series with shifted start time.
    pub fn slice(&self, start: usize, end: usize) -> Result<TimeSeries> {
        if start >= end || end > self.len() {
            return Err(Error::invalid(format!(
                "slice [{start}, {end}) out of bounds for {} samples",
                self.len()
            )));
        }
        Ok(TimeSeries {
            t0: self.time(start),
            dt: self.dt,
            values: self.values[start..end].to_vec(),
            label: self.label.clone(),
            units: self.units.clone(),
        })
    }

    pub fn same_grid(&self, other: &TimeSeries) -> bool {
        self.len() == other.len()
            && (self.dt - other.dt).abs() <= 1e-12 * self.dt
            && (self.t0 - other.t0).abs() <= 1e-9 * self.dt.max(self.t0.abs())
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

pub(crate) fn check_same_grid(series: &[&TimeSeries]) -> Result<()> {
    let first = series[0];
    for s in &series[1..] {
        if !first.same_grid(s) {
            return Err(Error::invalid(format!(
                "series `{}` and `{}` do not share a time grid",
                first.label, s.label
            )));
        }
    }
    Ok(())
}
