//! Single-degree-of-freedom oscillators with exact or identified restoring
//! forces:
//!
//! ```text
//! m ẍ + c ẋ + k x + f_nl(x) = F(t)
//! ```
//!
//! Time integration is classical fixed-step RK4. Hinge nonlinearities are not
//! smooth, so no event location is attempted at kinks.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::regress::{ForceModel, PiecewiseLinear, PotentialForceModel};
use crate::series::TimeSeries;

#[derive(Debug, Clone, PartialEq)]
pub enum Nonlinearity {
    None,
    /// `p2 x³`
    Cubic { p2: f64 },
    /// `p2 max(0, x − gap)`
    GapSpring { p2: f64, gap: f64 },
    /// Hinge-network model; mass-normalized models are scaled by `m`.
    Fitted(ForceModel),
    /// Conservative model identified on the right-hand side, per unit mass.
    FittedPotential(PotentialForceModel),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Forcing {
    None,
    /// `F sin(2π f_e t)` applied to the mass.
    Harmonic { amplitude: f64, freq_hz: f64 },
    /// Base motion `X_b sin(2π f_e t)`; the state is the displacement
    /// relative to the base.
    BaseExcitation { amplitude: f64, freq_hz: f64 },
}

impl Forcing {
    pub fn freq_hz(&self) -> Option<f64> {
        match *self {
            Forcing::None => None,
            Forcing::Harmonic { freq_hz, .. } | Forcing::BaseExcitation { freq_hz, .. } => Some(freq_hz),
        }
    }

    pub fn with_freq(self, f: f64) -> Forcing {
        match self {
            Forcing::None => Forcing::None,
            Forcing::Harmonic { amplitude, .. } => Forcing::Harmonic { amplitude, freq_hz: f },
            Forcing::BaseExcitation { amplitude, .. } => Forcing::BaseExcitation { amplitude, freq_hz: f },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum NlEval {
    None,
    Cubic(f64),
    Gap(f64, f64),
    Table(PiecewiseLinear, f64),
}

impl NlEval {
    #[inline]
    fn eval(&self, x: f64) -> f64 {
        match self {
            NlEval::None => 0.0,
            NlEval::Cubic(p2) => p2 * x * x * x,
            NlEval::Gap(p2, gap) => {
                let d = x - gap;
                if d > 0.0 {
                    p2 * d
                } else {
                    0.0
                }
            }
            NlEval::Table(t, scale) => scale * t.eval(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscillatorModel {
    m: f64,
    c: f64,
    k: f64,
    nonlinearity: Nonlinearity,
    forcing: Forcing,
    nl: NlEval,
}

impl OscillatorModel {
    pub fn new(m: f64, c: f64, k: f64, nonlinearity: Nonlinearity) -> Result<Self> {
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::invalid(format!("mass must be positive, got {m}")));
        }
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::invalid(format!("damping must be non-negative, got {c}")));
        }
        if !k.is_finite() {
            return Err(Error::invalid("stiffness must be finite"));
        }
        let nl = match &nonlinearity {
            Nonlinearity::None => NlEval::None,
            Nonlinearity::Cubic { p2 } => NlEval::Cubic(*p2),
            Nonlinearity::GapSpring { p2, gap } => NlEval::Gap(*p2, *gap),
            Nonlinearity::Fitted(f) => NlEval::Table(f.compile(), if f.normalized_by_mass() { m } else { 1.0 }),
            // right-hand-side force moves to the left with a sign flip
            Nonlinearity::FittedPotential(p) => NlEval::Table(p.compile(), -m),
        };
        Ok(OscillatorModel {
            m,
            c,
            k,
            nonlinearity,
            forcing: Forcing::None,
            nl,
        })
    }

    /// Unit-mass model from damping ratio and natural frequency:
    /// `ẍ + 2ζω_n ẋ + ω_n² x + f_nl(x) = F(t)`.
    pub fn from_modal(zeta: f64, omega_n: f64, nonlinearity: Nonlinearity) -> Result<Self> {
        if !(omega_n > 0.0) {
            return Err(Error::invalid(format!("natural frequency must be > 0, got {omega_n}")));
        }
        OscillatorModel::new(1.0, 2.0 * zeta * omega_n, omega_n * omega_n, nonlinearity)
    }

    pub fn with_forcing(mut self, forcing: Forcing) -> Result<Self> {
        match forcing {
            Forcing::None => {}
            Forcing::Harmonic { amplitude, freq_hz } | Forcing::BaseExcitation { amplitude, freq_hz } => {
                if !amplitude.is_finite() {
                    return Err(Error::invalid("forcing amplitude must be finite"));
                }
                if !(freq_hz > 0.0) || !freq_hz.is_finite() {
                    return Err(Error::invalid(format!("excitation frequency must be > 0, got {freq_hz}")));
                }
            }
        }
        self.forcing = forcing;
        Ok(self)
    }

    pub fn mass(&self) -> f64 {
        self.m
    }

    pub fn damping(&self) -> f64 {
        self.c
    }

    pub fn stiffness(&self) -> f64 {
        self.k
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nonlinearity
    }

    pub fn forcing(&self) -> Forcing {
        self.forcing
    }

    /// Linear natural frequency `√(k/m)/(2π)` in Hz.
    pub fn natural_frequency_hz(&self) -> f64 {
        (self.k / self.m).sqrt() / (2.0 * PI)
    }

    /// `k x + f_nl(x)`.
    #[inline]
    pub fn restoring_force(&self, x: f64) -> f64 {
        self.k * x + self.nl.eval(x)
    }

    /// Potential of the restoring force, where it has a closed form.
    pub fn potential_energy(&self, x: f64) -> Option<f64> {
        let linear = 0.5 * self.k * x * x;
        let nl = match &self.nonlinearity {
            Nonlinearity::None => 0.0,
            Nonlinearity::Cubic { p2 } => 0.25 * p2 * x.powi(4),
            Nonlinearity::GapSpring { p2, gap } => 0.5 * p2 * (x - gap).max(0.0).powi(2),
            Nonlinearity::FittedPotential(p) => self.m * p.eval_potential(x),
            Nonlinearity::Fitted(_) => return None,
        };
        Some(linear + nl)
    }

    #[inline]
    fn external(&self, t: f64) -> f64 {
        match self.forcing {
            Forcing::None => 0.0,
            Forcing::Harmonic { amplitude, freq_hz } => amplitude * (2.0 * PI * freq_hz * t).sin(),
            Forcing::BaseExcitation { amplitude, freq_hz } => {
                let w = 2.0 * PI * freq_hz;
                self.m * amplitude * w * w * (w * t).sin()
            }
        }
    }

    #[inline]
    pub fn acceleration(&self, t: f64, x: f64, v: f64) -> f64 {
        (self.external(t) - self.c * v - self.restoring_force(x)) / self.m
    }

    /// Base displacement at `t` (zero unless base-excited).
    pub fn base_displacement(&self, t: f64) -> f64 {
        match self.forcing {
            Forcing::BaseExcitation { amplitude, freq_hz } => amplitude * (2.0 * PI * freq_hz * t).sin(),
            _ => 0.0,
        }
    }

    fn at_frequency(&self, f: f64) -> OscillatorModel {
        let mut m = self.clone();
        m.forcing = self.forcing.with_freq(f);
        m
    }

    #[inline]
    fn rk4_step(&self, t: f64, x: f64, v: f64, h: f64) -> (f64, f64) {
        let a1 = self.acceleration(t, x, v);
        let (x2, v2) = (x + 0.5 * h * v, v + 0.5 * h * a1);
        let a2 = self.acceleration(t + 0.5 * h, x2, v2);
        let (x3, v3) = (x + 0.5 * h * v2, v + 0.5 * h * a2);
        let a3 = self.acceleration(t + 0.5 * h, x3, v3);
        let (x4, v4) = (x + h * v3, v + h * a3);
        let a4 = self.acceleration(t + h, x4, v4);
        (
            x + h / 6.0 * (v + 2.0 * v2 + 2.0 * v3 + v4),
            v + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4),
        )
    }
}

/// Displacement, velocity and acceleration channels on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x: TimeSeries,
    pub v: TimeSeries,
    pub a: TimeSeries,
}

/// Integrate from `t = 0` to `t_end`. The step is shrunk to `t_end / n` with
/// `n = ⌈t_end / dt⌉` so the last sample lands on `t_end`.
pub fn integrate(model: &OscillatorModel, x0: f64, v0: f64, dt: f64, t_end: f64) -> Result<Trajectory> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::invalid(format!("end time must be positive, got {t_end}")));
    }
    let n = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    integrate_sampled(model, x0, v0, 0.0, t_end / n as f64, n + 1, 1)
}

/// `n_samples` samples spaced `dt_out` apart starting at `t0`, each advanced
/// by `substeps` RK4 steps.
pub fn integrate_sampled(
    model: &OscillatorModel,
    x0: f64,
    v0: f64,
    t0: f64,
    dt_out: f64,
    n_samples: usize,
    substeps: usize,
) -> Result<Trajectory> {
    if !(dt_out > 0.0) || n_samples == 0 || substeps == 0 {
        return Err(Error::invalid("sampling needs dt > 0, at least one sample and one substep"));
    }
    if !x0.is_finite() || !v0.is_finite() {
        return Err(Error::invalid("initial state must be finite"));
    }
    let h = dt_out / substeps as f64;
    let mut xs = Vec::with_capacity(n_samples);
    let mut vs = Vec::with_capacity(n_samples);
    let mut acc = Vec::with_capacity(n_samples);
    let (mut x, mut v) = (x0, v0);
    for i in 0..n_samples {
        let t = t0 + dt_out * i as f64;
        if i > 0 {
            let t_prev = t0 + dt_out * (i - 1) as f64;
            for s in 0..substeps {
                (x, v) = model.rk4_step(t_prev + h * s as f64, x, v, h);
            }
            if !x.is_finite() || !v.is_finite() {
                return Err(Error::Divergence { time: t });
            }
        }
        xs.push(x);
        vs.push(v);
        acc.push(model.acceleration(t, x, v));
    }
    Ok(Trajectory {
        x: TimeSeries::new(t0, dt_out, xs, "x", "m")?,
        v: TimeSeries::new(t0, dt_out, vs, "v", "m/s")?,
        a: TimeSeries::new(t0, dt_out, acc, "a", "m/s^2")?,
    })
}

/// Bracket scan used by [`static_equilibrium_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumScan {
    pub step: f64,
    pub extent: f64,
}

impl Default for EquilibriumScan {
    fn default() -> Self {
        EquilibriumScan { step: 1e-4, extent: 100.0 }
    }
}

pub fn static_equilibrium(model: &OscillatorModel, force: f64) -> Result<f64> {
    static_equilibrium_with(model, force, EquilibriumScan::default())
}

/// Root of `restoring_force(x) = F` nearest the origin: scan outward on both
/// sides in `step` increments up to `extent`, then bisect to `|Δx| < 1e-12`.
pub fn static_equilibrium_with(model: &OscillatorModel, force: f64, scan: EquilibriumScan) -> Result<f64> {
    if !force.is_finite() {
        return Err(Error::invalid("static load must be finite"));
    }
    let g = |x: f64| model.restoring_force(x) - force;
    let g0 = g(0.0);
    if g0 == 0.0 {
        return Ok(0.0);
    }
    let steps = (scan.extent / scan.step).ceil() as usize;
    let (mut right_prev, mut left_prev) = (g0, g0);
    for j in 1..=steps {
        let d = scan.step * j as f64;
        let d_prev = scan.step * (j - 1) as f64;
        let gr = g(d);
        if gr == 0.0 {
            return Ok(d);
        }
        if right_prev.signum() != gr.signum() {
            return Ok(bisect(&g, d_prev, d));
        }
        let gl = g(-d);
        if gl == 0.0 {
            return Ok(-d);
        }
        if left_prev.signum() != gl.signum() {
            return Ok(bisect(&g, -d, -d_prev));
        }
        right_prev = gr;
        left_prev = gl;
    }
    Err(Error::NoRoot(format!(
        "restoring force never reaches {force} within ±{}",
        scan.extent
    )))
}

fn bisect(g: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut g_lo = g(lo);
    while hi - lo >= 1e-12 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if gm.signum() == g_lo.signum() {
            lo = mid;
            g_lo = gm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateOptions {
    pub transient_cycles: usize,
    pub measure_cycles: usize,
    pub steps_per_cycle: usize,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        SteadyStateOptions {
            transient_cycles: 180,
            measure_cycles: 20,
            steps_per_cycle: 1000,
        }
    }
}

/// Result of one fixed-frequency run.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    /// Half peak-to-peak displacement over the measured cycles. For base
    /// excitation this is the absolute (tip) displacement.
    pub amplitude: f64,
    /// Same for the state variable itself (relative displacement under base
    /// excitation).
    pub state_amplitude: f64,
    pub x_end: f64,
    pub v_end: f64,
    /// Measured displacement window (absolute for base excitation).
    pub window: TimeSeries,
    /// Base displacement over the same window, if base-excited.
    pub base_window: Option<TimeSeries>,
}

pub fn steady_state_amplitude(
    model: &OscillatorModel,
    f_e: f64,
    opts: SteadyStateOptions,
    x0: f64,
    v0: f64,
) -> Result<SteadyState> {
    if !(f_e > 0.0) || !f_e.is_finite() {
        return Err(Error::invalid(format!("excitation frequency must be > 0, got {f_e}")));
    }
    if opts.measure_cycles == 0 || opts.steps_per_cycle == 0 {
        return Err(Error::invalid("need at least one measured cycle and one step per cycle"));
    }
    let model = model.at_frequency(f_e);
    let spc = opts.steps_per_cycle;
    let h = 1.0 / (f_e * spc as f64);
    let n_transient = opts.transient_cycles * spc;
    let n_total = n_transient + opts.measure_cycles * spc;
    let base_excited = matches!(model.forcing, Forcing::BaseExcitation { .. });

    let (mut x, mut v) = (x0, v0);
    let mut window = Vec::with_capacity(opts.measure_cycles * spc);
    let mut base = Vec::new();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut slo, mut shi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n_total {
        let t = h * i as f64;
        (x, v) = model.rk4_step(t, x, v, h);
        if !x.is_finite() || !v.is_finite() {
            return Err(Error::Divergence { time: t + h });
        }
        if i + 1 > n_transient {
            let t_next = h * (i + 1) as f64;
            let b = model.base_displacement(t_next);
            let abs = x + b;
            lo = lo.min(abs);
            hi = hi.max(abs);
            slo = slo.min(x);
            shi = shi.max(x);
            window.push(abs);
            if base_excited {
                base.push(b);
            }
        }
    }
    let t_start = h * (n_transient + 1) as f64;
    Ok(SteadyState {
        amplitude: 0.5 * (hi - lo),
        state_amplitude: 0.5 * (shi - slo),
        x_end: x,
        v_end: v,
        window: TimeSeries::new(t_start, h, window, "x", "m")?,
        base_window: if base_excited {
            Some(TimeSeries::new(t_start, h, base, "base", "m")?)
        } else {
            None
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepDirection {
    Up,
    Down,
    ColdStart,
}

impl SweepDirection {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepDirection::Up => "up",
            SweepDirection::Down => "down",
            SweepDirection::ColdStart => "cold-start",
        }
    }

    pub fn parse(s: &str) -> Option<SweepDirection> {
        match s {
            "up" => Some(SweepDirection::Up),
            "down" => Some(SweepDirection::Down),
            "cold-start" | "cold" => Some(SweepDirection::ColdStart),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Excitation frequencies in visiting order (descending for down-sweeps).
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub valid: Vec<bool>,
    pub direction: SweepDirection,
    pub f_n: f64,
    pub x_st: f64,
    pub transient_cycles: usize,
    pub measure_cycles: usize,
    /// Base excitation only: tip lag behind the base in degrees.
    pub phase_deg: Option<Vec<f64>>,
}

impl SweepResult {
    pub fn f_over_fn(&self) -> Vec<f64> {
        self.frequencies.iter().map(|f| f / self.f_n).collect()
    }

    pub fn amp_over_xst(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a / self.x_st).collect()
    }

    /// Index of the largest valid amplitude.
    pub fn peak_index(&self) -> Option<usize> {
        self.amplitudes
            .iter()
            .zip(&self.valid)
            .enumerate()
            .filter(|(_, (_, &ok))| ok)
            .max_by(|a, b| a.1 .0.total_cmp(b.1 .0))
            .map(|(i, _)| i)
    }
}

/// Uniform sweep over `[f_lo, f_hi]`. Up/down sweeps seed each frequency
/// with the final state of the previous one; cold-start sweeps begin every
/// frequency at rest. A diverged point is flagged invalid and the next point
/// restarts from rest.
pub fn frequency_sweep(
    model: &OscillatorModel,
    f_lo: f64,
    f_hi: f64,
    n_points: usize,
    direction: SweepDirection,
    opts: SteadyStateOptions,
) -> Result<SweepResult> {
    if !(f_lo > 0.0) || !(f_hi > f_lo) || !f_hi.is_finite() {
        return Err(Error::invalid(format!(
            "sweep range must satisfy 0 < f_lo < f_hi, got [{f_lo}, {f_hi}]"
        )));
    }
    if n_points < 2 {
        return Err(Error::invalid("sweep needs at least two points"));
    }
    let x_st = match model.forcing {
        Forcing::None => return Err(Error::invalid("sweep needs a harmonic or base forcing")),
        Forcing::Harmonic { amplitude, .. } => static_equilibrium(model, amplitude)?,
        Forcing::BaseExcitation { amplitude, .. } => amplitude,
    };
    let base_excited = matches!(model.forcing, Forcing::BaseExcitation { .. });
    let mut freqs = crate::basis::uniform_points(f_lo, f_hi, n_points);
    if direction == SweepDirection::Down {
        freqs.reverse();
    }
    let mut amplitudes = Vec::with_capacity(n_points);
    let mut valid = Vec::with_capacity(n_points);
    let mut phases = Vec::new();
    let (mut x, mut v) = (0.0, 0.0);
    for &f in &freqs {
        if direction == SweepDirection::ColdStart {
            x = 0.0;
            v = 0.0;
        }
        match steady_state_amplitude(model, f, opts, x, v) {
            Ok(ss) => {
                amplitudes.push(ss.amplitude);
                valid.push(true);
                if base_excited {
                    let base = ss.base_window.as_ref().expect("base window");
                    phases.push(crate::sigproc::phase_shift(base, &ss.window, f).unwrap_or(f64::NAN));
                }
                x = ss.x_end;
                v = ss.v_end;
            }
            Err(Error::Divergence { .. }) => {
                amplitudes.push(f64::NAN);
                valid.push(false);
                if base_excited {
                    phases.push(f64::NAN);
                }
                x = 0.0;
                v = 0.0;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(SweepResult {
        frequencies: freqs,
        amplitudes,
        valid,
        direction,
        f_n: model.natural_frequency_hz(),
        x_st,
        transient_cycles: opts.transient_cycles,
        measure_cycles: opts.measure_cycles,
        phase_deg: if base_excited { Some(phases) } else { None },
    })
}

/// First-order frequency–amplitude relation of the undamped Duffing
/// oscillator, `ω² = p1/m + (3/4)(p2/m) X²`. Returns `(X, ω)` with `ω` in
/// rad/s.
pub fn duffing_backbone_analytic(m: f64, p1: f64, p2: f64, amplitudes: &[f64]) -> Result<Vec<(f64, f64)>> {
    if !(p1 > 0.0) || !(m > 0.0) {
        return Err(Error::invalid("backbone needs m > 0 and p1 > 0"));
    }
    Ok(amplitudes
        .iter()
        .map(|&x| (x, (p1 / m + 0.75 * p2 / m * x * x).sqrt()))
        .collect())
}
