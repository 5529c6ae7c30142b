//! Benchmark systems and synthetic records, so every workflow can run without
//! measured data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::basis::uniform_points;
use crate::dynamics::{integrate_sampled, Nonlinearity, OscillatorModel, Trajectory};
use crate::error::{Error, Result};
use crate::regress::PotentialForceModel;
use crate::series::TimeSeries;

/// `(x, p2 x³)` at `n` uniform points.
pub fn cubic_force_samples(p2: f64, lo: f64, hi: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let x = uniform_points(lo, hi, n);
    let f = x.iter().map(|x| p2 * x * x * x).collect();
    (x, f)
}

/// `(x, p2 max(0, x − gap))` at `n` uniform points.
pub fn gap_force_samples(p2: f64, gap: f64, lo: f64, hi: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let x = uniform_points(lo, hi, n);
    let f = x.iter().map(|x| p2 * (x - gap).max(0.0)).collect();
    (x, f)
}

/// Hardening Duffing benchmark: `m = 1, c = 0.1, p1 = 1, p2 = 10`.
pub fn duffing() -> OscillatorModel {
    OscillatorModel::new(1.0, 0.1, 1.0, Nonlinearity::Cubic { p2: 10.0 }).expect("valid benchmark")
}

/// One-sided contact benchmark: `m = 1, c = 0.1, k = 1, p2 = 10, L = 0.5`.
pub fn gap_oscillator() -> OscillatorModel {
    OscillatorModel::new(1.0, 0.1, 1.0, Nonlinearity::GapSpring { p2: 10.0, gap: 0.5 }).expect("valid benchmark")
}

/// Softening oscillator `ẍ + 2ζω_n ẋ + ω_n² x = f_t(x)` whose right-hand
/// force is built from three ψ springs. Small-amplitude motion runs near
/// 13 Hz; every gap crossed lowers the stiffness by 650 s⁻².
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    pub zeta: f64,
    pub omega_n: f64,
    pub force: PotentialForceModel,
}

pub fn softening_surrogate() -> Surrogate {
    Surrogate {
        zeta: 0.0054,
        omega_n: 65.2,
        force: PotentialForceModel::new(0.0, 4400.0, vec![-650.0, -650.0, -650.0], vec![0.003, 0.006, 0.009])
            .expect("valid surrogate"),
    }
}

impl Surrogate {
    pub fn oscillator(&self) -> OscillatorModel {
        OscillatorModel::from_modal(self.zeta, self.omega_n, Nonlinearity::FittedPotential(self.force.clone()))
            .expect("valid surrogate")
    }

    /// Total stiffness `ω_n² − f_t'(x)` just right of `x`.
    pub fn stiffness_at(&self, x: f64) -> f64 {
        let mut k = self.omega_n * self.omega_n + self.force.q2;
        for (&g, &kap) in self.force.gaps.iter().zip(&self.force.kappa) {
            k += kap * if x.abs() > g { 2.0 } else { 1.0 };
        }
        k
    }
}

/// Free response sampled every `dt_out` for `n_samples` samples, with
/// `substeps` integration steps per sample.
pub fn free_response(
    model: &OscillatorModel,
    x0: f64,
    v0: f64,
    dt_out: f64,
    n_samples: usize,
    substeps: usize,
) -> Result<Trajectory> {
    integrate_sampled(model, x0, v0, 0.0, dt_out, n_samples, substeps)
}

/// Add zero-mean Gaussian noise of standard deviation `std`.
pub fn add_noise(series: &TimeSeries, std: f64, seed: u64) -> Result<TimeSeries> {
    if std == 0.0 {
        return Ok(series.clone());
    }
    let normal = Normal::new(0.0, std).map_err(|e| Error::invalid(format!("noise level {std}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = series.values.iter().map(|v| v + normal.sample(&mut rng)).collect();
    Ok(series.with_values(values, series.label.clone(), series.units.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_follow_formulas() {
        let (x, f) = cubic_force_samples(10.0, -5.0, 5.0, 1001);
        assert_eq!(x.len(), 1001);
        assert_eq!(f[1000], 1250.0);
        let (x, f) = gap_force_samples(10.0, 0.5, -5.0, 5.0, 11);
        assert_eq!(x[6], 1.0);
        assert_eq!(f[6], 5.0);
        assert_eq!(f[5], 0.0);
    }

    #[test]
    fn surrogate_softens() {
        let s = softening_surrogate();
        let k0 = s.stiffness_at(0.0);
        assert!((k0.sqrt() / (2.0 * std::f64::consts::PI) - 13.0).abs() < 0.1);
        assert!(s.stiffness_at(0.01) < s.stiffness_at(0.005));
        assert!(s.stiffness_at(0.005) < k0);
        // odd force, so no static offset
        assert_eq!(s.force.eval_force(0.0), 0.0);
        let osc = s.oscillator();
        for x in [0.001, 0.004, 0.007, 0.012] {
            let h = 1e-7;
            let slope = (osc.restoring_force(x + h) - osc.restoring_force(x - h)) / (2.0 * h);
            assert!((slope - s.stiffness_at(x)).abs() < 1e-3 * slope);
        }
    }

    #[test]
    fn noise_is_seeded() {
        let s = TimeSeries::new(0.0, 1e-3, vec![0.0; 20_000], "x", "m").unwrap();
        let a = add_noise(&s, 0.1, 7).unwrap();
        let b = add_noise(&s, 0.1, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, add_noise(&s, 0.1, 8).unwrap());
        let var = a.values.iter().map(|v| v * v).sum::<f64>() / a.len() as f64;
        assert!((var.sqrt() - 0.1).abs() < 0.005);
    }
}
