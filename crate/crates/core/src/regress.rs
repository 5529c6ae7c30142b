//! Least-squares identification of spring coefficients.
//!
//! All fits reduce to `min ‖L κ − b‖²` over a basis library `L` and are
//! solved with the minimum-norm pseudo-inverse solution. The direct method
//! regresses sampled force values; the indirect method regresses the linear
//! part of the equation of motion evaluated on measured `x, v, a`.

use nalgebra::{DMatrix, DVector};

use crate::basis::{build_library, BasisSpec, GapGrid, LibraryMatrix};
use crate::error::{Error, Result};
use crate::series::{check_same_grid, TimeSeries};

/// Singular values below `DEFAULT_RTOL * sigma_max` are discarded.
pub const DEFAULT_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub residual_rms: f64,
    pub rank_used: usize,
    pub n_columns: usize,
    pub condition_estimate: f64,
    /// Potential fits only: whether the linear column was part of the library.
    pub linear_column: Option<bool>,
}

impl FitReport {
    pub fn rank_deficient(&self) -> bool {
        self.rank_used < self.n_columns
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub rtol: f64,
    /// Zero out coefficients with `|κ_j| < threshold * max|κ|` after solving.
    pub threshold: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            rtol: DEFAULT_RTOL,
            threshold: None,
        }
    }
}

pub fn solve_min_norm_ls(library: &LibraryMatrix, rhs: &[f64]) -> Result<(Vec<f64>, FitReport)> {
    solve_matrix(library.values(), rhs, DEFAULT_RTOL)
}

/// Minimum-norm least-squares solution through an SVD, with relative
/// singular-value cutoff `rtol`.
pub fn solve_matrix(a: &DMatrix<f64>, rhs: &[f64], rtol: f64) -> Result<(Vec<f64>, FitReport)> {
    let (n, p) = a.shape();
    if n == 0 || p == 0 {
        return Err(Error::invalid("least-squares library is empty"));
    }
    if rhs.len() != n {
        return Err(Error::invalid(format!(
            "library has {n} rows but right-hand side has {} entries",
            rhs.len()
        )));
    }
    if rhs.iter().any(|v| !v.is_finite()) || a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("least-squares inputs must be finite"));
    }
    let b = DVector::from_column_slice(rhs);

    // Tall systems are reduced by a Householder QR first: A = QR, so the
    // problem becomes min ‖Rκ − Qᵀb‖ on a p×p triangle with the same
    // singular values.
    let (reduced, qtb) = if n > p {
        let qr = a.clone().qr();
        let mut qtb = b.clone();
        qr.q_tr_mul(&mut qtb);
        let r = qr.r();
        (r, qtb.rows(0, p).into_owned())
    } else {
        (a.clone(), b.clone())
    };

    let svd = reduced.svd(true, true);
    let sigma = &svd.singular_values;
    let sigma_max = sigma.iter().cloned().fold(0.0_f64, f64::max);
    let mut kappa = DVector::<f64>::zeros(p);
    let mut rank = 0;
    let mut sigma_min_kept = f64::INFINITY;
    if sigma_max > 0.0 {
        let u = svd.u.as_ref().expect("svd computed with u");
        let vt = svd.v_t.as_ref().expect("svd computed with v_t");
        let cutoff = rtol * sigma_max;
        for (i, &s) in sigma.iter().enumerate() {
            if s > cutoff {
                rank += 1;
                sigma_min_kept = sigma_min_kept.min(s);
                let coef = u.column(i).dot(&qtb) / s;
                kappa.axpy(coef, &vt.row(i).transpose(), 1.0);
            }
        }
    }
    let condition_estimate = if rank > 0 { sigma_max / sigma_min_kept } else { f64::INFINITY };
    let kappa: Vec<f64> = kappa.iter().copied().collect();
    let residual_rms = residual_rms(a, &kappa, rhs);
    Ok((
        kappa,
        FitReport {
            residual_rms,
            rank_used: rank,
            n_columns: p,
            condition_estimate,
            linear_column: None,
        },
    ))
}

fn residual_rms(a: &DMatrix<f64>, kappa: &[f64], rhs: &[f64]) -> f64 {
    let k = DVector::from_column_slice(kappa);
    let fitted = a * k;
    let ss: f64 = fitted.iter().zip(rhs).map(|(f, b)| (f - b) * (f - b)).sum();
    (ss / rhs.len() as f64).sqrt()
}

fn apply_threshold(a: &DMatrix<f64>, rhs: &[f64], kappa: &mut [f64], report: &mut FitReport, opts: &FitOptions) {
    if let Some(eps) = opts.threshold {
        let max = kappa.iter().fold(0.0_f64, |m, k| m.max(k.abs()));
        for k in kappa.iter_mut() {
            if k.abs() < eps * max {
                *k = 0.0;
            }
        }
        report.residual_rms = residual_rms(a, kappa, rhs);
    }
}

/// Piecewise-linear force `Σ κ_j · basis_j(x)` over a fixed basis set.
///
/// Direct fits approximate `f(x)` in `m ẍ + c ẋ + k x + f(x) = 0`; indirect
/// fits approximate `f(x)/m` and carry `normalized_by_mass = true`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceModel {
    specs: Vec<BasisSpec>,
    kappa: Vec<f64>,
    normalized_by_mass: bool,
    fit_range: (f64, f64),
}

impl ForceModel {
    pub fn new(specs: Vec<BasisSpec>, kappa: Vec<f64>, normalized_by_mass: bool, fit_range: (f64, f64)) -> Result<Self> {
        if specs.len() != kappa.len() {
            return Err(Error::invalid(format!(
                "{} basis specs but {} coefficients",
                specs.len(),
                kappa.len()
            )));
        }
        for s in &specs {
            s.validate()?;
        }
        if kappa.iter().any(|k| !k.is_finite()) {
            return Err(Error::invalid("force model coefficients must be finite"));
        }
        Ok(ForceModel {
            specs,
            kappa,
            normalized_by_mass,
            fit_range,
        })
    }

    pub fn specs(&self) -> &[BasisSpec] {
        &self.specs
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn normalized_by_mass(&self) -> bool {
        self.normalized_by_mass
    }

    pub fn fit_range(&self) -> (f64, f64) {
        self.fit_range
    }

    pub fn len(&self) -> usize {
        self.kappa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappa.is_empty()
    }

    /// Dot product of the coefficients with the basis evaluated at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.specs.iter().zip(&self.kappa).map(|(s, k)| k * s.eval(x)).sum()
    }

    pub fn compile(&self) -> PiecewiseLinear {
        let terms: Vec<(f64, BasisSpec)> = self.kappa.iter().copied().zip(self.specs.iter().copied()).collect();
        PiecewiseLinear::from_terms(&terms)
    }
}

/// Conservative force identified with the potential-constrained library,
/// per unit mass:
///
/// ```text
/// V(x)  = q1 x + q2 x²/2 + Σ κ_i φ(x, g_i)
/// f(x)  = −dV/dx = −q1 − q2 x − Σ κ_i ψ(x, g_i)
/// ```
///
/// `f` enters as `ẍ + 2ζω_n ẋ + ω_n² x = f(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialForceModel {
    pub q1: f64,
    pub q2: f64,
    pub kappa: Vec<f64>,
    pub gaps: Vec<f64>,
}

impl PotentialForceModel {
    pub fn new(q1: f64, q2: f64, kappa: Vec<f64>, gaps: Vec<f64>) -> Result<Self> {
        if kappa.len() != gaps.len() {
            return Err(Error::invalid(format!(
                "{} potential coefficients but {} gaps",
                kappa.len(),
                gaps.len()
            )));
        }
        for &g in &gaps {
            BasisSpec::PotentialPsi(g).validate()?;
        }
        if !q1.is_finite() || !q2.is_finite() || kappa.iter().any(|k| !k.is_finite()) {
            return Err(Error::invalid("potential model coefficients must be finite"));
        }
        Ok(PotentialForceModel { q1, q2, kappa, gaps })
    }

    pub fn eval_force(&self, x: f64) -> f64 {
        let psi: f64 = self
            .kappa
            .iter()
            .zip(&self.gaps)
            .map(|(k, &g)| k * crate::basis::psi_unchecked(x, g))
            .sum();
        -self.q1 - self.q2 * x - psi
    }

    pub fn eval_potential(&self, x: f64) -> f64 {
        let phi: f64 = self
            .kappa
            .iter()
            .zip(&self.gaps)
            .map(|(k, &g)| k * crate::basis::phi_unchecked(x, g))
            .sum();
        self.q1 * x + 0.5 * self.q2 * x * x + phi
    }

    pub fn compile(&self) -> PiecewiseLinear {
        let mut terms = vec![(-self.q1, BasisSpec::Constant), (-self.q2, BasisSpec::Linear)];
        terms.extend(self.kappa.iter().zip(&self.gaps).map(|(k, &g)| (-k, BasisSpec::PotentialPsi(g))));
        PiecewiseLinear::from_terms(&terms)
    }
}

/// Evaluate either model family.
pub trait EvalForce {
    fn eval_force(&self, x: f64) -> f64;
}

impl EvalForce for ForceModel {
    fn eval_force(&self, x: f64) -> f64 {
        self.eval(x)
    }
}

impl EvalForce for PotentialForceModel {
    fn eval_force(&self, x: f64) -> f64 {
        PotentialForceModel::eval_force(self, x)
    }
}

pub fn eval_force<M: EvalForce>(model: &M, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::invalid(format!("displacement must be finite, got {x}")));
    }
    Ok(model.eval_force(x))
}

pub fn eval_potential(model: &PotentialForceModel, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::invalid(format!("displacement must be finite, got {x}")));
    }
    Ok(model.eval_potential(x))
}

/// A sum of piecewise-linear basis terms flattened into breakpoints with the
/// value and right-hand slope at each one. Evaluation is a binary search,
/// which keeps long time integrations with hundreds of springs cheap.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    breaks: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    left_slope: f64,
    // used when there are no breakpoints: value at 0
    offset: f64,
}

impl PiecewiseLinear {
    pub fn from_terms(terms: &[(f64, BasisSpec)]) -> Self {
        let mut breaks: Vec<f64> = terms.iter().flat_map(|(_, s)| s.breakpoints()).collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let eval = |x: f64| -> f64 { terms.iter().map(|(c, s)| c * s.eval(x)).sum() };
        let slope = |x: f64| -> f64 { terms.iter().map(|(c, s)| c * s.slope_right_of(x)).sum() };
        let values = breaks.iter().map(|&b| eval(b)).collect();
        let slopes = breaks.iter().map(|&b| slope(b)).collect();
        let probe_left = breaks.first().map_or(0.0, |b| b - 1.0 - b.abs());
        PiecewiseLinear {
            left_slope: slope(probe_left),
            offset: eval(0.0),
            breaks,
            values,
            slopes,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        if self.breaks.is_empty() {
            return self.offset + self.left_slope * x;
        }
        let idx = self.breaks.partition_point(|&b| b <= x);
        if idx == 0 {
            self.values[0] + self.left_slope * (x - self.breaks[0])
        } else {
            let i = idx - 1;
            self.values[i] + self.slopes[i] * (x - self.breaks[i])
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breaks
    }
}

fn samples_strictly_increasing(samples: &[f64]) -> bool {
    samples.windows(2).all(|w| w[1] > w[0])
}

pub fn fit_direct(samples: &[f64], forces: &[f64], grid: &GapGrid) -> Result<(ForceModel, FitReport)> {
    fit_direct_with(samples, forces, grid, &FitOptions::default())
}

/// Direct method: regress sampled force values `f(x_i)` onto the hinge library.
pub fn fit_direct_with(
    samples: &[f64],
    forces: &[f64],
    grid: &GapGrid,
    opts: &FitOptions,
) -> Result<(ForceModel, FitReport)> {
    if samples.is_empty() {
        return Err(Error::invalid("direct fit needs at least one sample"));
    }
    if samples.len() != forces.len() {
        return Err(Error::invalid(format!(
            "{} samples but {} force values",
            samples.len(),
            forces.len()
        )));
    }
    if !samples_strictly_increasing(samples) {
        return Err(Error::invalid("direct-fit samples must be strictly increasing"));
    }
    let specs = grid.specs();
    let lib = build_library(samples, &specs)?;
    let (mut kappa, mut report) = solve_matrix(lib.values(), forces, opts.rtol)?;
    apply_threshold(lib.values(), forces, &mut kappa, &mut report, opts);
    let range = (samples[0], samples[samples.len() - 1]);
    Ok((ForceModel::new(specs, kappa, false, range)?, report))
}

fn check_linear_params(zeta: f64, omega_n: f64) -> Result<()> {
    if !(zeta >= 0.0) || !zeta.is_finite() {
        return Err(Error::invalid(format!("damping ratio must be >= 0, got {zeta}")));
    }
    if !(omega_n > 0.0) || !omega_n.is_finite() {
        return Err(Error::invalid(format!("natural frequency must be > 0, got {omega_n}")));
    }
    Ok(())
}

/// `ã_ℓ = a + 2ζω_n v + ω_n² x`, the linear part of the equation of motion
/// evaluated on measured data.
pub fn linear_residual_accel(x: &TimeSeries, v: &TimeSeries, a: &TimeSeries, zeta: f64, omega_n: f64) -> Result<Vec<f64>> {
    check_same_grid(&[x, v, a])?;
    check_linear_params(zeta, omega_n)?;
    let c = 2.0 * zeta * omega_n;
    let k = omega_n * omega_n;
    Ok(x.values
        .iter()
        .zip(&v.values)
        .zip(&a.values)
        .map(|((x, v), a)| a + c * v + k * x)
        .collect())
}

pub fn fit_indirect(
    x: &TimeSeries,
    v: &TimeSeries,
    a: &TimeSeries,
    zeta: f64,
    omega_n: f64,
    grid: &GapGrid,
) -> Result<(ForceModel, FitReport)> {
    fit_indirect_with(x, v, a, zeta, omega_n, grid, &FitOptions::default())
}

/// Indirect method. The returned model approximates `f(x)/m` with the same
/// sign as the direct method (it sits on the left-hand side next to `k x`),
/// so `−ã_ℓ` is the regression target.
pub fn fit_indirect_with(
    x: &TimeSeries,
    v: &TimeSeries,
    a: &TimeSeries,
    zeta: f64,
    omega_n: f64,
    grid: &GapGrid,
    opts: &FitOptions,
) -> Result<(ForceModel, FitReport)> {
    let target: Vec<f64> = linear_residual_accel(x, v, a, zeta, omega_n)?
        .into_iter()
        .map(|r| -r)
        .collect();
    let specs = grid.specs();
    let lib = build_library(&x.values, &specs)?;
    let (mut kappa, mut report) = solve_matrix(lib.values(), &target, opts.rtol)?;
    apply_threshold(lib.values(), &target, &mut kappa, &mut report, opts);
    let range = x.min_max();
    Ok((ForceModel::new(specs, kappa, true, range)?, report))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialOptions {
    pub linear_column: bool,
    pub fit: FitOptions,
}

impl Default for PotentialOptions {
    fn default() -> Self {
        PotentialOptions {
            linear_column: true,
            fit: FitOptions::default(),
        }
    }
}

pub fn fit_potential_constrained(
    x: &TimeSeries,
    v: &TimeSeries,
    a: &TimeSeries,
    zeta: f64,
    omega_n: f64,
    psi_gaps: &[f64],
) -> Result<(PotentialForceModel, FitReport)> {
    fit_potential_constrained_with(x, v, a, zeta, omega_n, psi_gaps, &PotentialOptions::default())
}

/// Regress `ã_ℓ` onto `[1, x, ψ(x, g_1), …, ψ(x, g_M)]` (the `x` column is
/// optional) and convert the coefficients to potential form.
pub fn fit_potential_constrained_with(
    x: &TimeSeries,
    v: &TimeSeries,
    a: &TimeSeries,
    zeta: f64,
    omega_n: f64,
    psi_gaps: &[f64],
    opts: &PotentialOptions,
) -> Result<(PotentialForceModel, FitReport)> {
    let target = linear_residual_accel(x, v, a, zeta, omega_n)?;
    let mut specs = vec![BasisSpec::Constant];
    if opts.linear_column {
        specs.push(BasisSpec::Linear);
    }
    specs.extend(psi_gaps.iter().map(|&g| BasisSpec::PotentialPsi(g)));
    let lib = build_library(&x.values, &specs)?;
    let (mut coef, mut report) = solve_matrix(lib.values(), &target, opts.fit.rtol)?;
    apply_threshold(lib.values(), &target, &mut coef, &mut report, &opts.fit);
    report.linear_column = Some(opts.linear_column);
    let offset = if opts.linear_column { 2 } else { 1 };
    let q1 = -coef[0];
    let q2 = if opts.linear_column { -coef[1] } else { 0.0 };
    let kappa = coef[offset..].iter().map(|c| -c).collect();
    Ok((PotentialForceModel::new(q1, q2, kappa, psi_gaps.to_vec())?, report))
}
