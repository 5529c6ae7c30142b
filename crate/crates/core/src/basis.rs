//! Gapped piecewise-linear spring basis functions and library assembly.
//!
//! A hinge `min(0, x - g)` or `max(0, x - g)` is the force (per unit stiffness)
//! of a one-sided linear spring that engages once the displacement passes its
//! gap `g`. The potential-constrained pair
//!
//! ```text
//! phi(x, g) = x²/2 + min(0, x + g)²/2 + max(0, x - g)²/2
//! psi(x, g) = d phi / dx = x + min(0, x + g) + max(0, x - g)
//! ```
//!
//! is symmetric about the origin, so any combination of `psi` columns is the
//! gradient of an explicit potential.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[inline]
fn neg_part(d: f64) -> f64 {
    if d < 0.0 {
        d
    } else {
        0.0
    }
}

#[inline]
fn pos_part(d: f64) -> f64 {
    if d > 0.0 {
        d
    } else {
        0.0
    }
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be finite, got {v}")))
    }
}

/// `min(0, x - g)`.
pub fn eval_min_hinge(x: f64, g: f64) -> Result<f64> {
    check_finite("x", x)?;
    check_finite("gap", g)?;
    Ok(neg_part(x - g))
}

/// `max(0, x - g)`.
pub fn eval_max_hinge(x: f64, g: f64) -> Result<f64> {
    check_finite("x", x)?;
    check_finite("gap", g)?;
    Ok(pos_part(x - g))
}

fn check_psi_gap(g: f64) -> Result<()> {
    check_finite("gap", g)?;
    if g < 0.0 {
        return Err(Error::invalid(format!(
            "potential basis gap must be non-negative, got {g}"
        )));
    }
    Ok(())
}

/// Symmetric piecewise-linear force basis `x + min(0, x + g) + max(0, x - g)`.
pub fn eval_psi(x: f64, g: f64) -> Result<f64> {
    check_finite("x", x)?;
    check_psi_gap(g)?;
    Ok(psi_unchecked(x, g))
}

/// Piecewise-quadratic potential whose derivative is [`eval_psi`].
pub fn eval_phi(x: f64, g: f64) -> Result<f64> {
    check_finite("x", x)?;
    check_psi_gap(g)?;
    Ok(phi_unchecked(x, g))
}

#[inline]
pub(crate) fn psi_unchecked(x: f64, g: f64) -> f64 {
    x + neg_part(x + g) + pos_part(x - g)
}

#[inline]
pub(crate) fn phi_unchecked(x: f64, g: f64) -> f64 {
    let lo = neg_part(x + g);
    let hi = pos_part(x - g);
    0.5 * (x * x + lo * lo + hi * hi)
}

/// One column of a regression library.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BasisSpec {
    MinHinge(f64),
    MaxHinge(f64),
    Constant,
    Linear,
    PotentialPsi(f64),
}

impl BasisSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BasisSpec::MinHinge(g) | BasisSpec::MaxHinge(g) => check_finite("gap", g),
            BasisSpec::PotentialPsi(g) => check_psi_gap(g),
            BasisSpec::Constant | BasisSpec::Linear => Ok(()),
        }
    }

    /// Evaluate without argument checks. Specs are validated on construction
    /// of every container that holds them.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            BasisSpec::MinHinge(g) => neg_part(x - g),
            BasisSpec::MaxHinge(g) => pos_part(x - g),
            BasisSpec::Constant => 1.0,
            BasisSpec::Linear => x,
            BasisSpec::PotentialPsi(g) => psi_unchecked(x, g),
        }
    }

    pub fn gap(&self) -> Option<f64> {
        match *self {
            BasisSpec::MinHinge(g) | BasisSpec::MaxHinge(g) | BasisSpec::PotentialPsi(g) => Some(g),
            BasisSpec::Constant | BasisSpec::Linear => None,
        }
    }

    /// Displacements where the slope of this basis changes.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            BasisSpec::MinHinge(g) | BasisSpec::MaxHinge(g) => vec![g],
            BasisSpec::PotentialPsi(0.0) => vec![],
            BasisSpec::PotentialPsi(g) => vec![-g, g],
            BasisSpec::Constant | BasisSpec::Linear => vec![],
        }
    }

    /// Slope immediately to the right of `x`.
    pub fn slope_right_of(&self, x: f64) -> f64 {
        match *self {
            BasisSpec::MinHinge(g) => {
                if x < g {
                    1.0
                } else {
                    0.0
                }
            }
            BasisSpec::MaxHinge(g) => {
                if x >= g {
                    1.0
                } else {
                    0.0
                }
            }
            BasisSpec::Constant => 0.0,
            BasisSpec::Linear => 1.0,
            BasisSpec::PotentialPsi(g) => {
                if x >= g || x < -g {
                    2.0
                } else {
                    1.0
                }
            }
        }
    }

    /// Stable text name used by the model file format.
    pub fn kind_name(&self) -> &'static str {
        match self {
            BasisSpec::MinHinge(_) => "min_hinge",
            BasisSpec::MaxHinge(_) => "max_hinge",
            BasisSpec::Constant => "constant",
            BasisSpec::Linear => "linear",
            BasisSpec::PotentialPsi(_) => "psi",
        }
    }
}

/// `count` equally spaced points on `[lo, hi]`, endpoints included.
pub fn uniform_points(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (count - 1) as f64;
            (0..count)
                .map(|i| if i == count - 1 { hi } else { lo + step * i as f64 })
                .collect()
        }
    }
}

/// Gap lists for the min-hinge and max-hinge columns of a library.
#[derive(Debug, Clone, PartialEq)]
pub struct GapGrid {
    gaps_min: Vec<f64>,
    gaps_max: Vec<f64>,
    range_lo: f64,
    range_hi: f64,
}

impl GapGrid {
    pub fn new(gaps_min: Vec<f64>, gaps_max: Vec<f64>, range_lo: f64, range_hi: f64) -> Result<Self> {
        check_finite("range_lo", range_lo)?;
        check_finite("range_hi", range_hi)?;
        if range_lo >= range_hi {
            return Err(Error::invalid(format!(
                "gap range must satisfy lo < hi, got [{range_lo}, {range_hi}]"
            )));
        }
        if gaps_min.is_empty() && gaps_max.is_empty() {
            return Err(Error::invalid("gap grid needs at least one gap"));
        }
        for (name, gaps) in [("min", &gaps_min), ("max", &gaps_max)] {
            for w in gaps.windows(2) {
                if w[1] <= w[0] {
                    return Err(Error::invalid(format!("{name} gaps must be strictly increasing")));
                }
            }
            for &g in gaps.iter() {
                check_finite("gap", g)?;
                if g < range_lo || g > range_hi {
                    return Err(Error::invalid(format!(
                        "{name} gap {g} outside [{range_lo}, {range_hi}]"
                    )));
                }
            }
        }
        Ok(GapGrid {
            gaps_min,
            gaps_max,
            range_lo,
            range_hi,
        })
    }

    pub fn gaps_min(&self) -> &[f64] {
        &self.gaps_min
    }

    pub fn gaps_max(&self) -> &[f64] {
        &self.gaps_max
    }

    pub fn range(&self) -> (f64, f64) {
        (self.range_lo, self.range_hi)
    }

    /// Column order: all min hinges, then all max hinges.
    pub fn specs(&self) -> Vec<BasisSpec> {
        self.gaps_min
            .iter()
            .map(|&g| BasisSpec::MinHinge(g))
            .chain(self.gaps_max.iter().map(|&g| BasisSpec::MaxHinge(g)))
            .collect()
    }
}

/// `m` min gaps and `n` max gaps equally spaced over `[x_lo, x_hi]`.
pub fn uniform_gap_grid(x_lo: f64, x_hi: f64, m: usize, n: usize) -> Result<GapGrid> {
    check_finite("x_lo", x_lo)?;
    check_finite("x_hi", x_hi)?;
    if x_lo >= x_hi {
        return Err(Error::invalid(format!(
            "degenerate gap range [{x_lo}, {x_hi}]"
        )));
    }
    GapGrid::new(
        uniform_points(x_lo, x_hi, m),
        uniform_points(x_lo, x_hi, n),
        x_lo,
        x_hi,
    )
}

/// `count` positive ψ gaps `x_max·i/count`, `i = 1..=count`. Zero is left
/// out because `ψ(x, 0) = 2x` duplicates the linear column. Negative gaps add
/// nothing either: `ψ(x, −g) = 4x − ψ(x, g)`.
pub fn psi_gap_grid(x_max: f64, count: usize) -> Result<Vec<f64>> {
    check_finite("x_max", x_max)?;
    if !(x_max > 0.0) || count == 0 {
        return Err(Error::invalid(format!(
            "psi gaps need x_max > 0 and count ≥ 1, got {x_max} and {count}"
        )));
    }
    Ok((1..=count).map(|i| x_max * i as f64 / count as f64).collect())
}

/// Basis evaluations at sample points: row `i`, column `j` is `specs[j]` at
/// `samples[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LibraryMatrix {
    specs: Vec<BasisSpec>,
    values: DMatrix<f64>,
}

impl LibraryMatrix {
    pub fn specs(&self) -> &[BasisSpec] {
        &self.specs
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[(row, col)]
    }

    /// Wrap a raw matrix without associated basis specs (solver tests, custom
    /// designs). Columns are tagged `Constant` purely as placeholders.
    pub fn from_matrix(values: DMatrix<f64>) -> Self {
        let specs = vec![BasisSpec::Constant; values.ncols()];
        LibraryMatrix { specs, values }
    }
}

pub fn build_library(samples: &[f64], specs: &[BasisSpec]) -> Result<LibraryMatrix> {
    if samples.is_empty() {
        return Err(Error::invalid("library needs at least one sample"));
    }
    if specs.is_empty() {
        return Err(Error::invalid("library needs at least one basis spec"));
    }
    for s in specs {
        s.validate()?;
    }
    for &x in samples {
        check_finite("sample", x)?;
    }
    let values = DMatrix::from_fn(samples.len(), specs.len(), |i, j| specs[j].eval(samples[i]));
    Ok(LibraryMatrix {
        specs: specs.to_vec(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hinge_examples() {
        assert_eq!(eval_min_hinge(0.5, 0.5).unwrap(), 0.0);
        assert_eq!(eval_min_hinge(-1.0, 0.5).unwrap(), -1.5);
        assert_eq!(eval_min_hinge(2.0, -3.0).unwrap(), 0.0);
        assert_eq!(eval_max_hinge(1.0, 0.5).unwrap(), 0.5);
        assert_eq!(eval_max_hinge(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(eval_max_hinge(-4.0, -5.0).unwrap(), 1.0);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(eval_min_hinge(f64::NAN, 0.0).is_err());
        assert!(eval_max_hinge(0.0, f64::INFINITY).is_err());
        assert!(eval_psi(1.0, -0.1).is_err());
        assert!(eval_phi(1.0, -0.1).is_err());
    }

    // Brute-force evaluation straight from the three-term definitions.
    fn psi_oracle(x: f64, g: f64) -> f64 {
        let a = if x + g < 0.0 { x + g } else { 0.0 };
        let b = if x - g > 0.0 { x - g } else { 0.0 };
        x + a + b
    }

    #[test]
    fn psi_examples() {
        let cases = [(0.003, 0.005), (0.01, 0.005), (-0.01, 0.005)];
        let expected = [0.003, 0.015, -0.015];
        for ((x, g), want) in cases.into_iter().zip(expected) {
            let got = eval_psi(x, g).unwrap();
            assert!((got - psi_oracle(x, g)).abs() < 1e-18);
            assert!((got - want).abs() < 1e-15, "psi({x},{g}) = {got}");
        }
    }

    #[test]
    fn phi_examples() {
        assert_eq!(eval_phi(0.0, 0.005).unwrap(), 0.0);
        assert!((eval_phi(0.01, 0.005).unwrap() - 6.25e-5).abs() < 1e-18);
        assert!((eval_phi(-0.01, 0.005).unwrap() - 6.25e-5).abs() < 1e-18);
    }

    #[test]
    fn grid_examples() {
        let g = uniform_gap_grid(-5.0, 5.0, 2, 2).unwrap();
        assert_eq!(g.gaps_min(), &[-5.0, 5.0]);
        assert_eq!(g.gaps_max(), &[-5.0, 5.0]);
        let g = uniform_gap_grid(-5.0, 5.0, 0, 3).unwrap();
        assert!(g.gaps_min().is_empty());
        assert_eq!(g.gaps_max(), &[-5.0, 0.0, 5.0]);
        let psi = uniform_points(-0.02, 0.02, 32);
        assert_eq!(psi.len(), 32);
        let step = 0.04 / 31.0;
        for w in psi.windows(2) {
            assert!((w[1] - w[0] - step).abs() < 1e-15);
        }
        assert!(uniform_gap_grid(1.0, 1.0, 2, 2).is_err());
        assert!(uniform_gap_grid(-1.0, 1.0, 0, 0).is_err());
    }

    #[test]
    fn grid_rejects_unsorted_or_out_of_range() {
        assert!(GapGrid::new(vec![0.5, 0.1], vec![], -1.0, 1.0).is_err());
        assert!(GapGrid::new(vec![], vec![2.0], -1.0, 1.0).is_err());
    }

    #[test]
    fn library_examples() {
        let lib = build_library(
            &[0.0],
            &[BasisSpec::Constant, BasisSpec::Linear, BasisSpec::MaxHinge(0.0)],
        )
        .unwrap();
        assert_eq!(
            (lib.get(0, 0), lib.get(0, 1), lib.get(0, 2)),
            (1.0, 0.0, 0.0)
        );
        let lib = build_library(&[1.0, -1.0], &[BasisSpec::MinHinge(0.0), BasisSpec::MaxHinge(0.0)]).unwrap();
        assert_eq!(lib.get(0, 0), 0.0);
        assert_eq!(lib.get(0, 1), 1.0);
        assert_eq!(lib.get(1, 0), -1.0);
        assert_eq!(lib.get(1, 1), 0.0);
        assert!(build_library(&[], &[BasisSpec::Linear]).is_err());
        assert!(build_library(&[1.0], &[]).is_err());
    }

    #[test]
    fn library_matches_double_loop() {
        let samples = uniform_points(-5.0, 5.0, 201);
        let specs = uniform_gap_grid(-5.0, 5.0, 8, 8).unwrap().specs();
        let lib = build_library(&samples, &specs).unwrap();
        for (i, &x) in samples.iter().enumerate() {
            for (j, spec) in specs.iter().enumerate() {
                let want = match *spec {
                    BasisSpec::MinHinge(g) => (x - g).min(0.0),
                    BasisSpec::MaxHinge(g) => (x - g).max(0.0),
                    _ => unreachable!(),
                };
                assert_eq!(lib.get(i, j), want);
                assert_eq!(lib.get(i, j), spec.eval(x));
            }
        }
        let again = build_library(&samples, &specs).unwrap();
        assert_eq!(lib, again);
    }

    #[test]
    fn negative_psi_gap_is_in_span() {
        for &g in &[0.005, 0.01, 0.02] {
            for x in uniform_points(-0.05, 0.05, 101) {
                assert!((psi_oracle(x, -g) - (4.0 * x - psi_oracle(x, g))).abs() < 1e-15);
            }
        }
        let gaps = psi_gap_grid(0.02, 4).unwrap();
        assert_eq!(gaps, vec![0.005, 0.01, 0.015, 0.02]);
        assert!(psi_gap_grid(0.0, 4).is_err());
        assert!(psi_gap_grid(1.0, 0).is_err());
    }

    #[test]
    fn psi_slopes_by_secants() {
        let g = 0.3;
        let h = 1e-4;
        for &x in &[-1.0, -0.5, -0.2, 0.0, 0.1, 0.25, 0.4, 2.0] {
            let secant = (psi_unchecked(x + h, g) - psi_unchecked(x - h, g)) / (2.0 * h);
            let want = if x.abs() < g { 1.0 } else { 2.0 };
            assert!((secant - want).abs() < 1e-9, "slope at {x}: {secant}");
        }
        // continuity at the kinks
        for &k in &[-g, g] {
            assert!((psi_unchecked(k + 1e-12, g) - psi_unchecked(k - 1e-12, g)).abs() < 1e-11);
        }
    }

    #[test]
    fn slope_right_of_matches_secant() {
        let specs = [
            BasisSpec::MinHinge(0.2),
            BasisSpec::MaxHinge(-0.3),
            BasisSpec::PotentialPsi(0.4),
            BasisSpec::Linear,
            BasisSpec::Constant,
        ];
        for s in specs {
            for &x in &[-1.0, -0.4, -0.3, 0.0, 0.2, 0.4, 1.0] {
                let h = 1e-6;
                let secant = (s.eval(x + h) - s.eval(x)) / h;
                assert!((secant - s.slope_right_of(x)).abs() < 1e-6, "{s:?} at {x}");
            }
        }
    }

    proptest! {
        #[test]
        fn reflection_identity(x in -1e6f64..1e6, g in -1e6f64..1e6) {
            prop_assert_eq!(eval_min_hinge(x, g).unwrap(), -eval_max_hinge(-x, -g).unwrap());
            prop_assert_eq!(eval_min_hinge(x, 0.0).unwrap(), -eval_max_hinge(-x, 0.0).unwrap());
        }

        #[test]
        fn phi_even_and_nonnegative(x in -10.0f64..10.0, g in 0.0f64..5.0) {
            let p = eval_phi(x, g).unwrap();
            prop_assert!(p >= 0.0);
            prop_assert_eq!(p, eval_phi(-x, g).unwrap());
            prop_assert_eq!(eval_psi(-x, g).unwrap(), -eval_psi(x, g).unwrap());
        }

        #[test]
        fn phi_derivative_is_psi(x in -10.0f64..10.0, g in 0.0f64..5.0) {
            let h = 1e-6 * x.abs().max(1.0);
            // skip points within one step of a kink where the difference straddles it
            prop_assume!((x.abs() - g).abs() > 2.0 * h);
            let fd = (eval_phi(x + h, g).unwrap() - eval_phi(x - h, g).unwrap()) / (2.0 * h);
            let psi = eval_psi(x, g).unwrap();
            prop_assert!((fd - psi).abs() <= 1e-6 * psi.abs().max(1.0));
        }
    }
}
