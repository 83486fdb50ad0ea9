//! Exact constraints on scattering matrices.
//!
//! The hierarchy constraints equate corner minors of `S` with exponentials
//! of `|g|^2 / |slope gap|` sums; their first level is the Brundobler-Elser
//! survival formula. Band models add no-go zeros and bilinear relations
//! between transition probabilities; chains add one more. The bow-tie
//! constraint system closes completely and is solved here numerically.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::MlzModel;
use crate::propagator::{ScatteringMatrix, TransitionMatrix};
use crate::scalar::{cnorm, is_finite, real, LzFloat, C};

/// Default tolerance for structural identities checked in exact arithmetic.
pub const EXACT_TOL: f64 = 1e-10;
/// Default tolerance for propagation-backed checks (integrator plus
/// finite-window error dominate).
pub const PROPAGATED_TOL: f64 = 5e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConstraintError {
    #[error("minor order {m} outside 1..={max}")]
    MOutOfRange { m: usize, max: usize },
    #[error("level {level} is not in an extremal-slope band")]
    NotExtremalBand { level: usize },
    #[error("model is not a Landau-Zener chain: {0}")]
    NotAChain(&'static str),
    #[error("model lacks the single-lowest-level + band structure: {0}")]
    BandStructureMismatch(&'static str),
    #[error("parameter {name} = {value} outside the open interval (0, 1)")]
    ParamOutOfRange { name: &'static str, value: f64 },
    #[error("no root found in the physical box; the constraint system should have one")]
    NoPhysicalRoot,
    #[error("matrix dimension {got} does not match the expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
}

/// Which corner of the scattering matrix a hierarchy constraint addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corner {
    UpperLeft,
    LowerRight,
}

impl std::fmt::Display for Corner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Corner::UpperLeft => write!(f, "upper-left"),
            Corner::LowerRight => write!(f, "lower-right"),
        }
    }
}

/// One named constraint evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintEntry<T: LzFloat> {
    pub name: String,
    pub lhs: C<T>,
    pub rhs: T,
    pub residual: T,
    pub tolerance: T,
    pub passed: bool,
}

impl<T: LzFloat> ConstraintEntry<T> {
    pub fn new(name: String, lhs: C<T>, rhs: T, tolerance: T) -> Self {
        let residual = cnorm(lhs - C::new(rhs, T::zero()));
        Self {
            name,
            lhs,
            rhs,
            residual,
            tolerance,
            passed: residual <= tolerance,
        }
    }
}

/// A batch of constraint evaluations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintReport<T: LzFloat> {
    pub entries: Vec<ConstraintEntry<T>>,
}

impl<T: LzFloat> ConstraintReport<T> {
    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn max_residual(&self) -> T {
        self.entries
            .iter()
            .fold(T::zero(), |m, e| m.max(e.residual))
    }
}

/// Right-hand side of the order-`m` hierarchy constraint.
pub fn hc_rhs<T: LzFloat>(
    model: &MlzModel<T>,
    m: usize,
    corner: Corner,
) -> Result<T, ConstraintError> {
    let n = model.dimension();
    if m == 0 || m >= n {
        return Err(ConstraintError::MOutOfRange { m, max: n - 1 });
    }
    let (inside, outside): (std::ops::Range<usize>, std::ops::Range<usize>) = match corner {
        Corner::UpperLeft => (0..m, m..n),
        Corner::LowerRight => (n - m..n, 0..n - m),
    };
    let mut exponent = T::zero();
    for r in inside {
        for k in outside.clone() {
            if model.parallel(r, k) {
                continue;
            }
            exponent +=
                model.coupling(k, r).norm_sqr() / (model.slopes()[r] - model.slopes()[k]).abs();
        }
    }
    Ok((-T::pi() * exponent).exp())
}

/// Determinant of the `m x m` corner block of `S`.
pub fn hc_minor<T: LzFloat>(
    s: &ScatteringMatrix<T>,
    m: usize,
    corner: Corner,
) -> Result<C<T>, ConstraintError> {
    let n = s.dimension();
    if m == 0 || m >= n {
        return Err(ConstraintError::MOutOfRange { m, max: n - 1 });
    }
    let start = match corner {
        Corner::UpperLeft => 0,
        Corner::LowerRight => n - m,
    };
    let block = s.entries().view((start, start), (m, m)).clone_owned();
    Ok(block.determinant())
}

/// Evaluates every hierarchy constraint of the model against `S`.
///
/// The report holds `2(N-1)` entries (both corners, `m = 1..N-1`). Each
/// residual is `|minor - rhs|` with a real positive right side, so passing
/// also bounds the minor's imaginary part by the same tolerance.
pub fn verify_hierarchy<T: LzFloat>(
    model: &MlzModel<T>,
    s: &ScatteringMatrix<T>,
    tol: T,
) -> ConstraintReport<T> {
    let n = model.dimension();
    let mut entries = Vec::with_capacity(2 * (n - 1));
    for corner in [Corner::UpperLeft, Corner::LowerRight] {
        for m in 1..n {
            let lhs = hc_minor(s, m, corner).expect("m in range");
            let rhs = hc_rhs(model, m, corner).expect("m in range");
            entries.push(ConstraintEntry::new(
                format!("hc[{corner}, m={m}]"),
                lhs,
                rhs,
                tol,
            ));
        }
    }
    ConstraintReport { entries }
}

/// Predicted survival amplitude of level `r` in an extremal-slope band.
pub fn be_survival<T: LzFloat>(model: &MlzModel<T>, r: usize) -> Result<T, ConstraintError> {
    let min_band = model.min_slope_band();
    let max_band = model.max_slope_band();
    if !min_band.contains(&r) && !max_band.contains(&r) {
        return Err(ConstraintError::NotExtremalBand { level: r });
    }
    let mut exponent = T::zero();
    for k in 0..model.dimension() {
        if model.parallel(r, k) {
            continue;
        }
        exponent += model.coupling(k, r).norm_sqr() / (model.slopes()[k] - model.slopes()[r]).abs();
    }
    Ok((-T::pi() * exponent).exp())
}

/// Index pairs `(row, col)` where the scattering amplitude is exactly zero
/// by the band no-go rule, in canonical order.
///
/// Within the lowest-slope band, transitions towards higher diabatic energy
/// vanish; within the highest-slope band, the transposed rule applies.
pub fn nogo_pairs<T: LzFloat>(model: &MlzModel<T>) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    let eps = model.energies();
    let min_band = model.min_slope_band();
    for r in min_band.clone() {
        for k in min_band.clone() {
            if eps[k] > eps[r] {
                out.insert((r, k));
            }
        }
    }
    let max_band = model.max_slope_band();
    for k in max_band.clone() {
        for r in max_band.clone() {
            if eps[k] > eps[r] {
                out.insert((k, r));
            }
        }
    }
    out
}

/// Residual of the chain identity linking `P22`, `P12` and the two edge
/// couplings of a Landau-Zener chain (all levels crossing at one point,
/// nearest-neighbor real couplings).
pub fn chain_relation_residual<T: LzFloat>(
    model: &MlzModel<T>,
    p: &TransitionMatrix<T>,
) -> Result<T, ConstraintError> {
    let n = model.dimension();
    if n < 3 {
        return Err(ConstraintError::NotAChain("needs at least three levels"));
    }
    if p.dimension() != n {
        return Err(ConstraintError::DimensionMismatch {
            got: p.dimension(),
            expected: n,
        });
    }
    let tol = real::<T>(1e-9);
    if model.slope_groups().len() != n {
        return Err(ConstraintError::NotAChain(
            "slopes must be pairwise distinct",
        ));
    }
    let e0 = model.energies()[0];
    if model.energies().iter().any(|&e| (e - e0).abs() > tol) {
        return Err(ConstraintError::NotAChain(
            "diabatic energies must coincide",
        ));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let g = model.coupling(i, j);
            if j - i >= 2 && cnorm(g) > tol {
                return Err(ConstraintError::NotAChain(
                    "couplings must be nearest-neighbor",
                ));
            }
            if g.im.abs() > tol {
                return Err(ConstraintError::NotAChain("couplings must be real"));
            }
        }
    }
    let b = model.slopes();
    let g1 = model.coupling(0, 1).re;
    let g2 = model.coupling(1, 2).re;
    let pi = T::pi();
    let inner = (-pi * g2 * g2 / (b[1] - b[2]).abs()).exp() - p.entry(0, 1);
    let predicted = inner * inner * (real::<T>(2.0) * pi * g1 * g1 / (b[0] - b[1]).abs()).exp();
    Ok((p.entry(1, 1) - predicted).abs())
}

/// Bilinear band relations `P11 Prk = P1k Pr1` for a model with a unique
/// lowest-slope level followed by a parallel band.
pub fn band_relation_residuals<T: LzFloat>(
    model: &MlzModel<T>,
    p: &TransitionMatrix<T>,
) -> Result<ConstraintReport<T>, ConstraintError> {
    let groups = model.slope_groups();
    if groups.len() < 2 || groups[0].len() != 1 {
        return Err(ConstraintError::BandStructureMismatch(
            "expected a unique lowest-slope level",
        ));
    }
    if p.dimension() != model.dimension() {
        return Err(ConstraintError::DimensionMismatch {
            got: p.dimension(),
            expected: model.dimension(),
        });
    }
    let band = groups[1].clone();
    let tol = real::<T>(EXACT_TOL);
    let mut entries = Vec::new();
    for r in band.clone() {
        for k in band.clone() {
            if r <= k {
                continue;
            }
            let lhs = p.entry(0, 0) * p.entry(r, k);
            let rhs = p.entry(0, k) * p.entry(r, 0);
            entries.push(ConstraintEntry::new(
                format!("band[r={}, k={}]", r + 1, k + 1),
                C::new(lhs, T::zero()),
                rhs,
                tol,
            ));
        }
    }
    Ok(ConstraintReport { entries })
}

fn check_open_unit<T: LzFloat>(name: &'static str, v: T) -> Result<(), ConstraintError> {
    if v > T::zero() && v < T::one() {
        Ok(())
    } else {
        Err(ConstraintError::ParamOutOfRange {
            name,
            value: v.to_f64().unwrap_or(f64::NAN),
        })
    }
}

/// Solves the closed bow-tie constraint system for `(A, B, S22)` inside the
/// physical box `A, B in (-1, 0)`, `S22 in (0, 1)`.
///
/// The three equations are the symmetrized unitarity condition and the two
/// second-order constraint quotients, cleared of denominators; the unique
/// physical root is `(Y-1, X-1, sqrt(XY))`, which the solver must find on
/// its own. Damped Newton iterations projected into the box, restarted
/// from a 3x3 grid of interior points.
pub fn solve_bowtie_constraints<T: LzFloat>(x: T, y: T) -> Result<(T, T, T), ConstraintError> {
    check_open_unit("X", x)?;
    check_open_unit("Y", y)?;
    let z = (x * y).sqrt();
    let one = T::one();
    let two = real::<T>(2.0);

    let residual = |a: T, b: T, s: T| -> DVector<T> {
        DVector::from_column_slice(&[
            s * (b + a - x - y) + two * z,
            x * b * (one - a * a - s * s + y * a) + (z - x * s) * (z - x * s),
            y * a * (one - b * b - s * s + x * b) + (z - y * s) * (z - y * s),
        ])
    };
    let jacobian = |a: T, b: T, s: T| -> DMatrix<T> {
        DMatrix::from_row_slice(
            3,
            3,
            &[
                s,
                s,
                b + a - x - y,
                x * b * (y - two * a),
                x * (one - a * a - s * s + y * a),
                -two * s * x * b - two * x * (z - x * s),
                y * (one - b * b - s * s + x * b),
                y * a * (x - two * b),
                -two * s * y * a - two * y * (z - y * s),
            ],
        )
    };

    let edge = real::<T>(1e-9);
    let clamp_box = |a: T, b: T, s: T| -> (T, T, T) {
        (
            a.clamp(-one + edge, -edge),
            b.clamp(-one + edge, -edge),
            s.clamp(edge, one - edge),
        )
    };
    let tol = T::default_epsilon() * real(1e4);
    let starts = [-0.25, -0.5, -0.75];

    for &a0 in &starts {
        for &b0 in &starts {
            let (mut a, mut b, mut s) = clamp_box(real(a0), real(b0), z);
            let mut f = residual(a, b, s);
            for _ in 0..200 {
                let norm = f.amax();
                if norm <= tol {
                    break;
                }
                let Some(delta) = jacobian(a, b, s).lu().solve(&f) else {
                    break;
                };
                // Backtracking projected line search.
                let mut lambda = one;
                let mut improved = false;
                for _ in 0..30 {
                    let (ta, tb, ts) = clamp_box(
                        a - lambda * delta[0],
                        b - lambda * delta[1],
                        s - lambda * delta[2],
                    );
                    let tf = residual(ta, tb, ts);
                    if tf.amax() < norm {
                        a = ta;
                        b = tb;
                        s = ts;
                        f = tf;
                        improved = true;
                        break;
                    }
                    lambda *= real(0.5);
                }
                if !improved {
                    break;
                }
            }
            // Clearing denominators introduces spurious roots where the
            // original quotients blow up (e.g. (0,0,1) when X = Y), so
            // validate against the uncleared equations too.
            let d2 = one - a * a - s * s + y * a;
            let d3 = one - b * b - s * s + x * b;
            let floor = real::<T>(1e-6);
            let ok = f.amax() <= tol
                && is_finite(a)
                && a > -one
                && a < T::zero()
                && b > -one
                && b < T::zero()
                && s > T::zero()
                && s < one
                && d2.abs() > floor
                && d3.abs() > floor
                && (x * b + (z - x * s) * (z - x * s) / d2).abs() <= real(1e-9)
                && (y * a + (z - y * s) * (z - y * s) / d3).abs() <= real(1e-9);
            if ok {
                return Ok((a, b, s));
            }
        }
    }
    Err(ConstraintError::NoPhysicalRoot)
}

/// The four partial predictions available for the pseudo-bow-tie model
/// once `P12` and `P22` are measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoBowtiePrediction<T: LzFloat> {
    pub p32: T,
    pub p23: T,
    pub p24: T,
    pub p43: T,
    pub p14: T,
    pub p41: T,
}

impl<T: LzFloat> PseudoBowtiePrediction<T> {
    /// `false` flags predictions outside `[0, 1]`, which indicate
    /// inconsistent inputs.
    pub fn all_physical(&self) -> bool {
        [self.p32, self.p23, self.p24, self.p43, self.p14, self.p41]
            .iter()
            .all(|&v| v >= -T::default_epsilon() && v <= T::one() + T::default_epsilon())
    }
}

/// Predicts the remaining pseudo-bow-tie probabilities from measured
/// `(P12, P22)` and the two pass parameters.
pub fn pseudo_bowtie_predict<T: LzFloat>(x: T, y: T, p12: T, p22: T) -> PseudoBowtiePrediction<T> {
    let r = p12 / x;
    let p32 = r * r;
    let p23 = (y - x - r) * (y - x - r);
    let p24 = (p12 + x * (x - y)) * y / x;
    let p14 = p22 + (p12 + x * x) * (p12 - x * y) / (x * x);
    PseudoBowtiePrediction {
        p32,
        p23,
        p24,
        p43: p24,
        p14,
        p41: p14,
    }
}

/// Residual of the auxiliary pseudo-bow-tie relation
/// `XY(X-Y)(P22-1) = Y P21 P12 - X P24 P34` (not independent of the other
/// relations; checked as a diagnostic only).
pub fn pseudo_bowtie_aux_residual<T: LzFloat>(x: T, y: T, p: &TransitionMatrix<T>) -> T {
    let lhs = x * y * (x - y) * (p.entry(1, 1) - T::one());
    let rhs = y * p.entry(1, 0) * p.entry(0, 1) - x * p.entry(1, 3) * p.entry(2, 3);
    (lhs - rhs).abs()
}
