//! Closed-form solutions of the classic solvable models.
//!
//! These are used as oracles throughout the test suite. Every constructor
//! returns a matrix that is doubly stochastic (or unitary) identically in
//! its parameters, so the wrapped defect doubles as a self-check.
//!
//! Conventions: `P[row][col]` is the probability of the transition
//! `col -> row`; pass probabilities `p = exp(-2 pi g^2 / |slope gap|)` and
//! `q = 1 - p`.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::propagator::{ScatteringMatrix, TransitionMatrix};
use crate::scalar::{LzFloat, C};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("parameter {name} = {value} outside {range}")]
    ParamOutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("slopes must be pairwise distinct")]
    EqualSlopes,
    #[error("recursion denominator vanished (boundary parameter values)")]
    DivisionByZero,
}

fn check_prob<T: LzFloat>(name: &'static str, v: T, allow_one: bool) -> Result<(), AnalyticError> {
    let ok = v > T::zero() && (v < T::one() || (allow_one && v == T::one()));
    if ok {
        Ok(())
    } else {
        Err(AnalyticError::ParamOutOfRange {
            name,
            value: v.to_f64().unwrap_or(f64::NAN),
            range: if allow_one { "(0, 1]" } else { "(0, 1)" },
        })
    }
}

/// Demkov-Osherov transition matrix: one slanted level (index 0) crossing a
/// band of `N = p.len()` parallel levels ordered by descending energy.
///
/// `P[0][0] = prod p_k`, `P[k][k] = p_k`, in-band transitions above the
/// diagonal vanish, and the remaining entries are one or two `q` factors
/// times a window of passes.
pub fn do_solution<T: LzFloat>(p: &[T]) -> Result<TransitionMatrix<T>, AnalyticError> {
    for &pk in p {
        check_prob("p", pk, true)?;
    }
    let n = p.len();
    let q: Vec<T> = p.iter().map(|&x| T::one() - x).collect();
    // Product of p_k over the 1-based band index window [from, to].
    let prod = |from: usize, to: usize| -> T {
        let mut acc = T::one();
        let mut k = from.max(1);
        while k <= to.min(n) {
            acc *= p[k - 1];
            k += 1;
        }
        acc
    };
    let mut m = DMatrix::<T>::zeros(n + 1, n + 1);
    m[(0, 0)] = prod(1, n);
    for k in 1..=n {
        m[(k, k)] = p[k - 1];
        m[(k, 0)] = q[k - 1] * prod(1, k - 1); // 0 -> k
        m[(0, k)] = q[k - 1] * prod(k + 1, n); // k -> 0
    }
    for mi in 2..=n {
        for ni in 1..mi {
            m[(mi, ni)] = q[mi - 1] * q[ni - 1] * prod(ni + 1, mi - 1);
        }
    }
    Ok(TransitionMatrix::new(m))
}

/// Rebuilds the Demkov-Osherov matrix from its constraint structure alone:
/// known diagonal, vanishing in-band transitions, the rank-one relation
/// `P[m][n] = P[m][0] P[0][n] / P[0][0]` in the interior, and row/column
/// normalization, resolved by alternating inward from the matrix corners.
/// Must agree with [`do_solution`] entrywise.
pub fn do_recursive_solution<T: LzFloat>(p: &[T]) -> Result<TransitionMatrix<T>, AnalyticError> {
    for &pk in p {
        check_prob("p", pk, false)?;
    }
    let n = p.len();
    let q: Vec<T> = p.iter().map(|&x| T::one() - x).collect();
    let p00 = p.iter().fold(T::one(), |a, &x| a * x);
    let mut row0 = vec![T::zero(); n + 1]; // row0[k] = P[0][k], transition k -> 0
    let mut col0 = vec![T::zero(); n + 1]; // col0[k] = P[k][0], transition 0 -> k
    let mut row0_known = vec![false; n + 1];
    let mut col0_known = vec![false; n + 1];

    let div = |num: T, den: T| -> Result<T, AnalyticError> {
        if den == T::zero() {
            Err(AnalyticError::DivisionByZero)
        } else {
            Ok(num / den)
        }
    };

    // Row 1 and column N of the full matrix close immediately.
    col0[1] = q[0];
    col0_known[1] = true;
    row0[n] = q[n - 1];
    row0_known[n] = true;
    if !row0_known[1] {
        row0[1] = div(p00 * q[0], T::one() - col0[1])?;
        row0_known[1] = true;
    }
    if !col0_known[n] {
        col0[n] = div(p00 * q[n - 1], T::one() - row0[n])?;
        col0_known[n] = true;
    }

    for j in 2..=n {
        let hi = n - j + 1;
        if !row0_known[hi] {
            // Column `hi` sum, written through the known high tail of column 0.
            let tail = (hi + 1..=n).fold(T::zero(), |a, r| a + col0[r]);
            row0[hi] = div(p00 * q[hi - 1], p00 + tail)?;
            row0_known[hi] = true;
        }
        if !col0_known[hi] {
            // Row `hi` sum, using the known high entries of row 0.
            let tail = (hi..=n).fold(T::zero(), |a, c| a + row0[c]);
            col0[hi] = div(p00 * q[hi - 1], T::one() - tail)?;
            col0_known[hi] = true;
        }
        if !col0_known[j] {
            // Row `j` sum through the known low entries of row 0.
            let head = (1..j).fold(T::zero(), |a, c| a + row0[c]);
            col0[j] = div(p00 * q[j - 1], p00 + head)?;
            col0_known[j] = true;
        }
        if !row0_known[j] {
            // Column `j` sum through the known low entries of column 0.
            let head = (1..=j).fold(T::zero(), |a, r| a + col0[r]);
            row0[j] = div(p00 * q[j - 1], T::one() - head)?;
            row0_known[j] = true;
        }
    }

    let mut m = DMatrix::<T>::zeros(n + 1, n + 1);
    m[(0, 0)] = p00;
    for k in 1..=n {
        m[(k, k)] = p[k - 1];
        m[(0, k)] = row0[k];
        m[(k, 0)] = col0[k];
    }
    for mi in 2..=n {
        for ni in 1..mi {
            m[(mi, ni)] = div(col0[mi] * row0[ni], p00)?;
        }
    }
    Ok(TransitionMatrix::new(m))
}

/// Exact 3-state chain probabilities for slopes `b` and nearest-neighbor
/// couplings `g1` (levels 1-2) and `g2` (levels 2-3).
pub fn chain3_solution<T: LzFloat>(
    b: [T; 3],
    g1: T,
    g2: T,
) -> Result<TransitionMatrix<T>, AnalyticError> {
    if b[0] == b[1] || b[1] == b[2] || b[0] == b[2] {
        return Err(AnalyticError::EqualSlopes);
    }
    let pi = T::pi();
    let a = (-pi * g1 * g1 / (b[0] - b[1]).abs()).exp();
    let c = (-pi * g2 * g2 / (b[2] - b[1]).abs()).exp();
    let one = T::one();
    let p11 = a * a;
    let p33 = c * c;
    let p22 = (one - a - c) * (one - a - c);
    let p12 = (one - a) * (a + c);
    let p13 = one - p11 - p12;
    let p23 = one - p12 - p22;
    let m = DMatrix::from_row_slice(3, 3, &[p11, p12, p13, p12, p22, p23, p13, p23, p33]);
    Ok(TransitionMatrix::new(m))
}

/// Four-state spin-3/2 transition matrix in the model's own level order
/// (levels 1,2 with slopes `+-b1`, levels 3,4 with `+-b2`; `p1` belongs to
/// the like-sign slope crossings, `p2` to the opposite-sign ones).
///
/// The diagonal is `p1 p2`; the two symmetry classes of allowed
/// off-diagonal entries carry `p2 q1` and `q2`; the parity-forbidden class
/// vanishes.
pub fn spin32_solution<T: LzFloat>(p1: T, p2: T) -> Result<TransitionMatrix<T>, AnalyticError> {
    check_prob("p1", p1, true)?;
    check_prob("p2", p2, true)?;
    let q1 = T::one() - p1;
    let q2 = T::one() - p2;
    let d = p1 * p2;
    let x = p2 * q1;
    let y = q2;
    let z = T::zero();
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(4, 4, &[
        d, z, x, y,
        z, d, y, x,
        x, y, d, z,
        y, x, z, d,
    ]);
    Ok(TransitionMatrix::new(m))
}

/// Four-state bow-tie transition matrix in terms of the pass probabilities
/// `X` (lower slanted level) and `Y` (upper slanted level).
pub fn bowtie4_solution<T: LzFloat>(x: T, y: T) -> Result<TransitionMatrix<T>, AnalyticError> {
    check_prob("X", x, true)?;
    check_prob("Y", y, true)?;
    let one = T::one();
    let (xb, yb) = (one - x, one - y);
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(4, 4, &[
        x * x,   x * xb,   y * xb,   xb * yb,
        xb * y,  x * y,    yb * yb,  y * yb,
        x * xb,  xb * xb,  x * y,    x * yb,
        xb * yb, x * yb,   y * yb,   y * y,
    ]);
    Ok(TransitionMatrix::new(m))
}

/// Scattering matrix of the 4-state generalized bow-tie: two mutually
/// uncoupled slanted levels crossing a parallel pair of highest slope,
/// `p2` the pass probability at the crossings of the lower slanted level
/// (index 1), `p1` at those of the upper one (index 2).
///
/// Reconstructed from the trajectory rules; unitary identically in
/// `p1, p2`.
pub fn bowtie4_scattering<T: LzFloat>(p1: T, p2: T) -> Result<ScatteringMatrix<T>, AnalyticError> {
    check_prob("p1", p1, true)?;
    check_prob("p2", p2, true)?;
    let q1 = T::one() - p1;
    let q2 = T::one() - p2;
    let re = |x: T| C::new(x, T::zero());
    let im = |x: T| C::new(T::zero(), x);
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(4, 4, &[
        re(p2),                    re(-(p2 * q1 * q2).sqrt()), im((p1 * p2 * q2).sqrt()), im(q2.sqrt()),
        re(-(p2 * q1 * q2).sqrt()), re(p1 + q1 * q2),          im(p2 * (p1 * q1).sqrt()), im((p2 * q1).sqrt()),
        im(q2.sqrt()),             im((p2 * q1).sqrt()),       re((p1 * p2).sqrt()),      re(T::zero()),
        im((p1 * p2 * q2).sqrt()), im(p2 * (p1 * q1).sqrt()),  re(-(q1 + p1 * q2)),       re((p1 * p2).sqrt()),
    ]);
    Ok(ScatteringMatrix::new(m))
}

/// Two-fermion transition matrix of the generalized bow-tie, in the paired
/// basis order `(12), (34), (13), (14), (23), (24)`.
pub fn sixstate_solution<T: LzFloat>(p1: T, p2: T) -> Result<TransitionMatrix<T>, AnalyticError> {
    check_prob("p1", p1, true)?;
    check_prob("p2", p2, true)?;
    let q1 = T::one() - p1;
    let q2 = T::one() - p2;
    let (p2s, q1s, q2s) = (p2 * p2, q1 * q1, q2 * q2);
    let z = T::zero();
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(6, 6, &[
        p1 * p1 * p2s, z,             p1 * q1 * p2s, p2 * q1,       p1 * p2 * q2,  q2,
        z,             p1 * p1 * p2s, q2,            p1 * p2 * q2,  p2 * q1,       p1 * q1 * p2s,
        p2 * q1,       p1 * p2 * q2,  p1 * p2,       q2s,           z,             p2 * q2 * q1,
        p1 * q1 * p2s, q2,            p2s * q1s,     p1 * p2,       p2 * q2 * q1,  z,
        q2,            p1 * q1 * p2s, z,             p2 * q2 * q1,  p1 * p2,       p2s * q1s,
        p1 * p2 * q2,  p2 * q1,       p2 * q2 * q1,  z,             q2s,           p1 * p2,
    ]);
    Ok(TransitionMatrix::new(m))
}
