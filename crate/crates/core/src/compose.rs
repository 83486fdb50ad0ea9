//! Composite models: fermionic sectors, exterior powers, tensor products.
//!
//! Filling a model's levels with `M` noninteracting spinless fermions
//! yields a `C(N, M)`-state model of the same linear-in-time form, and its
//! scattering matrix is the `M`-th exterior power of the single-particle
//! one: every amplitude is an `M x M` minor determinant. This module
//! builds such sector models (with the fermionic hopping signs), applies
//! exterior powers to scattering matrices directly, forms tensor products,
//! and checks the two determinant bookkeeping identities used to relate
//! sector probabilities back to the original model.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::model::{CanonicalizationReport, MlzModel, ModelError};
use crate::propagator::{ScatteringMatrix, TransitionMatrix};
use crate::scalar::{cnorm, LzFloat, C};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ComposeError {
    #[error("particle number {m} outside 1..={max}")]
    MOutOfRange { m: usize, max: usize },
    #[error("composite levels with equal slope stay coupled; sector out of scope")]
    DegenerateCompositeSector,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("matrix is {got}x{got}, expected {expected}x{expected}")]
    DimensionMismatch { got: usize, expected: usize },
}

/// Ordered `M`-particle basis of a sector model.
///
/// `subsets[c]` lists the occupied single-particle levels (ascending) of
/// the canonical composite level `c`; `lex_of_canonical[c]` is that
/// subset's rank in the ascending lexicographic enumeration used by
/// [`exterior_power_s`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FermionBasis {
    pub n: usize,
    pub m: usize,
    pub subsets: Vec<Vec<usize>>,
    pub lex_of_canonical: Vec<usize>,
}

impl FermionBasis {
    pub fn dimension(&self) -> usize {
        self.subsets.len()
    }

    /// Canonical composite index of a subset, if present.
    pub fn position_of(&self, subset: &[usize]) -> Option<usize> {
        self.subsets.iter().position(|s| s == subset)
    }
}

/// All `m`-element subsets of `0..n` in ascending lexicographic order.
pub fn lex_subsets(n: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(m);
    fn rec(start: usize, n: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        let need = m - cur.len();
        for v in start..=(n - need) {
            cur.push(v);
            rec(v + 1, n, m, cur, out);
            cur.pop();
        }
    }
    if m <= n {
        rec(0, n, m, &mut cur, &mut out);
    }
    out
}

/// Fermionic hopping sign between subsets differing in one element:
/// `(-1)^(occupied levels strictly between the vacated and filled index)`.
fn hop(a: &[usize], b: &[usize]) -> Option<(usize, usize, i32)> {
    let out: Vec<usize> = a.iter().copied().filter(|x| !b.contains(x)).collect();
    let inn: Vec<usize> = b.iter().copied().filter(|x| !a.contains(x)).collect();
    if out.len() != 1 || inn.len() != 1 {
        return None;
    }
    let (lo, hi) = (out[0].min(inn[0]), out[0].max(inn[0]));
    let crossings = a
        .iter()
        .filter(|&&x| x > lo && x < hi && x != out[0])
        .count();
    let sign = if crossings % 2 == 0 { 1 } else { -1 };
    Some((out[0], inn[0], sign))
}

/// Builds the `M`-fermion sector of a model.
///
/// Composite slopes and energies are sums over the occupied levels;
/// couplings connect subsets differing in exactly one element and carry
/// the fermionic sign. The sector is re-canonicalized; the returned basis
/// records the subset behind each canonical level and its lexicographic
/// rank for alignment with [`exterior_power_s`].
pub fn fermion_sector_model<T: LzFloat>(
    model: &MlzModel<T>,
    m: usize,
) -> Result<(MlzModel<T>, FermionBasis), ComposeError> {
    let n = model.dimension();
    if m == 0 || m >= n {
        return Err(ComposeError::MOutOfRange { m, max: n - 1 });
    }
    let subsets = lex_subsets(n, m);
    let dim = subsets.len();
    let mut slopes = Vec::with_capacity(dim);
    let mut energies = Vec::with_capacity(dim);
    for s in &subsets {
        slopes.push(s.iter().fold(T::zero(), |a, &k| a + model.slopes()[k]));
        energies.push(s.iter().fold(T::zero(), |a, &k| a + model.energies()[k]));
    }
    let mut g = DMatrix::<C<T>>::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            if i == j {
                continue;
            }
            if let Some((a, b, sign)) = hop(&subsets[i], &subsets[j]) {
                let base = model.coupling(a, b);
                g[(i, j)] = if sign > 0 { base } else { -base };
            }
        }
    }
    let (sector, report) = MlzModel::canonicalize(slopes, energies, g).map_err(|e| match e {
        ModelError::ParallelLevelCoupled { .. } => ComposeError::DegenerateCompositeSector,
        other => ComposeError::Model(other),
    })?;
    let basis = FermionBasis {
        n,
        m,
        subsets: report
            .permutation
            .iter()
            .map(|&lex| subsets[lex].clone())
            .collect(),
        lex_of_canonical: report.permutation.clone(),
    };
    Ok((sector, basis))
}

/// `M`-th exterior power of a scattering matrix over the lexicographic
/// subset basis: entry `(alpha, gamma)` is the determinant of the minor of
/// `S` with rows `alpha` and columns `gamma`.
pub fn exterior_power_s<T: LzFloat>(
    s: &ScatteringMatrix<T>,
    m: usize,
) -> Result<ScatteringMatrix<T>, ComposeError> {
    let n = s.dimension();
    if m == 0 || m > n {
        return Err(ComposeError::MOutOfRange { m, max: n });
    }
    let subsets = lex_subsets(n, m);
    let dim = subsets.len();
    let mut out = DMatrix::<C<T>>::zeros(dim, dim);
    let mut minor = DMatrix::<C<T>>::zeros(m, m);
    for (i, rows) in subsets.iter().enumerate() {
        for (j, cols) in subsets.iter().enumerate() {
            for (a, &r) in rows.iter().enumerate() {
                for (b, &c) in cols.iter().enumerate() {
                    minor[(a, b)] = s.entry(r, c);
                }
            }
            out[(i, j)] = minor.clone().determinant();
        }
    }
    Ok(ScatteringMatrix::new(out))
}

/// Tensor product of two models: slopes and energies add, couplings act on
/// one slot at a time. Pair states are enumerated row-major `(k, s)`
/// before re-canonicalization; the report maps back to that order. The
/// scattering matrix of the product model is the Kronecker product of the
/// factors' matrices.
pub fn tensor_model<T: LzFloat>(
    m1: &MlzModel<T>,
    m2: &MlzModel<T>,
) -> Result<(MlzModel<T>, CanonicalizationReport), ModelError> {
    let (n1, n2) = (m1.dimension(), m2.dimension());
    let dim = n1 * n2;
    let mut slopes = Vec::with_capacity(dim);
    let mut energies = Vec::with_capacity(dim);
    for k in 0..n1 {
        for s in 0..n2 {
            slopes.push(m1.slopes()[k] + m2.slopes()[s]);
            energies.push(m1.energies()[k] + m2.energies()[s]);
        }
    }
    let mut g = DMatrix::<C<T>>::zeros(dim, dim);
    for k in 0..n1 {
        for s in 0..n2 {
            let row = k * n2 + s;
            for k2 in 0..n1 {
                for s2 in 0..n2 {
                    let col = k2 * n2 + s2;
                    if row == col {
                        continue;
                    }
                    if s == s2 && k != k2 {
                        g[(row, col)] = m1.coupling(k, k2);
                    } else if k == k2 && s != s2 {
                        g[(row, col)] = m2.coupling(s, s2);
                    }
                }
            }
        }
    }
    MlzModel::canonicalize(slopes, energies, g)
}

/// Kronecker product of two scattering matrices (row-major pair order).
pub fn tensor_s<T: LzFloat>(
    s1: &ScatteringMatrix<T>,
    s2: &ScatteringMatrix<T>,
) -> ScatteringMatrix<T> {
    ScatteringMatrix::new(s1.entries().kronecker(s2.entries()))
}

/// Residual of the determinant identity tying the second-order two-fermion
/// minor of `S` to `S11` times the upper-left `3x3` determinant. This is
/// exact linear algebra, so the residual sits at machine precision for any
/// matrix whatsoever.
pub fn hc_redundancy_check<T: LzFloat>(s: &ScatteringMatrix<T>) -> Result<T, ComposeError> {
    let n = s.dimension();
    if n < 3 {
        return Err(ComposeError::DimensionMismatch {
            got: n,
            expected: 3,
        });
    }
    let e = |i: usize, j: usize| s.entry(i, j);
    let s1212 = e(0, 0) * e(1, 1) - e(0, 1) * e(1, 0);
    let s1213 = e(0, 0) * e(1, 2) - e(1, 0) * e(0, 2);
    let s1312 = e(0, 0) * e(2, 1) - e(2, 0) * e(0, 1);
    let s1313 = e(0, 0) * e(2, 2) - e(0, 2) * e(2, 0);
    let lhs = s1212 * s1313 - s1213 * s1312;
    let rhs = e(0, 0) * s.entries().view((0, 0), (3, 3)).clone_owned().determinant();
    Ok(cnorm(lhs - rhs))
}

/// Residual of the particle-counting bookkeeping between a two-fermion
/// sector transition matrix `P6` (paired basis order
/// `(12),(34),(13),(14),(23),(24)`) and the single-particle matrix `P4`:
/// the probability of finding the first fermion after starting from the
/// third paired state must match on both sides.
pub fn reduction_bookkeeping<T: LzFloat>(
    p6: &TransitionMatrix<T>,
    p4: &TransitionMatrix<T>,
) -> Result<T, ComposeError> {
    if p6.dimension() != 6 {
        return Err(ComposeError::DimensionMismatch {
            got: p6.dimension(),
            expected: 6,
        });
    }
    if p4.dimension() != 4 {
        return Err(ComposeError::DimensionMismatch {
            got: p4.dimension(),
            expected: 4,
        });
    }
    let lhs = p6.entry(0, 2) + p6.entry(2, 2) + p6.entry(3, 2);
    let rhs = p4.entry(0, 0) + p4.entry(0, 2);
    Ok((lhs - rhs).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic;
    use nalgebra::DMatrix;
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Two slanted levels crossing a parallel pair: the generalized
    /// bow-tie whose two-fermion sector has known structure.
    fn gbt_model(b1: f64, b2: f64, b3: f64, e: f64, g: f64, ga: f64) -> MlzModel<f64> {
        let mut cp = DMatrix::zeros(4, 4);
        for &(i, j, v) in &[(0usize, 2usize, g), (0, 3, g), (1, 2, ga), (1, 3, ga)] {
            cp[(i, j)] = c(v, 0.0);
            cp[(j, i)] = c(v, 0.0);
        }
        MlzModel::canonicalize(vec![b1, b2, b3, b3], vec![0.0, 0.0, e, -e], cp)
            .unwrap()
            .0
    }

    #[test]
    fn lex_subsets_order() {
        assert_eq!(
            lex_subsets(4, 2),
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
        assert_eq!(lex_subsets(3, 3), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn single_particle_sector_is_the_model() {
        let m = gbt_model(-1.0, -0.2, 1.0, 0.4, 0.3, 0.25);
        let (sector, basis) = fermion_sector_model(&m, 1).unwrap();
        assert_eq!(sector, m);
        assert_eq!(basis.subsets, vec![vec![0], vec![1], vec![2], vec![3]]);
    }

    #[test]
    fn two_fermion_sector_signs_and_sums() {
        // Geometry with b1 < b2 < b3: levels a=0, b=1 slanted; c1=2, c2=3
        // the parallel pair at energies +-e.
        let (g, ga, e) = (0.3, 0.25, 0.4);
        let m = gbt_model(-1.0, -0.2, 1.0, e, g, ga);
        let (sector, basis) = fermion_sector_model(&m, 2).unwrap();
        assert_eq!(sector.dimension(), 6);

        let pos = |s: &[usize]| basis.position_of(s).unwrap();
        let ab = pos(&[0, 1]);
        let ac1 = pos(&[0, 2]);
        let ac2 = pos(&[0, 3]);
        let bc1 = pos(&[1, 2]);
        let bc2 = pos(&[1, 3]);
        let c1c2 = pos(&[2, 3]);

        // Slopes and energies add over the occupied levels.
        assert_eq!(sector.slopes()[ab], -1.2);
        assert_eq!(sector.energies()[c1c2], 0.0);
        assert_eq!(sector.energies()[ac1], e);

        // Hops not skipping an occupied level keep the bare coupling.
        assert_eq!(sector.coupling(ab, ac1), c(ga, 0.0)); // b -> c1 over nothing
        assert_eq!(sector.coupling(c1c2, ac2), c(g, 0.0)); // c1 -> a over nothing
                                                           // Hops over one occupied level flip sign.
        assert_eq!(sector.coupling(ab, bc1), c(-g, 0.0)); // a -> c1 over b
        assert_eq!(sector.coupling(c1c2, ac1), c(-g, 0.0)); // c2 -> a over c1
        assert_eq!(sector.coupling(ab, bc2), c(-g, 0.0)); // a -> c2 over b
                                                          // Doubly-changed pairs stay uncoupled.
        assert_eq!(sector.coupling(ab, c1c2), c(0.0, 0.0));
        assert_eq!(sector.coupling(ac1, bc2), c(0.0, 0.0));
    }

    #[test]
    fn exterior_power_edge_orders() {
        let s = analytic::bowtie4_scattering(0.3f64, 0.7).unwrap();
        let s1 = exterior_power_s(&s, 1).unwrap();
        assert_eq!(s1.entries(), s.entries());
        let s4 = exterior_power_s(&s, 4).unwrap();
        assert_eq!(s4.dimension(), 1);
        assert!((cnorm(s4.entry(0, 0)) - 1.0).abs() < 1e-13);
        assert!(exterior_power_s(&s, 5).is_err());
    }

    #[test]
    fn exterior_power_preserves_unitarity() {
        let s = analytic::bowtie4_scattering(0.45f64, 0.8).unwrap();
        let s2 = exterior_power_s(&s, 2).unwrap();
        assert!(s2.unitarity_defect() < 1e-13);
    }

    #[test]
    fn exterior_square_reproduces_sixstate_solution() {
        // |wedge^2 S|^2 of the generalized bow-tie equals the known
        // six-state matrix after reordering lex pairs into the paired
        // basis (12),(34),(13),(14),(23),(24).
        let (p1, p2) = (0.35f64, 0.62);
        let s2 = exterior_power_s(&analytic::bowtie4_scattering(p1, p2).unwrap(), 2).unwrap();
        let expect = analytic::sixstate_solution(p1, p2).unwrap();
        let order = [0usize, 5, 1, 2, 3, 4]; // paired-basis index -> lex rank
        for i in 0..6 {
            for j in 0..6 {
                let got = s2.entry(order[i], order[j]).norm_sqr();
                assert!(
                    (got - expect.entry(i, j)).abs() < 1e-13,
                    "entry ({i},{j}): {got} vs {}",
                    expect.entry(i, j)
                );
            }
        }
    }

    fn two_level(b: f64, eps: (f64, f64), g: f64) -> MlzModel<f64> {
        let mut cp = DMatrix::zeros(2, 2);
        cp[(0, 1)] = c(g, 0.0);
        cp[(1, 0)] = c(g, 0.0);
        MlzModel::canonicalize(vec![-b, b], vec![eps.0, eps.1], cp)
            .unwrap()
            .0
    }

    #[test]
    fn tensor_model_slopes_add() {
        let (prod, _) = tensor_model(
            &two_level(1.0, (0.3, -0.2), 0.3),
            &two_level(1.0, (0.3, -0.4), 0.4),
        )
        .unwrap();
        assert_eq!(prod.slopes(), &[-2.0, 0.0, 0.0, 2.0]);
        assert!((prod.energies()[1] - 0.1).abs() < 1e-15); // descending inside the pair
        assert!((prod.energies()[2] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn tensor_model_rejects_degenerate_composite() {
        // Equal level gaps in both factors collide in the zero-slope pair.
        let err = tensor_model(
            &two_level(1.0, (0.3, -0.2), 0.3),
            &two_level(1.0, (0.1, -0.4), 0.4),
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::DegenerateDiabaticEnergies { .. }));
    }

    #[test]
    fn tensor_with_trivial_factor_is_identity_map() {
        let m = gbt_model(-1.0, -0.2, 1.0, 0.4, 0.3, 0.25);
        let (one, _) = MlzModel::canonicalize(vec![0.0], vec![0.0], DMatrix::zeros(1, 1)).unwrap();
        let (prod, rep) = tensor_model(&m, &one).unwrap();
        assert!(rep.is_identity());
        assert_eq!(prod.slopes(), m.slopes());
        assert_eq!(prod.couplings(), m.couplings());
    }

    #[test]
    fn tensor_s_is_kronecker() {
        let s = analytic::bowtie4_scattering(0.3f64, 0.7).unwrap();
        let id = ScatteringMatrix::<f64>::new(DMatrix::identity(2, 2));
        let prod = tensor_s(&s, &id);
        assert_eq!(prod.dimension(), 8);
        assert_eq!(prod.entry(0, 0), s.entry(0, 0));
        assert_eq!(prod.entry(1, 1), s.entry(0, 0));
        assert_eq!(prod.entry(2, 0), s.entry(1, 0));
        assert!(prod.unitarity_defect() < 1e-13);
    }

    #[test]
    fn redundancy_identity_on_identity_and_unitary() {
        let id = ScatteringMatrix::<f64>::new(DMatrix::identity(4, 4));
        assert_eq!(hc_redundancy_check(&id).unwrap(), 0.0);
        let s = analytic::bowtie4_scattering(0.3f64, 0.7).unwrap();
        assert!(hc_redundancy_check(&s).unwrap() < 1e-14);
        let small = ScatteringMatrix::<f64>::new(DMatrix::identity(2, 2));
        assert!(hc_redundancy_check(&small).is_err());
    }

    #[test]
    fn reduction_bookkeeping_closed_form() {
        let (p1, p2) = (0.25, 0.5);
        let (q1, q2) = (1.0 - p1, 1.0 - p2);
        // Two-fermion probabilities out of the third paired state, from
        // the trajectory rules of the sector diagram.
        let mut p6 = DMatrix::<f64>::zeros(6, 6);
        p6[(0, 2)] = p2 * q2 * p1;
        p6[(2, 2)] = p2 * p2;
        p6[(3, 2)] = p2 * q2 * q1;
        let p6 = TransitionMatrix::new(p6);
        let p4 = analytic::spin32_solution(p1, p2).unwrap();
        assert!(reduction_bookkeeping(&p6, &p4).unwrap() < 1e-15);
    }

    #[test]
    fn reduction_bookkeeping_checks_dimensions() {
        let p4 = analytic::spin32_solution(0.3, 0.4).unwrap();
        assert!(matches!(
            reduction_bookkeeping(&p4, &p4),
            Err(ComposeError::DimensionMismatch { got: 4, .. })
        ));
    }
}
