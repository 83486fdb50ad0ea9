//! Linear-in-time multilevel models and their canonical form.
//!
//! A model is `H(t) = diag(beta_k t + eps_k) + G` with `G` Hermitian,
//! zero on the diagonal, and zero between parallel levels (equal slope).
//! Levels are kept in the canonical order: slopes ascending; within a run of
//! equal slopes, diabatic energies descending. Every other module assumes
//! this ordering.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::scalar::{LzFloat, C};

/// Absolute tolerance for structural checks (Hermiticity, parallel-level
/// couplings, diagonal couplings). These are exact requirements, not
/// numerical estimates, so the bar is near machine precision.
pub const STRUCTURE_TOL: f64 = 1e-12;

fn same_slope<T: LzFloat>(a: T, b: T) -> bool {
    let scale = T::one().max(a.abs().max(b.abs()));
    (a - b).abs() <= crate::scalar::real::<T>(STRUCTURE_TOL) * scale
}

/// Validation and construction failures for [`MlzModel`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("model must have at least one level")]
    Empty,
    #[error("input sizes disagree: {slopes} slopes, {energies} energies, {rows}x{cols} couplings")]
    DimensionMismatch {
        slopes: usize,
        energies: usize,
        rows: usize,
        cols: usize,
    },
    #[error("non-finite value in model input")]
    NonFinite,
    #[error("coupling matrix not Hermitian at ({i},{j}), defect {defect:.3e}")]
    NonHermitianCoupling { i: usize, j: usize, defect: f64 },
    #[error(
        "nonzero diagonal coupling {mag:.3e} at level {i}; diagonal terms belong in the energies"
    )]
    CouplingOnDiagonal { i: usize, mag: f64 },
    #[error("parallel levels {i} and {j} carry coupling {mag:.3e}; equal-slope levels must be uncoupled")]
    ParallelLevelCoupled { i: usize, j: usize, mag: f64 },
    #[error(
        "levels {i} and {j} share slope and diabatic energy; the scattering matrix is ill-defined"
    )]
    DegenerateDiabaticEnergies { i: usize, j: usize },
    #[error("time reparametrization needs a nonzero scale factor")]
    ZeroScale,
}

/// Permutation recorded by [`MlzModel::canonicalize`].
///
/// `permutation[c]` is the index (0-based) a canonical level had in the
/// user's input, so `canonical_slopes[c] == input_slopes[permutation[c]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalizationReport {
    pub permutation: Vec<usize>,
}

impl CanonicalizationReport {
    /// Identity report of size `n`.
    pub fn identity(n: usize) -> Self {
        Self {
            permutation: (0..n).collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.permutation.iter().enumerate().all(|(i, &p)| i == p)
    }

    /// Canonical position of input level `u`.
    pub fn position_of_input(&self, u: usize) -> usize {
        self.permutation.iter().position(|&p| p == u).unwrap()
    }

    /// Maps a canonical-ordered matrix back to the user's level order.
    pub fn matrix_to_input_order<S: Clone + nalgebra::Scalar>(
        &self,
        canonical: &DMatrix<S>,
    ) -> DMatrix<S> {
        let n = self.permutation.len();
        DMatrix::from_fn(n, n, |i, j| {
            canonical[(self.position_of_input(i), self.position_of_input(j))].clone()
        })
    }

    /// Composes two reports: `self` applied after `first`.
    pub fn after(&self, first: &CanonicalizationReport) -> CanonicalizationReport {
        CanonicalizationReport {
            permutation: self
                .permutation
                .iter()
                .map(|&c| first.permutation[c])
                .collect(),
        }
    }
}

/// An N-level Landau-Zener model in canonical level order.
#[derive(Debug, Clone, PartialEq)]
pub struct MlzModel<T: LzFloat> {
    slopes: Vec<T>,
    energies: Vec<T>,
    couplings: DMatrix<C<T>>,
    /// `group[k]` identifies the run of equal-slope levels containing `k`.
    group: Vec<usize>,
}

impl<T: LzFloat> MlzModel<T> {
    /// Validates raw model data and brings it into canonical order.
    ///
    /// Returns the model together with the permutation needed to translate
    /// results back into the caller's level order.
    pub fn canonicalize(
        slopes: Vec<T>,
        energies: Vec<T>,
        couplings: DMatrix<C<T>>,
    ) -> Result<(Self, CanonicalizationReport), ModelError> {
        let n = slopes.len();
        if n == 0 {
            return Err(ModelError::Empty);
        }
        if energies.len() != n || couplings.nrows() != n || couplings.ncols() != n {
            return Err(ModelError::DimensionMismatch {
                slopes: n,
                energies: energies.len(),
                rows: couplings.nrows(),
                cols: couplings.ncols(),
            });
        }
        let finite = |x: T| crate::scalar::is_finite(x);
        if !slopes.iter().all(|&x| finite(x))
            || !energies.iter().all(|&x| finite(x))
            || !couplings.iter().all(|g| finite(g.re) && finite(g.im))
        {
            return Err(ModelError::NonFinite);
        }

        let tol = crate::scalar::real::<T>(STRUCTURE_TOL);
        for i in 0..n {
            let diag = crate::scalar::cnorm(couplings[(i, i)]);
            if diag > tol {
                return Err(ModelError::CouplingOnDiagonal {
                    i: i + 1,
                    mag: diag.to_f64().unwrap_or(f64::NAN),
                });
            }
            for j in (i + 1)..n {
                let defect = crate::scalar::cnorm(couplings[(i, j)] - couplings[(j, i)].conj());
                if defect > tol {
                    return Err(ModelError::NonHermitianCoupling {
                        i: i + 1,
                        j: j + 1,
                        defect: defect.to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
        }

        // Sort by slope, then energies descending within each equal-slope run.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| slopes[a].partial_cmp(&slopes[b]).unwrap());
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && same_slope(slopes[order[end]], slopes[order[start]]) {
                end += 1;
            }
            order[start..end].sort_by(|&a, &b| energies[b].partial_cmp(&energies[a]).unwrap());
            start = end;
        }

        let sorted_slopes: Vec<T> = order.iter().map(|&u| slopes[u]).collect();
        let sorted_energies: Vec<T> = order.iter().map(|&u| energies[u]).collect();
        let mut group = vec![0usize; n];
        for k in 1..n {
            group[k] = if same_slope(sorted_slopes[k], sorted_slopes[k - 1]) {
                group[k - 1]
            } else {
                group[k - 1] + 1
            };
        }

        // Hermitize and check the structural zeros in canonical order.
        let mut g = DMatrix::<C<T>>::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let raw = (couplings[(order[i], order[j])]
                    + couplings[(order[j], order[i])].conj())
                .scale(crate::scalar::real(0.5));
                if group[i] == group[j] {
                    if crate::scalar::cnorm(raw) > tol {
                        return Err(ModelError::ParallelLevelCoupled {
                            i: order[i] + 1,
                            j: order[j] + 1,
                            mag: crate::scalar::cnorm(raw).to_f64().unwrap_or(f64::NAN),
                        });
                    }
                    continue;
                }
                g[(i, j)] = raw;
                g[(j, i)] = raw.conj();
            }
        }
        for k in 1..n {
            if group[k] == group[k - 1] {
                let scale =
                    T::one().max(sorted_energies[k].abs().max(sorted_energies[k - 1].abs()));
                if (sorted_energies[k] - sorted_energies[k - 1]).abs() <= tol * scale {
                    return Err(ModelError::DegenerateDiabaticEnergies {
                        i: order[k - 1] + 1,
                        j: order[k] + 1,
                    });
                }
            }
        }

        Ok((
            Self {
                slopes: sorted_slopes,
                energies: sorted_energies,
                couplings: g,
                group,
            },
            CanonicalizationReport { permutation: order },
        ))
    }

    pub fn dimension(&self) -> usize {
        self.slopes.len()
    }

    pub fn slopes(&self) -> &[T] {
        &self.slopes
    }

    pub fn energies(&self) -> &[T] {
        &self.energies
    }

    pub fn couplings(&self) -> &DMatrix<C<T>> {
        &self.couplings
    }

    pub fn coupling(&self, i: usize, j: usize) -> C<T> {
        self.couplings[(i, j)]
    }

    /// `true` when levels `i` and `j` have equal slope.
    pub fn parallel(&self, i: usize, j: usize) -> bool {
        self.group[i] == self.group[j]
    }

    /// Contiguous runs of equal-slope levels, in slope order.
    pub fn slope_groups(&self) -> Vec<std::ops::Range<usize>> {
        let n = self.dimension();
        let mut out = Vec::new();
        let mut start = 0;
        for k in 1..=n {
            if k == n || self.group[k] != self.group[start] {
                out.push(start..k);
                start = k;
            }
        }
        out
    }

    /// Levels sharing the minimal slope.
    pub fn min_slope_band(&self) -> std::ops::Range<usize> {
        self.slope_groups().remove(0)
    }

    /// Levels sharing the maximal slope.
    pub fn max_slope_band(&self) -> std::ops::Range<usize> {
        self.slope_groups().pop().unwrap()
    }

    /// Hamiltonian matrix at time `t`.
    pub fn hamiltonian(&self, t: T) -> DMatrix<C<T>> {
        let n = self.dimension();
        let mut h = self.couplings.clone();
        for k in 0..n {
            h[(k, k)] = C::new(self.slopes[k] * t + self.energies[k], T::zero());
        }
        h
    }

    /// Asymptotic phase coefficient `eta_k = sum_{l} |g_kl|^2 / (beta_k - beta_l)`,
    /// the sum running over levels with a slope different from level `k`'s.
    pub fn eta(&self, k: usize) -> T {
        let mut acc = T::zero();
        for l in 0..self.dimension() {
            if self.group[l] == self.group[k] {
                continue;
            }
            let g2 = self.couplings[(k, l)].norm_sqr();
            acc += g2 / (self.slopes[k] - self.slopes[l]);
        }
        acc
    }

    /// Model evolved backwards in time: all couplings and all diabatic
    /// energies change sign. The scattering matrix of the result is the
    /// conjugate transpose of the original's, after translating level
    /// indices through the returned report.
    pub fn time_reverse(&self) -> (Self, CanonicalizationReport) {
        let slopes = self.slopes.clone();
        let energies: Vec<T> = self.energies.iter().map(|&e| -e).collect();
        let couplings = self.couplings.map(|g| -g);
        Self::canonicalize(slopes, energies, couplings)
            .expect("time reversal preserves model validity")
    }

    /// Rescales and shifts time, `t = lambda * t' + t0`.
    ///
    /// Returns the transformed model (slopes `lambda^2 beta`, energies
    /// `lambda (eps + beta t0)`, couplings `lambda g`), the per-level phases
    /// `zeta_k = beta_k t0^2/2 + eps_k t0 + eta_k ln|lambda|`, and the
    /// permutation produced by re-canonicalization (a negative `lambda`
    /// flips the order inside parallel bands). For positive `lambda` the
    /// scattering matrices are related entrywise by
    /// `S'_{nn'} = S_{nn'} exp(-i (zeta_n - zeta_{n'}))`; transition
    /// probabilities are unchanged.
    pub fn reparametrize_time(
        &self,
        lambda: T,
        t0: T,
    ) -> Result<(Self, Vec<T>, CanonicalizationReport), ModelError> {
        if lambda == T::zero() {
            return Err(ModelError::ZeroScale);
        }
        let half = crate::scalar::real::<T>(0.5);
        let zetas: Vec<T> = (0..self.dimension())
            .map(|k| {
                self.slopes[k] * t0 * t0 * half
                    + self.energies[k] * t0
                    + self.eta(k) * lambda.abs().ln()
            })
            .collect();
        let slopes: Vec<T> = self.slopes.iter().map(|&b| lambda * lambda * b).collect();
        let energies: Vec<T> = self
            .energies
            .iter()
            .zip(&self.slopes)
            .map(|(&e, &b)| lambda * (e + b * t0))
            .collect();
        let couplings = self.couplings.map(|g| g.scale(lambda));
        let (model, report) = Self::canonicalize(slopes, energies, couplings)?;
        Ok((model, zetas, report))
    }

    /// Largest |crossing time| among coupled level pairs; zero if none.
    pub fn max_crossing_time(&self) -> T {
        let mut tmax = T::zero();
        for i in 0..self.dimension() {
            for j in (i + 1)..self.dimension() {
                if self.group[i] == self.group[j] {
                    continue;
                }
                if self.couplings[(i, j)].norm_sqr() == T::zero() {
                    continue;
                }
                let t = ((self.energies[j] - self.energies[i]) / (self.slopes[i] - self.slopes[j]))
                    .abs();
                tmax = tmax.max(t);
            }
        }
        tmax
    }

    /// Smallest nonzero slope difference between level pairs.
    pub fn min_slope_gap(&self) -> Option<T> {
        let mut gap: Option<T> = None;
        for i in 0..self.dimension() {
            for j in (i + 1)..self.dimension() {
                if self.group[i] == self.group[j] {
                    continue;
                }
                let d = (self.slopes[i] - self.slopes[j]).abs();
                gap = Some(match gap {
                    Some(g) => g.min(d),
                    None => d,
                });
            }
        }
        gap
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::real;
    use nalgebra::dmatrix;
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn two_level(g: f64) -> (MlzModel<f64>, CanonicalizationReport) {
        MlzModel::canonicalize(
            vec![-1.0, 1.0],
            vec![0.0, 0.0],
            dmatrix![c(0.0,0.0), c(g,0.0); c(g,0.0), c(0.0,0.0)],
        )
        .unwrap()
    }

    #[test]
    fn sorts_by_slope() {
        let (m, rep) = MlzModel::canonicalize(
            vec![1.0, -1.0],
            vec![0.0, 0.0],
            dmatrix![c(0.0,0.0), c(0.5,0.0); c(0.5,0.0), c(0.0,0.0)],
        )
        .unwrap();
        assert_eq!(rep.permutation, vec![1, 0]);
        assert_eq!(m.slopes(), &[-1.0, 1.0]);
    }

    #[test]
    fn parallel_band_sorted_by_descending_energy() {
        // Two parallel lowest-slope levels with eps1 > eps2 stay in place.
        let (m, rep) = MlzModel::canonicalize(
            vec![-1.0, -1.0, 0.6, 1.3],
            vec![0.5, -0.5, 0.0, 0.1],
            DMatrix::from_fn(4, 4, |i, j| {
                let coupled = matches!((i, j), (0, 3) | (3, 0) | (1, 2) | (2, 1) | (1, 3) | (3, 1));
                if coupled {
                    c(0.3, 0.0)
                } else {
                    c(0.0, 0.0)
                }
            }),
        )
        .unwrap();
        assert!(rep.is_identity());
        assert_eq!(m.min_slope_band(), 0..2);
        assert!(m.parallel(0, 1));
        assert!(!m.parallel(1, 2));
    }

    #[test]
    fn rejects_degenerate_levels() {
        let err = MlzModel::canonicalize(vec![0.0, 0.0], vec![1.0, 1.0], DMatrix::zeros(2, 2))
            .unwrap_err();
        assert!(matches!(err, ModelError::DegenerateDiabaticEnergies { .. }));
    }

    #[test]
    fn rejects_coupled_parallel_levels() {
        let err = MlzModel::canonicalize(
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            dmatrix![c(0.0,0.0), c(0.5,0.0); c(0.5,0.0), c(0.0,0.0)],
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::ParallelLevelCoupled { .. }));
    }

    #[test]
    fn rejects_non_hermitian_input() {
        let err = MlzModel::canonicalize(
            vec![-1.0, 1.0],
            vec![0.0, 0.0],
            dmatrix![c(0.0,0.0), c(0.5,0.1); c(0.5,0.1), c(0.0,0.0)],
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::NonHermitianCoupling { .. }));
    }

    #[test]
    fn canonicalize_is_idempotent() {
        let (m, _) = MlzModel::canonicalize(
            vec![0.3, -0.7, 1.4],
            vec![0.1, -0.2, 0.4],
            DMatrix::from_fn(3, 3, |i, j| if i != j { c(0.2, 0.0) } else { c(0.0, 0.0) }),
        )
        .unwrap();
        let (m2, rep2) = MlzModel::canonicalize(
            m.slopes().to_vec(),
            m.energies().to_vec(),
            m.couplings().clone(),
        )
        .unwrap();
        assert!(rep2.is_identity());
        assert_eq!(m, m2);
    }

    #[test]
    fn eta_two_level() {
        let (m, _) = two_level(0.5);
        assert_eq!(m.eta(0), 0.25 / (-2.0));
        assert_eq!(m.eta(1), 0.25 / 2.0);
        assert_eq!(m.eta(0) + m.eta(1), 0.0);
    }

    #[test]
    fn time_reverse_is_involution_on_data() {
        let (m, _) = MlzModel::canonicalize(
            vec![-1.0, -1.0, 0.5],
            vec![0.4, -0.4, 0.0],
            dmatrix![
                c(0.0,0.0), c(0.0,0.0), c(0.3,0.1);
                c(0.0,0.0), c(0.0,0.0), c(0.2,0.0);
                c(0.3,-0.1), c(0.2,0.0), c(0.0,0.0)
            ],
        )
        .unwrap();
        let (rev, rep) = m.time_reverse();
        // The parallel band flips its internal order.
        assert_eq!(rep.permutation, vec![1, 0, 2]);
        let (back, rep2) = rev.time_reverse();
        assert_eq!(back, m);
        assert_eq!(rep2.permutation, vec![1, 0, 2]);
    }

    #[test]
    fn reparametrize_identity_and_phases() {
        let (m, _) = two_level(0.0);
        let (m1, zetas, rep) = m.reparametrize_time(1.0, 0.0).unwrap();
        assert_eq!(m1, m);
        assert!(rep.is_identity());
        assert_eq!(zetas, vec![0.0, 0.0]);

        // lambda = 1, t0 = 1 on slopes (-1, 1), eps = 0: zeta_k = beta_k / 2.
        let (m2, zetas, _) = m.reparametrize_time(1.0, 1.0).unwrap();
        assert_eq!(zetas, vec![-0.5, 0.5]);
        assert_eq!(m2.energies(), &[-1.0, 1.0]);
    }

    #[test]
    fn reparametrize_rejects_zero_scale() {
        let (m, _) = two_level(0.1);
        assert!(matches!(
            m.reparametrize_time(0.0, 1.0),
            Err(ModelError::ZeroScale)
        ));
    }

    #[test]
    fn hamiltonian_assembles_diagonal() {
        let (m, _) = two_level(0.5);
        let h = m.hamiltonian(real(2.0));
        assert_eq!(h[(0, 0)], c(-2.0, 0.0));
        assert_eq!(h[(1, 1)], c(2.0, 0.0));
        assert_eq!(h[(0, 1)], c(0.5, 0.0));
    }
}
