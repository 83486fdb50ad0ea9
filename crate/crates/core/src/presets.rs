//! Ready-made models from the solvable-model literature.
//!
//! Constructors return canonicalized models; where the conventional level
//! numbering differs from canonical order, the permutation report is
//! returned too.

use nalgebra::DMatrix;

use crate::model::{CanonicalizationReport, MlzModel, ModelError};
use crate::scalar::{LzFloat, C};

fn hermitian<T: LzFloat>(n: usize, pairs: &[(usize, usize, C<T>)]) -> DMatrix<C<T>> {
    let mut g = DMatrix::zeros(n, n);
    for &(i, j, v) in pairs {
        g[(i, j)] = v;
        g[(j, i)] = v.conj();
    }
    g
}

fn re<T: LzFloat>(x: T) -> C<T> {
    C::new(x, T::zero())
}

/// Landau-Zener chain: all levels cross at `t = 0`, nearest-neighbor real
/// couplings. `couplings.len()` must be `slopes.len() - 1`.
pub fn chain<T: LzFloat>(slopes: &[T], couplings: &[T]) -> Result<MlzModel<T>, ModelError> {
    assert_eq!(
        couplings.len() + 1,
        slopes.len(),
        "a chain needs one coupling per adjacent pair"
    );
    let n = slopes.len();
    let pairs: Vec<_> = couplings
        .iter()
        .enumerate()
        .map(|(i, &g)| (i, i + 1, re(g)))
        .collect();
    MlzModel::canonicalize(slopes.to_vec(), vec![T::zero(); n], hermitian(n, &pairs))
        .map(|(m, _)| m)
}

/// Demkov-Osherov model: one level of slope `-b` crossing a zero-slope
/// band with the given energies and couplings (level 0 is the slanted
/// one; band levels keep their order when energies are descending).
pub fn demkov_osherov<T: LzFloat>(
    b: T,
    energies: &[T],
    couplings: &[T],
) -> Result<MlzModel<T>, ModelError> {
    assert_eq!(energies.len(), couplings.len());
    let n = energies.len() + 1;
    let mut slopes = vec![-b];
    slopes.resize(energies.len() + 1, T::zero());
    let mut eps = vec![T::zero()];
    eps.extend_from_slice(energies);
    let pairs: Vec<_> = couplings
        .iter()
        .enumerate()
        .map(|(k, &g)| (0, k + 1, re(g)))
        .collect();
    MlzModel::canonicalize(slopes, eps, hermitian(n, &pairs)).map(|(m, _)| m)
}

/// Four-state bow-tie: slanted levels `beta1 t` and `beta4 t`
/// (`beta1 < 0 < beta4`) crossing the parallel pair at `+-eps`, with
/// couplings `gamma` (level 1) and `g` (level 4) to both pair members.
pub fn bowtie4<T: LzFloat>(
    beta1: T,
    beta4: T,
    eps: T,
    gamma: T,
    g: T,
) -> Result<MlzModel<T>, ModelError> {
    let pairs = [
        (0, 1, re(gamma)),
        (0, 2, re(gamma)),
        (1, 3, re(g)),
        (2, 3, re(g)),
    ];
    MlzModel::canonicalize(
        vec![beta1, T::zero(), T::zero(), beta4],
        vec![T::zero(), eps, -eps, T::zero()],
        hermitian(4, &pairs),
    )
    .map(|(m, _)| m)
}

/// The sign-flipped bow-tie variant: identical geometry, but level 1
/// couples to the two parallel levels with opposite signs. Not integrable.
pub fn pseudo_bowtie<T: LzFloat>(
    beta1: T,
    beta4: T,
    eps: T,
    gamma: T,
    g: T,
) -> Result<MlzModel<T>, ModelError> {
    let pairs = [
        (0, 1, re(-gamma)),
        (0, 2, re(gamma)),
        (1, 3, re(g)),
        (2, 3, re(g)),
    ];
    MlzModel::canonicalize(
        vec![beta1, T::zero(), T::zero(), beta4],
        vec![T::zero(), eps, -eps, T::zero()],
        hermitian(4, &pairs),
    )
    .map(|(m, _)| m)
}

/// Generalized bow-tie with the parallel pair on top: slanted levels
/// `b1 t` and `b2 t` below a parallel pair of slope `b3` at energies
/// `+-e`, couplings `g` (first slanted) and `gamma` (second).
pub fn generalized_bowtie<T: LzFloat>(
    b1: T,
    b2: T,
    b3: T,
    e: T,
    g: T,
    gamma: T,
) -> Result<MlzModel<T>, ModelError> {
    let pairs = [
        (0, 2, re(g)),
        (0, 3, re(g)),
        (1, 2, re(gamma)),
        (1, 3, re(gamma)),
    ];
    MlzModel::canonicalize(
        vec![b1, b2, b3, b3],
        vec![T::zero(), T::zero(), e, -e],
        hermitian(4, &pairs),
    )
    .map(|(m, _)| m)
}

/// Spin-3/2 model: levels `b1 t + e`, `-b1 t + e`, `b2 t - e`,
/// `-b2 t - e` with couplings `g` between like-sign slope pairs (1,3) and
/// (2,4), and `gamma` with a sign twist between opposite pairs (1,4) and
/// (2,3). Returned in canonical order together with the permutation from
/// the conventional numbering above.
pub fn spin_three_half<T: LzFloat>(
    b1: T,
    b2: T,
    e: T,
    g: T,
    gamma: T,
) -> Result<(MlzModel<T>, CanonicalizationReport), ModelError> {
    let pairs = [
        (0, 2, re(g)),
        (1, 3, re(g)),
        (0, 3, re(gamma)),
        (1, 2, re(-gamma)),
    ];
    MlzModel::canonicalize(
        vec![b1, -b1, b2, -b2],
        vec![e, e, -e, -e],
        hermitian(4, &pairs),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_has_identity_order() {
        let m = chain(&[-1.0, 0.0, 1.0], &[0.5, 0.4]).unwrap();
        assert_eq!(m.slopes(), &[-1.0, 0.0, 1.0]);
        assert_eq!(m.coupling(0, 2).re, 0.0);
    }

    #[test]
    fn bowtie_is_canonical_as_written() {
        let m = bowtie4(-1.0, 0.75, 2.0, 0.7, 0.8).unwrap();
        assert_eq!(m.slopes(), &[-1.0, 0.0, 0.0, 0.75]);
        assert_eq!(m.energies(), &[0.0, 2.0, -2.0, 0.0]);
    }

    #[test]
    fn spin_three_half_permutation() {
        // b1 > b2 > 0: canonical slope order is (-b1, -b2, b2, b1).
        let (m, rep) = spin_three_half(2.0, 1.0, 0.4, 0.35, 0.3).unwrap();
        assert_eq!(rep.permutation, vec![1, 3, 2, 0]);
        assert_eq!(m.slopes(), &[-2.0, -1.0, 1.0, 2.0]);
    }

    #[test]
    fn demkov_osherov_band_order() {
        let m = demkov_osherov(1.0, &[1.0, 0.0, -1.0], &[0.3, 0.4, 0.5]).unwrap();
        assert_eq!(m.slopes()[0], -1.0);
        assert_eq!(m.energies(), &[0.0, 1.0, 0.0, -1.0]);
    }
}
