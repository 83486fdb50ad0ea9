//! Shared helpers for the integration suites.
#![allow(dead_code)] // each test binary uses a different subset

use mlz::model::MlzModel;
use mlz::propagator::{propagate, PropagationConfig, ScatteringMatrix};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Random model with slopes distinct in [-2, 2] (pairwise gaps >= 0.5),
/// energies in [-1, 1], coupling magnitudes in [0.15, 0.75] with random
/// phases.
pub fn random_model(rng: &mut ChaCha8Rng, n: usize) -> MlzModel<f64> {
    let slopes = loop {
        let mut s: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if s.windows(2).all(|w| w[1] - w[0] >= 0.5) {
            break s;
        }
    };
    let energies: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let mag = rng.random_range(0.15..0.75);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            g[(i, j)] = c(mag * phase.cos(), mag * phase.sin());
            g[(j, i)] = g[(i, j)].conj();
        }
    }
    MlzModel::canonicalize(slopes, energies, g).unwrap().0
}

/// Same, but with real couplings.
pub fn random_real_model(rng: &mut ChaCha8Rng, n: usize) -> MlzModel<f64> {
    let slopes = loop {
        let mut s: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if s.windows(2).all(|w| w[1] - w[0] >= 0.5) {
            break s;
        }
    };
    let energies: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let mag: f64 = rng.random_range(0.15..0.75);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            g[(i, j)] = c(mag * sign, 0.0);
            g[(j, i)] = g[(i, j)];
        }
    }
    MlzModel::canonicalize(slopes, energies, g).unwrap().0
}

pub fn propagate_at(model: &MlzModel<f64>, t_end: f64) -> ScatteringMatrix<f64> {
    propagate(model, &PropagationConfig::adaptive(t_end)).unwrap()
}

pub fn max_abs_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    (a - b).iter().fold(0.0f64, |m, z| m.max(z.norm()))
}

/// Random 4x4 unitary via QR of a complex uniform matrix.
pub fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> ScatteringMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| {
        c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    ScatteringMatrix::new(m.qr().q())
}
