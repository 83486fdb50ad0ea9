//! Line-oriented model files.
//!
//! ```text
//! # three-state chain
//! n = 3
//! slopes = -1 0 1
//! energies = 0 0 0
//! coupling 1 2 0.5 0
//! coupling 2 3 0.5 0
//! ```
//!
//! `coupling i j re im` uses 1-based indices in the user's own level order;
//! unlisted pairs are zero, `#` starts a comment. Parsing keeps the user's
//! order; call [`RawModel::canonicalize`] to obtain the validated model plus
//! the permutation into canonical order.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::model::{CanonicalizationReport, MlzModel, ModelError};
use crate::scalar::{LzFloat, C};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FileError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing section `{0}`")]
    MissingSection(&'static str),
    #[error("line {line}: coupling ({i},{j}) listed twice")]
    DuplicateCoupling { line: usize, i: usize, j: usize },
    #[error(
        "line {line}: coupling ({i},{j}) conflicts with its transpose; matrix must be Hermitian"
    )]
    NonHermitianPair { line: usize, i: usize, j: usize },
    #[error("line {line}: level index {idx} out of range 1..={n}")]
    IndexOutOfRange { line: usize, idx: usize, n: usize },
}

/// Model data exactly as the user wrote it, before canonicalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawModel<T: LzFloat> {
    pub slopes: Vec<T>,
    pub energies: Vec<T>,
    pub couplings: DMatrix<C<T>>,
}

impl<T: LzFloat> RawModel<T> {
    pub fn canonicalize(self) -> Result<(MlzModel<T>, CanonicalizationReport), ModelError> {
        MlzModel::canonicalize(self.slopes, self.energies, self.couplings)
    }
}

fn syntax(line: usize, msg: impl Into<String>) -> FileError {
    FileError::Syntax {
        line,
        msg: msg.into(),
    }
}

fn parse_real<T: LzFloat>(tok: &str, line: usize) -> Result<T, FileError> {
    let v: f64 = tok
        .parse()
        .map_err(|_| syntax(line, format!("cannot parse `{tok}` as a number")))?;
    T::from_f64(v).ok_or_else(|| syntax(line, format!("`{tok}` not representable")))
}

/// Parses a model file from text.
pub fn parse_model<T: LzFloat>(text: &str) -> Result<RawModel<T>, FileError> {
    let mut n: Option<usize> = None;
    let mut slopes: Option<Vec<T>> = None;
    let mut energies: Option<Vec<T>> = None;
    let mut couplings: Vec<(usize, usize, usize, C<T>)> = Vec::new();

    for (lineno, raw_line) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        match tokens.as_slice() {
            ["n", "=", v] => {
                let dim: usize = v
                    .parse()
                    .map_err(|_| syntax(line, format!("cannot parse `{v}` as an integer")))?;
                if dim == 0 {
                    return Err(syntax(line, "n must be positive"));
                }
                n = Some(dim);
            }
            ["slopes", "=", rest @ ..] => {
                let vals = rest
                    .iter()
                    .map(|t| parse_real::<T>(t, line))
                    .collect::<Result<Vec<_>, _>>()?;
                slopes = Some(vals);
            }
            ["energies", "=", rest @ ..] => {
                let vals = rest
                    .iter()
                    .map(|t| parse_real::<T>(t, line))
                    .collect::<Result<Vec<_>, _>>()?;
                energies = Some(vals);
            }
            ["coupling", i, j, re, im] => {
                let i: usize = i
                    .parse()
                    .map_err(|_| syntax(line, format!("bad level index `{i}`")))?;
                let j: usize = j
                    .parse()
                    .map_err(|_| syntax(line, format!("bad level index `{j}`")))?;
                let re = parse_real::<T>(re, line)?;
                let im = parse_real::<T>(im, line)?;
                couplings.push((line, i, j, C::new(re, im)));
            }
            _ => {
                return Err(syntax(
                    line,
                    format!("unrecognized directive `{}`", tokens[0]),
                ));
            }
        }
    }

    let n = n.ok_or(FileError::MissingSection("n"))?;
    let slopes = slopes.ok_or(FileError::MissingSection("slopes"))?;
    let energies = energies.ok_or(FileError::MissingSection("energies"))?;
    if slopes.len() != n {
        return Err(syntax(
            0,
            format!("expected {n} slopes, found {}", slopes.len()),
        ));
    }
    if energies.len() != n {
        return Err(syntax(
            0,
            format!("expected {n} energies, found {}", energies.len()),
        ));
    }

    let mut g = DMatrix::<C<T>>::zeros(n, n);
    let mut seen = vec![false; n * n];
    for (line, i, j, v) in couplings {
        for idx in [i, j] {
            if idx == 0 || idx > n {
                return Err(FileError::IndexOutOfRange { line, idx, n });
            }
        }
        let (a, b) = (i - 1, j - 1);
        if seen[a * n + b] {
            return Err(FileError::DuplicateCoupling { line, i, j });
        }
        seen[a * n + b] = true;
        if seen[b * n + a] {
            // The transpose was given explicitly; it must agree.
            let tol = T::from_f64(crate::model::STRUCTURE_TOL).unwrap();
            if (g[(a, b)] - v).norm_sqr() > tol * tol {
                return Err(FileError::NonHermitianPair { line, i, j });
            }
            continue;
        }
        g[(a, b)] = v;
        g[(b, a)] = v.conj();
    }

    Ok(RawModel {
        slopes,
        energies,
        couplings: g,
    })
}

/// Serializes a model in the file format, levels in the model's own order.
pub fn write_model<T: LzFloat>(model: &MlzModel<T>) -> String {
    use std::fmt::Write;
    let n = model.dimension();
    let mut out = String::new();
    writeln!(out, "n = {n}").unwrap();
    let join = |xs: &[T]| {
        xs.iter()
            .map(|x| format!("{x}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    writeln!(out, "slopes = {}", join(model.slopes())).unwrap();
    writeln!(out, "energies = {}", join(model.energies())).unwrap();
    for i in 0..n {
        for j in (i + 1)..n {
            let g = model.coupling(i, j);
            if g.norm_sqr() != T::zero() {
                writeln!(out, "coupling {} {} {} {}", i + 1, j + 1, g.re, g.im).unwrap();
            }
        }
    }
    out
}
