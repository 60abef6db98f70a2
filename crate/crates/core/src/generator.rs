//! Truncated transposed intensity matrices and the similarity transform.
//!
//! `build_a` materializes the transposed generator `A(t)` on states
//! `{0..=N}` (column `i` holds the rates out of state `i`; columns sum to
//! zero). `build_reduced` eliminates state 0 through the normalization
//! `p_0 = 1 - sum p_i`, producing `z' = B z + f` with
//! `b_ij = a_ij - a_i0`, `f_i = a_i0`. `transform_bstar` conjugates by the
//! weight matrix `D`, and the sign of the off-diagonal entries of
//! `D B D^{-1}` decides whether the bound machinery applies at all.
//!
//! `transform_bstar` is a plain triple product on purpose: it serves as the
//! independent numeric oracle against the closed-form column sums, so it
//! must not share a code path with them.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dseq::DSequence;
use crate::error::{Error, Result};
use crate::model::ModelSpec;

use std::io::Write;

/// Default tolerance for the positivity check: entries are exact rational
/// combinations of evaluated rates, only rounding noise needs absorbing.
pub const POSITIVITY_TOL: f64 = 1e-12;

/// Transposed intensity matrix on `{0..=n}`. Transitions that would leave
/// the truncated space are deleted; the diagonal compensates, so every
/// column still sums to zero.
pub fn build_a(model: &ModelSpec, n: usize, t: f64) -> Result<DMatrix<f64>> {
    if n < 1 {
        return Err(Error::Domain("truncation size must be >= 1".into()));
    }
    let mut a = DMatrix::zeros(n + 1, n + 1);
    for source in 0..=n {
        let mut outflow = 0.0;
        model.for_each_transition(source, t, n, |target, rate| {
            a[(target, source)] += rate;
            outflow += rate;
        })?;
        a[(source, source)] = -outflow;
    }
    Ok(a)
}

/// Splits a transposed intensity matrix into the reduced pair `(B, f)`.
pub fn build_reduced(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = a.nrows() - 1;
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 * (1.0 + scale);
    for j in 0..=n {
        let sum: f64 = a.column(j).iter().sum();
        if sum.abs() > tol {
            return Err(Error::InvalidGenerator { index: j, sum });
        }
    }
    let f = DVector::from_fn(n, |i, _| a[(i + 1, 0)]);
    let b = DMatrix::from_fn(n, n, |i, j| a[(i + 1, j + 1)] - a[(i + 1, 0)]);
    Ok((b, f))
}

/// The upper-triangular weight matrix `D` (row `i` is `d_i` from column `i`
/// on) and its upper-bidiagonal inverse.
pub fn build_d(d: &DSequence, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut dm = DMatrix::zeros(n, n);
    let mut dinv = DMatrix::zeros(n, n);
    for i in 0..n {
        for k in i..n {
            dm[(i, k)] = d.d(i + 1);
        }
        dinv[(i, i)] = 1.0 / d.d(i + 1);
        if i + 1 < n {
            dinv[(i, i + 1)] = -1.0 / d.d(i + 2);
        }
    }
    (dm, dinv)
}

/// `D B D^{-1}` by explicit triple product.
pub fn transform_bstar(b: &DMatrix<f64>, d: &DSequence) -> DMatrix<f64> {
    let (dm, dinv) = build_d(d, b.nrows());
    &dm * b * &dinv
}

/// Outcome of scanning the off-diagonal entries of `B*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositivityVerdict {
    pub ok: bool,
    /// Most negative off-diagonal entry found.
    pub min_entry: f64,
    /// 0-based matrix position of that entry (states `1..=N`), if any
    /// off-diagonal entry exists.
    pub witness: Option<(usize, usize)>,
    /// Time at which the worst entry occurred, when scanning a grid.
    pub witness_t: Option<f64>,
}

/// Checks `b*_ij >= -tol` for `i != j`.
pub fn check_positivity(bstar: &DMatrix<f64>, tol: f64) -> PositivityVerdict {
    let mut min_entry = f64::INFINITY;
    let mut witness = None;
    for j in 0..bstar.ncols() {
        for i in 0..bstar.nrows() {
            if i != j && bstar[(i, j)] < min_entry {
                min_entry = bstar[(i, j)];
                witness = Some((i, j));
            }
        }
    }
    if witness.is_none() {
        min_entry = 0.0;
    }
    PositivityVerdict { ok: min_entry >= -tol, min_entry, witness, witness_t: None }
}

/// Positivity scan over a uniform time grid on `[0,1)`.
pub fn positivity_on_grid(
    model: &ModelSpec,
    d: &DSequence,
    n: usize,
    grid_points: usize,
    tol: f64,
) -> Result<PositivityVerdict> {
    let mut worst = PositivityVerdict { ok: true, min_entry: 0.0, witness: None, witness_t: None };
    for j in 0..grid_points {
        let t = j as f64 / grid_points as f64;
        let a = build_a(model, n, t)?;
        let (b, _) = build_reduced(&a)?;
        let v = check_positivity(&transform_bstar(&b, d), tol);
        if v.min_entry < worst.min_entry || worst.witness.is_none() {
            worst = PositivityVerdict { witness_t: Some(t), ..v };
        }
        worst.ok &= v.ok;
    }
    Ok(worst)
}

/// Debug dump of a matrix as row-major CSV with a metadata header.
pub fn dump_matrix_csv<W: Write>(
    out: &mut W,
    label: &str,
    model: &ModelSpec,
    t: f64,
    m: &DMatrix<f64>,
) -> Result<()> {
    writeln!(
        out,
        "# matrix = {label}, class = {}, S = {}, N = {}, t = {t:.17e}",
        model.class.label(),
        model.servers,
        m.nrows()
    )?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.17e}", m[(i, j)])).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
