//! c-transforms on finite supports.

use crate::cost::CostMatrix;
use crate::error::{Error, Result};
use crate::transport::DualPair;

/// Potential values aligned with a support.
pub type PotentialVector = Vec<f64>;

/// `(f^c)_j = min_i c_ij - f_i`.
pub fn c_transform(f: &[f64], c: &CostMatrix) -> Result<PotentialVector> {
    Ok(c_transform_with_argmin(f, c)?.0)
}

/// c-transform together with the minimizing row for each column (lowest index on ties).
pub fn c_transform_with_argmin(f: &[f64], c: &CostMatrix) -> Result<(PotentialVector, Vec<usize>)> {
    if f.len() != c.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "potential has {} entries, cost has {} rows",
            f.len(),
            c.nrows()
        )));
    }
    let v = c.values();
    let mut out = Vec::with_capacity(c.ncols());
    let mut arg = Vec::with_capacity(c.ncols());
    for j in 0..c.ncols() {
        let mut best = f64::INFINITY;
        let mut best_i = 0;
        for (i, fi) in f.iter().enumerate() {
            let val = v[(i, j)] - fi;
            if val < best {
                best = val;
                best_i = i;
            }
        }
        out.push(best);
        arg.push(best_i);
    }
    Ok((out, arg))
}

/// Transform of a potential on the column support: `min_j c_ij - g_j`.
pub fn c_transform_rows(g: &[f64], c: &CostMatrix) -> Result<PotentialVector> {
    c_transform(g, &c.transpose())
}

/// `f^{cc}`, a potential on the row support with `f^{cc} >= f`.
pub fn double_c_transform(f: &[f64], c: &CostMatrix) -> Result<PotentialVector> {
    let fc = c_transform(f, c)?;
    c_transform_rows(&fc, c)
}

/// Replaces `(phi, psi)` by `(phi^{cc}, phi^c)`, which never lowers the dual objective.
pub fn tighten(dual: &DualPair, c: &CostMatrix) -> Result<DualPair> {
    let psi = c_transform(&dual.phi, c)?;
    let phi = c_transform_rows(&psi, c)?;
    Ok(DualPair { phi, psi })
}
