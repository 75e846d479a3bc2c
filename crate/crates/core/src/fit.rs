//! Column-equilibrated linear least squares via SVD.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Solution of `min ||X c - Y||` for every column of `Y`.
#[derive(Clone, Debug)]
pub(crate) struct LeastSquares {
    /// `coeffs[i][m]`: coefficient of design column `i` for right-hand side `m`.
    pub coeffs: Vec<Vec<f64>>,
    /// 2-norm condition number of the column-scaled design matrix.
    pub condition: f64,
}

/// `design` is row-major (`rows x cols`), `rhs` is `rows x m`.
pub(crate) fn least_squares(design: &[Vec<f64>], rhs: &[Vec<f64>]) -> Result<LeastSquares> {
    let rows = design.len();
    let cols = design.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 || rows < cols || rhs.len() != rows {
        return Err(Error::InvalidArgument(format!(
            "least squares needs rows >= cols > 0 and matching rhs ({rows}x{cols}, rhs {})",
            rhs.len()
        )));
    }
    let m = rhs[0].len();
    let mut x = DMatrix::from_fn(rows, cols, |i, j| design[i][j]);
    let scale: Vec<f64> = (0..cols)
        .map(|j| {
            let n = x.column(j).norm();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        })
        .collect();
    for (j, s) in scale.iter().enumerate() {
        x.column_mut(j).unscale_mut(*s);
    }
    let y = DMatrix::from_fn(rows, m, |i, k| rhs[i][k]);
    let svd = x.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let eps = smax * f64::EPSILON * rows.max(cols) as f64;
    let sol = svd
        .solve(&y, eps)
        .map_err(|e| Error::InvalidArgument(format!("least squares failed: {e}")))?;
    let coeffs = (0..cols)
        .map(|j| (0..m).map(|k| sol[(j, k)] / scale[j]).collect())
        .collect();
    Ok(LeastSquares { coeffs, condition })
}
