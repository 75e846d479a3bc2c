use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{max_abs_diff, FieldLike};
use crate::systems::DomainBox;

/// `max |reference(x, h) - model(x, h)|_∞ / h^p` over a `grid_n`-per-axis
/// grid of `domain` and the steps `hs`.
pub fn learning_error_delta(
    model: &dyn FieldLike,
    reference: &dyn FieldLike,
    domain: &DomainBox,
    grid_n: usize,
    hs: &[f64],
    p: usize,
) -> Result<f64> {
    if grid_n < 2 {
        return Err(Error::InvalidArgument(format!("grid_n must be >= 2, got {grid_n}")));
    }
    if model.dim() != reference.dim() || model.dim() != domain.dim() {
        return Err(Error::ShapeMismatch(format!(
            "model dim {}, reference dim {}, domain dim {}",
            model.dim(),
            reference.dim(),
            domain.dim()
        )));
    }
    if hs.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::InvalidArgument("steps must be positive".into()));
    }
    let delta = domain
        .grid(grid_n)
        .par_iter()
        .map(|x| {
            hs.iter()
                .map(|&h| max_abs_diff(&reference.eval(x, h), &model.eval(x, h)) / h.powi(p as i32))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(delta)
}
