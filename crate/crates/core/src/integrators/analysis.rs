//! Convergence-order fits, the global error bound and Lipschitz estimates.

use rayon::prelude::*;

use super::ButcherTableau;
use crate::error::{Error, Result};
use crate::field::FieldLike;
use crate::systems::DomainBox;

/// Least-squares slope of `log(error)` against `log(h)`.
pub fn order_estimate(errors: &[f64], hs: &[f64]) -> Result<f64> {
    if errors.len() != hs.len() || hs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least two (h, error) pairs of equal length, got {} and {}",
            hs.len(),
            errors.len()
        )));
    }
    if hs.windows(2).any(|w| !(w[1] < w[0])) || hs.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::InvalidArgument("step sizes must be positive and strictly decreasing".into()));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
        return Err(Error::InvalidArgument(format!("errors must be positive and finite, got {e}")));
    }
    let x: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Inputs of the global error bound for a learned modified field.
#[derive(Clone, Debug)]
pub struct ErrorBoundInputs {
    /// Learning error `max |f̃_h - f_app| / h^p`.
    pub delta: f64,
    /// Lipschitz bound of `f_app(·, h)` over the domain and step range.
    pub lambda: f64,
    pub h_plus: f64,
    pub t_end: f64,
    pub tableau: ButcherTableau,
}

impl ErrorBoundInputs {
    /// The growth factor `α`. Euler and the two-stage RK2 methods use the
    /// sharper constants `1` and `1 + λh₊/2`.
    pub fn alpha(&self) -> f64 {
        let lh = self.lambda * self.h_plus;
        match self.tableau.name() {
            "euler" => 1.0,
            "rk2_midpoint" | "rk2_heun" => 1.0 + 0.5 * lh,
            _ => {
                let a = lh * self.tableau.a_norm_inf();
                self.tableau.b_norm1() * (1.0 + a * a.exp())
            }
        }
    }

    fn validate(&self, h: f64) -> Result<()> {
        let all = [self.delta, self.lambda, self.h_plus, self.t_end];
        if all.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("bound inputs must be finite and nonnegative: {all:?}")));
        }
        if self.h_plus > self.t_end {
            return Err(Error::InvalidArgument(format!("h_plus {} exceeds T {}", self.h_plus, self.t_end)));
        }
        if !(h > 0.0 && h <= self.h_plus) {
            return Err(Error::InvalidArgument(format!("h = {h} outside (0, {}]", self.h_plus)));
        }
        Ok(())
    }
}

/// `max_n |y_n - y(t_n)| <= (α δ h^p / (αλ)) (exp(αλT) - 1)`, with the
/// `λ -> 0` limit `α δ h^p T`.
pub fn theorem_bound(inputs: &ErrorBoundInputs, h: f64) -> Result<f64> {
    inputs.validate(h)?;
    let p = inputs.tableau.order() as i32;
    let alpha = inputs.alpha();
    let scale = inputs.delta * h.powi(p);
    let l = alpha * inputs.lambda;
    if l == 0.0 {
        return Ok(alpha * scale * inputs.t_end);
    }
    Ok(alpha * scale * (l * inputs.t_end).exp_m1() / l)
}

/// Lower estimate of `max ||∂g/∂y(y, h)||_∞` over the domain and the given
/// step sizes (`h = 0` when `hs` is empty).
///
/// The maximum runs over the union of the uniform grids with `2..=grid_n`
/// points per axis, so the estimate never decreases as `grid_n` grows.
pub fn estimate_lipschitz(g: &dyn FieldLike, domain: &DomainBox, grid_n: usize, hs: &[f64]) -> Result<f64> {
    if grid_n < 2 {
        return Err(Error::InvalidArgument(format!("grid_n must be >= 2, got {grid_n}")));
    }
    let hs: Vec<f64> = if hs.is_empty() { vec![0.0] } else { hs.to_vec() };
    let points: Vec<Vec<f64>> = (2..=grid_n).flat_map(|n| domain.grid(n)).collect();
    let max = points
        .par_iter()
        .map(|y| {
            hs.iter()
                .map(|&h| {
                    g.jacobian(y, h)
                        .iter()
                        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(max)
}
