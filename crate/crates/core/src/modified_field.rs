//! Truncated modified vector fields.
//!
//! A one-step method of order `p` applied to
//! `f̃_h = f + h^p (f1 + h f2 + h^2 f3 + ...)` reproduces the exact flow of
//! `f` to higher order. Explicit Euler terms come from the Taylor
//! coefficients of the exact solution; the explicit-midpoint RK2 terms are
//! built from nested directional derivatives. For other schemes the leading
//! term is extracted numerically.

use crate::error::{Error, Result};
use crate::field::FieldLike;
use crate::fit::least_squares;
use crate::integrators::Stepper;
use crate::jets::{directional_derivative, line_derivative, solution_taylor, taylor_flow, Jet, Scalar};
use crate::systems::VectorFieldSpec;

/// Order of the Taylor reference flow used by the extraction routines.
const REFERENCE_ORDER: usize = 20;
const REFERENCE_SUBSTEP: f64 = 0.05;

/// Condition number above which a fit is flagged.
pub const CONDITION_WARNING: f64 = 1e8;

fn axpy<S: Scalar>(acc: &mut [S], a: f64, x: &[S]) {
    for (o, v) in acc.iter_mut().zip(x) {
        *o = o.clone() + v.scale(a);
    }
}

fn eval_base<S: Scalar>(base: &VectorFieldSpec) -> impl Fn(&[Jet<S>]) -> Vec<Jet<S>> + '_ {
    move |z| base.eval_generic(z)
}

/// Euler terms `f^[1..=n]` at `y`: `f^[j]` is the Taylor coefficient
/// `x_{j+1}` of the exact solution, which satisfies
/// `f^[j] = d f^[j-1]·f / (j+1)`.
fn euler_terms_generic<S: Scalar>(base: &VectorFieldSpec, y: &[S], n: usize) -> Vec<Vec<S>> {
    if n == 0 {
        return Vec::new();
    }
    solution_taylor(base, y, n + 1).split_off(2)
}

/// `f^[1] = d(df·f)·f / 24 + (df)^2 f / 8`.
fn rk2_f1_generic<S: Scalar>(base: &VectorFieldSpec, y: &[S]) -> Vec<S> {
    let x = solution_taylor(base, y, 3);
    let ff: Vec<S> = x[2].iter().map(|v| v.scale(2.0)).collect();
    let fff = directional_derivative(eval_base::<S>(base), y, &ff);
    let mut out: Vec<S> = x[3].iter().map(|v| v.scale(0.25)).collect();
    axpy(&mut out, 0.125, &fff);
    out
}

/// `f^[2] = D^3 f / 24 - f'''(f,f,f) / 48 - df·f^[1] / 2 - d f^[1]·f / 2`
/// with `D g = dg·f`.
fn rk2_f2_generic<S: Scalar>(base: &VectorFieldSpec, y: &[S]) -> Vec<S> {
    let x = solution_taylor(base, y, 4);
    let f = &x[1];
    let f3 = line_derivative(eval_base::<S>(base), y, f, 3);
    let f1 = rk2_f1_generic(base, y);
    let df_f1 = directional_derivative(eval_base::<S>(base), y, &f1);
    let df1_f = directional_derivative(|z: &[Jet<S>]| rk2_f1_generic(base, z), y, f);
    let mut out = x[4].clone();
    axpy(&mut out, -1.0 / 48.0, &f3);
    axpy(&mut out, -0.5, &df_f1);
    axpy(&mut out, -0.5, &df1_f);
    out
}

/// `f^[j]` for explicit Euler.
pub fn euler_term(base: &VectorFieldSpec, j: usize, y: &[f64]) -> Result<Vec<f64>> {
    if j == 0 {
        return Err(Error::InvalidArgument("term index starts at 1".into()));
    }
    check_dim(base, y)?;
    Ok(euler_terms_generic(base, y, j).pop().unwrap())
}

/// `f^[j]`, `j ∈ {1, 2}`, for the explicit midpoint RK2 method.
pub fn rk2_term(base: &VectorFieldSpec, j: usize, y: &[f64]) -> Result<Vec<f64>> {
    check_dim(base, y)?;
    match j {
        1 => Ok(rk2_f1_generic(base, y)),
        2 => Ok(rk2_f2_generic(base, y)),
        _ => Err(Error::UnsupportedTruncation(format!("rk2 term {j} is not available (only 1 and 2)"))),
    }
}

fn check_dim(base: &VectorFieldSpec, y: &[f64]) -> Result<()> {
    if y.len() != base.dim() {
        return Err(Error::InvalidArgument(format!(
            "state has dimension {}, field expects {}",
            y.len(),
            base.dim()
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Scheme {
    Euler,
    Rk2,
}

/// `f̃_h^k(y) = f(y) + h^p Σ_{j=1}^{k-1} h^{j-1} f^[j](y)`.
#[derive(Clone, Debug)]
pub struct TruncatedModifiedField {
    base: VectorFieldSpec,
    scheme: Scheme,
    k: usize,
}

/// Builds `f̃_h^k` for `euler` (any `k >= 1`) or `rk2` / `rk2_midpoint` (`k <= 3`).
pub fn truncated_field(base: &VectorFieldSpec, scheme: &str, k: usize) -> Result<TruncatedModifiedField> {
    let scheme = match scheme {
        "euler" => Scheme::Euler,
        "rk2" | "rk2_midpoint" => Scheme::Rk2,
        other => {
            return Err(Error::UnsupportedTruncation(format!(
                "no analytic modified field for scheme '{other}'"
            )))
        }
    };
    if k == 0 {
        return Err(Error::UnsupportedTruncation("truncation index must be >= 1".into()));
    }
    if scheme == Scheme::Rk2 && k > 3 {
        return Err(Error::UnsupportedTruncation(format!("rk2 supports k <= 3, got {k}")));
    }
    Ok(TruncatedModifiedField {
        base: base.clone(),
        scheme,
        k,
    })
}

impl TruncatedModifiedField {
    pub fn base(&self) -> &VectorFieldSpec {
        &self.base
    }

    pub fn scheme(&self) -> &str {
        match self.scheme {
            Scheme::Euler => "euler",
            Scheme::Rk2 => "rk2_midpoint",
        }
    }

    pub fn p(&self) -> usize {
        match self.scheme {
            Scheme::Euler => 1,
            Scheme::Rk2 => 2,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `f^[1..k-1]` at `y`.
    pub fn terms<S: Scalar>(&self, y: &[S]) -> Vec<Vec<S>> {
        let n = self.k - 1;
        match self.scheme {
            Scheme::Euler => euler_terms_generic(&self.base, y, n),
            Scheme::Rk2 => {
                let mut t = Vec::with_capacity(n);
                if n >= 1 {
                    t.push(rk2_f1_generic(&self.base, y));
                }
                if n >= 2 {
                    t.push(rk2_f2_generic(&self.base, y));
                }
                t
            }
        }
    }

    pub fn eval_generic<S: Scalar>(&self, y: &[S], h: f64) -> Vec<S> {
        let mut out = self.base.eval_generic(y);
        let mut hp = h.powi(self.p() as i32);
        for term in self.terms(y) {
            axpy(&mut out, hp, &term);
            hp *= h;
        }
        out
    }
}

impl FieldLike for TruncatedModifiedField {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn eval(&self, y: &[f64], h: f64) -> Vec<f64> {
        self.eval_generic(y, h)
    }

    fn jacobian(&self, y: &[f64], h: f64) -> Vec<Vec<f64>> {
        let d = y.len();
        let mut jac = vec![vec![0.0; d]; d];
        let mut e = vec![0.0; d];
        for j in 0..d {
            e[j] = 1.0;
            let col = directional_derivative(|z: &[Jet<f64>]| self.eval_generic(z, h), y, &e);
            for (i, v) in col.into_iter().enumerate() {
                jac[i][j] = v;
            }
            e[j] = 0.0;
        }
        jac
    }
}

/// Exact flow `φ_h(y)` from a high-order Taylor expansion.
pub fn exact_flow(base: &VectorFieldSpec, y: &[f64], h: f64) -> Vec<f64> {
    taylor_flow(base, y, h, REFERENCE_ORDER, REFERENCE_SUBSTEP)
}

/// A numerically extracted correction term with fit diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct Extraction {
    pub value: Vec<f64>,
    pub condition: f64,
    /// Set when the fit's condition number exceeds [`CONDITION_WARNING`].
    pub warning: Option<String>,
}

fn check_steps(hs: &[f64], min_len: usize) -> Result<()> {
    if hs.len() < min_len {
        return Err(Error::InvalidArgument(format!("need at least {min_len} step sizes, got {}", hs.len())));
    }
    if hs.iter().any(|h| !(*h > 0.0)) || hs.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument("step sizes must be positive and strictly decreasing".into()));
    }
    Ok(())
}

/// Fits `q(h)` to `c0 + c1 h + c2 h^2` componentwise; returns all coefficients.
fn quadratic_fit(hs: &[f64], q: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, f64, Option<String>)> {
    polynomial_fit(hs, q, 2)
}

fn polynomial_fit(hs: &[f64], q: &[Vec<f64>], degree: usize) -> Result<(Vec<Vec<f64>>, f64, Option<String>)> {
    let design: Vec<Vec<f64>> = hs.iter().map(|h| (0..=degree).map(|m| h.powi(m as i32)).collect()).collect();
    let ls = least_squares(&design, q)?;
    let warning = (ls.condition > CONDITION_WARNING)
        .then(|| format!("ill-conditioned fit (condition {:.3e}); spread the step sizes", ls.condition));
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok((ls.coeffs, ls.condition, warning))
}

/// Leading correction `f^[1](y)` of a scheme of order `p`, from the
/// `h -> 0` limit of `(φ_h(y) - Φ_h(y)) / h^{p+1}` fitted by a quadratic
/// in `h`.
///
/// The implicit midpoint stepper is run with its tolerance tightened to
/// `1e-15` so that solver noise stays below the extracted quantity.
pub fn extract_first_correction(stepper: &Stepper, base: &VectorFieldSpec, y: &[f64], hs: &[f64]) -> Result<Extraction> {
    check_dim(base, y)?;
    check_steps(hs, 3)?;
    let stepper = match stepper {
        Stepper::ImplicitMidpoint { max_iters, tol } => Stepper::ImplicitMidpoint {
            max_iters: (*max_iters).max(200),
            tol: tol.min(1e-15),
        },
        s => s.clone(),
    };
    let p1 = stepper.order() as i32 + 1;
    let q = hs
        .iter()
        .map(|&h| {
            let num = stepper.step(base, y, h)?;
            let exact = exact_flow(base, y, h);
            let s = h.powi(p1);
            Ok(exact.iter().zip(&num).map(|(a, b)| (a - b) / s).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let (coeffs, condition, warning) = quadratic_fit(hs, &q)?;
    Ok(Extraction {
        value: coeffs.into_iter().next().unwrap(),
        condition,
        warning,
    })
}

/// Exact modified field of the implicit midpoint rule at `y`: the `g` with
/// `φ_h(x) = x + h g((x + φ_h(x))/2)`.
///
/// Solves `(x + φ_h(x))/2 = y` for `x` by fixed-point iteration and
/// returns `(φ_h(x) - x)/h`.
pub fn midpoint_modified_field(base: &VectorFieldSpec, y: &[f64], h: f64) -> Result<Vec<f64>> {
    check_dim(base, y)?;
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {h}")));
    }
    const MAX_ITERS: usize = 200;
    let f = base.eval(y);
    let mut x: Vec<f64> = y.iter().zip(&f).map(|(a, b)| a - 0.5 * h * b).collect();
    let mut change = f64::INFINITY;
    for _ in 0..MAX_ITERS {
        let phi = exact_flow(base, &x, h);
        let next: Vec<f64> = y.iter().zip(phi.iter().zip(&x)).map(|(m, (p, xi))| m - 0.5 * (p - xi)).collect();
        let prev = change;
        change = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = next;
        // stop once the iteration has stagnated at rounding level
        if change == 0.0 || (change <= 1e-15 && change >= prev) {
            break;
        }
    }
    if !(change <= 1e-13) {
        return Err(Error::NonConvergence {
            residual: change,
            iterations: MAX_ITERS,
        });
    }
    let phi = exact_flow(base, &x, h);
    Ok(phi.iter().zip(&x).map(|(p, xi)| (p - xi) / h).collect())
}

/// Coefficients of the midpoint modified field at `y` from a polynomial fit
/// of `(f̃_h(y) - f(y))/h^2` over `hs`, of degree `min(4, hs.len() - 2)` so
/// that the `h^4` term is not folded into the odd coefficient. The
/// inversion noise in the quotient grows like `h^-3`, so steps around
/// `0.2 * 2^-j` work better than very small ones.
#[derive(Clone, Debug, PartialEq)]
pub struct MidpointSeries {
    /// Coefficient of `h^2`.
    pub second: Vec<f64>,
    /// Coefficient of `h^3`; vanishes for a symmetric method.
    pub third: Vec<f64>,
    pub condition: f64,
}

pub fn midpoint_series(base: &VectorFieldSpec, y: &[f64], hs: &[f64]) -> Result<MidpointSeries> {
    check_steps(hs, 3)?;
    let f = base.eval(y);
    let q = hs
        .iter()
        .map(|&h| {
            let g = midpoint_modified_field(base, y, h)?;
            Ok(g.iter().zip(&f).map(|(a, b)| (a - b) / (h * h)).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let (mut coeffs, condition, _) = polynomial_fit(hs, &q, (hs.len() - 2).min(4))?;
    coeffs.truncate(2);
    let third = coeffs.pop().unwrap();
    let second = coeffs.pop().unwrap();
    Ok(MidpointSeries { second, third, condition })
}

/// The midpoint modified field as a [`FieldLike`]. The Jacobian is taken by
/// central differences.
#[derive(Clone, Debug)]
pub struct ExactMidpointField {
    base: VectorFieldSpec,
}

impl ExactMidpointField {
    pub fn new(base: &VectorFieldSpec) -> Self {
        ExactMidpointField { base: base.clone() }
    }
}

impl FieldLike for ExactMidpointField {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Falls back to `f(y)` at `h = 0`; NaN if the inversion fails.
    fn eval(&self, y: &[f64], h: f64) -> Vec<f64> {
        if h == 0.0 {
            return self.base.eval(y);
        }
        midpoint_modified_field(&self.base, y, h).unwrap_or_else(|_| vec![f64::NAN; y.len()])
    }

    fn jacobian(&self, y: &[f64], h: f64) -> Vec<Vec<f64>> {
        let d = y.len();
        let mut jac = vec![vec![0.0; d]; d];
        for j in 0..d {
            let e = 1e-6 * (1.0 + y[j].abs());
            let mut yp = y.to_vec();
            let mut ym = y.to_vec();
            yp[j] += e;
            ym[j] -= e;
            let (a, b) = (self.eval(&yp, h), self.eval(&ym, h));
            for i in 0..d {
                jac[i][j] = (a[i] - b[i]) / (2.0 * e);
            }
        }
        jac
    }
}
