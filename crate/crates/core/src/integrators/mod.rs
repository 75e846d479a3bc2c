//! One-step integrators and drivers.
//!
//! Explicit Runge–Kutta methods are driven by a [`ButcherTableau`]; the
//! implicit midpoint rule is solved by fixed-point iteration. Every stepper
//! evaluates a [`FieldLike`] at the step size it takes, so the same code
//! integrates a base field, a truncated modified field or a learned one.

pub mod analysis;
pub mod dopri5;

use crate::error::{Error, Result};
use crate::field::FieldLike;

pub use analysis::{estimate_lipschitz, order_estimate, theorem_bound, ErrorBoundInputs};
pub use dopri5::{Dopri5, Dopri5Stats};

/// Coefficients `(A, b, c)` of a Runge–Kutta method.
#[derive(Clone, Debug, PartialEq)]
pub struct ButcherTableau {
    name: String,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
    order: usize,
    explicit: bool,
}

impl ButcherTableau {
    /// Builds and validates a tableau. `c` is derived from the row sums of `A`.
    pub fn new(name: &str, a: Vec<Vec<f64>>, b: Vec<f64>, order: usize) -> Result<Self> {
        let s = b.len();
        if s == 0 || a.len() != s || a.iter().any(|r| r.len() != s) {
            return Err(Error::InvalidArgument(format!("tableau '{name}': A must be {s}x{s}")));
        }
        if order == 0 {
            return Err(Error::InvalidArgument(format!("tableau '{name}': order must be >= 1")));
        }
        if (b.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("tableau '{name}': weights must sum to 1")));
        }
        let explicit = a.iter().enumerate().all(|(i, r)| r[i..].iter().all(|&v| v == 0.0));
        let c = a.iter().map(|r| r.iter().sum()).collect();
        Ok(ButcherTableau {
            name: name.to_string(),
            a,
            b,
            c,
            order,
            explicit,
        })
    }

    pub fn euler() -> Self {
        Self::new("euler", vec![vec![0.0]], vec![1.0], 1).unwrap()
    }

    /// Explicit midpoint (Runge) method: `A = [[0,0],[1/2,0]]`, `b = (0,1)`.
    pub fn rk2_midpoint() -> Self {
        Self::new("rk2_midpoint", vec![vec![0.0, 0.0], vec![0.5, 0.0]], vec![0.0, 1.0], 2).unwrap()
    }

    /// Heun's method: `A = [[0,0],[1,0]]`, `b = (1/2,1/2)`.
    pub fn rk2_heun() -> Self {
        Self::new("rk2_heun", vec![vec![0.0, 0.0], vec![1.0, 0.0]], vec![0.5, 0.5], 2).unwrap()
    }

    /// Fifth-order Dormand–Prince weights used as a fixed-step method.
    pub fn dopri5() -> Self {
        let a = dopri5::A.iter().map(|r| {
            let mut row = r.to_vec();
            row.push(0.0);
            row
        });
        Self::new("dopri5", a.collect(), dopri5::B.to_vec(), 5).unwrap()
    }

    /// Registry lookup: `euler`, `rk2_midpoint` (alias `rk2`), `rk2_heun`, `dopri5`.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "euler" => Ok(Self::euler()),
            "rk2" | "rk2_midpoint" => Ok(Self::rk2_midpoint()),
            "rk2_heun" => Ok(Self::rk2_heun()),
            "dopri5" => Ok(Self::dopri5()),
            other => Err(Error::InvalidArgument(format!("unknown tableau '{other}'"))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn a(&self) -> &[Vec<f64>] {
        &self.a
    }
    pub fn b(&self) -> &[f64] {
        &self.b
    }
    pub fn c(&self) -> &[f64] {
        &self.c
    }
    pub fn order(&self) -> usize {
        self.order
    }
    pub fn stages(&self) -> usize {
        self.b.len()
    }
    pub fn is_explicit(&self) -> bool {
        self.explicit
    }

    /// `||b||_1`
    pub fn b_norm1(&self) -> f64 {
        self.b.iter().map(|v| v.abs()).sum()
    }

    /// `||A||_∞` (maximum absolute row sum).
    pub fn a_norm_inf(&self) -> f64 {
        self.a
            .iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Default fixed-point settings for the implicit midpoint rule.
pub const MIDPOINT_MAX_ITERS: usize = 50;
pub const MIDPOINT_TOL: f64 = 1e-12;

/// A one-step method `y -> Φ_h(y)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Stepper {
    Explicit(ButcherTableau),
    ImplicitMidpoint { max_iters: usize, tol: f64 },
}

impl Stepper {
    /// Registry lookup: the tableau names plus `midpoint` for the implicit rule.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "midpoint" => Ok(Stepper::midpoint()),
            other => ButcherTableau::by_name(other).map(Stepper::Explicit),
        }
    }

    pub fn midpoint() -> Self {
        Stepper::ImplicitMidpoint {
            max_iters: MIDPOINT_MAX_ITERS,
            tol: MIDPOINT_TOL,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Stepper::Explicit(t) => t.name(),
            Stepper::ImplicitMidpoint { .. } => "midpoint",
        }
    }

    pub fn order(&self) -> usize {
        match self {
            Stepper::Explicit(t) => t.order(),
            Stepper::ImplicitMidpoint { .. } => 2,
        }
    }

    pub fn tableau(&self) -> Option<&ButcherTableau> {
        match self {
            Stepper::Explicit(t) => Some(t),
            Stepper::ImplicitMidpoint { .. } => None,
        }
    }

    pub fn step(&self, field: &dyn FieldLike, y: &[f64], h: f64) -> Result<Vec<f64>> {
        match self {
            Stepper::Explicit(t) => rk_step(t, field, y, h),
            Stepper::ImplicitMidpoint { max_iters, tol } => {
                implicit_midpoint_step(field, y, h, *max_iters, *tol).map(|s| s.state)
            }
        }
    }
}

/// One explicit Runge–Kutta step. Evaluates the field exactly `s` times.
///
/// For the Euler tableau this computes `y + h * (1 * f(y))`, which is
/// bitwise `y + h f(y)`.
pub fn rk_step(tab: &ButcherTableau, field: &dyn FieldLike, y: &[f64], h: f64) -> Result<Vec<f64>> {
    if !tab.is_explicit() {
        return Err(Error::InvalidArgument(format!("tableau '{}' is not explicit", tab.name())));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {h}")));
    }
    let d = y.len();
    let s = tab.stages();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(s);
    let mut z = vec![0.0; d];
    for i in 0..s {
        for (m, zm) in z.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate() {
                let aij = tab.a[i][j];
                if aij != 0.0 {
                    acc += aij * kj[m];
                }
            }
            *zm = y[m] + h * acc;
        }
        let ki = field.eval(&z, h);
        if ki.iter().any(|v| !v.is_finite()) {
            return Err(Error::Overflow { stage: i + 1 });
        }
        k.push(ki);
    }
    let mut out = y.to_vec();
    for (m, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (bi, ki) in tab.b.iter().zip(&k) {
            if *bi != 0.0 {
                acc += bi * ki[m];
            }
        }
        *o += h * acc;
    }
    Ok(out)
}

/// Result of an implicit midpoint step with solver diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct MidpointStep {
    pub state: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// `y' = y + h g((y + y')/2)` by fixed-point iteration from `y' = y`.
///
/// `residual` is the max-norm change of the last iterate.
pub fn implicit_midpoint_step(
    field: &dyn FieldLike,
    y: &[f64],
    h: f64,
    max_iters: usize,
    tol: f64,
) -> Result<MidpointStep> {
    if !(h > 0.0) || max_iters == 0 {
        return Err(Error::InvalidArgument(format!(
            "midpoint needs h > 0 and at least one iteration (h={h}, iters={max_iters})"
        )));
    }
    let mut next = y.to_vec();
    let mut mid = vec![0.0; y.len()];
    let mut residual = f64::INFINITY;
    for it in 1..=max_iters {
        for ((m, a), b) in mid.iter_mut().zip(y).zip(&next) {
            *m = 0.5 * (a + b);
        }
        let g = field.eval(&mid, h);
        residual = 0.0;
        for ((n, yi), gi) in next.iter_mut().zip(y).zip(&g) {
            let v = yi + h * gi;
            residual = f64::max(residual, (v - *n).abs());
            *n = v;
        }
        if !residual.is_finite() {
            return Err(Error::Overflow { stage: 1 });
        }
        if residual <= tol {
            return Ok(MidpointStep {
                state: next,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::NonConvergence {
        residual,
        iterations: max_iters,
    })
}

/// Times and states of a discrete trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().expect("trajectory is never empty")
    }
}

/// `n_steps` constant steps of size `h`; `times[n] = n * h`.
pub fn integrate(stepper: &Stepper, field: &dyn FieldLike, y0: &[f64], h: f64, n_steps: usize) -> Result<Trajectory> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {h}")));
    }
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    times.push(0.0);
    states.push(y0.to_vec());
    for n in 0..n_steps {
        let next = stepper.step(field, &states[n], h).map_err(|e| e.at_step(n))?;
        times.push((n + 1) as f64 * h);
        states.push(next);
    }
    Ok(Trajectory { times, states })
}

/// Steps through the given sequence; `times` are prefix sums of `steps`.
pub fn integrate_variable(stepper: &Stepper, field: &dyn FieldLike, y0: &[f64], steps: &[f64]) -> Result<Trajectory> {
    if let Some(bad) = steps.iter().find(|h| !(**h > 0.0)) {
        return Err(Error::InvalidArgument(format!("step sizes must be positive, got {bad}")));
    }
    let mut times = Vec::with_capacity(steps.len() + 1);
    let mut states = Vec::with_capacity(steps.len() + 1);
    times.push(0.0);
    states.push(y0.to_vec());
    let mut t = 0.0;
    for (n, &h) in steps.iter().enumerate() {
        let next = stepper.step(field, &states[n], h).map_err(|e| e.at_step(n))?;
        t += h;
        times.push(t);
        states.push(next);
    }
    Ok(Trajectory { times, states })
}

/// Adaptive Dormand–Prince trajectory from `0` to `t_end` (accepted steps only).
pub fn dopri5_integrate(field: &dyn FieldLike, y0: &[f64], t_end: f64, atol: f64, rtol: f64) -> Result<Trajectory> {
    let mut times = Vec::new();
    let mut states = Vec::new();
    Dopri5::new(atol, rtol).solve(&|y: &[f64]| field.eval(y, 0.0), y0, t_end, |t, y| {
        times.push(t);
        states.push(y.to_vec());
    })?;
    Ok(Trajectory { times, states })
}
