//! Truncated Taylor jets.
//!
//! A [`Jet`] holds the Taylor coefficients `c_0, c_1, ..., c_m` of a scalar
//! curve `t -> c(t)` at `t = 0`. Arithmetic on jets propagates the curve
//! through `+`, `-`, `*`, `sin`, `cos` and `tanh` exactly up to order `m`,
//! which gives exact directional derivatives without finite differences.
//!
//! Jets are generic over their coefficient type, so a `Jet<Jet<f64>>`
//! differentiates a function that is itself computed with jets. This is how
//! nested elementary differentials such as `d(d(df·f)·f)·f` are evaluated.
//!
//! A jet with fewer stored coefficients than another is implicitly padded
//! with zeros; a constant is a jet of length one. Binary operations produce
//! a jet as long as the longer operand, so truncation is consistent.
//!
//! Supporting a new elementary function means adding its coefficient
//! recurrence to [`Scalar`] and to the `Jet` implementation below.

use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

use smallvec::SmallVec;

use crate::systems::VectorFieldSpec;

/// Number type accepted by generic field evaluations.
pub trait Scalar:
    Clone
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    /// The underlying real value (coefficient 0, recursively).
    fn value(&self) -> f64;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn tanh(&self) -> Self;
    fn scale(&self, k: f64) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    #[inline]
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    #[inline]
    fn tanh(&self) -> Self {
        f64::tanh(*self)
    }
    #[inline]
    fn scale(&self, k: f64) -> Self {
        self * k
    }
}

type Coeffs<S> = SmallVec<[S; 4]>;

/// Truncated Taylor series of a scalar curve.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet<S> {
    c: Coeffs<S>,
}

impl<S: Scalar> Jet<S> {
    pub fn constant(v: S) -> Self {
        let mut c = Coeffs::new();
        c.push(v);
        Jet { c }
    }

    /// The curve `t -> base + t * slope`, truncated at `order` (at least 1).
    pub fn line(base: S, slope: S, order: usize) -> Self {
        let mut c = Coeffs::with_capacity(order.max(1) + 1);
        c.push(base);
        c.push(slope);
        for _ in 2..=order {
            c.push(S::from_f64(0.0));
        }
        Jet { c }
    }

    pub fn from_coeffs(coeffs: Vec<S>) -> Self {
        assert!(!coeffs.is_empty(), "a jet needs at least one coefficient");
        Jet {
            c: coeffs.into_iter().collect(),
        }
    }

    /// Truncation order (number of stored coefficients minus one).
    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    /// Coefficient `k`, zero beyond the stored length.
    pub fn coeff(&self, k: usize) -> S {
        self.c.get(k).cloned().unwrap_or_else(|| S::from_f64(0.0))
    }

    pub fn coeffs(&self) -> &[S] {
        &self.c
    }

    fn zeros(len: usize) -> Coeffs<S> {
        (0..len).map(|_| S::from_f64(0.0)).collect()
    }

    /// Shared recurrence for `sin`/`cos`: returns both series.
    fn sin_cos(&self) -> (Self, Self) {
        let n = self.c.len();
        let mut s = Coeffs::with_capacity(n);
        let mut co = Coeffs::with_capacity(n);
        s.push(self.c[0].sin());
        co.push(self.c[0].cos());
        for k in 1..n {
            let mut sk = S::from_f64(0.0);
            let mut ck = S::from_f64(0.0);
            for j in 1..=k {
                let ju = self.c[j].scale(j as f64);
                sk = sk + ju.clone() * co[k - j].clone();
                ck = ck - ju * s[k - j].clone();
            }
            let inv = 1.0 / k as f64;
            s.push(sk.scale(inv));
            co.push(ck.scale(inv));
        }
        (Jet { c: s }, Jet { c: co })
    }
}

impl<S: Scalar> Add for Jet<S> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let (mut long, short) = if self.c.len() >= rhs.c.len() {
            (self, rhs)
        } else {
            (rhs, self)
        };
        for (a, b) in long.c.iter_mut().zip(short.c) {
            *a = a.clone() + b;
        }
        long
    }
}

impl<S: Scalar> Sub for Jet<S> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl<S: Scalar> Neg for Jet<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Jet {
            c: self.c.into_iter().map(|a| -a).collect(),
        }
    }
}

impl<S: Scalar> Mul for Jet<S> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let n = self.c.len().max(rhs.c.len());
        let mut out = Self::zeros(n);
        for (i, a) in self.c.iter().enumerate() {
            for (j, b) in rhs.c.iter().enumerate().take(n - i) {
                out[i + j] = out[i + j].clone() + a.clone() * b.clone();
            }
        }
        Jet { c: out }
    }
}

impl<S: Scalar> Scalar for Jet<S> {
    fn from_f64(v: f64) -> Self {
        Jet::constant(S::from_f64(v))
    }

    fn value(&self) -> f64 {
        self.c[0].value()
    }

    fn sin(&self) -> Self {
        self.sin_cos().0
    }

    fn cos(&self) -> Self {
        self.sin_cos().1
    }

    fn tanh(&self) -> Self {
        // t' = (1 - t^2) u'; w = 1 - t^2 is built alongside t.
        let n = self.c.len();
        let mut t: Coeffs<S> = Coeffs::with_capacity(n);
        let mut w: Coeffs<S> = Coeffs::with_capacity(n);
        t.push(self.c[0].tanh());
        w.push(S::from_f64(1.0) - t[0].clone() * t[0].clone());
        for k in 1..n {
            let mut tk = S::from_f64(0.0);
            for j in 1..=k {
                tk = tk + self.c[j].scale(j as f64) * w[k - j].clone();
            }
            t.push(tk.scale(1.0 / k as f64));
            let mut sq = S::from_f64(0.0);
            for i in 0..=k {
                sq = sq + t[i].clone() * t[k - i].clone();
            }
            w.push(-sq);
        }
        Jet { c: t }
    }

    fn scale(&self, k: f64) -> Self {
        Jet {
            c: self.c.iter().map(|a| a.scale(k)).collect(),
        }
    }
}

/// A curve in `R^d` represented by one jet per component.
#[derive(Clone, Debug, PartialEq)]
pub struct TaylorJet {
    pub components: Vec<Jet<f64>>,
}

impl TaylorJet {
    /// The constant curve `t -> y`.
    pub fn constant(y: &[f64], order: usize) -> Self {
        let components = y
            .iter()
            .map(|&v| {
                let mut c = vec![0.0; order + 1];
                c[0] = v;
                Jet::from_coeffs(c)
            })
            .collect();
        TaylorJet { components }
    }

    /// The line `t -> y + t v`.
    pub fn line(y: &[f64], v: &[f64], order: usize) -> Self {
        TaylorJet {
            components: y
                .iter()
                .zip(v)
                .map(|(&a, &b)| Jet::line(a, b, order))
                .collect(),
        }
    }

    pub fn order(&self) -> usize {
        self.components.iter().map(Jet::order).max().unwrap_or(0)
    }

    /// Coefficient vector of order `k`.
    pub fn coeff(&self, k: usize) -> Vec<f64> {
        self.components.iter().map(|j| j.coeff(k)).collect()
    }
}

/// Jet of `t -> f(c(t))`, truncated at the order of `jet`.
pub fn lift(field: &VectorFieldSpec, jet: &TaylorJet) -> TaylorJet {
    let order = jet.order();
    let components = field
        .eval_generic(&jet.components)
        .into_iter()
        .map(|j| pad(j, order))
        .collect();
    TaylorJet { components }
}

fn pad<S: Scalar>(mut j: Jet<S>, order: usize) -> Jet<S> {
    while j.c.len() < order + 1 {
        j.c.push(S::from_f64(0.0));
    }
    j
}

/// `dg(y)·v`, read off as the first-order coefficient of `g` along `y + t v`.
///
/// `g` receives jets over `S`, so it can itself call this function with
/// `Jet<S>` coefficients to build nested derivatives.
pub fn directional_derivative<S, G>(g: G, y: &[S], v: &[S]) -> Vec<S>
where
    S: Scalar,
    G: FnOnce(&[Jet<S>]) -> Vec<Jet<S>>,
{
    let line: Vec<Jet<S>> = y
        .iter()
        .zip(v)
        .map(|(a, b)| Jet::line(a.clone(), b.clone(), 1))
        .collect();
    g(&line).into_iter().map(|j| j.coeff(1)).collect()
}

/// `k`-th derivative of `g` along the line `y + t v`: `g^(k)(y)(v, ..., v)`.
pub fn line_derivative<S, G>(g: G, y: &[S], v: &[S], k: usize) -> Vec<S>
where
    S: Scalar,
    G: FnOnce(&[Jet<S>]) -> Vec<Jet<S>>,
{
    let line: Vec<Jet<S>> = y
        .iter()
        .zip(v)
        .map(|(a, b)| Jet::line(a.clone(), b.clone(), k))
        .collect();
    let factorial: f64 = (1..=k).map(|i| i as f64).product();
    g(&line)
        .into_iter()
        .map(|j| j.coeff(k).scale(factorial))
        .collect()
}

/// Taylor coefficients `x_0, ..., x_order` of the exact solution of
/// `y' = f(y)` through `y` (Picard recursion on jets).
///
/// `x_{k+1} = D^k f(y) / (k+1)!` where `D g = dg·f`.
pub fn solution_taylor<S: Scalar>(field: &VectorFieldSpec, y: &[S], order: usize) -> Vec<Vec<S>> {
    let d = y.len();
    let mut coeffs: Vec<Vec<S>> = vec![y.to_vec()];
    for k in 0..order {
        let curve: Vec<Jet<S>> = (0..d)
            .map(|i| Jet::from_coeffs(coeffs.iter().map(|c| c[i].clone()).collect()))
            .collect();
        let fk = field.eval_generic(&curve);
        let inv = 1.0 / (k + 1) as f64;
        coeffs.push(fk.iter().map(|j| j.coeff(k).scale(inv)).collect());
    }
    coeffs
}

/// Exact flow `φ_t(y)` by Taylor series, with sub-steps no longer than
/// `max_substep`. Accurate to rounding for the analytic benchmark fields
/// when `max_substep` is well inside the radius of convergence.
pub fn taylor_flow(field: &VectorFieldSpec, y: &[f64], t: f64, order: usize, max_substep: f64) -> Vec<f64> {
    let n = (t.abs() / max_substep).ceil().max(1.0) as usize;
    let dt = t / n as f64;
    let mut state = y.to_vec();
    for _ in 0..n {
        let coeffs = solution_taylor(field, &state, order);
        // Horner in dt, highest order first.
        let mut acc = coeffs[order].clone();
        for c in coeffs[..order].iter().rev() {
            for (a, ci) in acc.iter_mut().zip(c) {
                *a = *a * dt + ci;
            }
        }
        state = acc;
    }
    state
}
