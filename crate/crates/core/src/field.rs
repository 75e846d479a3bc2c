/// A map `(y, h) -> g(y, h)` on `R^d`, possibly depending on the step size.
///
/// Base vector fields ignore `h`; truncated and learned modified fields use
/// it. Every stepper in [`crate::integrators`] evaluates its field through
/// this trait with the step size it is taking.
pub trait FieldLike: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, y: &[f64], h: f64) -> Vec<f64>;

    /// Jacobian with respect to `y`, as rows: `jac[i][j] = ∂g_i/∂y_j`.
    fn jacobian(&self, y: &[f64], h: f64) -> Vec<Vec<f64>>;
}

impl<T: FieldLike + ?Sized> FieldLike for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, y: &[f64], h: f64) -> Vec<f64> {
        (**self).eval(y, h)
    }
    fn jacobian(&self, y: &[f64], h: f64) -> Vec<Vec<f64>> {
        (**self).jacobian(y, h)
    }
}

impl<T: FieldLike + ?Sized> FieldLike for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, y: &[f64], h: f64) -> Vec<f64> {
        (**self).eval(y, h)
    }
    fn jacobian(&self, y: &[f64], h: f64) -> Vec<Vec<f64>> {
        (**self).jacobian(y, h)
    }
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
pub(crate) fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}
