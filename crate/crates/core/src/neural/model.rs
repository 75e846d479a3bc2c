use super::mlp::{Mlp, MlpTape};
use crate::error::{Error, Result};
use crate::field::FieldLike;
use crate::jets::{directional_derivative, Jet, Scalar};
use crate::systems::VectorFieldSpec;

/// Learned modified field
/// `f_app(y, h) = f(y) + Σ_{j=1}^{N_t-1} h^{p+j-1} f_j(y) + h^{N_t+p-1} R(y, h)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModifiedFieldModel {
    base: VectorFieldSpec,
    scheme: String,
    p: usize,
    terms: Vec<Mlp>,
    remainder: Mlp,
}

/// Per-evaluation record for [`ModifiedFieldModel::vjp`].
#[derive(Clone, Debug)]
pub struct ModelTape {
    y: Vec<f64>,
    h: f64,
    terms: Vec<MlpTape>,
    remainder: MlpTape,
}

impl ModifiedFieldModel {
    /// Fresh model with `n_terms - 1` term networks and one remainder
    /// network, all with the given hidden layer widths.
    pub fn new(base: &VectorFieldSpec, scheme: &str, p: usize, n_terms: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if n_terms == 0 || p == 0 {
            return Err(Error::InvalidArgument(format!("need n_terms >= 1 and p >= 1 (got {n_terms}, {p})")));
        }
        let d = base.dim();
        let mut sizes = vec![d];
        sizes.extend_from_slice(hidden);
        sizes.push(d);
        let terms = (0..n_terms - 1)
            .map(|j| Mlp::init(&sizes, seed, j as u64))
            .collect::<Result<Vec<_>>>()?;
        sizes[0] = d + 1;
        let remainder = Mlp::init(&sizes, seed, (n_terms - 1) as u64)?;
        Self::from_nets(base, scheme, p, terms, remainder)
    }

    pub fn from_nets(base: &VectorFieldSpec, scheme: &str, p: usize, terms: Vec<Mlp>, remainder: Mlp) -> Result<Self> {
        let d = base.dim();
        for (j, t) in terms.iter().enumerate() {
            if t.input_dim() != d || t.output_dim() != d {
                return Err(Error::ShapeMismatch(format!(
                    "term network {} maps {} -> {}, system dimension is {d}",
                    j + 1,
                    t.input_dim(),
                    t.output_dim()
                )));
            }
        }
        if remainder.input_dim() != d + 1 || remainder.output_dim() != d {
            return Err(Error::ShapeMismatch(format!(
                "remainder network maps {} -> {}, expected {} -> {d}",
                remainder.input_dim(),
                remainder.output_dim(),
                d + 1
            )));
        }
        if p == 0 {
            return Err(Error::InvalidArgument("p must be >= 1".into()));
        }
        Ok(ModifiedFieldModel {
            base: base.clone(),
            scheme: scheme.to_string(),
            p,
            terms,
            remainder,
        })
    }

    pub fn base(&self) -> &VectorFieldSpec {
        &self.base
    }
    pub fn scheme(&self) -> &str {
        &self.scheme
    }
    pub fn p(&self) -> usize {
        self.p
    }
    pub fn n_terms(&self) -> usize {
        self.terms.len() + 1
    }
    pub fn terms(&self) -> &[Mlp] {
        &self.terms
    }
    pub fn terms_mut(&mut self) -> &mut [Mlp] {
        &mut self.terms
    }
    pub fn remainder(&self) -> &Mlp {
        &self.remainder
    }
    pub fn remainder_mut(&mut self) -> &mut Mlp {
        &mut self.remainder
    }

    /// Term networks followed by the remainder network.
    pub fn nets(&self) -> impl Iterator<Item = &Mlp> {
        self.terms.iter().chain(std::iter::once(&self.remainder))
    }

    pub fn n_params(&self) -> usize {
        self.nets().map(Mlp::n_params).sum()
    }

    /// All parameters, in the order of [`Self::nets`].
    pub fn flat_params(&self) -> Vec<f64> {
        self.nets().flat_map(|n| n.params().iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::ShapeMismatch(format!(
                "model has {} parameters, got {}",
                self.n_params(),
                params.len()
            )));
        }
        let mut off = 0;
        for net in self.terms.iter_mut().chain(std::iter::once(&mut self.remainder)) {
            let n = net.n_params();
            net.params_mut().copy_from_slice(&params[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Makes every network output exactly zero, so the model equals `f`.
    pub fn zero_outputs(&mut self) {
        for net in self.terms.iter_mut() {
            net.zero_output();
        }
        self.remainder.zero_output();
    }

    /// Scalings `h^{p+j-1}` of the term networks and `h^{N_t+p-1}` of the remainder.
    pub fn coefficients(&self, h: f64) -> (Vec<f64>, f64) {
        let c: Vec<f64> = (1..=self.terms.len()).map(|j| h.powi((self.p + j - 1) as i32)).collect();
        (c, h.powi((self.n_terms() + self.p - 1) as i32))
    }

    pub fn eval_generic<S: Scalar>(&self, y: &[S], h: f64) -> Vec<S> {
        let mut out = self.base.eval_generic(y);
        let (c, cr) = self.coefficients(h);
        for (net, cj) in self.terms.iter().zip(c) {
            for (o, v) in out.iter_mut().zip(net.forward_generic(y)) {
                *o = o.clone() + v.scale(cj);
            }
        }
        let mut x = y.to_vec();
        x.push(S::from_f64(h));
        for (o, v) in out.iter_mut().zip(self.remainder.forward_generic(&x)) {
            *o = o.clone() + v.scale(cr);
        }
        out
    }

    /// Evaluation that keeps the tapes needed by [`Self::vjp`].
    pub fn eval_tape(&self, y: &[f64], h: f64) -> (Vec<f64>, ModelTape) {
        let mut out = self.base.eval(y);
        let (c, cr) = self.coefficients(h);
        let mut tapes = Vec::with_capacity(self.terms.len());
        for (net, cj) in self.terms.iter().zip(c) {
            let (v, t) = net.forward_tape(y);
            for (o, vi) in out.iter_mut().zip(v) {
                *o += cj * vi;
            }
            tapes.push(t);
        }
        let mut x = y.to_vec();
        x.push(h);
        let (v, rt) = self.remainder.forward_tape(&x);
        for (o, vi) in out.iter_mut().zip(v) {
            *o += cr * vi;
        }
        (
            out,
            ModelTape {
                y: y.to_vec(),
                h,
                terms: tapes,
                remainder: rt,
            },
        )
    }

    /// Adds `∂(v·f_app)/∂θ` to `grad` (laid out like [`Self::flat_params`])
    /// and returns `∂(v·f_app)/∂y`.
    pub fn vjp(&self, tape: &ModelTape, v: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let jac = self.base.jacobian(&tape.y);
        let d = v.len();
        let mut ybar: Vec<f64> = (0..d).map(|j| (0..d).map(|i| jac[i][j] * v[i]).sum()).collect();
        let (c, cr) = self.coefficients(tape.h);
        let mut off = 0;
        for ((net, t), cj) in self.terms.iter().zip(&tape.terms).zip(c) {
            let n = net.n_params();
            let vb: Vec<f64> = v.iter().map(|x| x * cj).collect();
            let xb = net.backward(t, &vb, 1.0, &mut grad[off..off + n]);
            for (a, b) in ybar.iter_mut().zip(xb) {
                *a += b;
            }
            off += n;
        }
        let n = self.remainder.n_params();
        let vb: Vec<f64> = v.iter().map(|x| x * cr).collect();
        let xb = self.remainder.backward(&tape.remainder, &vb, 1.0, &mut grad[off..off + n]);
        for (a, b) in ybar.iter_mut().zip(xb) {
            *a += b;
        }
        ybar
    }
}

impl FieldLike for ModifiedFieldModel {
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
