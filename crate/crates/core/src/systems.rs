//! Benchmark dynamical systems, their invariants, sampling domains and the
//! high-accuracy reference flow.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::FieldLike;
use crate::integrators::dopri5::Dopri5;
use crate::jets::{directional_derivative, Jet, Scalar};

#[derive(Clone, Debug, PartialEq)]
enum Kind {
    Pendulum,
    RigidBody { inertia: [f64; 3] },
    Linear(Vec<Vec<f64>>),
    Constant(Vec<f64>),
}

/// An autonomous vector field `y -> f(y)` on `R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorFieldSpec {
    name: String,
    kind: Kind,
}

impl VectorFieldSpec {
    /// `y1' = -sin y2`, `y2' = y1`.
    pub fn pendulum() -> Self {
        VectorFieldSpec {
            name: "pendulum".into(),
            kind: Kind::Pendulum,
        }
    }

    /// Free rigid body (Euler equations) with moments of inertia `I1, I2, I3`.
    pub fn rigid_body(i1: f64, i2: f64, i3: f64) -> Result<Self> {
        for (k, i) in [i1, i2, i3].into_iter().enumerate() {
            if !(i > 0.0) || !i.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "moment of inertia I{} must be positive, got {i}",
                    k + 1
                )));
            }
        }
        Ok(VectorFieldSpec {
            name: "rigid_body".into(),
            kind: Kind::RigidBody {
                inertia: [i1, i2, i3],
            },
        })
    }

    /// `f(y) = M y` for a square matrix `M` given as rows.
    pub fn linear(matrix: Vec<Vec<f64>>) -> Result<Self> {
        let d = matrix.len();
        if d == 0 || matrix.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidArgument("linear field needs a non-empty square matrix".into()));
        }
        Ok(VectorFieldSpec {
            name: "linear".into(),
            kind: Kind::Linear(matrix),
        })
    }

    /// `f(y) = c` for a constant vector.
    pub fn constant(value: Vec<f64>) -> Self {
        VectorFieldSpec {
            name: "constant".into(),
            kind: Kind::Constant(value),
        }
    }

    /// `f ≡ 0` in dimension `d`.
    pub fn zero(d: usize) -> Self {
        VectorFieldSpec {
            name: "zero".into(),
            kind: Kind::Constant(vec![0.0; d]),
        }
    }

    /// Registry lookup used by configuration files and the CLI.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "pendulum" => Ok(Self::pendulum()),
            "rigid_body" => Self::rigid_body(1.0, 2.0, 3.0),
            other => Err(Error::InvalidArgument(format!(
                "unknown system '{other}' (expected pendulum or rigid_body)"
            ))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Numeric parameters that, with the name, identify the field:
    /// inertia for the rigid body, the value for constant fields, the
    /// row-major matrix for linear fields.
    pub fn parameters(&self) -> Vec<f64> {
        match &self.kind {
            Kind::Pendulum => vec![],
            Kind::RigidBody { inertia } => inertia.to_vec(),
            Kind::Linear(m) => m.iter().flatten().copied().collect(),
            Kind::Constant(c) => c.clone(),
        }
    }

    /// Inverse of [`Self::name`] plus [`Self::parameters`].
    pub fn from_parts(name: &str, params: &[f64]) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad parameters {params:?} for system '{name}'"));
        match name {
            "pendulum" if params.is_empty() => Ok(Self::pendulum()),
            "rigid_body" if params.len() == 3 => Self::rigid_body(params[0], params[1], params[2]),
            "constant" => Ok(Self::constant(params.to_vec())),
            "zero" if params.iter().all(|v| *v == 0.0) => Ok(Self::zero(params.len())),
            "linear" => {
                let d = (params.len() as f64).sqrt().round() as usize;
                if d * d != params.len() {
                    return Err(bad());
                }
                Self::linear(params.chunks(d.max(1)).map(<[f64]>::to_vec).collect())
            }
            "pendulum" | "rigid_body" | "zero" => Err(bad()),
            other => Err(Error::InvalidArgument(format!("unknown system '{other}'"))),
        }
    }


    pub fn dim(&self) -> usize {
        match &self.kind {
            Kind::Pendulum => 2,
            Kind::RigidBody { .. } => 3,
            Kind::Linear(m) => m.len(),
            Kind::Constant(c) => c.len(),
        }
    }

    pub fn inertia(&self) -> Option<[f64; 3]> {
        match self.kind {
            Kind::RigidBody { inertia } => Some(inertia),
            _ => None,
        }
    }

    /// Evaluates the field on any [`Scalar`], including Taylor jets.
    pub fn eval_generic<S: Scalar>(&self, y: &[S]) -> Vec<S> {
        match &self.kind {
            Kind::Pendulum => vec![-y[1].sin(), y[0].clone()],
            Kind::RigidBody { inertia: [i1, i2, i3] } => {
                let (a, b, c) = (1.0 / i3 - 1.0 / i2, 1.0 / i1 - 1.0 / i3, 1.0 / i2 - 1.0 / i1);
                vec![
                    (y[1].clone() * y[2].clone()).scale(a),
                    (y[0].clone() * y[2].clone()).scale(b),
                    (y[0].clone() * y[1].clone()).scale(c),
                ]
            }
            Kind::Linear(m) => m
                .iter()
                .map(|row| {
                    row.iter()
                        .zip(y)
                        .fold(S::from_f64(0.0), |acc, (&mij, yj)| acc + yj.scale(mij))
                })
                .collect(),
            Kind::Constant(c) => c.iter().map(|&v| S::from_f64(v)).collect(),
        }
    }

    pub fn eval(&self, y: &[f64]) -> Vec<f64> {
        self.eval_generic(y)
    }

    /// Jacobian rows, column by column from first-order jets.
    pub fn jacobian(&self, y: &[f64]) -> Vec<Vec<f64>> {
        let d = self.dim();
        let mut jac = vec![vec![0.0; d]; d];
        let mut e = vec![0.0; d];
        for j in 0..d {
            e[j] = 1.0;
            let col = directional_derivative(|z: &[Jet<f64>]| self.eval_generic(z), y, &e);
            for (i, v) in col.into_iter().enumerate() {
                jac[i][j] = v;
            }
            e[j] = 0.0;
        }
        jac
    }

    pub fn invariant_names(&self) -> Vec<&'static str> {
        match self.kind {
            Kind::Pendulum => vec!["H"],
            Kind::RigidBody { .. } => vec!["C", "H"],
            _ => vec![],
        }
    }

    /// Values of the declared invariants, in the order of [`Self::invariant_names`].
    pub fn invariant_values(&self, y: &[f64]) -> Vec<f64> {
        match self.kind {
            Kind::Pendulum => vec![0.5 * y[0] * y[0] + (1.0 - y[1].cos())],
            Kind::RigidBody { inertia: [i1, i2, i3] } => vec![
                0.5 * (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]),
                0.5 * (y[0] * y[0] / i1 + y[1] * y[1] / i2 + y[2] * y[2] / i3),
            ],
            _ => vec![],
        }
    }
}

impl FieldLike for VectorFieldSpec {
    fn dim(&self) -> usize {
        VectorFieldSpec::dim(self)
    }
    fn eval(&self, y: &[f64], _h: f64) -> Vec<f64> {
        self.eval_generic(y)
    }
    fn jacobian(&self, y: &[f64], _h: f64) -> Vec<Vec<f64>> {
        VectorFieldSpec::jacobian(self, y)
    }
}

/// Spherical shell `r_min <= |y| <= r_max`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Shell {
    pub r_min: f64,
    pub r_max: f64,
}

/// Axis-aligned box, optionally intersected with a spherical shell.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
    shell: Option<Shell>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, shell: Option<Shell>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidArgument("box bounds must be non-empty and of equal length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidArgument(format!("box needs lower < upper, got {lower:?} / {upper:?}")));
        }
        if let Some(s) = shell {
            if !(0.0 <= s.r_min && s.r_min <= s.r_max) {
                return Err(Error::InvalidArgument(format!(
                    "shell needs 0 <= r_min <= r_max, got [{}, {}]",
                    s.r_min, s.r_max
                )));
            }
        }
        Ok(DomainBox { lower, upper, shell })
    }

    /// The cube `[lo, hi]^d`.
    pub fn cube(d: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; d], vec![hi; d], None)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn shell(&self) -> Option<Shell> {
        self.shell
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        let in_box = y
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| l <= v && v <= u);
        in_box && self.in_shell(y)
    }

    fn in_shell(&self, y: &[f64]) -> bool {
        match self.shell {
            None => true,
            Some(s) => {
                let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                s.r_min <= r && r <= s.r_max
            }
        }
    }

    /// Fails when the shell meets the box in a set of measure zero.
    fn check_feasible(&self) -> Result<()> {
        if let Some(s) = self.shell {
            let near: f64 = self
                .lower
                .iter()
                .zip(&self.upper)
                .map(|(&l, &u)| {
                    let c = 0.0f64.clamp(l, u);
                    c * c
                })
                .sum::<f64>()
                .sqrt();
            let far: f64 = self
                .lower
                .iter()
                .zip(&self.upper)
                .map(|(l, u)| l.abs().max(u.abs()).powi(2))
                .sum::<f64>()
                .sqrt();
            if !(near < s.r_max && far > s.r_min && s.r_min < s.r_max) {
                return Err(Error::InvalidArgument(format!(
                    "shell [{}, {}] does not intersect the box",
                    s.r_min, s.r_max
                )));
            }
        }
        Ok(())
    }

    /// One uniform sample, by rejection when a shell is present.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        const MAX_TRIES: usize = 1_000_000;
        for _ in 0..MAX_TRIES {
            let y: Vec<f64> = self
                .lower
                .iter()
                .zip(&self.upper)
                .map(|(&l, &u)| rng.gen_range(l..u))
                .collect();
            if self.in_shell(&y) {
                return Ok(y);
            }
        }
        Err(Error::InvalidArgument("rejection sampling exhausted; shell too thin".into()))
    }

    /// Uniform grid with `n` points per axis (shell points only).
    pub fn grid(&self, n: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        let axes: Vec<Vec<f64>> = (0..d)
            .map(|k| {
                let (l, u) = (self.lower[k], self.upper[k]);
                (0..n)
                    .map(|i| if n == 1 { 0.5 * (l + u) } else { l + (u - l) * i as f64 / (n - 1) as f64 })
                    .collect()
            })
            .collect();
        let mut points = Vec::with_capacity(n.pow(d as u32));
        let mut idx = vec![0usize; d];
        'outer: loop {
            let p: Vec<f64> = idx.iter().enumerate().map(|(k, &i)| axes[k][i]).collect();
            if self.in_shell(&p) {
                points.push(p);
            }
            for k in (0..d).rev() {
                idx[k] += 1;
                if idx[k] < n {
                    continue 'outer;
                }
                idx[k] = 0;
            }
            break;
        }
        points
    }
}

/// `count` uniform samples of the domain from a single seeded stream.
pub fn sample_domain(domain: &DomainBox, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    domain.check_feasible()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| domain.sample(&mut rng)).collect()
}

/// Default tolerance of the reference solver.
pub const DEFAULT_REFERENCE_TOL: f64 = 1e-12;

/// High-accuracy approximation of the exact flow `φ_t(y0)`.
///
/// Adaptive Dormand–Prince 5(4) with `atol = rtol = tol`.
pub fn reference_flow(field: &VectorFieldSpec, y0: &[f64], t: f64, tol: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("reference_flow needs t >= 0 and tol > 0 (t={t}, tol={tol})")));
    }
    if y0.len() != field.dim() {
        return Err(Error::InvalidArgument(format!(
            "state has dimension {}, field expects {}",
            y0.len(),
            field.dim()
        )));
    }
    if t == 0.0 {
        return Ok(y0.to_vec());
    }
    Dopri5::new(tol, tol).endpoint(&|y: &[f64]| field.eval(y), y0, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parts_round_trip() {
        let fields = [
            VectorFieldSpec::pendulum(),
            VectorFieldSpec::rigid_body(1.0, 2.5, 3.0).unwrap(),
            VectorFieldSpec::linear(vec![vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap(),
            VectorFieldSpec::constant(vec![1.0, 2.0]),
            VectorFieldSpec::zero(3),
        ];
        for f in fields {
            assert_eq!(VectorFieldSpec::from_parts(f.name(), &f.parameters()).unwrap(), f);
        }
        assert!(VectorFieldSpec::from_parts("pendulum", &[1.0]).is_err());
        assert!(VectorFieldSpec::from_parts("linear", &[1.0, 2.0]).is_err());
    }

    #[test]
    fn pendulum_values() {
        let f = VectorFieldSpec::pendulum();
        assert_eq!(f.eval(&[0.0, 0.0]), vec![-0.0, 0.0]);
        assert_eq!(f.eval(&[1.0, 0.0]), vec![-0.0, 1.0]);
        assert_eq!(f.invariant_values(&[0.0, 0.0]), vec![0.0]);
        assert_eq!(f.invariant_names(), vec!["H"]);
    }

    #[test]
    fn rigid_body_values() {
        let f = VectorFieldSpec::rigid_body(1.0, 2.0, 3.0).unwrap();
        assert_eq!(f.eval(&[1.0, 0.0, 0.0]), vec![0.0, 0.0, 0.0]);
        let v = f.eval(&[1.0, 1.0, 1.0]);
        let expect = [-1.0 / 6.0, 2.0 / 3.0, -0.5];
        for (a, b) in v.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(v.iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn rigid_body_rejects_bad_inertia() {
        assert!(matches!(VectorFieldSpec::rigid_body(1.0, 0.0, 3.0), Err(Error::InvalidArgument(_))));
        assert!(VectorFieldSpec::rigid_body(-1.0, 2.0, 3.0).is_err());
    }

    #[test]
    fn registry() {
        assert_eq!(VectorFieldSpec::by_name("pendulum").unwrap().dim(), 2);
        assert_eq!(VectorFieldSpec::by_name("rigid_body").unwrap().inertia(), Some([1.0, 2.0, 3.0]));
        assert!(VectorFieldSpec::by_name("lorenz").is_err());
    }

    #[test]
    fn jacobian_of_pendulum() {
        let j = VectorFieldSpec::pendulum().jacobian(&[0.3, 0.5]);
        assert_eq!(j[0][0], 0.0);
        assert!((j[0][1] + 0.5f64.cos()).abs() < 1e-15);
        assert_eq!(j[1], vec![1.0, 0.0]);
    }

    #[test]
    fn empty_sample() {
        let b = DomainBox::cube(2, -2.0, 2.0).unwrap();
        assert!(sample_domain(&b, 0, 1).unwrap().is_empty());
    }

    #[test]
    fn box_sample_mean() {
        let b = DomainBox::cube(2, -2.0, 2.0).unwrap();
        let pts = sample_domain(&b, 10_000, 7).unwrap();
        for k in 0..2 {
            let mean = pts.iter().map(|p| p[k]).sum::<f64>() / pts.len() as f64;
            // 3 sigma / sqrt(n) with sigma = 4/sqrt(12)
            assert!(mean.abs() < 0.05, "mean {mean}");
        }
        assert!(pts.iter().all(|p| b.contains(p)));
    }

    #[test]
    fn shell_samples_stay_in_shell() {
        let b = DomainBox::new(vec![-2.0; 3], vec![2.0; 3], Some(Shell { r_min: 0.98, r_max: 1.02 })).unwrap();
        let pts = sample_domain(&b, 2000, 3).unwrap();
        for p in &pts {
            let r = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((0.98..=1.02).contains(&r));
        }
    }

    #[test]
    fn shell_outside_box_is_rejected() {
        let b = DomainBox::new(vec![-1.0; 2], vec![1.0; 2], Some(Shell { r_min: 2.0, r_max: 3.0 })).unwrap();
        assert!(matches!(sample_domain(&b, 1, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn bad_box() {
        assert!(DomainBox::new(vec![1.0], vec![1.0], None).is_err());
        assert!(DomainBox::new(vec![0.0], vec![1.0], Some(Shell { r_min: 2.0, r_max: 1.0 })).is_err());
    }

    #[test]
    fn grid_counts() {
        let b = DomainBox::cube(2, -2.0, 2.0).unwrap();
        let g = b.grid(41);
        assert_eq!(g.len(), 41 * 41);
        assert_eq!(g[0], vec![-2.0, -2.0]);
        assert_eq!(g[g.len() - 1], vec![2.0, 2.0]);
    }

    #[test]
    fn reference_flow_at_zero_time_is_identity() {
        let f = VectorFieldSpec::pendulum();
        assert_eq!(reference_flow(&f, &[0.3, -0.2], 0.0, 1e-12).unwrap(), vec![0.3, -0.2]);
        assert!(reference_flow(&f, &[0.3, -0.2], -1.0, 1e-12).is_err());
    }
}
