use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::jets::Scalar;

/// Fully connected network, `tanh` on hidden layers and an affine output.
///
/// Parameters are stored flat, layer by layer: the row-major weight matrix
/// (`out x in`) followed by the bias vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Intermediate values of a forward pass, needed by [`Mlp::backward`].
#[derive(Clone, Debug)]
pub struct MlpTape {
    /// Input followed by every hidden activation.
    acts: Vec<Vec<f64>>,
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "layer sizes need at least two positive entries, got {sizes:?}"
        )));
    }
    Ok(())
}

fn count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Glorot-uniform weights, zero biases. `stream` selects an independent
    /// random stream for the same seed.
    pub fn init(sizes: &[usize], seed: u64, stream: u64) -> Result<Self> {
        check_sizes(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut params = Vec::with_capacity(count(sizes));
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.gen_range(-a..=a)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        check_sizes(sizes)?;
        if params.len() != count(sizes) {
            return Err(Error::ShapeMismatch(format!(
                "layer sizes {sizes:?} need {} parameters, got {}",
                count(sizes),
                params.len()
            )));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params,
        })
    }

    /// Builds a network from per-layer row-major weights and biases.
    pub fn from_layers(sizes: &[usize], weights: &[Vec<f64>], biases: &[Vec<f64>]) -> Result<Self> {
        check_sizes(sizes)?;
        let layers = sizes.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(Error::ShapeMismatch(format!("expected {layers} weight and bias arrays")));
        }
        let mut params = Vec::with_capacity(count(sizes));
        for (l, w) in sizes.windows(2).enumerate() {
            if weights[l].len() != w[0] * w[1] || biases[l].len() != w[1] {
                return Err(Error::ShapeMismatch(format!(
                    "layer {l}: expected {}x{} weights and {} biases, got {} and {}",
                    w[1],
                    w[0],
                    w[1],
                    weights[l].len(),
                    biases[l].len()
                )));
            }
            params.extend_from_slice(&weights[l]);
            params.extend_from_slice(&biases[l]);
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// `(weights, biases)` of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let off: usize = self.sizes[..=l].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let w = &self.params[off..off + n_in * n_out];
        let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
        (w, b)
    }

    /// Sets the output layer to zero so the network outputs exactly 0.
    pub fn zero_output(&mut self) {
        let n = self.sizes.len();
        let last = self.sizes[n - 2] * self.sizes[n - 1] + self.sizes[n - 1];
        let len = self.params.len();
        self.params[len - last..].fill(0.0);
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::InvalidArgument(format!(
                "network input has length {}, expected {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(self.forward_generic(x))
    }

    /// Forward pass on any [`Scalar`]; the input length is not checked.
    pub fn forward_generic<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let layers = self.sizes.len() - 1;
        let mut a: Vec<S> = x.to_vec();
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let mut next = Vec::with_capacity(n_out);
            for (row, &bi) in w.chunks_exact(n_in).zip(b) {
                let mut acc = S::from_f64(bi);
                for (wij, aj) in row.iter().zip(&a) {
                    acc = acc + aj.scale(*wij);
                }
                next.push(if l + 1 < layers { acc.tanh() } else { acc });
            }
            a = next;
        }
        a
    }

    /// Forward pass that records what [`Mlp::backward`] needs.
    pub fn forward_tape(&self, x: &[f64]) -> (Vec<f64>, MlpTape) {
        let layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(layers);
        acts.push(x.to_vec());
        let mut off = 0;
        let mut out = Vec::new();
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let a = &acts[l];
            let z: Vec<f64> = w
                .chunks_exact(n_in)
                .zip(b)
                .map(|(row, bi)| bi + row.iter().zip(a).map(|(p, q)| p * q).sum::<f64>())
                .collect();
            if l + 1 < layers {
                acts.push(z.into_iter().map(f64::tanh).collect());
            } else {
                out = z;
            }
        }
        (out, MlpTape { acts })
    }

    /// Reverse pass: adds `scale · ∂(out_bar·y)/∂θ` to `grad` and returns
    /// the input cotangent `∂(out_bar·y)/∂x` (unscaled).
    pub fn backward(&self, tape: &MlpTape, out_bar: &[f64], scale: f64, grad: &mut [f64]) -> Vec<f64> {
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut delta = out_bar.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let a = &tape.acts[l];
            let w = &self.params[off..off + n_in * n_out];
            {
                let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for (i, &di) in delta.iter().enumerate() {
                    if di == 0.0 {
                        continue;
                    }
                    let sdi = scale * di;
                    for (g, aj) in gw[i * n_in..(i + 1) * n_in].iter_mut().zip(a) {
                        *g += sdi * aj;
                    }
                    gb[i] += sdi;
                }
            }
            let mut prev = vec![0.0; n_in];
            for (row, &di) in w.chunks_exact(n_in).zip(&delta) {
                if di == 0.0 {
                    continue;
                }
                for (p, wij) in prev.iter_mut().zip(row) {
                    *p += wij * di;
                }
            }
            if l > 0 {
                for (p, aj) in prev.iter_mut().zip(a) {
                    *p *= 1.0 - aj * aj;
                }
            }
            delta = prev;
        }
        delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_contract() {
        let net = Mlp::init(&[2, 2], 7, 0).unwrap();
        assert_eq!(net.layer(0).1, &[0.0, 0.0]);
        let a = Mlp::init(&[2, 5, 5, 2], 42, 3).unwrap();
        let b = Mlp::init(&[2, 5, 5, 2], 42, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, Mlp::init(&[2, 5, 5, 2], 42, 4).unwrap());
        let lim = (6.0f64 / 10.0).sqrt();
        assert!(a.layer(1).0.iter().all(|w| w.abs() <= lim));
        assert_eq!(Mlp::init(&[2, 200, 200, 2], 1, 0).unwrap().n_params(), 41_202);
        assert!(Mlp::init(&[2], 1, 0).is_err());
        assert!(Mlp::init(&[2, 0, 2], 1, 0).is_err());
    }

    #[test]
    fn forward_examples() {
        let z = Mlp::from_params(&[2, 3, 2], vec![0.0; 17]).unwrap();
        assert_eq!(z.forward(&[1.0, -4.0]).unwrap(), vec![0.0, 0.0]);
        let affine = Mlp::from_params(&[1, 1], vec![2.0, 1.0]).unwrap();
        assert_eq!(affine.forward(&[3.0]).unwrap(), vec![7.0]);
        let one = Mlp::from_params(&[1, 1, 1], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        assert!((one.forward(&[0.5]).unwrap()[0] - 0.4621171573).abs() < 1e-10);
        assert!(affine.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn tape_matches_forward_and_zero_output() {
        let mut net = Mlp::init(&[3, 4, 4, 2], 1, 0).unwrap();
        let x = [0.2, -0.7, 1.3];
        assert_eq!(net.forward_tape(&x).0, net.forward(&x).unwrap());
        net.zero_output();
        assert_eq!(net.forward(&x).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn backward_matches_differences() {
        let net = Mlp::init(&[3, 5, 4, 2], 9, 1).unwrap();
        let x = [0.3, -0.4, 0.8];
        let ybar = [0.7, -1.1];
        let (_, tape) = net.forward_tape(&x);
        let mut grad = vec![0.0; net.n_params()];
        let xbar = net.backward(&tape, &ybar, 1.0, &mut grad);
        let obj = |n: &Mlp, x: &[f64]| n.forward(x).unwrap().iter().zip(&ybar).map(|(a, b)| a * b).sum::<f64>();
        for k in 0..net.n_params() {
            let mut p = net.clone();
            p.params_mut()[k] += 1e-6;
            let mut m = net.clone();
            m.params_mut()[k] -= 1e-6;
            let fd = (obj(&p, &x) - obj(&m, &x)) / 2e-6;
            assert!((fd - grad[k]).abs() < 1e-8 * (1.0 + fd.abs()), "param {k}");
        }
        for i in 0..3 {
            let mut xp = x;
            xp[i] += 1e-6;
            let mut xm = x;
            xm[i] -= 1e-6;
            let fd = (obj(&net, &xp) - obj(&net, &xm)) / 2e-6;
            assert!((fd - xbar[i]).abs() < 1e-8);
        }
    }
}
