//! Adaptive Dormand–Prince 5(4) with a PI step-size controller.

use crate::error::{Error, Result};

#[cfg(test)]
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];

pub(crate) const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];

/// Fifth-order weights (equal to the last row of `A`; first-same-as-last).
pub(crate) const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];

/// Difference between the fifth- and embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Solver settings. Defaults: safety 0.9, step ratio in `[0.2, 5]`,
/// PI stabilisation `beta = 0.04`.
#[derive(Clone, Debug)]
pub struct Dopri5 {
    pub atol: f64,
    pub rtol: f64,
    pub safety: f64,
    pub fac_min: f64,
    pub fac_max: f64,
    pub beta: f64,
    pub max_steps: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Dopri5Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

impl Dopri5 {
    pub fn new(atol: f64, rtol: f64) -> Self {
        Dopri5 {
            atol,
            rtol,
            safety: 0.9,
            fac_min: 0.2,
            fac_max: 5.0,
            beta: 0.04,
            max_steps: 1_000_000,
        }
    }

    /// State at `t_end`.
    pub fn endpoint<F>(&self, f: &F, y0: &[f64], t_end: f64) -> Result<Vec<f64>>
    where
        F: Fn(&[f64]) -> Vec<f64> + ?Sized,
    {
        self.solve(f, y0, t_end, |_, _| {}).map(|(y, _)| y)
    }

    /// Integrates from `0` to `t_end`, calling `observe(t, y)` after every
    /// accepted step (and once at `t = 0`).
    pub fn solve<F, O>(&self, f: &F, y0: &[f64], t_end: f64, mut observe: O) -> Result<(Vec<f64>, Dopri5Stats)>
    where
        F: Fn(&[f64]) -> Vec<f64> + ?Sized,
        O: FnMut(f64, &[f64]),
    {
        if !(t_end >= 0.0) || !(self.atol > 0.0) || !(self.rtol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "dopri5 needs T >= 0 and positive tolerances (T={t_end}, atol={}, rtol={})",
                self.atol, self.rtol
            )));
        }
        let d = y0.len();
        let mut stats = Dopri5Stats::default();
        let mut t = 0.0;
        let mut y = y0.to_vec();
        observe(t, &y);
        if t_end == 0.0 {
            return Ok((y, stats));
        }

        let mut k: [Vec<f64>; 7] = Default::default();
        k[0] = f(&y);
        stats.evaluations += 1;
        let mut h = self.initial_step(f, &y, &k[0], t_end, &mut stats).min(t_end);
        let expo1 = 0.2 - self.beta * 0.75;
        let mut fac_old: f64 = 1e-4;
        let mut last_rejected = false;
        let mut stage = vec![0.0; d];
        let mut y_new = vec![0.0; d];

        loop {
            if stats.accepted + stats.rejected >= self.max_steps {
                return Err(Error::IntegrationFailure {
                    t,
                    reason: format!("step limit {} reached", self.max_steps),
                });
            }
            if h.abs() <= 16.0 * f64::EPSILON * t.abs().max(1e-300) {
                return Err(Error::IntegrationFailure {
                    t,
                    reason: format!("step size underflow (h = {h:e})"),
                });
            }
            let last = t + h >= t_end;
            if last {
                h = t_end - t;
            }

            for s in 1..7 {
                for i in 0..d {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += A[s][j] * kj[i];
                    }
                    stage[i] = y[i] + h * acc;
                }
                k[s] = f(&stage);
            }
            stats.evaluations += 6;
            // the seventh stage point is the new solution
            y_new.copy_from_slice(&stage);

            let mut err = 0.0;
            for i in 0..d {
                let mut e = 0.0;
                for (j, kj) in k.iter().enumerate() {
                    e += E[j] * kj[i];
                }
                let sc = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                err += (h * e / sc).powi(2);
            }
            let err = (err / d.max(1) as f64).sqrt();
            if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
                return Err(Error::IntegrationFailure {
                    t,
                    reason: "non-finite state or error estimate".into(),
                });
            }

            let fac11 = err.powf(expo1);
            if err <= 1.0 {
                let fac = (fac11 / fac_old.powf(self.beta) / self.safety).clamp(1.0 / self.fac_max, 1.0 / self.fac_min);
                let mut h_new = h / fac;
                fac_old = err.max(1e-4);
                if last_rejected {
                    h_new = h_new.min(h);
                }
                stats.accepted += 1;
                t = if last { t_end } else { t + h };
                y.copy_from_slice(&y_new);
                k[0] = std::mem::take(&mut k[6]);
                observe(t, &y);
                if last {
                    return Ok((y, stats));
                }
                last_rejected = false;
                h = h_new;
            } else {
                stats.rejected += 1;
                last_rejected = true;
                h /= (fac11 / self.safety).min(1.0 / self.fac_min);
            }
        }
    }

    fn initial_step<F>(&self, f: &F, y: &[f64], f0: &[f64], t_end: f64, stats: &mut Dopri5Stats) -> f64
    where
        F: Fn(&[f64]) -> Vec<f64> + ?Sized,
    {
        let d = y.len().max(1) as f64;
        let sc: Vec<f64> = y.iter().map(|v| self.atol + self.rtol * v.abs()).collect();
        let norm = |v: &[f64]| (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / d).sqrt();
        let d0 = norm(y);
        let d1 = norm(f0);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(t_end);
        let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
        let f1 = f(&y1);
        stats.evaluations += 1;
        let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
        let d2 = norm(&diff) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let y = Dopri5::new(1e-10, 1e-10).endpoint(&|y: &[f64]| vec![-y[0]], &[1.0], 1.0).unwrap();
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn zero_horizon() {
        let mut seen = 0;
        let (y, stats) = Dopri5::new(1e-8, 1e-8)
            .solve(&|y: &[f64]| vec![-y[0]], &[2.0], 0.0, |_, _| seen += 1)
            .unwrap();
        assert_eq!(y, vec![2.0]);
        assert_eq!(seen, 1);
        assert_eq!(stats.accepted, 0);
    }

    #[test]
    fn blow_up_is_reported() {
        // y' = y^2 from y=1 blows up at t=1
        let r = Dopri5::new(1e-8, 1e-8).endpoint(&|y: &[f64]| vec![y[0] * y[0]], &[1.0], 2.0);
        match r {
            Err(Error::IntegrationFailure { t, .. }) => assert!(t < 1.0 + 1e-6 && t > 0.9, "{t}"),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn fifth_order_weights_sum_to_one() {
        assert!((B.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for (s, row) in A.iter().enumerate() {
            assert!((row.iter().sum::<f64>() - C[s]).abs() < 1e-14);
        }
    }
}
