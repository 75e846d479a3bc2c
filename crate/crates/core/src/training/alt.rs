//! Alternative training: per-term regression targets extracted by least
//! squares over several fixed step sizes, then independent fits.
//!
//! For one initial point and steps `h_1 < ... < h_{N_h}`,
//! `d_j = y_j - y0 - h_j f(y0)` is fitted against the monomials
//! `h^{p+1}, ..., h^{p+N_t-1+e}`, where the `e` extra monomials absorb the
//! leading part of the remainder so that the term coefficients are not
//! biased by it. The remainder target at `h_j` is
//! `(d_j - Σ_{m<N_t} c_m h_j^{p+m}) / h_j^{N_t+p}`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::TrainConfig;
use super::dataset::{STREAM_EPOCH, STREAM_SPLIT};
use super::train::{EpochLoss, LossReport};
use crate::error::{Error, Result};
use crate::fit::least_squares;
use crate::neural::{AdamState, Mlp, ModifiedFieldModel};
use crate::systems::{reference_flow, VectorFieldSpec};

/// Condition number above which target extraction is refused.
pub const MAX_CONDITION: f64 = 1e12;

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|j| match j {
                0 => lo,
                j if j == n - 1 => hi,
                j => (lo.ln() + (hi.ln() - lo.ln()) * j as f64 / (n - 1) as f64).exp(),
            })
            .collect(),
    }
}

/// Regression targets for one initial point.
#[derive(Clone, Debug, PartialEq)]
pub struct AltTargets {
    /// `c_1 .. c_{N_t-1}`, targets of the term networks.
    pub coeffs: Vec<Vec<f64>>,
    /// Remainder target for each step.
    pub remainder: Vec<Vec<f64>>,
    pub condition: f64,
}

/// Targets from precomputed `y_j` (the steps need not be sorted).
pub fn alt_targets_from_data(
    f0: &[f64],
    y0: &[f64],
    steps: &[f64],
    ys: &[Vec<f64>],
    n_terms: usize,
    p: usize,
    extra: usize,
) -> Result<AltTargets> {
    let n_h = steps.len();
    let n_fit = n_terms.saturating_sub(1) + extra;
    if n_terms == 0 || n_h == 0 || ys.len() != n_h || n_fit > n_h {
        return Err(Error::InvalidArgument(format!(
            "need N_h >= N_t - 1 + extra and one state per step (N_h={n_h}, N_t={n_terms}, extra={extra}, states={})",
            ys.len()
        )));
    }
    if steps.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::InvalidArgument("steps must be positive".into()));
    }
    let mut sorted = steps.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("steps must be distinct".into()));
    }
    let d = y0.len();
    let defect: Vec<Vec<f64>> = steps
        .iter()
        .zip(ys)
        .map(|(h, y)| (0..d).map(|i| y[i] - y0[i] - h * f0[i]).collect())
        .collect();
    let (fit, condition) = if n_fit > 0 {
        let design: Vec<Vec<f64>> = steps
            .iter()
            .map(|h| (0..n_fit).map(|m| h.powi((p + 1 + m) as i32)).collect())
            .collect();
        let ls = least_squares(&design, &defect)?;
        if !(ls.condition <= MAX_CONDITION) {
            return Err(Error::IllConditioned { condition: ls.condition });
        }
        (ls.coeffs, ls.condition)
    } else {
        (Vec::new(), 1.0)
    };
    let coeffs: Vec<Vec<f64>> = fit.iter().take(n_terms - 1).cloned().collect();
    let remainder = steps
        .iter()
        .zip(&defect)
        .map(|(h, dj)| {
            let scale = h.powi((n_terms + p) as i32);
            (0..d)
                .map(|i| {
                    let fitted: f64 = coeffs.iter().enumerate().map(|(m, c)| c[i] * h.powi((p + 1 + m) as i32)).sum();
                    (dj[i] - fitted) / scale
                })
                .collect()
        })
        .collect();
    Ok(AltTargets {
        coeffs,
        remainder,
        condition,
    })
}

/// Targets at `y0` with `y_j = reference_flow(y0, h_j)`.
pub fn alt_extract_targets(
    field: &VectorFieldSpec,
    y0: &[f64],
    steps: &[f64],
    n_terms: usize,
    p: usize,
    extra: usize,
    tol: f64,
) -> Result<AltTargets> {
    let ys = steps
        .iter()
        .map(|&h| reference_flow(field, y0, h, tol))
        .collect::<Result<Vec<_>>>()?;
    alt_targets_from_data(&field.eval(y0), y0, steps, &ys, n_terms, p, extra)
}

/// One initial point with its extracted targets.
#[derive(Clone, Debug, PartialEq)]
pub struct AltSample {
    pub y0: Vec<f64>,
    pub targets: AltTargets,
}

/// The fixed step sizes of the alternative method: `n_h` log-spaced values
/// over `[h_min, h_max]`.
pub fn alt_steps(cfg: &TrainConfig) -> Vec<f64> {
    log_spaced(cfg.h_min, cfg.h_max, cfg.n_h)
}

/// `⌊K / N_h⌋` initial points (so `K` counts flow evaluations), each with
/// targets at [`alt_steps`].
pub fn generate_alt_samples(cfg: &TrainConfig) -> Result<Vec<AltSample>> {
    cfg.validate()?;
    let field = cfg.field()?;
    let domain = cfg.domain()?;
    let steps = alt_steps(cfg);
    let n = cfg.k / cfg.n_h;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let y0 = domain.sample(&mut rng)?;
            let targets = alt_extract_targets(&field, &y0, &steps, cfg.n_terms, cfg.p, cfg.extra_monomials(), cfg.ref_tol)?;
            Ok(AltSample { y0, targets })
        })
        .collect()
}

/// Mean squared error of `net` on `(x, t)` pairs.
pub fn regression_loss(net: &Mlp, xs: &[Vec<f64>], ts: &[Vec<f64>]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let total: f64 = xs
        .iter()
        .zip(ts)
        .map(|(x, t)| net.forward_generic(x).iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    total / xs.len() as f64
}

/// Plain-MSE Adam regression. `stream` separates the shuffling of
/// independent jobs that share a seed.
pub fn fit_regression(
    mut net: Mlp,
    train: (&[Vec<f64>], &[Vec<f64>]),
    test: (&[Vec<f64>], &[Vec<f64>]),
    cfg: &TrainConfig,
    stream: u64,
) -> Result<(Mlp, LossReport)> {
    let (xs, ts) = train;
    if xs.len() != ts.len() || test.0.len() != test.1.len() {
        return Err(Error::InvalidArgument("inputs and targets differ in length".into()));
    }
    let mut report = LossReport {
        initial_train: regression_loss(&net, xs, ts),
        initial_test: regression_loss(&net, test.0, test.1),
        epochs: Vec::with_capacity(cfg.epochs),
    };
    let mut adam = AdamState::new(net.n_params(), cfg.learning_rate, cfg.weight_decay);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut grad = vec![0.0; net.n_params()];
    for epoch in 1..=cfg.epochs {
        let start = std::time::Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(STREAM_EPOCH + (stream << 32) + epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);
        for (b, ids) in order.chunks(cfg.batch_size).enumerate() {
            grad.fill(0.0);
            let n = ids.len() as f64;
            for &i in ids {
                let (out, tape) = net.forward_tape(&xs[i]);
                let bar: Vec<f64> = out.iter().zip(&ts[i]).map(|(a, t)| 2.0 * (a - t) / n).collect();
                net.backward(&tape, &bar, 1.0, &mut grad);
            }
            adam.update(net.params_mut(), &grad)?;
            if net.params().iter().any(|v| !v.is_finite()) {
                return Err(Error::TrainingDiverged { epoch, batch: b });
            }
        }
        report.epochs.push(EpochLoss {
            epoch,
            loss_train: regression_loss(&net, xs, ts),
            loss_test: regression_loss(&net, test.0, test.1),
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok((net, report))
}

/// Regression jobs for the term networks (`y0 -> c_m`) and the remainder
/// network (`(y0, h_j) -> R_j`), trained concurrently and assembled into a
/// model. Returns one report per network, terms first.
pub fn alt_train(samples: &[AltSample], steps: &[f64], cfg: &TrainConfig) -> Result<(ModifiedFieldModel, Vec<LossReport>)> {
    cfg.validate()?;
    let field = cfg.field()?;
    let template = ModifiedFieldModel::new(&field, &cfg.scheme, cfg.p, cfg.n_terms, &cfg.hidden(), cfg.seed)?;
    let n_train = ((cfg.train_fraction * samples.len() as f64) * (1.0 + 1e-12)).floor() as usize;
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(STREAM_SPLIT);
    idx.shuffle(&mut rng);
    let (tr, te) = idx.split_at(n_train);

    let term_data = |m: usize, ids: &[usize]| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        ids.iter().map(|&i| (samples[i].y0.clone(), samples[i].targets.coeffs[m].clone())).unzip()
    };
    let rem_data = |ids: &[usize]| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        ids.iter()
            .flat_map(|&i| {
                steps.iter().zip(&samples[i].targets.remainder).map(move |(h, r)| {
                    let mut x = samples[i].y0.clone();
                    x.push(*h);
                    (x, r.clone())
                })
            })
            .unzip()
    };

    let n_jobs = cfg.n_terms;
    let results = (0..n_jobs)
        .into_par_iter()
        .map(|job| {
            let ((xtr, ttr), (xte, tte), net) = if job + 1 < n_jobs {
                (term_data(job, tr), term_data(job, te), template.terms()[job].clone())
            } else {
                (rem_data(tr), rem_data(te), template.remainder().clone())
            };
            fit_regression(net, (&xtr, &ttr), (&xte, &tte), cfg, job as u64)
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut nets, reports): (Vec<Mlp>, Vec<LossReport>) = results.into_iter().unzip();
    let remainder = nets.pop().unwrap();
    let model = ModifiedFieldModel::from_nets(&field, &cfg.scheme, cfg.p, nets, remainder)?;
    Ok((model, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modified_field::euler_term;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig {
            cases: 64,
            rng_seed: proptest::test_runner::RngSeed::Fixed(0),
            failure_persistence: None,
            ..ProptestConfig::default()
        })]

        #[test]
        fn polynomial_data_is_reproduced(
            n_terms in 2usize..=4,
            extra_pick in 0usize..=3,
            y0 in prop::array::uniform2(-2.0f64..2.0),
            f0 in prop::array::uniform2(-2.0f64..2.0),
            c in prop::collection::vec(-1.0f64..1.0, 6),
        ) {
            let steps = [0.05f64, 0.1, 0.2, 0.3, 0.4];
            let extra = extra_pick.min(steps.len() - n_terms);
            let coeffs: Vec<[f64; 2]> = (0..n_terms - 1).map(|m| [c[2 * m], c[2 * m + 1]]).collect();
            let ys: Vec<Vec<f64>> = steps
                .iter()
                .map(|h| {
                    (0..2)
                        .map(|i| {
                            let tail: f64 = coeffs.iter().enumerate().map(|(m, c)| h.powi(m as i32 + 2) * c[i]).sum();
                            y0[i] + h * f0[i] + tail
                        })
                        .collect()
                })
                .collect();
            let t = alt_targets_from_data(&f0, &y0, &steps, &ys, n_terms, 1, extra).unwrap();
            for (got, want) in t.coeffs.iter().zip(&coeffs) {
                for i in 0..2 {
                    prop_assert!((got[i] - want[i]).abs() <= 1e-8, "{got:?} vs {want:?}");
                }
            }
            prop_assert!(t.remainder.iter().flatten().all(|r| r.abs() <= 1e-8));
        }
    }

    #[test]
    fn exact_polynomial_data() {
        let f0 = [0.3, -1.2];
        let y0 = [0.5, 0.25];
        let steps = [0.01f64, 0.03, 0.1, 0.2, 0.4];
        let c1 = [0.7, -0.1];
        let c2 = [-0.4, 0.9];
        let ys: Vec<Vec<f64>> = steps
            .iter()
            .map(|h| (0..2).map(|i| y0[i] + h * f0[i] + h * h * c1[i] + h.powi(3) * c2[i]).collect())
            .collect();
        let t = alt_targets_from_data(&f0, &y0, &steps, &ys, 3, 1, 2).unwrap();
        for i in 0..2 {
            assert!((t.coeffs[0][i] - c1[i]).abs() < 1e-8);
            assert!((t.coeffs[1][i] - c2[i]).abs() < 1e-8);
        }
        assert!(t.remainder.iter().flatten().all(|r| r.abs() < 1e-8));
    }

    #[test]
    fn zero_defect_gives_zero_targets() {
        let steps = [0.1, 0.2, 0.3];
        let ys = vec![vec![1.0]; 3];
        let t = alt_targets_from_data(&[0.0], &[1.0], &steps, &ys, 2, 1, 1).unwrap();
        assert!(t.coeffs.iter().chain(&t.remainder).flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn pendulum_first_coefficient() {
        let f = VectorFieldSpec::pendulum();
        let steps: Vec<f64> = (0..5).map(|j| 0.01 * 0.5f64.powi(j)).collect();
        let t = alt_extract_targets(&f, &[1.0, 0.0], &steps, 3, 1, 2, 1e-13).unwrap();
        let e = euler_term(&f, 1, &[1.0, 0.0]).unwrap();
        for i in 0..2 {
            assert!((t.coeffs[0][i] - e[i]).abs() < 1e-4, "{:?}", t.coeffs[0]);
        }
    }

    #[test]
    fn argument_checks() {
        let ys = vec![vec![0.0]; 2];
        assert!(alt_targets_from_data(&[0.0], &[0.0], &[0.1, 0.2], &ys, 4, 1, 0).is_err());
        assert!(alt_targets_from_data(&[0.0], &[0.0], &[0.1, 0.1], &ys, 2, 1, 0).is_err());
        let close = [1.0, 1.0 + 1e-9, 1.0 + 2e-9, 1.0 + 3e-9];
        let ys = vec![vec![0.0]; 4];
        assert!(matches!(
            alt_targets_from_data(&[0.0], &[0.0], &close, &ys, 4, 1, 1),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn log_spacing() {
        let s = log_spaced(0.01, 1.0, 3);
        assert!((s[1] - 0.1).abs() < 1e-15);
        assert_eq!(s[0], 0.01);
        assert!((s[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn jobs_are_independent() {
        let cfg = TrainConfig {
            k: 100,
            n_terms: 2,
            neurons: 6,
            epochs: 2,
            batch_size: 8,
            h_min: 0.01,
            h_max: 0.5,
            ..TrainConfig::default()
        };
        let samples = generate_alt_samples(&cfg).unwrap();
        assert_eq!(samples.len(), 20);
        let steps = alt_steps(&cfg);
        let (a, _) = alt_train(&samples, &steps, &cfg).unwrap();
        let (b, _) = alt_train(&samples, &steps, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
