//! Loss and reverse-mode gradient through one integrator step.

use rayon::prelude::*;

use super::model::{ModelTape, ModifiedFieldModel};
use crate::error::{Error, Result};
use crate::integrators::{ButcherTableau, Stepper};
use crate::training::DatasetRecord;

/// Fixed-point iterations unrolled for the implicit midpoint rule.
pub const MIDPOINT_UNROLL: usize = 10;

/// Records per parallel work unit. Partial sums are combined in chunk
/// order, so results do not depend on the number of threads.
const CHUNK: usize = 64;

struct StepTape {
    tapes: Vec<ModelTape>,
}

/// `Φ_h(y)` for the learned field as used in training. The implicit
/// midpoint rule runs exactly [`MIDPOINT_UNROLL`] iterations from `y`.
pub fn training_step(model: &ModifiedFieldModel, stepper: &Stepper, y: &[f64], h: f64) -> Vec<f64> {
    forward(model, stepper, y, h).0
}

fn forward(model: &ModifiedFieldModel, stepper: &Stepper, y: &[f64], h: f64) -> (Vec<f64>, StepTape) {
    match stepper {
        Stepper::Explicit(tab) => forward_rk(model, tab, y, h),
        Stepper::ImplicitMidpoint { .. } => {
            let mut tapes = Vec::with_capacity(MIDPOINT_UNROLL);
            let mut next = y.to_vec();
            for _ in 0..MIDPOINT_UNROLL {
                let mid: Vec<f64> = y.iter().zip(&next).map(|(a, b)| 0.5 * (a + b)).collect();
                let (g, t) = model.eval_tape(&mid, h);
                next = y.iter().zip(&g).map(|(a, gi)| a + h * gi).collect();
                tapes.push(t);
            }
            (next, StepTape { tapes })
        }
    }
}

fn forward_rk(model: &ModifiedFieldModel, tab: &ButcherTableau, y: &[f64], h: f64) -> (Vec<f64>, StepTape) {
    let s = tab.stages();
    let mut ks: Vec<Vec<f64>> = Vec::with_capacity(s);
    let mut tapes = Vec::with_capacity(s);
    for i in 0..s {
        let z: Vec<f64> = (0..y.len())
            .map(|m| y[m] + h * ks.iter().enumerate().map(|(j, k)| tab.a()[i][j] * k[m]).sum::<f64>())
            .collect();
        let (k, t) = model.eval_tape(&z, h);
        ks.push(k);
        tapes.push(t);
    }
    let out = (0..y.len())
        .map(|m| y[m] + h * tab.b().iter().zip(&ks).map(|(b, k)| b * k[m]).sum::<f64>())
        .collect();
    (out, StepTape { tapes })
}

fn backward(model: &ModifiedFieldModel, stepper: &Stepper, h: f64, tape: &StepTape, ybar: &[f64], grad: &mut [f64]) {
    match stepper {
        Stepper::Explicit(tab) => {
            let s = tab.stages();
            let mut zbar: Vec<Vec<f64>> = vec![Vec::new(); s];
            for i in (0..s).rev() {
                let kbar: Vec<f64> = (0..ybar.len())
                    .map(|m| {
                        h * tab.b()[i] * ybar[m]
                            + ((i + 1)..s).map(|l| h * tab.a()[l][i] * zbar[l][m]).sum::<f64>()
                    })
                    .collect();
                zbar[i] = model.vjp(&tape.tapes[i], &kbar, grad);
            }
        }
        Stepper::ImplicitMidpoint { .. } => {
            let mut cur = ybar.to_vec();
            for t in tape.tapes.iter().rev() {
                let gbar: Vec<f64> = cur.iter().map(|v| h * v).collect();
                let mbar = model.vjp(t, &gbar, grad);
                cur = mbar.iter().map(|v| 0.5 * v).collect();
            }
        }
    }
}

fn weight(p: usize, h: f64) -> f64 {
    h.powi(-(2 * p as i32 + 2))
}

/// `(1/N) Σ h^{-(2p+2)} |Φ_h(y0) - y1|^2` and its gradient with respect to
/// [`ModifiedFieldModel::flat_params`].
pub fn step_loss_and_grad(model: &ModifiedFieldModel, stepper: &Stepper, batch: &[DatasetRecord]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let n = batch.len() as f64;
    let np = model.n_params();
    let partials = batch
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut loss = 0.0;
            let mut grad = vec![0.0; np];
            for (i, r) in chunk.iter().enumerate() {
                let (y1, tape) = forward(model, stepper, &r.y0, r.h);
                let w = weight(model.p(), r.h);
                let res: Vec<f64> = y1.iter().zip(&r.y1).map(|(a, b)| a - b).collect();
                let li = w * res.iter().map(|v| v * v).sum::<f64>();
                if !li.is_finite() {
                    return Err(Error::Divergence { record: c * CHUNK + i });
                }
                loss += li;
                let ybar: Vec<f64> = res.iter().map(|v| 2.0 * w * v / n).collect();
                backward(model, stepper, r.h, &tape, &ybar, &mut grad);
            }
            Ok((loss, grad))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut loss = 0.0;
    let mut grad = vec![0.0; np];
    for (l, g) in partials {
        loss += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    Ok((loss / n, grad))
}

/// The training loss over `records` without gradients (0 for an empty set).
pub fn dataset_loss(model: &ModifiedFieldModel, stepper: &Stepper, records: &[DatasetRecord]) -> Result<f64> {
    if records.is_empty() {
        return Ok(0.0);
    }
    let partials = records
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut loss = 0.0;
            for (i, r) in chunk.iter().enumerate() {
                let y1 = training_step(model, stepper, &r.y0, r.h);
                let li = weight(model.p(), r.h) * y1.iter().zip(&r.y1).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                if !li.is_finite() {
                    return Err(Error::Divergence { record: c * CHUNK + i });
                }
                loss += li;
            }
            Ok(loss)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(partials.iter().sum::<f64>() / records.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Mlp;
    use crate::systems::VectorFieldSpec;

    fn rec(y0: Vec<f64>, h: f64, y1: Vec<f64>) -> DatasetRecord {
        DatasetRecord { y0, h, y1 }
    }

    #[test]
    fn self_consistent_data_has_zero_loss() {
        let f = VectorFieldSpec::pendulum();
        let mut m = ModifiedFieldModel::new(&f, "euler", 1, 2, &[4], 0).unwrap();
        m.zero_outputs();
        let euler = Stepper::by_name("euler").unwrap();
        let batch: Vec<DatasetRecord> = [[0.3, 0.1], [-1.0, 0.5]]
            .iter()
            .map(|y| rec(y.to_vec(), 0.2, euler.step(&f, y, 0.2).unwrap()))
            .collect();
        let (loss, _) = step_loss_and_grad(&m, &euler, &batch).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn one_record_chain_rule() {
        // d=1, f ≡ 0, Euler, N_t=1: f_app = h R(y, h)
        let f = VectorFieldSpec::zero(1);
        let rem = Mlp::from_params(&[2, 1], vec![0.5, -0.25, 0.1]).unwrap();
        let m = ModifiedFieldModel::from_nets(&f, "euler", 1, vec![], rem).unwrap();
        let (y0, h, y1) = (0.8, 0.3f64, 0.9);
        let r = 0.5 * y0 - 0.25 * h + 0.1;
        let res = y0 + h * h * r - y1;
        let w = h.powi(-4);
        let (loss, grad) = step_loss_and_grad(&m, &Stepper::by_name("euler").unwrap(), &[rec(vec![y0], h, vec![y1])]).unwrap();
        assert!((loss - w * res * res).abs() < 1e-12 * loss.abs().max(1.0));
        // ∂loss/∂R = 2 h^{-4} h^2 res; the bias sees it directly
        let rbar = 2.0 * w * h * h * res;
        assert!((grad[2] - rbar).abs() < 1e-10 * rbar.abs());
        assert!((grad[0] - rbar * y0).abs() < 1e-10 * rbar.abs());
        assert!((grad[1] - rbar * h).abs() < 1e-10 * rbar.abs());
    }

    #[test]
    fn divergence_names_record() {
        let f = VectorFieldSpec::pendulum();
        let m = ModifiedFieldModel::new(&f, "euler", 1, 1, &[4], 0).unwrap();
        let batch = vec![rec(vec![0.1, 0.1], 0.1, vec![0.1, 0.1]), rec(vec![0.1, 0.1], 0.1, vec![f64::NAN, 0.0])];
        match step_loss_and_grad(&m, &Stepper::by_name("euler").unwrap(), &batch) {
            Err(Error::Divergence { record }) => assert_eq!(record, 1),
            other => panic!("{other:?}"),
        }
        assert!(step_loss_and_grad(&m, &Stepper::by_name("euler").unwrap(), &[]).is_err());
    }

    #[test]
    fn gradients_match_differences_all_schemes() {
        let f = VectorFieldSpec::pendulum();
        for (scheme, p) in [("euler", 1), ("rk2", 2), ("midpoint", 2)] {
            let stepper = Stepper::by_name(scheme).unwrap();
            let m = ModifiedFieldModel::new(&f, scheme, p, 2, &[5, 5], 11).unwrap();
            let batch = vec![
                rec(vec![0.3, -0.5], 0.3, vec![0.35, -0.4]),
                rec(vec![-1.0, 1.2], 0.15, vec![-1.1, 1.05]),
                rec(vec![0.7, 0.2], 0.45, vec![0.6, 0.5]),
            ];
            let (loss, grad) = step_loss_and_grad(&m, &stepper, &batch).unwrap();
            assert!((dataset_loss(&m, &stepper, &batch).unwrap() - loss).abs() < 1e-12 * loss);
            let theta = m.flat_params();
            for k in (0..theta.len()).step_by(7) {
                let eps = 1e-6;
                let mut mp = m.clone();
                let mut tp = theta.clone();
                tp[k] += eps;
                mp.set_flat_params(&tp).unwrap();
                let lp = dataset_loss(&mp, &stepper, &batch).unwrap();
                tp[k] -= 2.0 * eps;
                mp.set_flat_params(&tp).unwrap();
                let lm = dataset_loss(&mp, &stepper, &batch).unwrap();
                let fd = (lp - lm) / (2.0 * eps);
                let scale = fd.abs().max(grad[k].abs()).max(1e-3 * loss);
                assert!((fd - grad[k]).abs() / scale < 1e-5, "{scheme} coord {k}: fd {fd} vs {}", grad[k]);
            }
        }
    }
}
