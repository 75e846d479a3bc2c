use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::dataset::{DatasetRecord, STREAM_EPOCH};
use crate::error::{Error, Result};
use crate::integrators::Stepper;
use crate::neural::{dataset_loss, fmt17, step_loss_and_grad, AdamState, ModifiedFieldModel};

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss_train: f64,
    pub loss_test: f64,
    pub seconds: f64,
}

/// Full-set train and test losses before training and after every epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub initial_train: f64,
    pub initial_test: f64,
    pub epochs: Vec<EpochLoss>,
}

impl LossReport {
    pub fn final_train(&self) -> f64 {
        self.epochs.last().map_or(self.initial_train, |e| e.loss_train)
    }

    pub fn final_test(&self) -> f64 {
        self.epochs.last().map_or(self.initial_test, |e| e.loss_test)
    }

    /// Equality of every loss value, ignoring wall-clock times.
    pub fn same_losses(&self, other: &LossReport) -> bool {
        self.initial_train.to_bits() == other.initial_train.to_bits()
            && self.initial_test.to_bits() == other.initial_test.to_bits()
            && self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.loss_train.to_bits() == b.loss_train.to_bits()
                    && a.loss_test.to_bits() == b.loss_test.to_bits()
            })
    }

    /// CSV with columns `epoch,loss_train,loss_test,seconds`; epoch 0 holds
    /// the initial losses. `comments` become leading `# ` lines.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "epoch,loss_train,loss_test,seconds")?;
        writeln!(out, "0,{},{},0", fmt17(self.initial_train), fmt17(self.initial_test))?;
        for e in &self.epochs {
            writeln!(out, "{},{},{},{:.6}", e.epoch, fmt17(e.loss_train), fmt17(e.loss_test), e.seconds)?;
        }
        Ok(())
    }
}

/// Mini-batch Adam on the one-step loss. Batches are drawn from a fresh
/// seeded permutation each epoch; losses over the full train and test sets
/// are recorded after every epoch.
pub fn train(
    model: ModifiedFieldModel,
    stepper: &Stepper,
    train_set: &[DatasetRecord],
    test_set: &[DatasetRecord],
    cfg: &TrainConfig,
) -> Result<(ModifiedFieldModel, LossReport)> {
    train_with(model, stepper, train_set, test_set, cfg, |_, _| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with<F>(
    mut model: ModifiedFieldModel,
    stepper: &Stepper,
    train_set: &[DatasetRecord],
    test_set: &[DatasetRecord],
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<(ModifiedFieldModel, LossReport)>
where
    F: FnMut(usize, &ModifiedFieldModel),
{
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    if cfg.epochs > 0 && train_set.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let diverged = |epoch| move |e: Error| match e {
        Error::Divergence { .. } => Error::TrainingDiverged { epoch, batch: 0 },
        other => other,
    };
    let mut report = LossReport {
        initial_train: dataset_loss(&model, stepper, train_set).map_err(diverged(0))?,
        initial_test: dataset_loss(&model, stepper, test_set).map_err(diverged(0))?,
        epochs: Vec::with_capacity(cfg.epochs),
    };
    let mut adam = AdamState::new(model.n_params(), cfg.learning_rate, cfg.weight_decay);
    let mut params = model.flat_params();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(STREAM_EPOCH + epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);
        for (b, ids) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<DatasetRecord> = ids.iter().map(|&i| train_set[i].clone()).collect();
            let (_, grad) = step_loss_and_grad(&model, stepper, &batch).map_err(|e| match e {
                Error::Divergence { .. } => Error::TrainingDiverged { epoch, batch: b },
                other => other,
            })?;
            adam.update(&mut params, &grad)?;
            if params.iter().any(|v| !v.is_finite()) {
                return Err(Error::TrainingDiverged { epoch, batch: b });
            }
            model.set_flat_params(&params)?;
        }
        let loss_train = dataset_loss(&model, stepper, train_set).map_err(diverged(epoch))?;
        let loss_test = dataset_loss(&model, stepper, test_set).map_err(diverged(epoch))?;
        let seconds = start.elapsed().as_secs_f64();
        if cfg.print_period > 0 && epoch % cfg.print_period == 0 {
            log::info!("epoch {epoch}: loss_train {loss_train:.3e}, loss_test {loss_test:.3e} ({seconds:.2} s)");
        }
        report.epochs.push(EpochLoss {
            epoch,
            loss_train,
            loss_test,
            seconds,
        });
        on_epoch(epoch, &model);
    }
    Ok((model, report))
}
