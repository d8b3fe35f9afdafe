//! Mini-batch SGD over prepared crops and flat head targets.
//!
//! Batches are parallelized over a fixed number of chunks whose partial
//! gradients are summed in chunk order, so a run is bit-reproducible for
//! a given seed regardless of the thread count.

use super::image_to_tensor;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::net::{l2_loss, sgd_step, NetGradients, RegressionNet, SgdConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

const GRAD_CHUNKS: usize = 8;

#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub lr: f64,
    pub batch: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Epochs without relative improvement before the rate drops.
    pub plateau_patience: usize,
    /// Relative improvement below this counts as a plateau.
    pub plateau_threshold: f64,
    pub plateau_factor: f64,
    /// Fraction of samples held out to drive the plateau schedule.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            lr: 0.0005,
            batch: 128,
            momentum: 0.9,
            weight_decay: 0.0005,
            epochs: 50,
            plateau_patience: 5,
            plateau_threshold: 1e-4,
            plateau_factor: 10.0,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

/// Net-input-sized crops with their flat head targets.
pub struct TrainSet {
    pub inputs: Vec<Image>,
    pub targets: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub lr: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainRecord {
    pub epochs: Vec<EpochStats>,
}

fn sample_gradient(
    net: &RegressionNet,
    input: &Image,
    target: &[f64],
) -> Result<(f64, NetGradients)> {
    let x = image_to_tensor(input);
    let pass = net.forward(&x)?;
    let t = crate::tensor::Tensor::flat(target.to_vec());
    let (loss, lgrad) = l2_loss(pass.output(), &t)?;
    let grads = net.backward(&pass, &lgrad)?;
    Ok((loss, grads))
}

fn sample_loss(net: &RegressionNet, input: &Image, target: &[f64]) -> Result<f64> {
    let x = image_to_tensor(input);
    let pass = net.forward(&x)?;
    let t = crate::tensor::Tensor::flat(target.to_vec());
    Ok(l2_loss(pass.output(), &t)?.0)
}

fn mean_loss(net: &RegressionNet, set: &TrainSet, indices: &[usize]) -> Result<f64> {
    let losses: Vec<Result<f64>> = indices
        .par_iter()
        .map(|&i| sample_loss(net, &set.inputs[i], &set.targets[i]))
        .collect();
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / indices.len().max(1) as f64)
}

/// Trains in place, minimizing the batch-averaged summed l2 loss, and
/// returns the per-epoch loss record for plateau audits. `on_epoch` fires
/// after every epoch with the fresh statistics.
pub fn train(
    net: &mut RegressionNet,
    set: &TrainSet,
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainRecord> {
    let n = set.inputs.len();
    if n == 0 {
        return Err(Error::EmptyInput("training set"));
    }
    if set.targets.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: set.targets.len(),
        });
    }
    let head = net.config().output_len()?;
    for (i, t) in set.targets.iter().enumerate() {
        if t.len() != head {
            return Err(Error::InvalidConfig(format!(
                "target {i} has {} values, head width is {head}",
                t.len()
            )));
        }
    }
    if opts.batch == 0 || opts.epochs == 0 {
        return Err(Error::InvalidConfig("batch and epochs must be >= 1".into()));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng);
    let n_val = ((n as f64 * opts.val_fraction).round() as usize).min(n.saturating_sub(1));
    let (train_idx, val_idx) = indices.split_at(n - n_val);
    let mut train_idx = train_idx.to_vec();
    let val_idx = val_idx.to_vec();

    let mut lr = opts.lr;
    let mut best = f64::INFINITY;
    let mut stale = 0usize;
    let mut record = TrainRecord::default();

    for epoch in 0..opts.epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        for (step, batch) in train_idx.chunks(opts.batch).enumerate() {
            // Fixed chunking keeps the summation order independent of the
            // worker pool.
            let chunk = batch.len().div_ceil(GRAD_CHUNKS).max(1);
            let partials: Vec<Result<(f64, NetGradients)>> = batch
                .par_chunks(chunk)
                .map(|ids| {
                    let mut acc: Option<NetGradients> = None;
                    let mut loss = 0.0;
                    for &i in ids {
                        let (l, g) = sample_gradient(net, &set.inputs[i], &set.targets[i])?;
                        loss += l;
                        match acc.as_mut() {
                            Some(a) => a.add_scaled(&g, 1.0),
                            None => acc = Some(g),
                        }
                    }
                    Ok((loss, acc.expect("chunks are non-empty")))
                })
                .collect();
            let mut batch_loss = 0.0f64;
            let mut total: Option<NetGradients> = None;
            for p in partials {
                let (l, g) = p?;
                batch_loss += l;
                match total.as_mut() {
                    Some(t) => t.add_scaled(&g, 1.0),
                    None => total = Some(g),
                }
            }
            let mut total = total.expect("batch is non-empty");
            total.scale(1.0 / batch.len() as f64);
            batch_loss /= batch.len() as f64;
            if !batch_loss.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "non-finite loss at epoch {epoch}, step {step}"
                )));
            }
            epoch_loss += batch_loss * batch.len() as f64;
            let cfg = SgdConfig {
                lr,
                momentum: opts.momentum,
                weight_decay: opts.weight_decay,
            };
            sgd_step(net, &total, &cfg)?;
        }
        let train_loss = epoch_loss / train_idx.len() as f64;
        let val_loss = if val_idx.is_empty() {
            None
        } else {
            Some(mean_loss(net, set, &val_idx)?)
        };

        let monitored = val_loss.unwrap_or(train_loss);
        if monitored < best * (1.0 - opts.plateau_threshold) {
            best = monitored;
            stale = 0;
        } else {
            stale += 1;
            if stale >= opts.plateau_patience {
                lr /= opts.plateau_factor;
                stale = 0;
            }
        }

        let stats = EpochStats {
            epoch,
            train_loss,
            val_loss,
            lr,
        };
        on_epoch(&stats);
        record.epochs.push(stats);
    }
    Ok(record)
}
