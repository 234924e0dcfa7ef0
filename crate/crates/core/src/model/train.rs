use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{ModelError, ModelParams, ModelState};
use crate::tensor::{argmax, sparse_ce, DropoutMask};
use crate::tone::LabeledExample;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: u64,
    /// Mean of the mini-batch losses.
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn final_train_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }

    /// CSV with header `epoch,train_loss,train_accuracy,val_loss,val_accuracy`.
    /// Values are printed with full round-trip precision.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("epoch,train_loss,train_accuracy,val_loss,val_accuracy\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.epoch,
                e.train_loss,
                e.train_accuracy,
                opt(e.val_loss),
                opt(e.val_accuracy)
            ));
        }
        out
    }
}

/// Runs `model.config.epochs` epochs of mini-batch Adam on `train_set`.
///
/// Each epoch reshuffles with the model's own random stream, then draws one
/// dropout mask per example in batch order. Per-example gradients are computed
/// in parallel and summed in example order, so results do not depend on the
/// thread count.
pub fn train(
    model: &mut ModelState,
    train_set: &[LabeledExample],
    val_set: &[LabeledExample],
) -> Result<TrainHistory, ModelError> {
    if train_set.is_empty() {
        return Err(ModelError::EmptyTrainSet);
    }
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for _ in 0..model.config.epochs {
        order.shuffle(&mut model.rng);
        let mut batch_losses = Vec::new();
        let mut correct = 0usize;
        for (b, batch) in order.chunks(model.config.batch_size).enumerate() {
            let masks: Vec<DropoutMask> = batch.iter().map(|_| model.sample_mask(true)).collect();
            let snapshot: &ModelState = model;
            let results = batch
                .par_iter()
                .zip(masks.par_iter())
                .map(|(&i, mask)| {
                    let ex = &train_set[i];
                    snapshot.loss_and_gradients(&ex.encoded, ex.label.code(), mask)
                })
                .collect::<Result<Vec<_>, _>>()?;

            let mut grad = model.params.zeros_like();
            let mut loss = 0.0;
            for (&i, (l, probs, g)) in batch.iter().zip(&results) {
                loss += l;
                if argmax(probs) == Some(train_set[i].label.code()) {
                    correct += 1;
                }
                grad.add_scaled(g, 1.0);
            }
            let n = batch.len() as f64;
            loss /= n;
            if !loss.is_finite() {
                return Err(ModelError::NonFiniteLoss {
                    epoch: model.epoch + 1,
                    batch: b,
                });
            }
            scale(&mut grad, 1.0 / n);
            let grads = grad.tensors();
            model.adam.step(&mut model.params.tensors_mut(), &grads)?;
            batch_losses.push(loss);
        }
        model.epoch += 1;
        let (val_loss, val_accuracy) = if val_set.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate_loss(model, val_set)?;
            (Some(l), Some(a))
        };
        history.epochs.push(EpochStats {
            epoch: model.epoch,
            train_loss: batch_losses.iter().sum::<f64>() / batch_losses.len() as f64,
            train_accuracy: correct as f64 / train_set.len() as f64,
            val_loss,
            val_accuracy,
        });
    }
    Ok(history)
}

fn scale(p: &mut ModelParams, s: f64) {
    for t in p.tensors_mut() {
        t.iter_mut().for_each(|v| *v *= s);
    }
}

/// Mean inference-mode loss and accuracy over a labeled set.
pub fn evaluate_loss(model: &ModelState, set: &[LabeledExample]) -> Result<(f64, f64), ModelError> {
    let rows = set
        .par_iter()
        .map(|ex| {
            let probs = model.predict_proba(&ex.encoded)?;
            let (loss, _) = sparse_ce(&probs, ex.label.code())?;
            Ok((loss, argmax(&probs) == Some(ex.label.code())))
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    let n = rows.len().max(1) as f64;
    let loss = rows.iter().map(|r| r.0).sum::<f64>() / n;
    let acc = rows.iter().filter(|r| r.1).count() as f64 / n;
    Ok((loss, acc))
}

/// Train, validation and test parts of a dataset.
pub type Split<T> = (Vec<T>, Vec<T>, Vec<T>);

/// Seeded shuffle followed by a contiguous split. Validation and test sizes
/// are `floor(n * ratio)`; the remainder goes to training.
pub fn split_dataset<T: Clone>(
    examples: &[T],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<Split<T>, ModelError> {
    let (tr, va, te) = ratios;
    let positive = [tr, va, te].iter().all(|r| *r > 0.0 && r.is_finite());
    if !positive || (tr + va + te - 1.0).abs() > 1e-9 {
        return Err(ModelError::InvalidRatios(ratios));
    }
    let n = examples.len();
    if n < 3 {
        return Err(ModelError::TooFewExamples(n));
    }
    let mut items = examples.to_vec();
    items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((n as f64) * va + 1e-9).floor() as usize;
    let n_test = ((n as f64) * te + 1e-9).floor() as usize;
    let test = items.split_off(n - n_test);
    let val = items.split_off(n - n_test - n_val);
    Ok((items, val, test))
}
