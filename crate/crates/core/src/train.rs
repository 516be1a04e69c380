//! Mini-batch training with best-epoch checkpointing, and evaluation.

use std::fmt::Write as _;
use std::time::Instant;

use log::{debug, info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::DatasetFile;
use crate::metrics::{ConfusionMatrix, MetricsReport};
use crate::nn::loss::loss_and_grad;
use crate::nn::{argmax, Activation, AdamConfig, Architecture, Checkpoint, LayerParams, LossKind, Model, NnError, Pairing, Profile};
use crate::nn::Adam;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{0}")]
    Shape(String),
    #[error("{0} set is empty")]
    Empty(&'static str),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub arch: Architecture,
    pub loss: LossKind,
    pub optimizer: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Stop after this many epochs without a new best validation accuracy.
    /// `None` trains every epoch and keeps the best one.
    pub early_stop_patience: Option<usize>,
}

impl ModelConfig {
    pub fn new(profile: Profile, pairing: Pairing, class_count: usize) -> Self {
        let (output, loss) = pairing.head(class_count);
        ModelConfig {
            arch: Architecture::profile(profile, class_count, output, Activation::Relu),
            loss,
            optimizer: AdamConfig::default(),
            batch_size: 20,
            epochs: 50,
            seed: 0,
            early_stop_patience: None,
        }
    }

    pub fn class_count(&self) -> usize {
        self.arch.class_count()
    }
}

/// Model-ready inputs: row-major `len × input_len` values with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Examples {
    pub input_len: usize,
    pub class_count: usize,
    pub inputs: Vec<f32>,
    pub labels: Vec<usize>,
}

impl Examples {
    /// Bytes scaled to `[0, 1]` by dividing by 255.
    pub fn from_dataset(ds: &DatasetFile) -> Self {
        let inputs = ds.samples.iter().flat_map(|s| s.bytes.iter().map(|&b| scale_byte(b))).collect();
        Examples {
            input_len: ds.sample_len,
            class_count: ds.class_count(),
            inputs,
            labels: ds.samples.iter().map(|s| s.label as usize).collect(),
        }
    }

    pub fn from_rows(input_len: usize, class_count: usize, rows: &[Vec<f32>], labels: &[usize]) -> Self {
        assert_eq!(rows.len(), labels.len());
        assert!(rows.iter().all(|r| r.len() == input_len), "row length mismatch");
        Examples { input_len, class_count, inputs: rows.concat(), labels: labels.to_vec() }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f32] {
        &self.inputs[i * self.input_len..(i + 1) * self.input_len]
    }

    pub fn subset(&self, indices: &[usize]) -> Examples {
        let mut inputs = Vec::with_capacity(indices.len() * self.input_len);
        for &i in indices {
            inputs.extend_from_slice(self.input(i));
        }
        Examples {
            input_len: self.input_len,
            class_count: self.class_count,
            inputs,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

pub fn scale_byte(b: u8) -> f32 {
    b as f32 / 255.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch - 1]
    }

    /// Everything except wall-clock time, for comparing runs.
    pub fn trajectory(&self) -> Vec<[u64; 4]> {
        self.epochs
            .iter()
            .map(|e| [e.train_loss.to_bits(), e.train_accuracy.to_bits(), e.val_loss.to_bits(), e.val_accuracy.to_bits()])
            .collect()
    }

    pub fn table(&self) -> String {
        let mut s = String::from("epoch  train_loss  train_acc  val_loss  val_acc  seconds\n");
        for e in &self.epochs {
            let mark = if e.epoch == self.best_epoch { " *" } else { "" };
            let _ = writeln!(
                s,
                "{:>5}  {:>10.6}  {:>9.4}  {:>8.6}  {:>7.4}  {:>7.3}{mark}",
                e.epoch, e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy, e.seconds
            );
        }
        s
    }

    pub fn records(&self) -> String {
        let mut s = String::new();
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "record=epoch epoch={} train_loss={:.6} train_accuracy={:.6} val_loss={:.6} val_accuracy={:.6} seconds={:.6}",
                e.epoch, e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy, e.seconds
            );
        }
        let _ = writeln!(s, "record=best epoch={} val_accuracy={:.6}", self.best_epoch, self.best().val_accuracy);
        s
    }
}

/// 1-based index of the highest accuracy, earliest on ties.
pub fn select_best(val_accuracies: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &a) in val_accuracies.iter().enumerate() {
        if best.is_none_or(|(_, b)| a > b) {
            best = Some((i, a));
        }
    }
    best.map(|(i, _)| i + 1)
}

fn check_examples(model_input: usize, classes: usize, ex: &Examples, what: &str) -> Result<(), TrainError> {
    if ex.input_len != model_input {
        return Err(TrainError::Shape(format!("{what} samples have length {}, model expects {model_input}", ex.input_len)));
    }
    if ex.class_count != classes {
        return Err(TrainError::Shape(format!("{what} set has {} classes, model has {classes}", ex.class_count)));
    }
    if let Some(&bad) = ex.labels.iter().find(|&&l| l >= classes) {
        return Err(TrainError::Shape(format!("{what} label {bad} out of range for {classes} classes")));
    }
    Ok(())
}

/// Summed parameter gradients, loss and correct count over a batch.
fn batch_gradients(
    model: &Model,
    loss: LossKind,
    ex: &Examples,
    batch: &[usize],
) -> Result<(Vec<LayerParams>, f64, usize), TrainError> {
    let activation = model.arch.output_activation();
    type SampleGrad = Result<(Vec<LayerParams>, f32, bool), NnError>;
    let per_sample: Vec<SampleGrad> = batch
        .par_iter()
        .map(|&i| {
            let cache = model.forward_train(ex.input(i))?;
            let probs = cache.output();
            let (value, grad_logits) = loss_and_grad(probs, ex.labels[i], loss, activation)?;
            let correct = argmax(probs) == ex.labels[i];
            Ok((model.backward(&cache, &grad_logits).0, value, correct))
        })
        .collect();
    // summed in batch order so results do not depend on thread scheduling
    let mut total: Option<Vec<LayerParams>> = None;
    let (mut loss_sum, mut correct) = (0.0f64, 0usize);
    for r in per_sample {
        let (grads, value, ok) = r?;
        loss_sum += value as f64;
        correct += ok as usize;
        match &mut total {
            None => total = Some(grads),
            Some(acc) => {
                for (a, g) in acc.iter_mut().zip(&grads) {
                    a.weights.iter_mut().zip(&g.weights).for_each(|(x, y)| *x += y);
                    a.bias.iter_mut().zip(&g.bias).for_each(|(x, y)| *x += y);
                }
            }
        }
    }
    let mut grads = total.expect("batches are non-empty");
    let scale = 1.0 / batch.len() as f32;
    for g in &mut grads {
        g.weights.iter_mut().chain(g.bias.iter_mut()).for_each(|v| *v *= scale);
    }
    Ok((grads, loss_sum, correct))
}

/// Output vectors for every example, in order.
pub fn predict_all(model: &Model, ex: &Examples) -> Result<Vec<Vec<f32>>, NnError> {
    (0..ex.len()).into_par_iter().map(|i| model.forward(ex.input(i))).collect()
}

fn loss_and_accuracy(model: &Model, loss: LossKind, ex: &Examples) -> Result<(f64, f64), TrainError> {
    let outputs = predict_all(model, ex)?;
    let activation = model.arch.output_activation();
    let (mut total, mut correct) = (0.0f64, 0usize);
    for (probs, &label) in outputs.iter().zip(&ex.labels) {
        total += loss_and_grad(probs, label, loss, activation)?.0 as f64;
        correct += (argmax(probs) == label) as usize;
    }
    let n = ex.len().max(1) as f64;
    Ok((total / n, correct as f64 / n))
}

/// Trains from a seeded initialisation and returns the weights of the epoch
/// with the best validation accuracy.
pub fn train(config: &ModelConfig, train_set: &Examples, val_set: &Examples) -> Result<(Checkpoint, TrainHistory), TrainError> {
    if train_set.is_empty() {
        return Err(TrainError::Empty("training"));
    }
    if val_set.is_empty() {
        return Err(TrainError::Empty("validation"));
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(TrainError::Shape("batch size and epochs must be at least 1".into()));
    }
    let mut model = Model::init(config.arch.clone(), config.seed)?;
    let classes = model.class_count();
    check_examples(model.input_len(), classes, train_set, "training")?;
    check_examples(model.input_len(), classes, val_set, "validation")?;
    let mut present = vec![false; classes];
    train_set.labels.iter().for_each(|&l| present[l] = true);
    for (c, _) in present.iter().enumerate().filter(|(_, p)| !**p) {
        warn!("class {c} does not occur in the training set");
    }

    let mut adam = Adam::new(config.optimizer, &model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Model)> = None;
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for batch in order.chunks(config.batch_size) {
            let (grads, l, c) = batch_gradients(&model, config.loss, train_set, batch)?;
            loss_sum += l;
            correct += c;
            adam.step(&mut model.params, &grads);
        }
        let (val_loss, val_accuracy) = loss_and_accuracy(&model, config.loss, val_set)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_accuracy: correct as f64 / train_set.len() as f64,
            val_loss,
            val_accuracy,
            seconds: start.elapsed().as_secs_f64(),
        };
        debug!(
            "epoch {epoch}/{}: loss {:.4} acc {:.4} val_loss {:.4} val_acc {:.4}",
            config.epochs, record.train_loss, record.train_accuracy, val_loss, val_accuracy
        );
        epochs.push(record);
        if best.as_ref().is_none_or(|(_, a, _)| val_accuracy > *a) {
            best = Some((epoch, val_accuracy, model.clone()));
        }
        if let (Some(patience), Some((best_epoch, _, _))) = (config.early_stop_patience, &best) {
            if epoch - best_epoch >= patience && epoch < config.epochs {
                info!("no improvement for {patience} epochs, stopping after epoch {epoch}");
                stopped_early = true;
                break;
            }
        }
    }

    let (best_epoch, best_acc, best_model) = best.expect("at least one epoch ran");
    debug_assert_eq!(select_best(&epochs.iter().map(|e| e.val_accuracy).collect::<Vec<_>>()), Some(best_epoch));
    let checkpoint = Checkpoint { model: best_model, best_epoch: best_epoch as u32, best_val_accuracy: best_acc as f32 };
    Ok((checkpoint, TrainHistory { epochs, best_epoch, stopped_early }))
}

pub fn evaluate(model: &Model, ex: &Examples) -> Result<MetricsReport, TrainError> {
    check_examples(model.input_len(), model.class_count(), ex, "evaluation")?;
    let predicted: Vec<usize> = predict_all(model, ex)?.iter().map(|p| argmax(p)).collect();
    let confusion = ConfusionMatrix::from_predictions(model.class_count(), &ex.labels, &predicted);
    Ok(MetricsReport::from_confusion(confusion))
}

/// Class and output vector for one raw sample.
pub fn predict(model: &Model, sample: &[u8]) -> Result<(usize, Vec<f32>), NnError> {
    let x: Vec<f32> = sample.iter().map(|&b| scale_byte(b)).collect();
    debug_assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
    let probs = model.forward(&x)?;
    Ok((argmax(&probs), probs))
}
