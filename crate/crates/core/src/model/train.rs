use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::softmax_rows;
use super::{softmax_xent, AdamConfig, AdamState, Graph, Model, ModelError, Tensor, N_CLASSES};

/// Labeled single-channel images addressed by index.
pub trait ImageSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(height, width)`, shared by every image.
    fn image_size(&self) -> (usize, usize);

    fn label(&self, i: usize) -> usize;

    /// Writes image `i` row-major into `out` (length `height * width`).
    fn load_into(&self, i: usize, out: &mut [f64]) -> Result<(), ModelError>;
}

/// Images held in memory as `f32`.
#[derive(Debug, Clone, Default)]
pub struct InMemoryImages {
    height: usize,
    width: usize,
    pixels: Vec<Vec<f32>>,
    labels: Vec<usize>,
}

impl InMemoryImages {
    pub fn new(height: usize, width: usize) -> Self {
        InMemoryImages {
            height,
            width,
            pixels: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn push(&mut self, pixels: &[f64], label: usize) {
        assert_eq!(pixels.len(), self.height * self.width, "image size");
        assert!(label < N_CLASSES, "label {label}");
        self.pixels.push(pixels.iter().map(|&p| p as f32).collect());
        self.labels.push(label);
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

impl ImageSource for InMemoryImages {
    fn len(&self) -> usize {
        self.labels.len()
    }

    fn image_size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    fn load_into(&self, i: usize, out: &mut [f64]) -> Result<(), ModelError> {
        for (o, &p) in out.iter_mut().zip(&self.pixels[i]) {
            *o = f64::from(p);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Images per forward/backward pass; gradients are summed up to `batch_size`.
    pub micro_batch: usize,
    pub early_stop: bool,
    pub patience: usize,
    pub min_rel_improvement: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 500,
            max_epochs: 20,
            lr: 1e-4,
            seed: 0,
            micro_batch: 16,
            early_stop: true,
            patience: 3,
            min_rel_improvement: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub stopped_early: bool,
}

impl TrainReport {
    /// CSV with columns `epoch,mean_loss,train_accuracy`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "mean_loss", "train_accuracy"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.mean_loss.to_string(),
                e.train_accuracy.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn batch_tensor<S: ImageSource + ?Sized>(src: &S, idx: &[usize]) -> Result<Tensor, ModelError> {
    let (h, w) = src.image_size();
    let mut x = Tensor::zeros(&[idx.len(), 1, h, w]);
    for (slot, &i) in x.data.chunks_mut(h * w).zip(idx) {
        src.load_into(i, slot)?;
    }
    Ok(x)
}

fn argmax(row: &[f64]) -> usize {
    // strict comparison keeps the first (lowest) index on ties
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Mini-batch Adam on softmax cross-entropy. Single-threaded; the same seed
/// and data give bitwise-identical parameters.
pub fn train<S: ImageSource + ?Sized>(
    model: &mut Model,
    data: &S,
    cfg: &TrainConfig,
) -> Result<TrainReport, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let batch_size = cfg.batch_size.max(1);
    let micro = cfg.micro_batch.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(
        &model.params,
        AdamConfig {
            lr: cfg.lr,
            ..Default::default()
        },
    );
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport::default();
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (b, batch) in order.chunks(batch_size).enumerate() {
            let mut grads = model.zero_grads();
            for chunk in batch.chunks(micro) {
                let x = batch_tensor(data, chunk)?;
                let labels: Vec<usize> = chunk.iter().map(|&i| data.label(i)).collect();
                let mut graph = Graph::new(model);
                let logits = graph.forward(&x)?;
                if !logits.all_finite() {
                    return Err(ModelError::NonFinite { epoch, batch: b });
                }
                let (loss, mut dl) = softmax_xent(&logits, &labels);
                loss_sum += loss * chunk.len() as f64;
                correct += logits
                    .data
                    .chunks(N_CLASSES)
                    .zip(&labels)
                    .filter(|(row, &l)| argmax(row) == l)
                    .count();
                // rescale the micro-batch mean to the full-batch mean
                dl.scale(chunk.len() as f64 / batch.len() as f64);
                let (g, _) = graph.backward(&dl)?;
                for (acc, gi) in grads.iter_mut().zip(&g) {
                    acc.add_assign(gi);
                }
            }
            adam.step(&mut model.params, &grads)?;
            if !model.params.iter().all(Tensor::all_finite) {
                return Err(ModelError::NonFinite { epoch, batch: b });
            }
        }
        let n = data.len() as f64;
        let entry = EpochLog {
            epoch,
            mean_loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
        };
        log::info!(
            "epoch {epoch}: loss {:.6} accuracy {:.4}",
            entry.mean_loss,
            entry.train_accuracy
        );
        report.epochs.push(entry);
        if cfg.early_stop && plateaued(&report.epochs, cfg.patience, cfg.min_rel_improvement) {
            report.stopped_early = true;
            break;
        }
    }
    Ok(report)
}

fn plateaued(log: &[EpochLog], patience: usize, min_rel: f64) -> bool {
    if patience == 0 || log.len() <= patience {
        return false;
    }
    let then = log[log.len() - 1 - patience].mean_loss;
    let now = log[log.len() - 1].mean_loss;
    then > 0.0 && (then - now) / then < min_rel
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: usize,
    pub probs: [f64; N_CLASSES],
}

/// Argmax class and softmax probabilities for an `N x 1 x H x W` batch.
pub fn predict(model: &Model, x: &Tensor) -> Result<Vec<Prediction>, ModelError> {
    let logits = model.forward(x)?;
    let rows = softmax_rows(&logits);
    Ok(logits
        .data
        .chunks(N_CLASSES)
        .zip(rows)
        .map(|(row, p)| {
            let mut probs = [0.0; N_CLASSES];
            probs.copy_from_slice(&p);
            Prediction {
                class: argmax(row),
                probs,
            }
        })
        .collect())
}

/// Predictions for every image of a source, in order. Chunks run in parallel.
pub fn predict_source<S: ImageSource + ?Sized>(
    model: &Model,
    src: &S,
) -> Result<Vec<Prediction>, ModelError> {
    let idx: Vec<usize> = (0..src.len()).collect();
    let parts: Result<Vec<Vec<Prediction>>, ModelError> = idx
        .par_chunks(8)
        .map(|chunk| predict(model, &batch_tensor(src, chunk)?))
        .collect();
    Ok(parts?.into_iter().flatten().collect())
}
