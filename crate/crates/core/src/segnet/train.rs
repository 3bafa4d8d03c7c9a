use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::Model;
use super::optim::{dice_ce_loss, Adam, AdamConfig};
use crate::synthdata::{normalize_zscore_nonzero, to_onehot, StoredCase};
use crate::tensorad::{BnMode, Scalar, Tape, Tensor};
use crate::{Error, Result};

const SPLIT_STREAM: u64 = 2;
const SHUFFLE_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Share of the cases held out for the validation loss.
    pub validation_fraction: f64,
    /// Random flips and quarter turns of each training sample.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            batch_size: 8,
            epochs: 25,
            seed: 42,
            validation_fraction: 0.2,
            augment: true,
        }
    }
}

impl TrainConfig {
    /// Batch size two, as in the full-scale protocol.
    pub fn full_scale() -> Self {
        TrainConfig {
            batch_size: 2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.adam.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid("batch size must be at least 2 for batch norm"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::invalid("validation fraction must lie strictly between 0 and 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveEntry {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossCurve {
    pub entries: Vec<CurveEntry>,
}

pub const CURVE_CSV_HEADER: &str = "epoch,train_loss,val_loss";

impl LossCurve {
    pub fn last(&self) -> Option<&CurveEntry> {
        self.entries.last()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CURVE_CSV_HEADER}")?;
        for e in &self.entries {
            writeln!(out, "{},{},{}", e.epoch, e.train_loss, e.val_loss)?;
        }
        Ok(())
    }
}

/// Disjoint, sorted case indices for training and validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Seeded shuffle of `0..n`; the first `round(fraction·n)` (at least one)
/// go to validation.
pub fn split_indices(n: usize, seed: u64, fraction: f64) -> Split {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SPLIT_STREAM);
    idx.shuffle(&mut rng);
    let n_val = ((fraction * n as f64).round() as usize).clamp(1.min(n), n);
    let mut validation = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    validation.sort_unstable();
    train.sort_unstable();
    Split { train, validation }
}

/// A normalised image (1, H, W) with its one-hot target (C, H, W).
#[derive(Debug, Clone, PartialEq)]
pub struct Example<T> {
    pub image: Tensor<T>,
    pub target: Tensor<T>,
}

pub fn prepare<T: Scalar>(cases: &[StoredCase], num_classes: usize) -> Result<Vec<Example<T>>> {
    cases
        .iter()
        .map(|c| {
            Ok(Example {
                image: normalize_zscore_nonzero(&c.image)?.cast(),
                target: to_onehot(&c.labels, num_classes)?,
            })
        })
        .collect()
}

/// Flips followed by `turns` counter-clockwise quarter turns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Augmentation {
    pub flip_rows: bool,
    pub flip_cols: bool,
    pub turns: u8,
}

impl Augmentation {
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        Augmentation {
            flip_rows: rng.gen(),
            flip_cols: rng.gen(),
            turns: rng.gen_range(0..4),
        }
    }

    /// Applies the transform to every (H, W) plane of a (C, H, W) tensor.
    pub fn apply<T: Scalar>(&self, t: &Tensor<T>) -> Tensor<T> {
        let s = t.shape();
        let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
        let turns = if h == w { self.turns % 4 } else { 0 };
        let mut out = t.clone();
        for (src, dst) in t.data().chunks_exact(h * w).zip(out.data_mut().chunks_exact_mut(h * w)) {
            for i in 0..h {
                for j in 0..w {
                    let (mut a, mut b) = (i, j);
                    for _ in 0..turns {
                        (a, b) = (b, h - 1 - a);
                    }
                    if self.flip_rows {
                        a = h - 1 - a;
                    }
                    if self.flip_cols {
                        b = w - 1 - b;
                    }
                    dst[i * w + j] = src[a * w + b];
                }
            }
        }
        out
    }
}

fn stack<T: Scalar>(parts: &[Tensor<T>]) -> Result<Tensor<T>> {
    let mut shape = vec![parts.len()];
    shape.extend_from_slice(parts[0].shape());
    let mut data = Vec::with_capacity(parts.len() * parts[0].len());
    for p in parts {
        if p.shape() != parts[0].shape() {
            return Err(Error::invalid("examples in a batch differ in shape"));
        }
        data.extend_from_slice(p.data());
    }
    Tensor::new(&shape, data)
}

/// Stacks examples into an image batch and a target batch.
pub fn batch<T: Scalar>(examples: &[&Example<T>], aug: Option<&[Augmentation]>) -> Result<(Tensor<T>, Tensor<T>)> {
    let pick = |i: usize, t: &Tensor<T>| match aug {
        Some(a) => a[i].apply(t),
        None => t.clone(),
    };
    let images: Vec<Tensor<T>> = examples.iter().enumerate().map(|(i, e)| pick(i, &e.image)).collect();
    let targets: Vec<Tensor<T>> = examples.iter().enumerate().map(|(i, e)| pick(i, &e.target)).collect();
    Ok((stack(&images)?, stack(&targets)?))
}

/// One optimiser step on a batch; returns the loss before the update.
/// `step` is only used in the non-finite diagnostic.
pub fn train_step<T: Scalar>(
    model: &mut Model<T>,
    adam: &mut Adam<T>,
    images: &Tensor<T>,
    targets: &Tensor<T>,
    step: usize,
) -> Result<f64> {
    let mut tape = Tape::new();
    let x = tape.constant(images.clone());
    let y = tape.constant(targets.clone());
    let fwd = model.forward(&mut tape, x, BnMode::Train, true)?;
    let loss = dice_ce_loss(&mut tape, fwd.logits, y)?;
    let value = tape.value(loss).data()[0].to_f64().unwrap_or(f64::NAN);
    let mut grads = tape.backward(loss)?;
    let grads: Vec<Tensor<T>> = fwd
        .params
        .iter()
        .zip(model.parameters())
        .map(|(&v, p)| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.value.shape())))
        .collect();
    let bad_grad = grads.iter().position(|g| !g.all_finite());
    if !value.is_finite() || bad_grad.is_some() {
        let block = model
            .parameters()
            .iter()
            .position(|p| !p.value.all_finite())
            .or(bad_grad)
            .map_or_else(|| "loss".to_string(), |i| model.parameters()[i].name.clone());
        return Err(Error::NonFinite { step, block });
    }
    adam.step(model.parameters_mut(), &grads)?;
    Ok(value)
}

/// Mean loss over `examples` with batch-norm in `mode`, no updates.
pub fn evaluate_loss<T: Scalar>(
    model: &mut Model<T>,
    examples: &[&Example<T>],
    batch_size: usize,
    mode: BnMode,
) -> Result<f64> {
    let mut total = 0.0;
    for chunk in examples.chunks(batch_size.max(1)) {
        let (x, y) = batch(chunk, None)?;
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let yv = tape.constant(y);
        let fwd = model.forward(&mut tape, xv, mode, false)?;
        let loss = dice_ce_loss(&mut tape, fwd.logits, yv)?;
        total += tape.value(loss).data()[0].to_f64().unwrap_or(f64::NAN) * chunk.len() as f64;
    }
    Ok(total / examples.len() as f64)
}

/// Trains with Adam on the training split, recording the mean training loss
/// and the validation loss (batch statistics) after every epoch.
pub fn train<T: Scalar>(
    model: &mut Model<T>,
    examples: &[Example<T>],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&CurveEntry),
) -> Result<LossCurve> {
    config.validate()?;
    let mut curve = LossCurve::default();
    if config.epochs == 0 {
        return Ok(curve);
    }
    let split = split_indices(examples.len(), config.seed, config.validation_fraction);
    if split.train.is_empty() || split.validation.is_empty() {
        return Err(Error::invalid(format!(
            "{} cases are too few for a training/validation split",
            examples.len()
        )));
    }
    let validation: Vec<&Example<T>> = split.validation.iter().map(|&i| &examples[i]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut adam = Adam::new(config.adam, model.parameters());
    let mut step = 0;
    for epoch in 1..=config.epochs {
        let mut order = split.train.clone();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let picked: Vec<&Example<T>> = chunk.iter().map(|&i| &examples[i]).collect();
            let augs: Option<Vec<Augmentation>> = config
                .augment
                .then(|| chunk.iter().map(|_| Augmentation::random(&mut rng)).collect());
            let (x, y) = batch(&picked, augs.as_deref())?;
            step += 1;
            total += train_step(model, &mut adam, &x, &y, step)? * chunk.len() as f64;
        }
        let val_loss = evaluate_loss(model, &validation, config.batch_size, BnMode::BatchStats)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite {
                step,
                block: "validation".into(),
            });
        }
        let entry = CurveEntry {
            epoch,
            train_loss: total / split.train.len() as f64,
            val_loss,
        };
        on_epoch(&entry);
        curve.entries.push(entry);
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_turn_and_flips() {
        let t = Tensor::new(&[1, 2, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let turn = Augmentation { turns: 1, ..Default::default() };
        assert_eq!(turn.apply(&t).data(), &[2.0, 4.0, 1.0, 3.0]);
        let four = Augmentation { turns: 4, ..Default::default() };
        assert_eq!(four.apply(&t), t);
        let flip = Augmentation { flip_cols: true, ..Default::default() };
        assert_eq!(flip.apply(&t).data(), &[2.0, 1.0, 4.0, 3.0]);
    }

    #[test]
    fn split_is_disjoint_and_seeded() {
        let s = split_indices(200, 42, 0.2);
        assert_eq!((s.train.len(), s.validation.len()), (160, 40));
        assert!(s.train.iter().all(|i| !s.validation.contains(i)));
        assert_eq!(s, split_indices(200, 42, 0.2));
        assert_ne!(s, split_indices(200, 43, 0.2));
    }
}
