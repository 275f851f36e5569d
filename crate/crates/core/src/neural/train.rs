use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::mse_batch;
use super::mlp::{Activation, Mlp};
use super::optim::{Adam, AdamConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 50,
            patience: 5,
            batch_size: 64,
            seed: 0,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.patience == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "epochs, patience and batch size must be positive".into(),
            ));
        }
        if self.patience > self.max_epochs {
            return Err(Error::InvalidParameter(format!(
                "patience {} exceeds max epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "validation fraction {} must lie in (0, 1)",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub initial_train_loss: f64,
    pub initial_validation_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (1-based; 0 means the initial ones).
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn final_train_loss(&self) -> f64 {
        self.epochs
            .last()
            .map_or(self.initial_train_loss, |e| e.train_loss)
    }

    pub fn epochs_run(&self) -> usize {
        self.epochs.len()
    }
}

pub(crate) enum StopSignal {
    Continue,
    Stop,
}

/// Patience-based early stopping on a validation metric.
pub(crate) struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub(crate) fn new(patience: usize, initial: f64) -> Self {
        Self {
            patience,
            best: initial,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Returns whether the epoch improved and whether to stop.
    pub(crate) fn observe(&mut self, epoch: usize, validation: f64) -> (bool, StopSignal) {
        if validation < self.best {
            self.best = validation;
            self.best_epoch = epoch;
            self.since_best = 0;
            (true, StopSignal::Continue)
        } else {
            self.since_best += 1;
            let signal = if self.since_best >= self.patience {
                StopSignal::Stop
            } else {
                StopSignal::Continue
            };
            (false, signal)
        }
    }

    pub(crate) fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

pub(crate) fn check_finite(loss: f64, what: &str) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::Divergence(format!("{what} loss became {loss}")))
    }
}

/// Deterministic shuffle-and-split of `0..n` into (train, validation).
pub(crate) fn split_indices(
    n: usize,
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let n_val = ((n as f64 * fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let train = idx.split_off(n_val);
    (train, idx)
}

/// Encoder/decoder pair trained to reconstruct its input.
#[derive(Debug, Clone)]
pub struct Autoencoder {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub history: TrainHistory,
}

impl Autoencoder {
    pub fn encode(&self, data: ArrayView2<f64>) -> Result<ndarray::Array2<f64>> {
        self.encoder.forward_batch(data)
    }
}

fn reconstruction_loss(encoder: &Mlp, decoder: &Mlp, data: ArrayView2<f64>) -> Result<f64> {
    let code = encoder.forward_batch(data)?;
    let out = decoder.forward_batch(code.view())?;
    Ok(mse_batch(out.view(), data)?.0)
}

/// Trains an autoencoder whose encoder has sizes `layers` (starting with the
/// data dimension) and whose decoder mirrors it. Keeps the parameters from
/// the epoch with the lowest validation loss.
pub fn train_autoencoder(
    data: ArrayView2<f64>,
    layers: &[usize],
    config: &TrainConfig,
    optimizer: &AdamConfig,
) -> Result<Autoencoder> {
    config.validate()?;
    if layers.len() < 2 {
        return Err(Error::Shape(format!(
            "autoencoder needs at least two sizes, got {layers:?}"
        )));
    }
    if layers[0] != data.ncols() {
        return Err(Error::Shape(format!(
            "first layer size {} differs from data dimension {}",
            layers[0],
            data.ncols()
        )));
    }
    let rows = data.nrows();
    if rows < 2 * config.batch_size {
        return Err(Error::InsufficientData(format!(
            "{rows} rows cannot fill two batches of {}",
            config.batch_size
        )));
    }
    let mirrored: Vec<usize> = layers.iter().rev().copied().collect();
    let mut encoder = Mlp::init(
        layers,
        Activation::Relu,
        config.seed.wrapping_mul(2).wrapping_add(11),
    )?;
    let mut decoder = Mlp::init(
        &mirrored,
        Activation::Relu,
        config.seed.wrapping_mul(2).wrapping_add(12),
    )?;
    let mut enc_opt = Adam::for_mlp(*optimizer, &encoder)?;
    let mut dec_opt = Adam::for_mlp(*optimizer, &decoder)?;

    let mut split_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut batch_rng = ChaCha8Rng::seed_from_u64(config.seed);
    batch_rng.set_stream(1);
    let (mut train_idx, val_idx) = split_indices(rows, config.validation_fraction, &mut split_rng);
    let val = data.select(Axis(0), &val_idx);
    let train_all = data.select(Axis(0), &train_idx);

    let initial_train = check_finite(
        reconstruction_loss(&encoder, &decoder, train_all.view())?,
        "train",
    )?;
    let initial_val = check_finite(
        reconstruction_loss(&encoder, &decoder, val.view())?,
        "validation",
    )?;
    let mut stopper = EarlyStopping::new(config.patience, initial_val);
    let mut best = (encoder.clone(), decoder.clone());
    let mut history = TrainHistory {
        initial_train_loss: initial_train,
        initial_validation_loss: initial_val,
        epochs: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
    };

    for epoch in 1..=config.max_epochs {
        train_idx.shuffle(&mut batch_rng);
        let mut weighted = 0.0;
        for chunk in train_idx.chunks(config.batch_size) {
            let batch = data.select(Axis(0), chunk);
            let enc_cache = encoder.forward_cached(batch.view())?;
            let dec_cache = decoder.forward_cached(enc_cache.output().view())?;
            let (loss, grad_out) = mse_batch(dec_cache.output().view(), batch.view())?;
            check_finite(loss, "train")?;
            weighted += loss * chunk.len() as f64;
            let (dec_grads, grad_code) = decoder.backward(&dec_cache, grad_out.view())?;
            let (enc_grads, _) = encoder.backward(&enc_cache, grad_code.view())?;
            dec_opt.step_mlp(&mut decoder, &dec_grads)?;
            enc_opt.step_mlp(&mut encoder, &enc_grads)?;
        }
        let train_loss = weighted / train_idx.len() as f64;
        let val_loss = check_finite(
            reconstruction_loss(&encoder, &decoder, val.view())?,
            "validation",
        )?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            validation_loss: val_loss,
        });
        let (improved, signal) = stopper.observe(epoch, val_loss);
        if improved {
            best = (encoder.clone(), decoder.clone());
        }
        if let StopSignal::Stop = signal {
            history.stopped_early = epoch < config.max_epochs;
            break;
        }
    }
    history.best_epoch = stopper.best_epoch();
    Ok(Autoencoder {
        encoder: best.0,
        decoder: best.1,
        history,
    })
}
