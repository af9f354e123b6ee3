//! Mini-batch SGD with momentum shared by the masked and plain autoencoders.

use rand::seq::index;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::MaeConfig;
use super::model::MaeModel;
use super::scaler::BandScaler;
use super::tokens::{random_mask, tokenize, TokenSequence};
use super::{MaeError, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// Row 0 is the untrained model; row `e` follows epoch `e`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub rows: Vec<LossRow>,
}

impl LossCurve {
    pub fn initial_train_loss(&self) -> f64 {
        self.rows[0].train_loss
    }

    pub fn final_train_loss(&self) -> f64 {
        self.rows[self.rows.len() - 1].train_loss
    }

    pub fn final_val_loss(&self) -> Option<f64> {
        self.rows[self.rows.len() - 1].val_loss
    }

    /// `epoch,train_loss,val_loss`, shortest round-trip float formatting.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, r.val_loss.map(|v| v.to_string()).unwrap_or_default()));
        }
        s
    }
}

pub(crate) trait Objective {
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    /// Loss of `sample` as seen in training epoch `epoch` (0 = before training).
    fn loss(&self, sample: usize, epoch: usize) -> f64;
    /// Adds `scale * gradient` into `grad` and returns the loss.
    fn loss_grad(&self, sample: usize, epoch: usize, scale: f64, grad: &mut [f64]) -> f64;
    fn val_loss(&self, sample: usize) -> f64;
}

const SPLIT_STREAM: u64 = 0x53504c54;
const SHUFFLE_STREAM: u64 = 0x53485546;

/// Holds out `floor(val_fraction * n)` samples (at least one left for
/// training) and returns `(train, val)` index lists.
pub(crate) fn holdout(n: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let n_val = ((val_fraction * n as f64).floor() as usize).min(n.saturating_sub(1));
    let mut val: Vec<usize> = index::sample(&mut rng::stream(seed, &[SPLIT_STREAM]), n, n_val).into_vec();
    val.sort_unstable();
    let mut is_val = vec![false; n];
    val.iter().for_each(|&i| is_val[i] = true);
    ((0..n).filter(|&i| !is_val[i]).collect(), val)
}

fn mean_loss<O: Objective>(obj: &O, samples: &[usize], f: impl Fn(&O, usize) -> f64) -> f64 {
    samples.iter().map(|&i| f(obj, i)).sum::<f64>() / samples.len() as f64
}

pub(crate) fn fit<O: Objective>(obj: &mut O, n: usize, opt: &OptimConfig) -> Result<LossCurve> {
    if n == 0 {
        return Err(MaeError::Data("empty training set".into()));
    }
    let (train, val) = holdout(n, opt.val_fraction, opt.seed);
    let eval_val = |o: &O| (!val.is_empty()).then(|| mean_loss(o, &val, |o, i| o.val_loss(i)));
    let mut curve = LossCurve::default();
    let initial = mean_loss(obj, &train, |o, i| o.loss(i, 0));
    if !initial.is_finite() {
        return Err(MaeError::Divergence { epoch: 0 });
    }
    curve.rows.push(LossRow { epoch: 0, train_loss: initial, val_loss: eval_val(obj) });
    let mut velocity = vec![0.0; obj.params().len()];
    let mut grad = vec![0.0; obj.params().len()];
    for epoch in 1..=opt.epochs {
        let mut order = train.clone();
        order.shuffle(&mut rng::stream(opt.seed, &[SHUFFLE_STREAM, epoch as u64]));
        let mut losses = vec![0.0; n];
        for batch in order.chunks(opt.batch_size.max(1)) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                losses[i] = obj.loss_grad(i, epoch, scale, &mut grad);
            }
            if batch.iter().any(|&i| !losses[i].is_finite()) {
                return Err(MaeError::Divergence { epoch });
            }
            for ((p, g), v) in obj.params_mut().iter_mut().zip(&grad).zip(velocity.iter_mut()) {
                *v = opt.momentum * *v + g + opt.weight_decay * *p;
                *p -= opt.learning_rate * *v;
            }
        }
        if obj.params().iter().any(|p| !p.is_finite()) {
            return Err(MaeError::Divergence { epoch });
        }
        // Summed in sample order so the reported loss does not depend on the shuffle.
        let total: f64 = train.iter().map(|&i| losses[i]).sum();
        curve.rows.push(LossRow { epoch, train_loss: total / train.len() as f64, val_loss: eval_val(obj) });
    }
    Ok(curve)
}

const MASK_STREAM: u64 = 0x4d41534b;
const VAL_MASK_STREAM: u64 = 0x564d534b;

struct MaeObjective<'a> {
    model: MaeModel,
    seqs: &'a [TokenSequence],
}

impl MaeObjective<'_> {
    fn masked(&self, sample: usize, epoch: usize) -> TokenSequence {
        let key = if self.model.config.resample_masks { epoch as u64 } else { 0 };
        let mut r = rng::stream(self.model.config.seed, &[MASK_STREAM, key, sample as u64]);
        random_mask(&self.seqs[sample], self.model.config.mask_ratio, &mut r)
    }
}

impl Objective for MaeObjective<'_> {
    fn params(&self) -> &[f64] {
        &self.model.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.model.params
    }

    fn loss(&self, sample: usize, epoch: usize) -> f64 {
        self.model.forward(&self.masked(sample, epoch)).0
    }

    fn loss_grad(&self, sample: usize, epoch: usize, scale: f64, grad: &mut [f64]) -> f64 {
        let seq = self.masked(sample, epoch);
        let (loss, cache) = self.model.forward(&seq);
        self.model.backward(&seq, &cache, scale, grad);
        loss
    }

    fn val_loss(&self, sample: usize) -> f64 {
        let mut r = rng::stream(self.model.config.seed, &[VAL_MASK_STREAM, sample as u64]);
        self.model.forward(&random_mask(&self.seqs[sample], self.model.config.mask_ratio, &mut r)).0
    }
}

fn check_spectra(spectra: &[f64], bands: usize) -> Result<usize> {
    if bands == 0 || spectra.is_empty() || spectra.len() % bands != 0 {
        return Err(MaeError::Data(format!("{} values do not form spectra of {bands} bands", spectra.len())));
    }
    if spectra.iter().any(|v| !v.is_finite()) {
        return Err(MaeError::Data("non-finite reflectance".into()));
    }
    Ok(spectra.len() / bands)
}

/// Trains a masked autoencoder on row-major spectra of `bands` channels.
/// With `config.standardize` the model's scaler is fitted on `spectra`
/// and the loss is measured in standardized units.
pub fn train_mae(spectra: &[f64], bands: usize, config: &MaeConfig) -> Result<(MaeModel, LossCurve)> {
    let n = check_spectra(spectra, bands)?;
    let mut model = MaeModel::new(config.clone(), bands)?;
    if config.standardize {
        model.scaler = BandScaler::fit(spectra, bands);
    }
    let scaled = model.scaler.apply_all(spectra);
    let seqs = scaled.chunks(bands).map(|s| tokenize(s, config.token_len)).collect::<Result<Vec<_>>>()?;
    let mut obj = MaeObjective { model, seqs: &seqs };
    let opt = OptimConfig {
        learning_rate: config.learning_rate,
        momentum: config.momentum,
        weight_decay: config.weight_decay,
        epochs: config.epochs,
        batch_size: config.batch_size,
        val_fraction: config.val_fraction,
        seed: config.seed,
    };
    let curve = fit(&mut obj, n, &opt)?;
    Ok((obj.model, curve))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheckReport {
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for the relative error, so coordinates whose true
/// gradient is zero are judged by absolute error.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// Compares analytic gradients of the mean masked loss over `batch` with
/// central differences on `coords` random coordinates (all when fewer).
pub fn gradient_check(model: &MaeModel, batch: &[TokenSequence], coords: usize, tolerance: f64, seed: u64) -> Result<GradientCheckReport> {
    if batch.is_empty() {
        return Err(MaeError::Data("empty gradient-check batch".into()));
    }
    let loss = |m: &MaeModel| batch.iter().map(|s| m.forward(s).0).sum::<f64>() / batch.len() as f64;
    let mut grad = vec![0.0; model.n_params()];
    for s in batch {
        model.loss_and_grad(s, 1.0 / batch.len() as f64, &mut grad)?;
    }
    let n = model.n_params();
    let picks: Vec<usize> = if coords >= n { (0..n).collect() } else { index::sample(&mut rng::stream(seed, &[0x4743]), n, coords).into_vec() };
    let mut probe = model.clone();
    let mut report = GradientCheckReport { max_relative_error: 0.0, worst_index: 0, analytic: 0.0, numeric: 0.0, checked: picks.len() };
    for &i in &picks {
        let orig = probe.params[i];
        probe.params[i] = orig + FD_STEP;
        let up = loss(&probe);
        probe.params[i] = orig - FD_STEP;
        let down = loss(&probe);
        probe.params[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(RELATIVE_FLOOR);
        if rel > report.max_relative_error || i == picks[0] {
            report = GradientCheckReport { max_relative_error: rel, worst_index: i, analytic: grad[i], numeric, checked: picks.len() };
        }
    }
    if report.max_relative_error > tolerance {
        return Err(MaeError::GradientCheck {
            index: report.worst_index,
            analytic: report.analytic,
            numeric: report.numeric,
            relative: report.max_relative_error,
        });
    }
    Ok(report)
}
