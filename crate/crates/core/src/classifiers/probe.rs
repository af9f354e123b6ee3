//! One-hidden-layer MLP trained on frozen extractor outputs.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ClassifierError, Extractor, LabeledSet, Result};
use crate::metrics::{macro_f1, overall_accuracy, ConfusionMatrix};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Standardize inputs with training-set mean and deviation.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { hidden: 64, epochs: 100, batch_size: 32, learning_rate: 0.05, momentum: 0.9, weight_decay: 1e-4, standardize: true, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub oa: f64,
    pub macro_f1: f64,
    pub predictions: Vec<u32>,
}

struct Mlp {
    d: usize,
    h: usize,
    c: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl Mlp {
    fn forward(&self, x: &[f64], hidden: &mut [f64], logits: &mut [f64]) {
        for j in 0..self.h {
            hidden[j] = (self.b1[j] + self.w1[j * self.d..(j + 1) * self.d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).max(0.0);
        }
        for k in 0..self.c {
            logits[k] = self.b2[k] + self.w2[k * self.h..(k + 1) * self.h].iter().zip(hidden.iter()).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    fn predict(&self, x: &[f64]) -> u32 {
        let mut hidden = vec![0.0; self.h];
        let mut logits = vec![0.0; self.c];
        self.forward(x, &mut hidden, &mut logits);
        let mut best = 0;
        for k in 1..self.c {
            if logits[k] > logits[best] {
                best = k;
            }
        }
        best as u32 + 1
    }
}

/// Trains the probe on `extractor(train)` with softmax cross-entropy and
/// scores it on `extractor(eval)`. The extractor is only read.
pub fn mlp_probe(train: &LabeledSet, eval: &LabeledSet, extractor: &dyn Extractor, config: &ProbeConfig) -> Result<ProbeResult> {
    if train.is_empty() || eval.is_empty() {
        return Err(ClassifierError::Fit("probe needs nonempty train and evaluation sets".into()));
    }
    let mut xtr = train.map_features(extractor)?;
    let mut xev = eval.map_features(extractor)?;
    let d = xtr.dim();
    let c = train.n_classes().max(eval.n_classes());
    if config.standardize {
        let n = xtr.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| (0..xtr.len()).map(|i| xtr.row(i)[j]).sum::<f64>() / n).collect();
        let sd: Vec<f64> = (0..d)
            .map(|j| ((0..xtr.len()).map(|i| (xtr.row(i)[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt().max(1e-8))
            .collect();
        let scale = |s: &LabeledSet| -> Result<LabeledSet> {
            let f = s.features().iter().enumerate().map(|(i, v)| (v - mean[i % d]) / sd[i % d]).collect();
            LabeledSet::new(f, d, s.labels().to_vec(), s.n_classes(), s.tag)
        };
        xtr = scale(&xtr)?;
        xev = scale(&xev)?;
    }
    let h = config.hidden;
    let mut rng = rng::stream(config.seed, &[0x50524f42]);
    let a1 = (6.0 / d as f64).sqrt();
    let a2 = (6.0 / h as f64).sqrt();
    let mut m = Mlp {
        d,
        h,
        c,
        w1: (0..h * d).map(|_| rng.random_range(-a1..a1)).collect(),
        b1: vec![0.0; h],
        w2: (0..c * h).map(|_| rng.random_range(-a2..a2) * 0.5).collect(),
        b2: vec![0.0; c],
    };
    let mut v = [vec![0.0; h * d], vec![0.0; h], vec![0.0; c * h], vec![0.0; c]];
    let mut order: Vec<usize> = (0..xtr.len()).collect();
    let mut hidden = vec![0.0; h];
    let mut logits = vec![0.0; c];
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size.max(1)) {
            let mut g = [vec![0.0; h * d], vec![0.0; h], vec![0.0; c * h], vec![0.0; c]];
            for &i in batch {
                let x = xtr.row(i);
                m.forward(x, &mut hidden, &mut logits);
                let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = logits.iter().map(|l| (l - mx).exp()).sum();
                let y = xtr.labels()[i] as usize - 1;
                let dl: Vec<f64> = (0..c).map(|k| (logits[k] - mx).exp() / z - if k == y { 1.0 } else { 0.0 }).collect();
                for k in 0..c {
                    g[3][k] += dl[k];
                    for j in 0..h {
                        g[2][k * h + j] += dl[k] * hidden[j];
                    }
                }
                for j in 0..h {
                    if hidden[j] <= 0.0 {
                        continue;
                    }
                    let dh: f64 = (0..c).map(|k| dl[k] * m.w2[k * h + j]).sum();
                    g[1][j] += dh;
                    for (gw, xv) in g[0][j * d..(j + 1) * d].iter_mut().zip(x) {
                        *gw += dh * xv;
                    }
                }
            }
            let inv = 1.0 / batch.len() as f64;
            let params = [&mut m.w1, &mut m.b1, &mut m.w2, &mut m.b2];
            for (p, (gp, vp)) in params.into_iter().zip(g.iter().zip(v.iter_mut())) {
                for ((w, gw), vw) in p.iter_mut().zip(gp).zip(vp.iter_mut()) {
                    *vw = config.momentum * *vw + gw * inv + config.weight_decay * *w;
                    *w -= config.learning_rate * *vw;
                }
            }
        }
        if m.w1.iter().chain(&m.w2).any(|w| !w.is_finite()) {
            return Err(ClassifierError::Divergence(format!("non-finite probe weights after epoch {}", epoch + 1)));
        }
    }
    let predictions: Vec<u32> = (0..xev.len()).map(|i| m.predict(xev.row(i))).collect();
    let cm = ConfusionMatrix::from_labels(eval.labels(), &predictions, c)?;
    Ok(ProbeResult { oa: overall_accuracy(&cm)?, macro_f1: macro_f1(&cm)?, predictions })
}
