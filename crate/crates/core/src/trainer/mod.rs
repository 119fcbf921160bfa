//! Training the scorer from oracle qualities.
//!
//! Each step takes one or more candidate sets: `k` templates for a source
//! sentence (its own template, its reference's template, and random library
//! draws) together with their oracle qualities. Predictions are fitted with a
//! weighted sum of squared error and a pairwise rank hinge.

mod candidates;
mod loss;
mod optim;
mod oracle;

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::library::TemplateLibrary;
use crate::model::{ModelError, ModelParams, QstrModel, Vocab};
use crate::scalar::Scalar;
use crate::syntree::SyntaxTree;

pub use candidates::{sample_candidates, Candidate};
pub use loss::{mse_loss, rank_loss, total_loss, LossValue};
pub use optim::{scheduled_lr, AdamW};
pub use oracle::{planted_quality, Oracle, OracleRecord, PlantedOracle, PrecomputedOracle, QualityOracle};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("length mismatch: {predictions} predictions vs {qualities} qualities")]
    LengthMismatch { predictions: usize, qualities: usize },
    #[error("library too small: need {needed} templates, {available} available")]
    LibraryTooSmall { needed: usize, available: usize },
    #[error("oracle has no quality for source {sentence:?} with template {template:?}")]
    OracleMiss { sentence: String, template: String },
    #[error("non-finite loss at epoch {epoch}, step {step}: {detail}")]
    NonFiniteLoss { epoch: usize, step: usize, detail: String },
    #[error("zero variance")]
    ZeroVariance,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One dataset line: `{source_tokens, source_tree, reference_tree}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub source_tokens: Vec<String>,
    pub source_tree: SyntaxTree,
    #[serde(default)]
    pub reference_tree: Option<SyntaxTree>,
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<Vec<Sample>, TrainError> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: Sample =
            serde_json::from_str(&line).map_err(|e| TrainError::Malformed { line: n + 1, reason: e.to_string() })?;
        if s.source_tokens.is_empty() {
            return Err(TrainError::Malformed { line: n + 1, reason: "empty source_tokens".into() });
        }
        out.push(s);
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<Sample>, TrainError> {
    read_dataset(BufReader::new(File::open(path)?))
}

pub fn write_dataset<W: Write>(mut w: W, samples: &[Sample]) -> Result<(), TrainError> {
    for s in samples {
        serde_json::to_writer(&mut w, s).map_err(io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Sentence vocabulary from the dataset tokens; template vocabulary from
/// the library and the truncated source and reference trees.
pub fn build_vocabularies(samples: &[Sample], lib: &TemplateLibrary) -> (Vocab, Vocab) {
    let sentence = Vocab::build(samples.iter().flat_map(|s| s.source_tokens.iter()));
    let mut template_tokens: Vec<String> = vec!["(".into(), ")".into()];
    for e in lib.entries() {
        template_tokens.extend(e.template.tokens().iter().cloned());
    }
    for s in samples {
        for t in std::iter::once(&s.source_tree).chain(s.reference_tree.as_ref()) {
            template_tokens.extend(t.truncate(lib.max_levels()).labels().into_iter().map(str::to_string));
        }
    }
    (sentence, Vocab::build(template_tokens))
}

/// Templates and oracle qualities for one source.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub source_tokens: Vec<String>,
    pub candidates: Vec<Candidate>,
    pub qualities: Vec<f64>,
}

impl CandidateSet {
    pub fn build(
        sample: &Sample,
        lib: &TemplateLibrary,
        oracle: &dyn QualityOracle,
        k: usize,
        seed: u64,
    ) -> Result<Self, TrainError> {
        let candidates = sample_candidates(&sample.source_tree, sample.reference_tree.as_ref(), lib, k, seed)?;
        let qualities = candidates
            .iter()
            .map(|c| oracle.quality(sample, c).map(|q| q.clamp(0.0, 1.0)))
            .collect::<Result<_, _>>()?;
        Ok(Self { source_tokens: sample.source_tokens.clone(), candidates, qualities })
    }

    pub fn predict<T: Scalar>(&self, model: &QstrModel<T>) -> Result<Vec<T>, TrainError> {
        let e_s = model.encode_sentence(&self.source_tokens)?.projected;
        let scores = self
            .candidates
            .par_iter()
            .map(|c| {
                let e_t = model.encode_template(&c.template)?.projected;
                model.score_projected(&e_s, &e_t)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(scores)
    }

    /// Loss over this set and its parameter gradient.
    pub fn loss_and_grads<T: Scalar>(
        &self,
        model: &QstrModel<T>,
        lambda_mse: f64,
        lambda_rank: f64,
    ) -> Result<(LossValue<T>, ModelParams<T>), TrainError> {
        let traced = self
            .candidates
            .par_iter()
            .map(|c| model.score(&self.source_tokens, &c.template))
            .collect::<Result<Vec<_>, _>>()?;
        let s: Vec<T> = traced.iter().map(|(s, _)| *s).collect();
        let q: Vec<T> = self.qualities.iter().map(|&q| T::of(q)).collect();
        let value = total_loss(&s, &q, T::of(lambda_mse), T::of(lambda_rank))?;
        let parts = traced
            .par_iter()
            .zip(value.grad.par_iter())
            .map(|((_, trace), &g)| model.backward(trace, g))
            .collect::<Result<Vec<_>, _>>()?;
        let mut grads = model.params().zeros_like();
        for p in &parts {
            grads.add_scaled(p, T::one());
        }
        Ok((value, grads))
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda_mse: f64,
    pub lambda_rank: f64,
    /// Candidate-set size.
    pub k: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Candidate sets per optimizer step.
    pub batch_size: usize,
    /// Fraction of all steps spent warming the learning rate up.
    pub warmup_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_mse: 1.0,
            lambda_rank: 1.0,
            k: 10,
            learning_rate: 1e-3,
            weight_decay: 0.01,
            epochs: 10,
            batch_size: 1,
            warmup_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.lambda_mse >= 0.0 && self.lambda_rank >= 0.0) {
            return bad("loss weights must be non-negative");
        }
        if self.k < 2 {
            return bad("k must be at least 2");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.weight_decay >= 0.0) {
            return bad("learning rate and weight decay must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return bad("warmup fraction must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    /// `None` without a dev set or when every dev prediction is equal.
    pub dev_pcc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: Vec<EpochLog>,
    /// Epoch whose parameters were kept (best dev PCC; the last epoch
    /// without a dev set).
    pub best_epoch: usize,
}

fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fixed candidate sets for evaluation; independent of the epoch.
pub fn dev_candidate_sets(
    dev: &[Sample],
    lib: &TemplateLibrary,
    oracle: &dyn QualityOracle,
    k: usize,
    seed: u64,
) -> Result<Vec<CandidateSet>, TrainError> {
    dev.iter()
        .enumerate()
        .map(|(i, s)| CandidateSet::build(s, lib, oracle, k, derive_seed(seed, u64::MAX, i as u64)))
        .collect()
}

/// PCC between predictions and qualities pooled over all sets.
pub fn evaluate_pcc<T: Scalar>(model: &QstrModel<T>, sets: &[CandidateSet]) -> Result<f64, TrainError> {
    let mut preds = Vec::new();
    let mut quals = Vec::new();
    for set in sets {
        preds.extend(set.predict(model)?.into_iter().map(Scalar::as_f64));
        quals.extend_from_slice(&set.qualities);
    }
    pcc(&preds, &quals)
}

/// Trains `model` in place and leaves it holding the best-dev parameters.
///
/// Every source is visited once per epoch in a seeded shuffled order with
/// freshly drawn candidates. `on_epoch` sees each log record as it is made.
pub fn train<T: Scalar>(
    model: &mut QstrModel<T>,
    lib: &TemplateLibrary,
    train_set: &[Sample],
    dev_set: &[Sample],
    oracle: &dyn QualityOracle,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let dev_sets = dev_candidate_sets(dev_set, lib, oracle, config.k, config.seed)?;
    let steps_per_epoch = train_set.len().div_ceil(config.batch_size);
    let total_steps = (steps_per_epoch * config.epochs) as u64;
    let warmup = (config.warmup_fraction * total_steps as f64).round() as u64;
    let mut opt = AdamW::new(model.params(), config.weight_decay);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ModelParams<T>)> = None;
    let batch_scale = T::one() / T::of(config.batch_size as f64);

    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, epoch as u64, 0));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (step, batch) in order.chunks(config.batch_size).enumerate() {
            let mut grads = model.params().zeros_like();
            for &i in batch {
                let seed = derive_seed(config.seed, epoch as u64 + 1, i as u64);
                let set = CandidateSet::build(&train_set[i], lib, oracle, config.k, seed)?;
                let (value, g) = set.loss_and_grads(model, config.lambda_mse, config.lambda_rank)?;
                let total = value.total.as_f64();
                if !total.is_finite() || !g.is_finite() {
                    return Err(TrainError::NonFiniteLoss {
                        epoch,
                        step,
                        detail: format!(
                            "source {:?}: mse {}, rank {}, gradients finite: {}",
                            set.source_tokens.join(" "),
                            value.mse,
                            value.rank,
                            g.is_finite()
                        ),
                    });
                }
                loss_sum += total;
                grads.add_scaled(&g, batch_scale);
            }
            let lr = scheduled_lr(opt.steps(), total_steps, warmup, config.learning_rate);
            model.update_params(|p| opt.step(p, &grads, lr));
        }
        let dev_pcc = match evaluate_pcc(model, &dev_sets) {
            _ if dev_sets.is_empty() => None,
            Ok(p) => Some(p),
            // constant predictions: correlation undefined for this epoch
            Err(TrainError::ZeroVariance) => None,
            Err(e) => return Err(e),
        };
        let entry = EpochLog { epoch, mean_loss: loss_sum / train_set.len() as f64, dev_pcc };
        on_epoch(&entry);
        log.push(entry);
        if let Some(p) = dev_pcc {
            if best.as_ref().is_none_or(|(b, _, _)| p > *b) {
                best = Some((p, epoch, model.params().clone()));
            }
        }
    }

    let best_epoch = match best {
        Some((_, epoch, params)) => {
            if epoch + 1 != config.epochs {
                model.update_params(|p| *p = params);
            }
            epoch
        }
        None => config.epochs.saturating_sub(1),
    };
    Ok(TrainOutcome { log, best_epoch })
}

pub fn write_log<W: Write>(mut w: W, log: &[EpochLog]) -> io::Result<()> {
    for e in log {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn save_log(path: impl AsRef<Path>, log: &[EpochLog]) -> io::Result<()> {
    write_log(BufWriter::new(File::create(path)?), log)
}

/// Sample Pearson correlation.
///
/// Accumulated in one pass with running means and co-moments.
pub fn pcc(predictions: &[f64], qualities: &[f64]) -> Result<f64, TrainError> {
    if predictions.len() != qualities.len() || predictions.len() < 2 {
        return Err(TrainError::LengthMismatch { predictions: predictions.len(), qualities: qualities.len() });
    }
    let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (n, (&x, &y)) in predictions.iter().zip(qualities).enumerate() {
        let w = (n + 1) as f64;
        let dx = x - mx;
        let dy = y - my;
        mx += dx / w;
        my += dy / w;
        sxx += dx * (x - mx);
        syy += dy * (y - my);
        sxy += dx * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(TrainError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests;
