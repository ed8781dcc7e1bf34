use std::path::PathBuf;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{build_dialog_graph, predict_dialog, ForwardOptions, ModelParams, ModelVariant, PreparedDialog};
use crate::autodiff::{AdamState, Matrix, Tape};
use crate::data::{tagset_from_dialogs, Dialog};
use crate::encoder::{CarryMode, Vocab};
use crate::error::{Error, Result};
use crate::eval::{evaluate, Score};
use crate::rng;
use crate::slot_embed::{build_cca_pairs, cca_pretrain, SlotProjection, TagSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: ModelVariant,
    pub seed: u64,
    pub lr: f64,
    pub keep_prob: f64,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub max_epochs: usize,
    /// Epochs without a dev improvement before stopping.
    pub patience: usize,
    pub init_scale: f64,
    pub cca_reg: f64,
    /// Pretrained slot projection file; computed from the training set when absent.
    pub projection_path: Option<PathBuf>,
    /// Word vectors in `word v1 ... v_d` text form.
    pub embeddings_path: Option<PathBuf>,
    pub detach_memory: bool,
    pub carry_mode: CarryMode,
    pub max_memory: Option<usize>,
    /// Rescale a dialog's gradient when its global norm exceeds this.
    pub clip_norm: Option<f64>,
    /// Stop as soon as dev F1 reaches this value.
    pub target_f1: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: ModelVariant::Ssdmn,
            seed: 7,
            lr: 4e-4,
            keep_prob: 0.4,
            input_dim: 100,
            hidden_dim: 100,
            max_epochs: 50,
            patience: 5,
            init_scale: 0.1,
            cca_reg: 1e-3,
            projection_path: None,
            embeddings_path: None,
            detach_memory: false,
            carry_mode: CarryMode::HAndC,
            max_memory: None,
            clip_norm: None,
            target_f1: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return bad(format!("keep probability must be in (0, 1], got {}", self.keep_prob));
        }
        if self.input_dim == 0 || self.hidden_dim == 0 {
            return bad("dimensions must be positive".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        if !(self.init_scale >= 0.0) {
            return bad(format!("init scale must be non-negative, got {}", self.init_scale));
        }
        if !(self.cca_reg > 0.0) {
            return bad(format!("CCA regularizer must be positive, got {}", self.cca_reg));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return bad(format!("clip norm must be positive, got {c}"));
            }
        }
        for p in [&self.projection_path, &self.embeddings_path].into_iter().flatten() {
            if !p.is_file() {
                return bad(format!("no such file: {}", p.display()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_f1: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_dev_f1: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub params: ModelParams,
    pub log: TrainLog,
}

/// Every user and system token of the training set, first-seen order.
pub fn build_vocab(dialogs: &[Dialog]) -> Vocab {
    Vocab::from_words(
        dialogs
            .iter()
            .flat_map(|d| &d.turns)
            .flat_map(|t| t.system_text.iter().chain(&t.user_tokens)),
    )
}

/// Initial parameters for `config`, including the CCA projection for the
/// variants that start from one.
pub fn init_params(train: &[Dialog], tags: TagSet, config: &TrainConfig) -> Result<ModelParams> {
    let vocab = build_vocab(train);
    let mut init = rng::stream(config.seed, rng::INIT);
    let mut params = ModelParams::random(
        config.variant,
        tags,
        vocab,
        config.input_dim,
        config.hidden_dim,
        config.init_scale,
        &mut init,
    )?;
    params.carry_mode = config.carry_mode;
    params.max_memory = config.max_memory;
    if let Some(path) = &config.embeddings_path {
        params.embeddings.load_pretrained(path)?;
    }
    if config.variant.flags().pretrained_projection {
        params.projection = match &config.projection_path {
            Some(path) => {
                let (p, file_tags) = SlotProjection::load(path)?;
                align_projection(&p, &file_tags, &params.tags, config.hidden_dim)?
            }
            None => pretrain_projection(train, &params.tags, &params.embeddings.vocab, config)?,
        };
    }
    Ok(params)
}

/// Reorder a loaded projection's columns to match `tags`.
fn align_projection(p: &SlotProjection, from: &TagSet, to: &TagSet, d: usize) -> Result<SlotProjection> {
    if p.dim() != d {
        return Err(Error::Config(format!(
            "projection has {} rows, model hidden size is {d}",
            p.dim()
        )));
    }
    let mut m = Matrix::zeros(d, to.len());
    for (j, slot) in to.slots().iter().enumerate() {
        let src = from.slot_index(slot)?;
        for r in 0..d {
            m.set(r, j, p.matrix.get(r, src));
        }
    }
    SlotProjection::new(m)
}

fn pretrain_projection(train: &[Dialog], tags: &TagSet, vocab: &Vocab, config: &TrainConfig) -> Result<SlotProjection> {
    let corpus: Vec<(&[String], &[String])> = train
        .iter()
        .flat_map(|d| &d.turns)
        .map(|t| (t.user_tokens.as_slice(), t.labels.as_slice()))
        .collect();
    let pairs = build_cca_pairs(&corpus, tags, vocab)?;
    let d = config.hidden_dim;
    // small corpora cannot support d directions; the extra rows stay zero
    let k = d.min(pairs.len());
    if k == 0 {
        return Err(Error::Cca("training set has no tagged chunks".into()));
    }
    let p = cca_pretrain(&pairs, k, config.cca_reg)?;
    let mut m = Matrix::zeros(d, tags.len());
    for r in 0..k {
        for c in 0..tags.len() {
            m.set(r, c, p.matrix.get(r, c));
        }
    }
    SlotProjection::new(m)
}

/// Tag every turn and score against the gold labels.
pub fn evaluate_dialogs(params: &ModelParams, dialogs: &[PreparedDialog]) -> Result<Score> {
    let mut gold = Vec::new();
    let mut pred = Vec::new();
    for d in dialogs {
        let predictions = predict_dialog(params, d)?;
        for (turn, p) in d.turns.iter().zip(predictions) {
            let g = turn
                .gold
                .as_ref()
                .ok_or_else(|| Error::Config(format!("dialog `{}` has no gold labels", d.id)))?;
            gold.push(g.iter().map(|&i| params.tags.label_name(i)).collect::<Vec<_>>());
            pred.push(p.labels);
        }
    }
    evaluate(&gold, &pred)
}

fn clip(grads: &mut [Option<Matrix>], max_norm: f64) {
    let sq: f64 = grads.iter().flatten().map(|g| g.data().iter().map(|x| x * x).sum::<f64>()).sum();
    let norm = sq.sqrt();
    if norm > max_norm {
        let f = max_norm / norm;
        for g in grads.iter_mut().flatten() {
            g.scale(f);
        }
    }
}

/// One Adam update per dialog; dropout on the LSTM outputs; early stopping
/// on dev F1. Returns the parameters of the best dev epoch.
///
/// `tags` defaults to the slots seen in `train` and `dev`. With an empty dev
/// set every epoch runs and the last parameters are returned.
pub fn train(train: &[Dialog], dev: &[Dialog], tags: Option<TagSet>, config: &TrainConfig) -> Result<Trained> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    let tags = match tags {
        Some(t) => t,
        None => {
            let all: Vec<Dialog> = train.iter().chain(dev).cloned().collect();
            tagset_from_dialogs(&all)?
        }
    };
    let mut params = init_params(train, tags, config)?;
    train_from(&mut params, train, dev, config)
}

/// Continue training `params` in place.
pub fn train_from(params: &mut ModelParams, train: &[Dialog], dev: &[Dialog], config: &TrainConfig) -> Result<Trained> {
    let train_set = train.iter().map(|d| params.prepare(d)).collect::<Result<Vec<_>>>()?;
    let dev_set = dev.iter().map(|d| params.prepare(d)).collect::<Result<Vec<_>>>()?;
    for d in &train_set {
        if d.turns.iter().any(|t| t.gold.is_none()) {
            return Err(Error::Config(format!("training dialog `{}` has no gold labels", d.id)));
        }
    }

    let mut adam = AdamState::new(config.lr, params.tensors());
    let mut shuffle = rng::stream(config.seed, rng::SHUFFLE);
    let mut dropout = rng::stream(config.seed, rng::DROPOUT);
    let opts = ForwardOptions {
        training: true,
        keep_prob: config.keep_prob,
        detach_memory: config.detach_memory,
    };

    let mut log = TrainLog::default();
    let mut best: Option<ModelParams> = None;
    let mut stale = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for &i in &order {
            let dialog = &train_set[i];
            let mut grads = {
                let mut tape = Tape::new();
                let graph = build_dialog_graph(&mut tape, params, dialog, &opts, &mut dropout)?;
                let Some(loss) = graph.loss else { continue };
                let value = tape.scalar(loss);
                if !value.is_finite() {
                    return Err(Error::NonFinite(dialog.id.clone()));
                }
                total += value;
                tape.backward(loss)?;
                graph.leaves.map(|id| tape.grad(id).cloned())
            };
            if let Some(c) = config.clip_norm {
                clip(&mut grads, c);
            }
            let refs: Vec<Option<&Matrix>> = grads.iter().map(Option::as_ref).collect();
            adam.step(&mut params.tensors_mut(), &refs)?;
        }

        let dev_f1 = if dev_set.is_empty() {
            None
        } else {
            Some(evaluate_dialogs(params, &dev_set)?.f1())
        };
        log.epochs.push(EpochLog {
            epoch,
            train_loss: total,
            dev_f1,
        });

        let Some(f) = dev_f1 else {
            log.best_epoch = epoch;
            continue;
        };
        if log.best_dev_f1.map_or(true, |b| f > b) {
            log.best_dev_f1 = Some(f);
            log.best_epoch = epoch;
            best = Some(params.clone());
            stale = 0;
        } else {
            stale += 1;
        }
        if config.target_f1.is_some_and(|t| f >= t) || stale >= config.patience {
            break;
        }
    }

    if let Some(b) = best {
        *params = b;
    }
    Ok(Trained {
        params: params.clone(),
        log,
    })
}
