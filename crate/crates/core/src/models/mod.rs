//! The tagger and its comparison variants, training, decoding and checkpoints.

mod checkpoint;
mod forward;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Matrix;
use crate::data::Dialog;
use crate::encoder::{CarryMode, LstmParams, Vocab, WordEmbeddings};
use crate::error::{Error, Result};
use crate::memory::AttentionParams;
use crate::slot_embed::{encode_khot, Iob, KHotVector, SlotProjection, TagSet};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, FORMAT_TAG};
pub use forward::{
    build_dialog_graph, predict_dialog, DialogGraph, ForwardOptions, MemoryCoord, TokenTrace,
    TurnPrediction, TurnTrace,
};
pub use train::{
    build_vocab, evaluate_dialogs, init_params, train, train_from, EpochLog, TrainConfig, TrainLog, Trained,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelVariant {
    #[serde(rename = "lstm")]
    Lstm,
    #[serde(rename = "ls")]
    Ls,
    #[serde(rename = "prels")]
    PreLs,
    #[serde(rename = "mns")]
    Mns,
    #[serde(rename = "mns-s")]
    MnsS,
    #[serde(rename = "ssdmn")]
    Ssdmn,
}

/// How a system turn reaches the tagger.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SystemEncoding {
    None,
    /// `P` times the k-hot vector of targeted slots.
    KHotProjection,
    /// The prompt's words, encoded by the shared LSTM into the user store.
    SurfaceWords,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VariantFlags {
    pub user_memory: bool,
    pub system_memory: bool,
    pub system_encoding: SystemEncoding,
    pub pretrained_projection: bool,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 6] = [
        ModelVariant::Lstm,
        ModelVariant::Ls,
        ModelVariant::PreLs,
        ModelVariant::Mns,
        ModelVariant::MnsS,
        ModelVariant::Ssdmn,
    ];

    pub fn flags(self) -> VariantFlags {
        use SystemEncoding::*;
        let (user_memory, system_memory, system_encoding, pretrained_projection) = match self {
            Self::Lstm => (false, false, None, false),
            Self::Ls => (false, false, KHotProjection, false),
            Self::PreLs => (false, false, KHotProjection, true),
            Self::Mns => (true, false, None, false),
            Self::MnsS => (true, false, SurfaceWords, false),
            Self::Ssdmn => (true, true, KHotProjection, true),
        };
        VariantFlags {
            user_memory,
            system_memory,
            system_encoding,
            pretrained_projection,
        }
    }

    /// Identifier used on the command line and in file names.
    pub fn id(self) -> &'static str {
        match self {
            Self::Lstm => "lstm",
            Self::Ls => "ls",
            Self::PreLs => "prels",
            Self::Mns => "mns",
            Self::MnsS => "mns-s",
            Self::Ssdmn => "ssdmn",
        }
    }

    /// Column heading in result tables.
    pub fn heading(self) -> &'static str {
        match self {
            Self::Lstm => "LSTM",
            Self::Ls => "+LS",
            Self::PreLs => "+PreLS",
            Self::Mns => "MNs",
            Self::MnsS => "MNs+S",
            Self::Ssdmn => "SSDMNs",
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace(['+', '_'], "-");
        let v = match norm.trim_start_matches('-') {
            "lstm" => Self::Lstm,
            "ls" => Self::Ls,
            "prels" | "pre-ls" => Self::PreLs,
            "mns" | "mn" => Self::Mns,
            "mns-s" | "mn-s" | "mnss" => Self::MnsS,
            "ssdmn" | "ssdmns" => Self::Ssdmn,
            _ => return Err(Error::Config(format!("unknown model variant `{s}`"))),
        };
        Ok(v)
    }
}

/// Every trainable tensor plus what inference needs to interpret them.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub variant: ModelVariant,
    pub carry_mode: CarryMode,
    pub max_memory: Option<usize>,
    pub tags: TagSet,
    pub embeddings: WordEmbeddings,
    pub lstm: LstmParams,
    pub projection: SlotProjection,
    pub attention: AttentionParams,
    /// `L x d` each.
    pub w_h: Matrix,
    pub w_u: Matrix,
    pub w_m: Matrix,
}

pub const TENSOR_NAMES: [&str; 12] = [
    "embeddings",
    "lstm.w_input",
    "lstm.w_hidden",
    "lstm.bias",
    "projection",
    "attention.w_user",
    "attention.b_user",
    "attention.w_system",
    "attention.b_system",
    "output.w_h",
    "output.w_u",
    "output.w_m",
];

impl ModelParams {
    /// Uniform initialization in `[-scale, scale]`, drawn in a fixed order so
    /// every variant with the same seed shares the same starting weights.
    pub fn random<R: Rng + ?Sized>(
        variant: ModelVariant,
        tags: TagSet,
        vocab: Vocab,
        input_dim: usize,
        hidden_dim: usize,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::Config("dimensions must be positive".into()));
        }
        if tags.is_empty() {
            return Err(Error::Config("empty slot inventory".into()));
        }
        let l = tags.num_labels();
        let embeddings = WordEmbeddings::random(vocab, input_dim, scale, rng);
        let lstm = LstmParams::random(input_dim, hidden_dim, scale, rng);
        let projection = SlotProjection::new(Matrix::uniform(hidden_dim, tags.len(), scale, rng))?;
        let attention = AttentionParams::random(hidden_dim, scale, rng);
        let w_h = Matrix::uniform(l, hidden_dim, scale, rng);
        let w_u = Matrix::uniform(l, hidden_dim, scale, rng);
        let w_m = Matrix::uniform(l, hidden_dim, scale, rng);
        Ok(Self {
            variant,
            carry_mode: CarryMode::default(),
            max_memory: None,
            tags,
            embeddings,
            lstm,
            projection,
            attention,
            w_h,
            w_u,
            w_m,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.embeddings.dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.lstm.hidden_dim()
    }

    /// Tensors in [`TENSOR_NAMES`] order.
    pub fn tensors(&self) -> [&Matrix; 12] {
        [
            &self.embeddings.table,
            &self.lstm.w_input,
            &self.lstm.w_hidden,
            &self.lstm.bias,
            &self.projection.matrix,
            &self.attention.w_user,
            &self.attention.b_user,
            &self.attention.w_system,
            &self.attention.b_system,
            &self.w_h,
            &self.w_u,
            &self.w_m,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Matrix; 12] {
        [
            &mut self.embeddings.table,
            &mut self.lstm.w_input,
            &mut self.lstm.w_hidden,
            &mut self.lstm.bias,
            &mut self.projection.matrix,
            &mut self.attention.w_user,
            &mut self.attention.b_user,
            &mut self.attention.w_system,
            &mut self.attention.b_system,
            &mut self.w_h,
            &mut self.w_u,
            &mut self.w_m,
        ]
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|m| m.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let (d, l) = (self.hidden_dim(), self.tags.num_labels());
        self.lstm.validate()?;
        if self.lstm.input_dim() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "LSTM input size {} vs embedding size {}",
                self.lstm.input_dim(),
                self.input_dim()
            )));
        }
        if self.embeddings.table.rows() != self.embeddings.vocab.len() {
            return Err(Error::Dimension(format!(
                "{} embedding rows for {} words",
                self.embeddings.table.rows(),
                self.embeddings.vocab.len()
            )));
        }
        let expect = [
            ("projection", &self.projection.matrix, (d, self.tags.len())),
            ("attention.w_user", &self.attention.w_user, (1, d)),
            ("attention.b_user", &self.attention.b_user, (1, 1)),
            ("attention.w_system", &self.attention.w_system, (1, d)),
            ("attention.b_system", &self.attention.b_system, (1, 1)),
            ("output.w_h", &self.w_h, (l, d)),
            ("output.w_u", &self.w_u, (l, d)),
            ("output.w_m", &self.w_m, (l, d)),
        ];
        for (name, m, shape) in expect {
            if m.shape() != shape {
                return Err(Error::Dimension(format!(
                    "{name} is {:?}, expected {shape:?}",
                    m.shape()
                )));
            }
        }
        Ok(())
    }

    /// Index a dialog against this model's vocabulary and slot inventory.
    /// Gold labels are kept when every turn has them.
    pub fn prepare(&self, dialog: &Dialog) -> Result<PreparedDialog> {
        let mut turns = Vec::with_capacity(dialog.turns.len());
        let labelled = dialog
            .turns
            .iter()
            .all(|t| t.labels.len() == t.user_tokens.len());
        for t in &dialog.turns {
            let gold = if labelled {
                Some(
                    t.labels
                        .iter()
                        .map(|l| self.tags.label_id(l))
                        .collect::<Result<Vec<_>>>()?,
                )
            } else {
                None
            };
            turns.push(PreparedTurn {
                user: self.embeddings.token_ids(&t.user_tokens),
                system: self.embeddings.token_ids(&t.system_text),
                khot: encode_khot(&t.system_slots, &self.tags)?,
                gold,
            });
        }
        Ok(PreparedDialog {
            id: dialog.id.clone(),
            turns,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreparedTurn {
    pub user: Vec<usize>,
    pub system: Vec<usize>,
    pub khot: KHotVector,
    pub gold: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreparedDialog {
    pub id: String,
    pub turns: Vec<PreparedTurn>,
}

/// Turn illegal transitions into chunk starts: `I-x` after `O` or after a
/// different type becomes `B-x`.
pub fn repair_iob(ids: &mut [usize], tags: &TagSet) {
    let mut prev = Iob::Outside;
    for id in ids.iter_mut() {
        let mut cur = tags.decode(*id);
        if let Iob::Inside(s) = cur {
            let continues = matches!(prev, Iob::Begin(p) | Iob::Inside(p) if p == s);
            if !continues {
                cur = Iob::Begin(s);
                *id = tags.encode(cur);
            }
        }
        prev = cur;
    }
}
