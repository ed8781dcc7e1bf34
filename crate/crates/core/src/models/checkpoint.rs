//! Single-file checkpoints: a JSON header line followed by every tensor as
//! `name rows cols` and then its rows in decimal.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelParams, ModelVariant, TENSOR_NAMES};
use crate::autodiff::Matrix;
use crate::encoder::{CarryMode, LstmParams, Vocab, WordEmbeddings};
use crate::error::{Error, Result};
use crate::memory::AttentionParams;
use crate::slot_embed::{SlotProjection, TagSet};

pub const FORMAT_TAG: &str = "ssdmn-v1";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    variant: ModelVariant,
    input_dim: usize,
    hidden_dim: usize,
    carry_mode: CarryMode,
    max_memory: Option<usize>,
    tags: TagSet,
    vocab: Vocab,
    tensors: Vec<String>,
}

pub fn write_checkpoint<W: Write>(params: &ModelParams, mut w: W) -> Result<()> {
    let header = Header {
        format: FORMAT_TAG.to_string(),
        variant: params.variant,
        input_dim: params.input_dim(),
        hidden_dim: params.hidden_dim(),
        carry_mode: params.carry_mode,
        max_memory: params.max_memory,
        tags: params.tags.clone(),
        vocab: params.embeddings.vocab.clone(),
        tensors: TENSOR_NAMES.iter().map(|s| s.to_string()).collect(),
    };
    serde_json::to_writer(&mut w, &header)?;
    writeln!(w)?;
    for (name, m) in TENSOR_NAMES.iter().zip(params.tensors()) {
        writeln!(w, "{name} {} {}", m.rows(), m.cols())?;
        for r in 0..m.rows() {
            let mut first = true;
            for v in m.row(r) {
                if !first {
                    w.write_all(b" ")?;
                }
                // shortest representation that parses back to the same bits
                write!(w, "{v:?}")?;
                first = false;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    write_checkpoint(params, BufWriter::new(std::fs::File::create(path)?))
}

fn bad(line: usize, msg: impl Into<String>) -> Error {
    Error::Checkpoint(format!("line {line}: {}", msg.into()))
}

pub fn read_checkpoint<R: BufRead>(r: R) -> Result<ModelParams> {
    let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = lines.next().ok_or_else(|| Error::Checkpoint("empty file".into()))?;
    let header: Header = serde_json::from_str(&first?).map_err(|e| bad(1, e.to_string()))?;
    if header.format != FORMAT_TAG {
        return Err(Error::Checkpoint(format!(
            "format `{}`, expected `{FORMAT_TAG}`",
            header.format
        )));
    }
    if header.tensors != TENSOR_NAMES {
        return Err(Error::Checkpoint(format!("unexpected tensor list {:?}", header.tensors)));
    }

    let mut tensors = Vec::with_capacity(TENSOR_NAMES.len());
    for name in TENSOR_NAMES {
        let (n, line) = lines
            .next()
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
        let line = line?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [got, rows, cols] = parts[..] else {
            return Err(bad(n, format!("expected `{name} rows cols`")));
        };
        if got != name {
            return Err(bad(n, format!("tensor `{got}`, expected `{name}`")));
        }
        let rows: usize = rows.parse().map_err(|_| bad(n, "bad row count"))?;
        let cols: usize = cols.parse().map_err(|_| bad(n, "bad column count"))?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::Checkpoint(format!("truncated tensor `{name}`")))?;
            let before = data.len();
            for tok in line?.split_whitespace() {
                data.push(tok.parse::<f64>().map_err(|e| bad(n, e.to_string()))?);
            }
            if data.len() - before != cols {
                return Err(bad(n, format!("expected {cols} values")));
            }
        }
        tensors.push(Matrix::from_vec(rows, cols, data)?);
    }

    let mut it = tensors.into_iter();
    let mut next = || it.next().expect("tensor count checked above");
    let table = next();
    let lstm = LstmParams {
        w_input: next(),
        w_hidden: next(),
        bias: next(),
    };
    let projection = SlotProjection::new(next())?;
    let attention = AttentionParams {
        w_user: next(),
        b_user: next(),
        w_system: next(),
        b_system: next(),
    };
    let params = ModelParams {
        variant: header.variant,
        carry_mode: header.carry_mode,
        max_memory: header.max_memory,
        tags: header.tags,
        embeddings: WordEmbeddings {
            vocab: header.vocab,
            table,
        },
        lstm,
        projection,
        attention,
        w_h: next(),
        w_u: next(),
        w_m: next(),
    };
    params.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
    if params.input_dim() != header.input_dim || params.hidden_dim() != header.hidden_dim {
        return Err(Error::Checkpoint("tensor shapes disagree with header dimensions".into()));
    }
    if params.tensors().iter().any(|m| !m.is_finite()) {
        return Err(Error::Checkpoint("non-finite parameter".into()));
    }
    Ok(params)
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let f = std::fs::File::open(path)?;
    read_checkpoint(BufReader::new(f)).map_err(|e| match e {
        Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}
