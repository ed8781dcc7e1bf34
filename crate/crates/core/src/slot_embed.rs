//! System-side slot semantics: the slot inventory, k-hot targeted-slot
//! vectors, the slot projection matrix, and its CCA pretraining.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use serde::{Deserialize, Serialize};

use crate::autodiff::Matrix;
use crate::encoder::Vocab;
use crate::error::{Error, Result};

/// Ordered slot inventory. Fixes the k-hot layout and the IOB label ids:
/// `O` is 0, `B-slot_j` is `1 + 2j`, `I-slot_j` is `2 + 2j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct TagSet {
    slots: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl TryFrom<Vec<String>> for TagSet {
    type Error = Error;

    fn try_from(value: Vec<String>) -> Result<Self> {
        TagSet::new(value)
    }
}

impl From<TagSet> for Vec<String> {
    fn from(t: TagSet) -> Self {
        t.slots
    }
}

/// A decoded IOB label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Iob {
    Outside,
    Begin(usize),
    Inside(usize),
}

impl TagSet {
    pub fn new<S: Into<String>>(slots: impl IntoIterator<Item = S>) -> Result<Self> {
        let slots: Vec<String> = slots.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(slots.len());
        for (i, s) in slots.iter().enumerate() {
            if s.is_empty() || s.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!("invalid slot name `{s}`")));
            }
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate slot name `{s}`")));
            }
        }
        Ok(Self { slots, index })
    }

    /// Number of slot tags (`l`).
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[String] {
        &self.slots
    }

    pub fn slot_index(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownSlot(name.to_string()))
    }

    pub fn num_labels(&self) -> usize {
        2 * self.slots.len() + 1
    }

    pub fn iob_labels(&self) -> Vec<String> {
        (0..self.num_labels()).map(|i| self.label_name(i)).collect()
    }

    pub fn label_name(&self, id: usize) -> String {
        match self.decode(id) {
            Iob::Outside => "O".to_string(),
            Iob::Begin(s) => format!("B-{}", self.slots[s]),
            Iob::Inside(s) => format!("I-{}", self.slots[s]),
        }
    }

    pub fn decode(&self, id: usize) -> Iob {
        if id == 0 {
            Iob::Outside
        } else if id % 2 == 1 {
            Iob::Begin((id - 1) / 2)
        } else {
            Iob::Inside((id - 2) / 2)
        }
    }

    pub fn encode(&self, iob: Iob) -> usize {
        match iob {
            Iob::Outside => 0,
            Iob::Begin(s) => 1 + 2 * s,
            Iob::Inside(s) => 2 + 2 * s,
        }
    }

    pub fn label_id(&self, label: &str) -> Result<usize> {
        if label == "O" {
            return Ok(0);
        }
        let (prefix, slot) = label
            .split_once('-')
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
        let s = self
            .index
            .get(slot)
            .copied()
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
        match prefix {
            "B" => Ok(1 + 2 * s),
            "I" => Ok(2 + 2 * s),
            _ => Err(Error::UnknownLabel(label.to_string())),
        }
    }
}

/// Binary indicator over the slot inventory of the slots a system turn asks about.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KHotVector {
    bits: Vec<bool>,
}

impl KHotVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            bits: vec![false; len],
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn set_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i)
    }

    pub fn to_column(&self) -> Matrix {
        let v: Vec<f64> = self.bits.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect();
        Matrix::column(&v)
    }
}

pub fn encode_khot<S: AsRef<str>>(targeted: &[S], tags: &TagSet) -> Result<KHotVector> {
    let mut k = KHotVector::zeros(tags.len());
    for s in targeted {
        k.bits[tags.slot_index(s.as_ref())?] = true;
    }
    Ok(k)
}

/// The `d x l` slot projection. Column `j` is the embedding of slot `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotProjection {
    pub matrix: Matrix,
}

impl SlotProjection {
    pub fn new(matrix: Matrix) -> Result<Self> {
        if !matrix.is_finite() {
            return Err(Error::Config("slot projection has non-finite entries".into()));
        }
        Ok(Self { matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn num_slots(&self) -> usize {
        self.matrix.cols()
    }

    /// Sum of the columns selected by `m`.
    pub fn project(&self, m: &KHotVector) -> Result<Vec<f64>> {
        if m.len() != self.num_slots() {
            return Err(Error::Dimension(format!(
                "k-hot of length {} against {} slot columns",
                m.len(),
                self.num_slots()
            )));
        }
        let mut out = vec![0.0; self.dim()];
        for j in m.set_indices() {
            for (r, o) in out.iter_mut().enumerate() {
                *o += self.matrix.get(r, j);
            }
        }
        Ok(out)
    }

    /// Text form: `d l`, a `# slots:` comment naming the columns, then `d` rows.
    pub fn write_text<W: Write>(&self, tags: &TagSet, mut w: W) -> Result<()> {
        if tags.len() != self.num_slots() {
            return Err(Error::Dimension("tag set does not match projection".into()));
        }
        writeln!(w, "{} {}", self.dim(), self.num_slots())?;
        writeln!(w, "# slots: {}", tags.slots().join(" "))?;
        for r in 0..self.dim() {
            let mut line = String::new();
            for (c, v) in self.matrix.row(r).iter().enumerate() {
                if c > 0 {
                    line.push(' ');
                }
                write!(line, "{v}").unwrap();
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn save(&self, tags: &TagSet, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_text(tags, std::io::BufWriter::new(f))
    }

    /// Parse the text form; returns the projection and the column slot order.
    pub fn read_text<R: BufRead>(r: R, path: &Path) -> Result<(Self, TagSet)> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut dims: Option<(usize, usize)> = None;
        let mut slots: Option<Vec<String>> = None;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('#') {
                if let Some(names) = rest.trim().strip_prefix("slots:") {
                    slots = Some(names.split_whitespace().map(String::from).collect());
                }
                continue;
            }
            let nums: Vec<&str> = trimmed.split_whitespace().collect();
            if dims.is_none() {
                if nums.len() != 2 {
                    return Err(err(lineno, "expected `d l` header".into()));
                }
                let d = nums[0].parse().map_err(|_| err(lineno, "bad d".into()))?;
                let l = nums[1].parse().map_err(|_| err(lineno, "bad l".into()))?;
                dims = Some((d, l));
                continue;
            }
            let row = nums
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| err(lineno, e.to_string()))?;
            if row.len() != dims.unwrap().1 {
                return Err(err(lineno, format!("expected {} values", dims.unwrap().1)));
            }
            rows.push(row);
        }
        let (d, l) = dims.ok_or_else(|| err(0, "missing `d l` header".into()))?;
        if rows.len() != d {
            return Err(err(0, format!("expected {d} rows, found {}", rows.len())));
        }
        let slots = slots.ok_or_else(|| err(0, "missing `# slots:` line".into()))?;
        if slots.len() != l {
            return Err(err(0, format!("{} slot names for {l} columns", slots.len())));
        }
        let tags = TagSet::new(slots)?;
        let matrix = Matrix::from_rows(&rows)?;
        Ok((SlotProjection::new(matrix)?, tags))
    }

    pub fn load(path: &Path) -> Result<(Self, TagSet)> {
        let f = std::fs::File::open(path)?;
        Self::read_text(std::io::BufReader::new(f), path)
    }
}

/// Paired views for CCA: one slot indicator and the set of words it spans, per chunk.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CcaPairs {
    /// Slot index of each chunk (the set bit of its a-vector).
    pub slots: Vec<usize>,
    /// Vocabulary indices spanned by each chunk (the set bits of its b-vector).
    pub words: Vec<BTreeSet<usize>>,
    pub num_slots: usize,
    pub vocab_size: usize,
}

impl CcaPairs {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn a_vector(&self, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.num_slots];
        v[self.slots[i]] = 1.0;
        v
    }

    pub fn b_vector(&self, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.vocab_size];
        for w in &self.words[i] {
            v[*w] = 1.0;
        }
        v
    }
}

/// Decode a label sequence into `(start, end_inclusive, slot)` chunks. An
/// `I-x` that does not continue an `x` chunk opens a new chunk.
pub fn label_chunks(labels: &[String], tags: &TagSet) -> Result<Vec<(usize, usize, usize)>> {
    let mut chunks: Vec<(usize, usize, usize)> = Vec::new();
    let mut open: Option<(usize, usize)> = None;
    for (k, label) in labels.iter().enumerate() {
        match tags.decode(tags.label_id(label)?) {
            Iob::Outside => {
                if let Some((s, slot)) = open.take() {
                    chunks.push((s, k - 1, slot));
                }
            }
            Iob::Begin(slot) => {
                if let Some((s, prev)) = open.take() {
                    chunks.push((s, k - 1, prev));
                }
                open = Some((k, slot));
            }
            Iob::Inside(slot) => match open {
                Some((_, prev)) if prev == slot => {}
                _ => {
                    if let Some((s, prev)) = open.take() {
                        chunks.push((s, k - 1, prev));
                    }
                    open = Some((k, slot));
                }
            },
        }
    }
    if let Some((s, slot)) = open {
        chunks.push((s, labels.len() - 1, slot));
    }
    Ok(chunks)
}

/// One pair per contiguous tagged chunk of every utterance.
pub fn build_cca_pairs<T, L>(corpus: &[(T, L)], tags: &TagSet, vocab: &Vocab) -> Result<CcaPairs>
where
    T: AsRef<[String]>,
    L: AsRef<[String]>,
{
    let mut pairs = CcaPairs {
        num_slots: tags.len(),
        vocab_size: vocab.len(),
        ..Default::default()
    };
    for (tokens, labels) in corpus {
        let (tokens, labels) = (tokens.as_ref(), labels.as_ref());
        if tokens.len() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} tokens with {} labels",
                tokens.len(),
                labels.len()
            )));
        }
        for (start, end, slot) in label_chunks(labels, tags)? {
            let words = tokens[start..=end].iter().map(|w| vocab.index(w)).collect();
            pairs.slots.push(slot);
            pairs.words.push(words);
        }
    }
    Ok(pairs)
}

/// Pretrain a `d x l` slot projection with CCA between slot indicators and
/// spanned-word indicators.
///
/// Second-moment matrices are formed from the raw (uncentered) indicator
/// vectors with `reg` added to their diagonals. The top singular vectors of
/// the whitened cross moment give the slot-side directions; each slot's column
/// is its indicator projected onto them, signs fixed so the largest-magnitude
/// entry of each singular vector is positive, then scaled to unit length.
/// At most `min(d, l, |spanned words|)` directions exist; rows beyond that are zero.
pub fn cca_pretrain(pairs: &CcaPairs, d: usize, reg: f64) -> Result<SlotProjection> {
    let n = pairs.len();
    let l = pairs.num_slots;
    if d == 0 || l == 0 {
        return Err(Error::Cca("dimension and slot count must be positive".into()));
    }
    if n < d {
        return Err(Error::Cca(format!(
            "{n} pairs is fewer than d = {d}; reduce d to at most {n}"
        )));
    }
    if !(reg > 0.0) {
        return Err(Error::Cca(format!("regularizer must be positive, got {reg}")));
    }

    // compact word space: only words seen in some span
    let mut word_ids: Vec<usize> = pairs.words.iter().flatten().copied().collect();
    word_ids.sort_unstable();
    word_ids.dedup();
    let v = word_ids.len();
    if v == 0 {
        return Err(Error::Cca("no spanned words".into()));
    }
    let position: HashMap<usize, usize> = word_ids.iter().enumerate().map(|(i, w)| (*w, i)).collect();

    let inv_n = 1.0 / n as f64;
    let mut caa = DMatrix::<f64>::zeros(l, l);
    let mut cbb = DMatrix::<f64>::zeros(v, v);
    let mut cab = DMatrix::<f64>::zeros(l, v);
    for (slot, words) in pairs.slots.iter().zip(&pairs.words) {
        caa[(*slot, *slot)] += inv_n;
        let idx: Vec<usize> = words.iter().map(|w| position[w]).collect();
        for &i in &idx {
            cab[(*slot, i)] += inv_n;
            for &j in &idx {
                cbb[(i, j)] += inv_n;
            }
        }
    }
    for i in 0..l {
        caa[(i, i)] += reg;
    }
    for i in 0..v {
        cbb[(i, i)] += reg;
    }

    let caa_isqrt = inverse_sqrt(caa)?;
    let cbb_isqrt = inverse_sqrt(cbb)?;
    let whitened = &caa_isqrt * &cab * &cbb_isqrt;
    let svd = SVD::new(whitened, true, false);
    let u = svd
        .u
        .ok_or_else(|| Error::Cca("SVD did not produce left vectors".into()))?;
    let k = d.min(l).min(v).min(u.ncols());

    let mut directions = u.columns(0, k).into_owned();
    for mut col in directions.column_iter_mut() {
        let mut best = 0;
        for i in 0..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
    // row s = projection of slot indicator e_s
    let slot_embeddings = &caa_isqrt * directions;

    let mut p = Matrix::zeros(d, l);
    for s in 0..l {
        let row = slot_embeddings.row(s);
        let norm = row.norm();
        if norm > 0.0 {
            for r in 0..k {
                p.set(r, s, row[r] / norm);
            }
        }
    }
    SlotProjection::new(p)
}

fn inverse_sqrt(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 1e-12) {
        return Err(Error::Cca(format!(
            "covariance is singular despite regularization (min eigenvalue {min:e})"
        )));
    }
    let scaled = eig.eigenvalues.map(|x| 1.0 / x.sqrt());
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&scaled) * q.transpose())
}
