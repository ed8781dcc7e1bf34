//! Word embeddings and the stateful LSTM run over a dialog's user utterances.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, NodeId, Tape};
use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";

/// Word to row map. Row 0 is the out-of-vocabulary bucket.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(words: Vec<String>) -> Self {
        let rest = words.into_iter().filter(|w| w != UNK);
        Vocab::from_words(rest)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.words
    }
}

impl Vocab {
    /// Builds a vocabulary in first-seen order after the OOV entry.
    pub fn from_words<S: AsRef<str>>(words: impl IntoIterator<Item = S>) -> Self {
        let mut v = Vocab {
            words: vec![UNK.to_string()],
            index: HashMap::from([(UNK.to_string(), 0)]),
        };
        for w in words {
            let w = w.as_ref();
            if !v.index.contains_key(w) {
                v.index.insert(w.to_string(), v.words.len());
                v.words.push(w.to_string());
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn index(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(0)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WordEmbeddings {
    pub vocab: Vocab,
    /// `|V| x d_in`
    pub table: Matrix,
}

impl WordEmbeddings {
    pub fn random<R: Rng + ?Sized>(vocab: Vocab, dim: usize, scale: f64, rng: &mut R) -> Self {
        let table = Matrix::uniform(vocab.len(), dim, scale, rng);
        Self { vocab, table }
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub fn token_ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.vocab.index(t.as_ref())).collect()
    }

    pub fn embed<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<Vec<f64>> {
        self.token_ids(tokens)
            .into_iter()
            .map(|i| self.table.row(i).to_vec())
            .collect()
    }

    /// Overwrite rows from a text file of `word v1 ... v_d` lines. Words not in
    /// the vocabulary are skipped. Returns how many rows were replaced.
    pub fn load_pretrained(&mut self, path: &Path) -> Result<usize> {
        let f = std::fs::File::open(path)?;
        let mut replaced = 0;
        for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let values = parts
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if values.len() != self.dim() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("expected {} values, found {}", self.dim(), values.len()),
                });
            }
            if self.vocab.contains(word) {
                let row = self.vocab.index(word);
                self.table.row_mut(row).copy_from_slice(&values);
                replaced += 1;
            }
        }
        Ok(replaced)
    }
}

/// Gate layout in the stacked weights: input, forget, output, candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    /// `4d x d_in`
    pub w_input: Matrix,
    /// `4d x d`
    pub w_hidden: Matrix,
    /// `4d x 1`
    pub bias: Matrix,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            w_input: Matrix::zeros(4 * hidden_dim, input_dim),
            w_hidden: Matrix::zeros(4 * hidden_dim, hidden_dim),
            bias: Matrix::zeros(4 * hidden_dim, 1),
        }
    }

    pub fn random<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, scale: f64, rng: &mut R) -> Self {
        Self {
            w_input: Matrix::uniform(4 * hidden_dim, input_dim, scale, rng),
            w_hidden: Matrix::uniform(4 * hidden_dim, hidden_dim, scale, rng),
            bias: Matrix::uniform(4 * hidden_dim, 1, scale, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hidden.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.hidden_dim();
        if self.w_hidden.rows() != 4 * d
            || self.w_input.rows() != 4 * d
            || self.bias.shape() != (4 * d, 1)
        {
            return Err(Error::Dimension(format!(
                "inconsistent LSTM shapes: W_x {:?}, W_h {:?}, b {:?}",
                self.w_input.shape(),
                self.w_hidden.shape(),
                self.bias.shape()
            )));
        }
        Ok(())
    }

    pub fn bind<'a>(&'a self, tape: &mut Tape<'a>) -> LstmNodes {
        LstmNodes {
            w_input: tape.param(&self.w_input),
            w_hidden: tape.param(&self.w_hidden),
            bias: tape.param(&self.bias),
            hidden_dim: self.hidden_dim(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LstmNodes {
    pub w_input: NodeId,
    pub w_hidden: NodeId,
    pub bias: NodeId,
    pub hidden_dim: usize,
}

/// Hidden and cell state passed from one user utterance to the next.
#[derive(Clone, Debug, PartialEq)]
pub struct CarryState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl CarryState {
    pub fn zeros(d: usize) -> Self {
        Self {
            h: vec![0.0; d],
            c: vec![0.0; d],
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CarryNodes {
    pub h: NodeId,
    pub c: NodeId,
}

impl CarryNodes {
    pub fn zeros(tape: &mut Tape<'_>, d: usize) -> Self {
        Self {
            h: tape.constant(Matrix::zeros(d, 1)),
            c: tape.constant(Matrix::zeros(d, 1)),
        }
    }
}

/// What crosses the utterance boundary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CarryMode {
    #[default]
    HAndC,
    HOnly,
}

impl std::str::FromStr for CarryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "h-and-c" => Ok(Self::HAndC),
            "h-only" => Ok(Self::HOnly),
            _ => Err(Error::Config(format!("unknown carry mode `{s}`"))),
        }
    }
}

/// One LSTM step on the tape.
pub fn lstm_step_nodes(
    tape: &mut Tape<'_>,
    x: NodeId,
    state: CarryNodes,
    p: &LstmNodes,
) -> Result<CarryNodes> {
    let d = p.hidden_dim;
    let from_x = tape.matmul(p.w_input, x)?;
    let from_h = tape.matmul(p.w_hidden, state.h)?;
    let pre = tape.sum(&[from_x, from_h, p.bias])?;
    let i_pre = tape.slice_rows(pre, 0, d)?;
    let f_pre = tape.slice_rows(pre, d, d)?;
    let o_pre = tape.slice_rows(pre, 2 * d, d)?;
    let g_pre = tape.slice_rows(pre, 3 * d, d)?;
    let i = tape.sigmoid(i_pre);
    let f = tape.sigmoid(f_pre);
    let o = tape.sigmoid(o_pre);
    let g = tape.tanh(g_pre);
    let kept = tape.mul(f, state.c)?;
    let written = tape.mul(i, g)?;
    let c = tape.add(kept, written)?;
    let squashed = tape.tanh(c);
    let h = tape.mul(o, squashed)?;
    Ok(CarryNodes { h, c })
}

/// Run the LSTM over `token_ids` from `carry`. Returns one hidden state per
/// token and the state after the last token; an empty utterance returns
/// `carry` untouched.
pub fn encode_utterance_nodes(
    tape: &mut Tape<'_>,
    embeddings: NodeId,
    p: &LstmNodes,
    token_ids: &[usize],
    carry: CarryNodes,
) -> Result<(Vec<NodeId>, CarryNodes)> {
    let mut state = carry;
    let mut hidden = Vec::with_capacity(token_ids.len());
    for &id in token_ids {
        let x = tape.gather_row(embeddings, id)?;
        state = lstm_step_nodes(tape, x, state, p)?;
        hidden.push(state.h);
    }
    Ok((hidden, state))
}

fn check_state(state: &CarryState, d: usize) -> Result<()> {
    if state.h.len() != d || state.c.len() != d {
        return Err(Error::Dimension(format!(
            "carry state of size ({}, {}) for hidden size {d}",
            state.h.len(),
            state.c.len()
        )));
    }
    Ok(())
}

pub fn lstm_step(x: &[f64], state: &CarryState, params: &LstmParams) -> Result<CarryState> {
    params.validate()?;
    let d = params.hidden_dim();
    check_state(state, d)?;
    if x.len() != params.input_dim() {
        return Err(Error::Dimension(format!(
            "input of size {} for LSTM input size {}",
            x.len(),
            params.input_dim()
        )));
    }
    let mut tape = Tape::new();
    let nodes = params.bind(&mut tape);
    let x = tape.constant(Matrix::column(x));
    let carry = CarryNodes {
        h: tape.constant(Matrix::column(&state.h)),
        c: tape.constant(Matrix::column(&state.c)),
    };
    let out = lstm_step_nodes(&mut tape, x, carry, &nodes)?;
    Ok(CarryState {
        h: tape.value(out.h).data().to_vec(),
        c: tape.value(out.c).data().to_vec(),
    })
}

pub fn encode_utterance<S: AsRef<str>>(
    tokens: &[S],
    carry: &CarryState,
    params: &LstmParams,
    emb: &WordEmbeddings,
) -> Result<(Vec<Vec<f64>>, CarryState)> {
    params.validate()?;
    check_state(carry, params.hidden_dim())?;
    if emb.dim() != params.input_dim() {
        return Err(Error::Dimension("embedding size differs from LSTM input size".into()));
    }
    let mut tape = Tape::new();
    let nodes = params.bind(&mut tape);
    let table = tape.param(&emb.table);
    let start = CarryNodes {
        h: tape.constant(Matrix::column(&carry.h)),
        c: tape.constant(Matrix::column(&carry.c)),
    };
    let ids = emb.token_ids(tokens);
    let (hidden, last) = encode_utterance_nodes(&mut tape, table, &nodes, &ids, start)?;
    let states = hidden.iter().map(|h| tape.value(*h).data().to_vec()).collect();
    Ok((
        states,
        CarryState {
            h: tape.value(last.h).data().to_vec(),
            c: tape.value(last.c).data().to_vec(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// Straight-line recurrence written independently of the tape.
    fn reference_step(x: &[f64], h: &[f64], c: &[f64], p: &LstmParams) -> (Vec<f64>, Vec<f64>) {
        let d = h.len();
        let mut pre = vec![0.0; 4 * d];
        for (r, v) in pre.iter_mut().enumerate() {
            *v = p.bias.get(r, 0);
            for (k, xv) in x.iter().enumerate() {
                *v += p.w_input.get(r, k) * xv;
            }
            for (k, hv) in h.iter().enumerate() {
                *v += p.w_hidden.get(r, k) * hv;
            }
        }
        let mut h2 = vec![0.0; d];
        let mut c2 = vec![0.0; d];
        for j in 0..d {
            let i = sig(pre[j]);
            let f = sig(pre[d + j]);
            let o = sig(pre[2 * d + j]);
            let g = pre[3 * d + j].tanh();
            c2[j] = f * c[j] + i * g;
            h2[j] = o * c2[j].tanh();
        }
        (h2, c2)
    }

    #[test]
    fn vocab_oov_bucket() {
        let v = Vocab::from_words(["a", "b", "a"]);
        assert_eq!(v.len(), 3);
        assert_eq!(v.index("b"), 2);
        assert_eq!(v.index("xqzzy"), 0);
    }

    #[test]
    fn embed_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let emb = WordEmbeddings::random(Vocab::from_words(["pizza", "hut"]), 5, 0.1, &mut rng);
        assert!(emb.embed::<&str>(&[]).is_empty());
        assert_eq!(emb.embed(&["hut"])[0], emb.table.row(2));
        assert_eq!(emb.embed(&["xqzzy"])[0], emb.table.row(0));
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let p = LstmParams::zeros(3, 4);
        let s = lstm_step(&[1.0, -2.0, 0.5], &CarryState::zeros(4), &p).unwrap();
        assert!(s.h.iter().all(|v| *v == 0.0));
        assert!(s.c.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn saturated_forget_gate_keeps_cell() {
        let d = 3;
        let mut p = LstmParams::zeros(2, d);
        for j in 0..d {
            p.bias.set(d + j, 0, 50.0); // forget gate
            p.bias.set(j, 0, -50.0); // input gate closed
        }
        let state = CarryState {
            h: vec![0.1, 0.2, 0.3],
            c: vec![1.5, -0.7, 0.2],
        };
        let s = lstm_step(&[0.3, 0.4], &state, &p).unwrap();
        for (a, b) in s.c.iter().zip(&state.c) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn step_matches_reference_recurrence() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = LstmParams::random(4, 4, 0.8, &mut rng);
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = lstm_step(&x, &CarryState { h: h.clone(), c: c.clone() }, &p).unwrap();
        let (h2, c2) = reference_step(&x, &h, &c, &p);
        for (a, b) in s.h.iter().zip(&h2).chain(s.c.iter().zip(&c2)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_errors() {
        let p = LstmParams::zeros(3, 4);
        assert!(lstm_step(&[1.0], &CarryState::zeros(4), &p).is_err());
        assert!(lstm_step(&[1.0, 2.0, 3.0], &CarryState::zeros(2), &p).is_err());
    }

    #[test]
    fn stateful_encoding_equals_one_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let emb = WordEmbeddings::random(Vocab::from_words(["a", "b", "c", "d"]), 4, 0.5, &mut rng);
        let p = LstmParams::random(4, 6, 0.5, &mut rng);
        let u1 = ["a", "b", "c"];
        let u2 = ["d", "a"];
        let zero = CarryState::zeros(6);
        let (h1, s1) = encode_utterance(&u1, &zero, &p, &emb).unwrap();
        let (h2, s2) = encode_utterance(&u2, &s1, &p, &emb).unwrap();
        let joined: Vec<&str> = u1.iter().chain(&u2).copied().collect();
        let (hall, sall) = encode_utterance(&joined, &zero, &p, &emb).unwrap();
        assert_eq!(h1.len() + h2.len(), hall.len());
        for (a, b) in h1.iter().chain(&h2).zip(&hall) {
            assert_eq!(a, b);
        }
        assert_eq!(s2, sall);

        let (none, same) = encode_utterance::<&str>(&[], &s1, &p, &emb).unwrap();
        assert!(none.is_empty());
        assert_eq!(same, s1);
    }
}
