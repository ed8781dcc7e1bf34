//! Per-dialog dual memory and the attention read over it.
//!
//! Entries are tape nodes, so gradients reach earlier turns' encodings
//! unless the caller stores detached copies. At turn `t` the memories hold
//! user words of turns `< t` and the system vectors of turns `<= t` (the
//! prompt that `u^t` answers is visible).

use rand::Rng;
use serde::Serialize;

use crate::autodiff::{Matrix, NodeId, Tape};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EntrySource {
    User,
    /// System prompt tokens stored in the user memory (surface-form baseline).
    SystemSurface,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UserEntry {
    pub turn: usize,
    pub word: usize,
    pub source: EntrySource,
    pub node: NodeId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SystemEntry {
    pub turn: usize,
    pub node: NodeId,
}

#[derive(Clone, Copy, Debug)]
struct Stacked {
    entries: NodeId,
    transposed: NodeId,
}

#[derive(Debug, Default)]
pub struct DualMemory {
    user: Vec<UserEntry>,
    system: Vec<SystemEntry>,
    last_user_turn: usize,
    last_system_turn: usize,
    max_entries: Option<usize>,
    user_stack: Option<Stacked>,
    system_stack: Option<Stacked>,
}

impl DualMemory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Keep at most `cap` entries per store, dropping the oldest.
    pub fn with_capacity_limit(cap: Option<usize>) -> Self {
        Self {
            max_entries: cap,
            ..Self::default()
        }
    }

    pub fn user_entries(&self) -> &[UserEntry] {
        &self.user
    }

    pub fn system_entries(&self) -> &[SystemEntry] {
        &self.system
    }

    pub fn last_turn(&self) -> usize {
        self.last_user_turn.max(self.last_system_turn)
    }

    /// Store the system vector for `turn`. Must not precede anything stored.
    pub fn append_system(&mut self, turn: usize, vector: NodeId) -> Result<()> {
        if turn <= self.last_system_turn || turn <= self.last_user_turn {
            return Err(Error::Config(format!(
                "system entry for turn {turn} after turn {}",
                self.last_turn()
            )));
        }
        self.system.push(SystemEntry { turn, node: vector });
        self.last_system_turn = turn;
        if let Some(cap) = self.max_entries {
            let excess = self.system.len().saturating_sub(cap);
            self.system.drain(..excess);
        }
        self.system_stack = None;
        Ok(())
    }

    /// Store word vectors of `turn`. The system entry of the same turn, if any,
    /// must already be stored.
    pub fn append_user(&mut self, turn: usize, vectors: &[NodeId], source: EntrySource) -> Result<()> {
        if turn <= self.last_user_turn || turn < self.last_system_turn {
            return Err(Error::Config(format!(
                "user entries for turn {turn} after turn {}",
                self.last_turn()
            )));
        }
        self.push_user(turn, vectors, source);
        self.last_user_turn = turn;
        Ok(())
    }

    /// Surface-form system tokens for `turn`, placed in the user store.
    pub fn append_system_surface(&mut self, turn: usize, vectors: &[NodeId]) -> Result<()> {
        if turn <= self.last_user_turn || turn < self.last_system_turn {
            return Err(Error::Config(format!(
                "system tokens for turn {turn} after turn {}",
                self.last_turn()
            )));
        }
        self.push_user(turn, vectors, EntrySource::SystemSurface);
        Ok(())
    }

    fn push_user(&mut self, turn: usize, vectors: &[NodeId], source: EntrySource) {
        for (word, node) in vectors.iter().enumerate() {
            self.user.push(UserEntry {
                turn,
                word,
                source,
                node: *node,
            });
        }
        if let Some(cap) = self.max_entries {
            let excess = self.user.len().saturating_sub(cap);
            self.user.drain(..excess);
        }
        if !vectors.is_empty() {
            self.user_stack = None;
        }
    }

    /// Append one whole turn: user words and an optional system vector.
    /// `turn` must be exactly one past the last stored turn.
    pub fn memory_append(
        &mut self,
        turn: usize,
        user_vectors: &[NodeId],
        system_vector: Option<NodeId>,
    ) -> Result<()> {
        if turn != self.last_turn() + 1 {
            return Err(Error::Config(format!(
                "turn {turn} appended after turn {}",
                self.last_turn()
            )));
        }
        if let Some(s) = system_vector {
            self.append_system(turn, s)?;
        }
        self.append_user(turn, user_vectors, EntrySource::User)
    }

    fn stacked(tape: &mut Tape<'_>, nodes: &[NodeId]) -> Result<Stacked> {
        let entries = tape.hstack(nodes)?;
        let transposed = tape.transpose(entries);
        Ok(Stacked {
            entries,
            transposed,
        })
    }

    fn user_stacked(&mut self, tape: &mut Tape<'_>) -> Result<Stacked> {
        if let Some(s) = self.user_stack {
            return Ok(s);
        }
        if self.user.is_empty() {
            return Err(Error::Empty("user memory".into()));
        }
        let nodes: Vec<NodeId> = self.user.iter().map(|e| e.node).collect();
        let s = Self::stacked(tape, &nodes)?;
        self.user_stack = Some(s);
        Ok(s)
    }

    fn system_stacked(&mut self, tape: &mut Tape<'_>) -> Result<Stacked> {
        if let Some(s) = self.system_stack {
            return Ok(s);
        }
        if self.system.is_empty() {
            return Err(Error::Empty("system memory".into()));
        }
        let nodes: Vec<NodeId> = self.system.iter().map(|e| e.node).collect();
        let s = Self::stacked(tape, &nodes)?;
        self.system_stack = Some(s);
        Ok(s)
    }
}

/// Scalar-score attention weights: `W_a` and `W_b` are `1 x d`, the biases `1 x 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub w_user: Matrix,
    pub b_user: Matrix,
    pub w_system: Matrix,
    pub b_system: Matrix,
}

impl AttentionParams {
    pub fn zeros(d: usize) -> Self {
        Self {
            w_user: Matrix::zeros(1, d),
            b_user: Matrix::zeros(1, 1),
            w_system: Matrix::zeros(1, d),
            b_system: Matrix::zeros(1, 1),
        }
    }

    pub fn random<R: Rng + ?Sized>(d: usize, scale: f64, rng: &mut R) -> Self {
        Self {
            w_user: Matrix::uniform(1, d, scale, rng),
            b_user: Matrix::uniform(1, 1, scale, rng),
            w_system: Matrix::uniform(1, d, scale, rng),
            b_system: Matrix::uniform(1, 1, scale, rng),
        }
    }

    pub fn bind<'a>(&'a self, tape: &mut Tape<'a>) -> AttentionNodes {
        let w_user = tape.param(&self.w_user);
        let w_system = tape.param(&self.w_system);
        AttentionNodes {
            w_user: tape.transpose(w_user),
            b_user: tape.param(&self.b_user),
            w_system: tape.transpose(w_system),
            b_system: tape.param(&self.b_system),
        }
    }
}

/// Attention parameters on a tape; weight vectors are held as `d x 1` columns.
#[derive(Clone, Copy, Debug)]
pub struct AttentionNodes {
    pub w_user: NodeId,
    pub b_user: NodeId,
    pub w_system: NodeId,
    pub b_system: NodeId,
}

fn attend(
    tape: &mut Tape<'_>,
    stacked: Stacked,
    h: NodeId,
    w: NodeId,
    b: NodeId,
) -> Result<NodeId> {
    // score_j = w . (e_j ∘ h) + b = e_j . (w ∘ h) + b
    let wh = tape.mul(w, h)?;
    let raw = tape.matmul(stacked.transposed, wh)?;
    let scores = tape.add_scalar(raw, b)?;
    tape.softmax(scores)
}

/// α over every user entry jointly, as an `n x 1` column.
pub fn attend_user(
    tape: &mut Tape<'_>,
    mem: &mut DualMemory,
    h: NodeId,
    params: &AttentionNodes,
) -> Result<NodeId> {
    let s = mem.user_stacked(tape)?;
    attend(tape, s, h, params.w_user, params.b_user)
}

/// β over the system entries, one weight per stored turn.
pub fn attend_system(
    tape: &mut Tape<'_>,
    mem: &mut DualMemory,
    h: NodeId,
    params: &AttentionNodes,
) -> Result<NodeId> {
    let s = mem.system_stacked(tape)?;
    attend(tape, s, h, params.w_system, params.b_system)
}

pub fn user_context(tape: &mut Tape<'_>, mem: &mut DualMemory, alpha: NodeId) -> Result<NodeId> {
    let s = mem.user_stacked(tape)?;
    weighted_sum(tape, s, alpha)
}

pub fn system_context(tape: &mut Tape<'_>, mem: &mut DualMemory, beta: NodeId) -> Result<NodeId> {
    let s = mem.system_stacked(tape)?;
    weighted_sum(tape, s, beta)
}

fn weighted_sum(tape: &mut Tape<'_>, s: Stacked, weights: NodeId) -> Result<NodeId> {
    let n = tape.value(s.entries).cols();
    let w = tape.value(weights);
    if w.shape() != (n, 1) {
        return Err(Error::Dimension(format!(
            "{:?} weights for {n} memory entries",
            w.shape()
        )));
    }
    tape.matmul(s.entries, weights)
}

/// `(ū, m̄)`; either is `None` when its store is empty.
pub fn context_sums(
    tape: &mut Tape<'_>,
    mem: &mut DualMemory,
    alpha: Option<NodeId>,
    beta: Option<NodeId>,
) -> Result<(Option<NodeId>, Option<NodeId>)> {
    let u = alpha.map(|a| user_context(tape, mem, a)).transpose()?;
    let m = beta.map(|b| system_context(tape, mem, b)).transpose()?;
    Ok((u, m))
}
