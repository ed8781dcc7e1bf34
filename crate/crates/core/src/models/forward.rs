use rand::Rng;
use serde::Serialize;

use super::{repair_iob, ModelParams, PreparedDialog, SystemEncoding};
use crate::autodiff::{softmax_values, NodeId, Tape};
use crate::encoder::{encode_utterance_nodes, CarryMode, CarryNodes, LstmNodes};
use crate::error::Result;
use crate::memory::{
    attend_system, attend_user, system_context, user_context, AttentionNodes, DualMemory,
    EntrySource,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForwardOptions {
    pub training: bool,
    pub keep_prob: f64,
    /// Store constant copies in memory so no gradient crosses turns through it.
    pub detach_memory: bool,
}

impl ForwardOptions {
    pub fn inference() -> Self {
        Self {
            training: false,
            keep_prob: 1.0,
            detach_memory: false,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TokenTrace {
    pub logits: NodeId,
    pub alpha: Option<NodeId>,
    pub beta: Option<NodeId>,
}

/// Position of one user-store entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct MemoryCoord {
    pub turn: usize,
    pub word: usize,
    pub source: EntrySource,
}

#[derive(Clone, Debug)]
pub struct TurnTrace {
    pub tokens: Vec<TokenTrace>,
    /// User-store layout seen by this turn's attention.
    pub user_memory: Vec<MemoryCoord>,
    /// Turn numbers of the system entries seen by this turn's attention.
    pub system_memory: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct DialogGraph {
    pub turns: Vec<TurnTrace>,
    /// Summed token cross-entropy; `None` without gold labels or tokens.
    pub loss: Option<NodeId>,
    /// Parameter leaves in tensor order.
    pub leaves: [NodeId; 12],
}

/// Record the whole dialog on `tape`, turn by turn.
///
/// Turn `t` (1-based) first stores its system prompt, then encodes the user
/// words from the carried state, tags every word from
/// `W_h h + W_u ū + W_m m̄` and finally stores the words in the user memory.
/// Context terms whose store is empty are left out.
pub fn build_dialog_graph<'a, R: Rng + ?Sized>(
    tape: &mut Tape<'a>,
    params: &'a ModelParams,
    dialog: &PreparedDialog,
    opts: &ForwardOptions,
    rng: &mut R,
) -> Result<DialogGraph> {
    let flags = params.variant.flags();
    let d = params.hidden_dim();
    let leaves = params.tensors().map(|m| tape.param(m));
    let [emb, w_input, w_hidden, bias, p, w_user, b_user, w_system, b_system, w_h, w_u, w_m] = leaves;
    let lstm = LstmNodes {
        w_input,
        w_hidden,
        bias,
        hidden_dim: d,
    };
    let att = AttentionNodes {
        w_user: tape.transpose(w_user),
        b_user,
        w_system: tape.transpose(w_system),
        b_system,
    };

    let mut mem = DualMemory::with_capacity_limit(params.max_memory);
    let mut carry = CarryNodes::zeros(tape, d);
    let mut losses = Vec::new();
    let mut traces = Vec::with_capacity(dialog.turns.len());

    let keep = |tape: &mut Tape<'a>, x: NodeId| if opts.detach_memory { tape.detach(x) } else { x };

    for (i, turn) in dialog.turns.iter().enumerate() {
        let t = i + 1;

        let mut last_system = None;
        match flags.system_encoding {
            SystemEncoding::None => {}
            SystemEncoding::KHotProjection if turn.khot.count() > 0 => {
                let k = tape.constant(turn.khot.to_column());
                let v = tape.matmul(p, k)?;
                if flags.system_memory {
                    let v = keep(tape, v);
                    mem.append_system(t, v)?;
                } else {
                    last_system = Some(v);
                }
            }
            SystemEncoding::KHotProjection => {}
            SystemEncoding::SurfaceWords => {
                if !turn.system.is_empty() {
                    let start = CarryNodes::zeros(tape, d);
                    let (hs, _) = encode_utterance_nodes(tape, emb, &lstm, &turn.system, start)?;
                    let hs: Vec<NodeId> = hs.into_iter().map(|h| keep(tape, h)).collect();
                    mem.append_system_surface(t, &hs)?;
                }
            }
        }

        if t > 1 && params.carry_mode == CarryMode::HOnly {
            carry.c = tape.constant(crate::autodiff::Matrix::zeros(d, 1));
        }
        let (hidden, next) = encode_utterance_nodes(tape, emb, &lstm, &turn.user, carry)?;
        carry = next;

        let use_user = flags.user_memory && !mem.user_entries().is_empty();
        let use_system = flags.system_memory && !mem.system_entries().is_empty();
        let mut tokens = Vec::with_capacity(hidden.len());
        for (k, &h) in hidden.iter().enumerate() {
            let dropped = tape.dropout(h, opts.keep_prob, rng, opts.training)?;
            let mut terms = vec![tape.matmul(w_h, dropped)?];
            let mut alpha = None;
            let mut beta = None;
            if use_user {
                let a = attend_user(tape, &mut mem, h, &att)?;
                let u = user_context(tape, &mut mem, a)?;
                terms.push(tape.matmul(w_u, u)?);
                alpha = Some(a);
            }
            if use_system {
                let b = attend_system(tape, &mut mem, h, &att)?;
                let m = system_context(tape, &mut mem, b)?;
                terms.push(tape.matmul(w_m, m)?);
                beta = Some(b);
            }
            if let Some(m) = last_system {
                terms.push(tape.matmul(w_m, m)?);
            }
            let logits = if terms.len() == 1 { terms[0] } else { tape.sum(&terms)? };
            if let Some(gold) = &turn.gold {
                losses.push(tape.softmax_cross_entropy(logits, gold[k])?);
            }
            tokens.push(TokenTrace { logits, alpha, beta });
        }

        traces.push(TurnTrace {
            tokens,
            user_memory: mem
                .user_entries()
                .iter()
                .filter(|_| use_user)
                .map(|e| MemoryCoord {
                    turn: e.turn,
                    word: e.word,
                    source: e.source,
                })
                .collect(),
            system_memory: mem
                .system_entries()
                .iter()
                .filter(|_| use_system)
                .map(|e| e.turn)
                .collect(),
        });

        if flags.user_memory {
            let hs: Vec<NodeId> = hidden.iter().map(|&h| keep(tape, h)).collect();
            mem.append_user(t, &hs, EntrySource::User)?;
        }
    }

    let loss = match losses.len() {
        0 => None,
        1 => Some(losses[0]),
        _ => Some(tape.sum(&losses)?),
    };
    Ok(DialogGraph {
        turns: traces,
        loss,
        leaves,
    })
}

/// Labels and attention for one user turn.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TurnPrediction {
    pub labels: Vec<String>,
    #[serde(skip)]
    pub label_ids: Vec<usize>,
    /// Per token, the distribution over label ids.
    #[serde(skip)]
    pub probabilities: Vec<Vec<f64>>,
    /// Per token, weights over `user_memory`; empty rows when unused.
    pub alpha: Vec<Vec<f64>>,
    /// Per token, weights over `system_memory`.
    pub beta: Vec<Vec<f64>>,
    pub user_memory: Vec<MemoryCoord>,
    pub system_memory: Vec<usize>,
}

/// Greedy per-token decoding of every turn, with IOB repair.
pub fn predict_dialog(params: &ModelParams, dialog: &PreparedDialog) -> Result<Vec<TurnPrediction>> {
    let mut tape = Tape::new();
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let graph = build_dialog_graph(&mut tape, params, dialog, &ForwardOptions::inference(), &mut rng)?;
    let column = |id: Option<NodeId>| -> Vec<f64> {
        id.map(|n| tape.value(n).data().to_vec()).unwrap_or_default()
    };
    let mut out = Vec::with_capacity(graph.turns.len());
    for trace in graph.turns {
        let probabilities: Vec<Vec<f64>> = trace
            .tokens
            .iter()
            .map(|tok| softmax_values(tape.value(tok.logits)).data().to_vec())
            .collect();
        let mut ids: Vec<usize> = trace
            .tokens
            .iter()
            .map(|tok| tape.value(tok.logits).argmax())
            .collect();
        repair_iob(&mut ids, &params.tags);
        out.push(TurnPrediction {
            labels: ids.iter().map(|&i| params.tags.label_name(i)).collect(),
            label_ids: ids,
            probabilities,
            alpha: trace.tokens.iter().map(|tok| column(tok.alpha)).collect(),
            beta: trace.tokens.iter().map(|tok| column(tok.beta)).collect(),
            user_memory: trace.user_memory,
            system_memory: trace.system_memory,
        });
    }
    Ok(out)
}
