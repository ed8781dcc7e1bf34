//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssdmn::autodiff::{Matrix, Tape};
use ssdmn::data::{Dialog, Turn};
use ssdmn::encoder::{encode_utterance, CarryState, LstmParams, Vocab, WordEmbeddings};
use ssdmn::memory::{attend_system, attend_user, context_sums, AttentionParams, DualMemory};
use ssdmn::models::{build_dialog_graph, ForwardOptions, ModelParams, ModelVariant};
use ssdmn::slot_embed::TagSet;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn strs(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

pub fn turn(sys_slots: &str, sys_text: &str, user: &str, labels: &str) -> Turn {
    Turn {
        system_slots: strs(sys_slots),
        system_text: strs(sys_text),
        user_tokens: strs(user),
        labels: strs(labels),
    }
}

/// Three turns where the last answer's slot depends on the second prompt.
pub fn three_turn_dialog() -> Dialog {
    Dialog {
        id: "g-1".into(),
        domain: "reservation".into(),
        turns: vec![
            turn("", "hello", "table at pizza hut", "O O B-place I-place"),
            turn("time date", "what time and day ?", "tomorrow", "B-date"),
            turn("people", "how many people ?", "actually it's three", "O O B-people"),
        ],
    }
}

/// Vocabulary of exactly 20 rows (19 words plus the OOV row).
pub fn twenty_word_vocab(dialog: &Dialog) -> Vocab {
    let mut words: Vec<String> = Vec::new();
    for t in &dialog.turns {
        for w in t.system_text.iter().chain(&t.user_tokens) {
            if !words.contains(w) {
                words.push(w.clone());
            }
        }
    }
    let mut filler = 0;
    while words.len() < 19 {
        words.push(format!("filler{filler}"));
        filler += 1;
    }
    words.truncate(19);
    Vocab::from_words(words)
}

pub fn tiny_model(variant: ModelVariant, seed: u64) -> (ModelParams, Dialog) {
    let dialog = three_turn_dialog();
    let tags = TagSet::new(["date", "people", "place", "time"]).unwrap();
    let vocab = twenty_word_vocab(&dialog);
    assert_eq!(vocab.len(), 20);
    let params = ModelParams::random(variant, tags, vocab, 8, 8, 0.5, &mut rng(seed)).unwrap();
    (params, dialog)
}

pub fn dialog_loss(params: &ModelParams, dialog: &Dialog) -> f64 {
    let prepared = params.prepare(dialog).unwrap();
    let mut tape = Tape::new();
    let g = build_dialog_graph(&mut tape, params, &prepared, &ForwardOptions::inference(), &mut rng(0)).unwrap();
    tape.scalar(g.loss.unwrap())
}

pub fn analytic_grads(params: &ModelParams, dialog: &Dialog) -> Vec<Matrix> {
    let prepared = params.prepare(dialog).unwrap();
    let mut tape = Tape::new();
    let g = build_dialog_graph(&mut tape, params, &prepared, &ForwardOptions::inference(), &mut rng(0)).unwrap();
    let loss = g.loss.unwrap();
    tape.backward(loss).unwrap();
    params
        .tensors()
        .iter()
        .zip(g.leaves)
        .map(|(m, id)| tape.grad(id).cloned().unwrap_or_else(|| Matrix::zeros(m.rows(), m.cols())))
        .collect()
}

/// Relative error with a floor on the denominator so two near-zero values
/// compare by absolute difference.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-5)
}

/// Max relative error between analytic and central-difference gradients
/// over every entry of every tensor, with the offending tensor name.
pub fn finite_difference_check(variant: ModelVariant) -> (f64, &'static str) {
    let (mut params, dialog) = tiny_model(variant, 11);
    let grads = analytic_grads(&params, &dialog);
    let h = 1e-5;
    let mut worst = (0.0, "");
    for (t, name) in ssdmn::models::TENSOR_NAMES.iter().enumerate() {
        let n = params.tensors()[t].len();
        for i in 0..n {
            let orig = params.tensors()[t].data()[i];
            params.tensors_mut()[t].data_mut()[i] = orig + h;
            let up = dialog_loss(&params, &dialog);
            params.tensors_mut()[t].data_mut()[i] = orig - h;
            let down = dialog_loss(&params, &dialog);
            params.tensors_mut()[t].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let e = rel_err(grads[t].data()[i], numeric);
            if e > worst.0 {
                worst = (e, name);
            }
        }
    }
    worst
}

/// Plain-loop LSTM over embedding rows, starting from `state`.
pub fn reference_lstm(
    params: &LstmParams,
    emb: &WordEmbeddings,
    ids: &[usize],
    state: (Vec<f64>, Vec<f64>),
) -> (Vec<Vec<f64>>, (Vec<f64>, Vec<f64>)) {
    let d = params.hidden_dim();
    let din = params.input_dim();
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let (mut h, mut c) = state;
    let mut out = Vec::new();
    for &id in ids {
        let x = emb.table.row(id);
        let mut pre = vec![0.0; 4 * d];
        for (r, p) in pre.iter_mut().enumerate() {
            let mut s = params.bias.get(r, 0);
            for j in 0..din {
                s += params.w_input.get(r, j) * x[j];
            }
            for j in 0..d {
                s += params.w_hidden.get(r, j) * h[j];
            }
            *p = s;
        }
        let mut nh = vec![0.0; d];
        let mut nc = vec![0.0; d];
        for k in 0..d {
            let i = sig(pre[k]);
            let f = sig(pre[d + k]);
            let o = sig(pre[2 * d + k]);
            let g = pre[3 * d + k].tanh();
            nc[k] = f * c[k] + i * g;
            nh[k] = o * nc[k].tanh();
        }
        h = nh;
        c = nc;
        out.push(h.clone());
    }
    (out, (h, c))
}

/// Max abs difference between per-turn stateful encoding, one-shot encoding of
/// the concatenation, and the plain-loop reference, over `n` random dialogs.
pub fn stateful_equivalence(n: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let words: Vec<String> = (0..30).map(|i| format!("w{i}")).collect();
    let vocab = Vocab::from_words(&words);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let d = r.gen_range(2..8);
        let din = r.gen_range(2..8);
        let params = LstmParams::random(din, d, 0.8, &mut r);
        let emb = WordEmbeddings::random(vocab.clone(), din, 1.0, &mut r);
        let turns: Vec<Vec<String>> = (0..r.gen_range(1..6))
            .map(|_| (0..r.gen_range(0..7)).map(|_| words[r.gen_range(0..30)].clone()).collect())
            .collect();

        let mut carry = CarryState::zeros(d);
        let mut stateful = Vec::new();
        for t in &turns {
            let (hs, next) = encode_utterance(t, &carry, &params, &emb).unwrap();
            stateful.extend(hs);
            carry = next;
        }
        let concat: Vec<String> = turns.concat();
        let (one_shot, last) = encode_utterance(&concat, &CarryState::zeros(d), &params, &emb).unwrap();
        let ids = emb.token_ids(&concat);
        let (reference, _) = reference_lstm(&params, &emb, &ids, (vec![0.0; d], vec![0.0; d]));

        assert_eq!(stateful.len(), one_shot.len());
        for ((a, b), c) in stateful.iter().zip(&one_shot).zip(&reference) {
            for k in 0..d {
                worst = worst.max((a[k] - b[k]).abs()).max((a[k] - c[k]).abs());
            }
        }
        for k in 0..d {
            worst = worst.max((carry.h[k] - last.h[k]).abs()).max((carry.c[k] - last.c[k]).abs());
        }
    }
    worst
}

#[derive(Debug, Default)]
pub struct AttentionReport {
    pub max_sum_error: f64,
    pub max_hull_violation: f64,
    pub max_permutation_error: f64,
}

/// Random memories: weight sums, convex hull of context sums, and
/// permutation covariance of weights and sums.
pub fn attention_contracts(n: usize, seed: u64) -> AttentionReport {
    let mut r = rng(seed);
    let mut rep = AttentionReport::default();
    for _ in 0..n {
        let d = r.gen_range(1..7);
        let nu = r.gen_range(1..9);
        let ns = r.gen_range(1..5);
        let params = AttentionParams::random(d, 2.0, &mut r);
        let user: Vec<Vec<f64>> = (0..nu).map(|_| (0..d).map(|_| r.gen_range(-3.0..3.0)).collect()).collect();
        let sys: Vec<Vec<f64>> = (0..ns).map(|_| (0..d).map(|_| r.gen_range(-3.0..3.0)).collect()).collect();
        let h: Vec<f64> = (0..d).map(|_| r.gen_range(-2.0..2.0)).collect();

        let run = |user: &[Vec<f64>], sys: &[Vec<f64>]| {
            let mut tape = Tape::new();
            let nodes = params.bind(&mut tape);
            let mut mem = DualMemory::new();
            let sv: Vec<_> = sys.iter().map(|v| tape.var(Matrix::column(v))).collect();
            for (i, s) in sv.iter().enumerate() {
                mem.append_system(i + 1, *s).unwrap();
            }
            let uv: Vec<_> = user.iter().map(|v| tape.var(Matrix::column(v))).collect();
            mem.append_user(sv.len() + 1, &uv, ssdmn::memory::EntrySource::User).unwrap();
            let hn = tape.var(Matrix::column(&h));
            let a = attend_user(&mut tape, &mut mem, hn, &nodes).unwrap();
            let b = attend_system(&mut tape, &mut mem, hn, &nodes).unwrap();
            let (u, m) = context_sums(&mut tape, &mut mem, Some(a), Some(b)).unwrap();
            let v = |id| tape.value(id).data().to_vec();
            (v(a), v(b), v(u.unwrap()), v(m.unwrap()))
        };

        let (a, b, u, m) = run(&user, &sys);
        rep.max_sum_error = rep
            .max_sum_error
            .max((a.iter().sum::<f64>() - 1.0).abs())
            .max((b.iter().sum::<f64>() - 1.0).abs());
        for (ctx, entries) in [(&u, &user), (&m, &sys)] {
            for k in 0..d {
                let lo = entries.iter().map(|e| e[k]).fold(f64::INFINITY, f64::min);
                let hi = entries.iter().map(|e| e[k]).fold(f64::NEG_INFINITY, f64::max);
                rep.max_hull_violation = rep.max_hull_violation.max(lo - ctx[k]).max(ctx[k] - hi);
            }
        }

        let mut pu: Vec<usize> = (0..nu).collect();
        let mut ps: Vec<usize> = (0..ns).collect();
        use rand::seq::SliceRandom;
        pu.shuffle(&mut r);
        ps.shuffle(&mut r);
        let user_p: Vec<Vec<f64>> = pu.iter().map(|&i| user[i].clone()).collect();
        let sys_p: Vec<Vec<f64>> = ps.iter().map(|&i| sys[i].clone()).collect();
        let (a2, b2, u2, m2) = run(&user_p, &sys_p);
        let mut e: f64 = 0.0;
        for (j, &i) in pu.iter().enumerate() {
            e = e.max((a2[j] - a[i]).abs());
        }
        for (j, &i) in ps.iter().enumerate() {
            e = e.max((b2[j] - b[i]).abs());
        }
        for k in 0..d {
            e = e.max((u2[k] - u[k]).abs()).max((m2[k] - m[k]).abs());
        }
        rep.max_permutation_error = rep.max_permutation_error.max(e);
    }
    rep
}

/// Chunks per the conlleval state machine: `(start, end, type)`.
pub fn conlleval_chunks(labels: &[String]) -> Vec<(usize, usize, String)> {
    fn split(l: &str) -> (&str, &str) {
        if l == "O" {
            ("O", "")
        } else {
            l.split_once('-').unwrap()
        }
    }
    fn end_of_chunk(prev_tag: &str, tag: &str, prev_type: &str, ty: &str) -> bool {
        (prev_tag == "B" && tag == "B")
            || (prev_tag == "B" && tag == "O")
            || (prev_tag == "I" && tag == "B")
            || (prev_tag == "I" && tag == "O")
            || (prev_tag != "O" && prev_type != ty)
    }
    fn start_of_chunk(prev_tag: &str, tag: &str, prev_type: &str, ty: &str) -> bool {
        (prev_tag == "B" && tag == "B")
            || (prev_tag == "I" && tag == "B")
            || (prev_tag == "O" && tag == "B")
            || (prev_tag == "O" && tag == "I")
            || (tag != "O" && prev_type != ty)
    }
    let mut out = Vec::new();
    let (mut prev_tag, mut prev_type) = ("O", "");
    let mut start = None;
    for (k, l) in labels.iter().enumerate() {
        let (tag, ty) = split(l);
        if start.is_some() && end_of_chunk(prev_tag, tag, prev_type, ty) {
            out.push((start.take().unwrap(), k - 1, prev_type.to_string()));
        }
        if start_of_chunk(prev_tag, tag, prev_type, ty) {
            start = Some(k);
        }
        prev_tag = tag;
        prev_type = ty;
    }
    if let Some(s) = start {
        out.push((s, labels.len() - 1, prev_type.to_string()));
    }
    out
}

/// Counting scorer over conlleval chunks: (precision, recall, f1) in percent.
pub fn conlleval_score(gold: &[Vec<String>], pred: &[Vec<String>]) -> (f64, f64, f64) {
    let (mut g, mut p, mut c) = (0usize, 0usize, 0usize);
    for (gs, ps) in gold.iter().zip(pred) {
        let gc = conlleval_chunks(gs);
        let pc = conlleval_chunks(ps);
        g += gc.len();
        p += pc.len();
        c += pc.iter().filter(|x| gc.contains(x)).count();
    }
    let prec = if p == 0 { 0.0 } else { 100.0 * c as f64 / p as f64 };
    let rec = if g == 0 { 0.0 } else { 100.0 * c as f64 / g as f64 };
    let f = if prec + rec == 0.0 { 0.0 } else { 2.0 * prec * rec / (prec + rec) };
    (prec, rec, f)
}

pub fn random_iob<R: Rng>(r: &mut R, len: usize, types: &[&str]) -> Vec<String> {
    (0..len)
        .map(|_| match r.gen_range(0..3) {
            0 => "O".to_string(),
            1 => format!("B-{}", types[r.gen_range(0..types.len())]),
            _ => format!("I-{}", types[r.gen_range(0..types.len())]),
        })
        .collect()
}

/// (number of sequences where chunk sets disagree, number of pairs where
/// scores disagree) over `n` random gold/pred pairs.
pub fn scorer_oracle(n: usize, seed: u64) -> (usize, usize) {
    let mut r = rng(seed);
    let types = ["time", "date", "people"];
    let (mut chunk_mismatch, mut score_mismatch) = (0, 0);
    for _ in 0..n {
        let len = r.gen_range(0..12);
        let gold = random_iob(&mut r, len, &types);
        let pred = random_iob(&mut r, len, &types);
        for s in [&gold, &pred] {
            let mine: Vec<(usize, usize, String)> = ssdmn::eval::extract_chunks(s)
                .unwrap()
                .into_iter()
                .map(|c| (c.start, c.end, c.kind))
                .collect();
            let mut theirs = conlleval_chunks(s);
            theirs.sort();
            if mine != theirs {
                chunk_mismatch += 1;
            }
        }
        let score = ssdmn::eval::evaluate(&[gold.clone()], &[pred.clone()]).unwrap();
        let (p, rc, f) = conlleval_score(&[gold], &[pred]);
        if (score.precision() - p).abs() > 1e-9 || (score.recall() - rc).abs() > 1e-9 || (score.f1() - f).abs() > 1e-9 {
            score_mismatch += 1;
        }
    }
    (chunk_mismatch, score_mismatch)
}
