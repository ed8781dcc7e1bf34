//! Chunk-level precision, recall and F1 with conlleval semantics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Chunk {
    pub sentence: usize,
    pub start: usize,
    /// Inclusive.
    pub end: usize,
    pub kind: String,
}

pub type ChunkSet = BTreeSet<Chunk>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ChunkMode {
    /// An `I-x` that does not continue an `x` chunk starts a new one, as conlleval does.
    #[default]
    Lenient,
    /// Such an `I-x` is an error.
    Strict,
}

enum Tag<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

fn parse(label: &str) -> Result<Tag<'_>> {
    if label == "O" {
        return Ok(Tag::Outside);
    }
    match label.split_once('-') {
        Some(("B", t)) if !t.is_empty() => Ok(Tag::Begin(t)),
        Some(("I", t)) if !t.is_empty() => Ok(Tag::Inside(t)),
        _ => Err(Error::UnknownLabel(label.to_string())),
    }
}

/// Chunks of one label sequence, tagged with `sentence`.
pub fn extract_chunks_in<S: AsRef<str>>(
    labels: &[S],
    sentence: usize,
    mode: ChunkMode,
) -> Result<Vec<Chunk>> {
    let mut out = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    for (k, label) in labels.iter().enumerate() {
        let tag = parse(label.as_ref())?;
        let continues = matches!((&tag, open), (Tag::Inside(t), Some((_, cur))) if *t == cur);
        if continues {
            continue;
        }
        if let Some((s, kind)) = open.take() {
            out.push(Chunk {
                sentence,
                start: s,
                end: k - 1,
                kind: kind.to_string(),
            });
        }
        match tag {
            Tag::Outside => {}
            Tag::Begin(t) => open = Some((k, t)),
            Tag::Inside(t) => {
                if mode == ChunkMode::Strict {
                    return Err(Error::Malformed(format!(
                        "`{}` at position {k} does not continue a chunk",
                        label.as_ref()
                    )));
                }
                open = Some((k, t));
            }
        }
    }
    if let Some((s, kind)) = open {
        out.push(Chunk {
            sentence,
            start: s,
            end: labels.len() - 1,
            kind: kind.to_string(),
        });
    }
    Ok(out)
}

pub fn extract_chunks<S: AsRef<str>>(labels: &[S]) -> Result<ChunkSet> {
    Ok(extract_chunks_in(labels, 0, ChunkMode::Lenient)?.into_iter().collect())
}

/// Chunks of many sentences, sentence ids by position.
pub fn corpus_chunks<S: AsRef<str>>(sentences: &[Vec<S>], mode: ChunkMode) -> Result<ChunkSet> {
    let mut set = ChunkSet::new();
    for (i, s) in sentences.iter().enumerate() {
        set.extend(extract_chunks_in(s, i, mode)?);
    }
    Ok(set)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TypeScore {
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl TypeScore {
    fn from_counts(gold: usize, predicted: usize, correct: usize) -> Self {
        let precision = if predicted == 0 { 0.0 } else { 100.0 * correct as f64 / predicted as f64 };
        let recall = if gold == 0 { 0.0 } else { 100.0 * correct as f64 / gold as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            gold,
            predicted,
            correct,
            precision,
            recall,
            f1,
        }
    }
}

/// Micro-averaged scores in percent, plus a per-type breakdown.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Score {
    pub overall: TypeScore,
    pub per_type: BTreeMap<String, TypeScore>,
}

impl Score {
    pub fn f1(&self) -> f64 {
        self.overall.f1
    }

    pub fn precision(&self) -> f64 {
        self.overall.precision
    }

    pub fn recall(&self) -> f64 {
        self.overall.recall
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{:<24} {:>8} {:>8} {:>8} {:>7} {:>7}", "type", "prec", "rec", "F1", "gold", "pred").unwrap();
        for (k, t) in &self.per_type {
            writeln!(
                s,
                "{:<24} {:>8.2} {:>8.2} {:>8.2} {:>7} {:>7}",
                k, t.precision, t.recall, t.f1, t.gold, t.predicted
            )
            .unwrap();
        }
        let o = &self.overall;
        writeln!(
            s,
            "{:<24} {:>8.2} {:>8.2} {:>8.2} {:>7} {:>7}",
            "overall", o.precision, o.recall, o.f1, o.gold, o.predicted
        )
        .unwrap();
        s
    }
}

/// A predicted chunk is correct iff its sentence, boundaries and type all match.
pub fn f1(gold: &ChunkSet, pred: &ChunkSet) -> Score {
    let mut counts: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    for c in gold {
        counts.entry(&c.kind).or_default().0 += 1;
    }
    for c in pred {
        let e = counts.entry(&c.kind).or_default();
        e.1 += 1;
        if gold.contains(c) {
            e.2 += 1;
        }
    }
    let (mut g, mut p, mut k) = (0, 0, 0);
    let per_type = counts
        .into_iter()
        .map(|(kind, (gc, pc, cc))| {
            g += gc;
            p += pc;
            k += cc;
            (kind.to_string(), TypeScore::from_counts(gc, pc, cc))
        })
        .collect();
    Score {
        overall: TypeScore::from_counts(g, p, k),
        per_type,
    }
}

/// Score aligned gold/predicted label sequences.
pub fn evaluate<S: AsRef<str>, T: AsRef<str>>(gold: &[Vec<S>], pred: &[Vec<T>]) -> Result<Score> {
    if gold.len() != pred.len() {
        return Err(Error::Dimension(format!(
            "{} gold sentences vs {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(Error::Dimension(format!(
                "sentence {i}: {} gold labels vs {} predicted",
                g.len(),
                p.len()
            )));
        }
    }
    let g = corpus_chunks(gold, ChunkMode::Lenient)?;
    let p = corpus_chunks(pred, ChunkMode::Lenient)?;
    Ok(f1(&g, &p))
}

/// Classic three-column `token gold pred` text, blank line between sentences.
pub fn conll_lines<S: AsRef<str>>(
    tokens: &[Vec<S>],
    gold: &[Vec<S>],
    pred: &[Vec<S>],
) -> String {
    let mut s = String::new();
    for ((t, g), p) in tokens.iter().zip(gold).zip(pred) {
        for ((tok, gl), pl) in t.iter().zip(g).zip(p) {
            writeln!(s, "{} {} {}", tok.as_ref(), gl.as_ref(), pl.as_ref()).unwrap();
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chunk(start: usize, end: usize, kind: &str) -> Chunk {
        Chunk {
            sentence: 0,
            start,
            end,
            kind: kind.into(),
        }
    }

    #[test]
    fn extraction_examples() {
        let c = extract_chunks(&["O", "B-time", "I-time", "O"]).unwrap();
        assert_eq!(c, [chunk(1, 2, "time")].into());
        let c = extract_chunks(&["I-time"]).unwrap();
        assert_eq!(c, [chunk(0, 0, "time")].into());
        let c = extract_chunks(&["B-time", "B-time"]).unwrap();
        assert_eq!(c, [chunk(0, 0, "time"), chunk(1, 1, "time")].into());
        let c = extract_chunks(&["B-time", "I-date"]).unwrap();
        assert_eq!(c, [chunk(0, 0, "time"), chunk(1, 1, "date")].into());
        assert!(extract_chunks(&["X-time"]).is_err());
        assert!(extract_chunks_in(&["O", "I-time"], 0, ChunkMode::Strict).is_err());
    }

    #[test]
    fn analytic_scores() {
        let gold: ChunkSet = [chunk(0, 0, "a"), chunk(2, 3, "b")].into();
        assert_eq!(f1(&gold, &gold).f1(), 100.0);

        let pred: ChunkSet = [chunk(0, 0, "a"), chunk(2, 2, "b")].into();
        let s = f1(&gold, &pred);
        assert_eq!((s.precision(), s.recall(), s.f1()), (50.0, 50.0, 50.0));

        let s = f1(&gold, &ChunkSet::new());
        assert_eq!((s.precision(), s.recall(), s.f1()), (0.0, 0.0, 0.0));
        assert_eq!(s.per_type["a"].gold, 1);
    }

    #[test]
    fn o_region_changes_do_not_move_score() {
        let g = vec![vec!["O", "B-x", "O", "O"]];
        let p1 = vec![vec!["O", "B-x", "O", "O"]];
        let s = evaluate(&g, &p1).unwrap();
        assert_eq!(s.f1(), 100.0);
        assert!(evaluate(&g, &[vec!["O"]]).is_err());
    }

    #[test]
    fn conll_format() {
        let t = vec![vec!["two", "people"]];
        let g = vec![vec!["B-n", "O"]];
        let p = vec![vec!["B-t", "O"]];
        assert_eq!(conll_lines(&t, &g, &p), "two B-n B-t\npeople O O\n\n");
    }
}
