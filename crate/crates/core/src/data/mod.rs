//! Dialog records, the JSONL corpus format, splitting, and the synthetic
//! multi-turn generator.

mod domains;
mod generator;
mod io;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::slot_embed::TagSet;

pub use domains::{builtin_domain, builtin_domains, DOMAIN_NAMES};
pub use generator::{generate, DomainSpec, MultiSlotQuestion, SlotSpec};
pub use io::{load, read_dialogs, read_dialogs_with, save, write_dialogs};

/// One system prompt followed by one user utterance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    #[serde(rename = "sys_slots", default)]
    pub system_slots: Vec<String>,
    #[serde(rename = "sys_text", default)]
    pub system_text: Vec<String>,
    #[serde(rename = "user")]
    pub user_tokens: Vec<String>,
    #[serde(default)]
    pub labels: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialog {
    pub id: String,
    pub domain: String,
    pub turns: Vec<Turn>,
}

impl Dialog {
    pub fn num_tokens(&self) -> usize {
        self.turns.iter().map(|t| t.user_tokens.len()).sum()
    }
}

pub fn count_turns(dialogs: &[Dialog]) -> usize {
    dialogs.iter().map(|d| d.turns.len()).sum()
}

/// Slot inventory seen in a corpus (label types and targeted slots), sorted.
pub fn tagset_from_dialogs(dialogs: &[Dialog]) -> Result<TagSet> {
    let mut slots = BTreeSet::new();
    for d in dialogs {
        for t in &d.turns {
            slots.extend(t.system_slots.iter().cloned());
            for l in &t.labels {
                if let Some((_, s)) = l.split_once('-') {
                    slots.insert(s.to_string());
                }
            }
        }
    }
    TagSet::new(slots)
}

/// Dialog-level split into (train, dev, test). Each part keeps corpus order.
pub fn split(
    dialogs: &[Dialog],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<Dialog>, Vec<Dialog>, Vec<Dialog>)> {
    use rand::seq::SliceRandom;

    let (a, b, c) = ratios;
    if [a, b, c].iter().any(|r| !(0.0..=1.0).contains(r)) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios ({a}, {b}, {c}) must be in [0, 1] and sum to 1"
        )));
    }
    let n = dialogs.len();
    let n_train = (a * n as f64).round() as usize;
    let n_dev = ((b * n as f64).round() as usize).min(n - n_train);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut crate::rng::stream(seed, crate::rng::DATA));
    let mut assign = vec![2u8; n];
    for &i in &order[..n_train] {
        assign[i] = 0;
    }
    for &i in &order[n_train..n_train + n_dev] {
        assign[i] = 1;
    }
    let (mut train, mut dev, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (d, part) in dialogs.iter().zip(assign) {
        match part {
            0 => train.push(d.clone()),
            1 => dev.push(d.clone()),
            _ => test.push(d.clone()),
        }
    }
    Ok((train, dev, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dummy(n: usize) -> Vec<Dialog> {
        (0..n)
            .map(|i| Dialog {
                id: format!("d{i}"),
                domain: "x".into(),
                turns: vec![Turn {
                    system_slots: vec![],
                    system_text: vec![],
                    user_tokens: vec!["hi".into()],
                    labels: vec!["O".into()],
                }],
            })
            .collect()
    }

    #[test]
    fn split_sizes_and_partition() {
        let all = dummy(100);
        let (tr, dv, te) = split(&all, (0.7, 0.15, 0.15), 3).unwrap();
        assert_eq!((tr.len(), dv.len(), te.len()), (70, 15, 15));
        let mut ids: Vec<String> = tr.iter().chain(&dv).chain(&te).map(|d| d.id.clone()).collect();
        ids.sort();
        let mut expect: Vec<String> = all.iter().map(|d| d.id.clone()).collect();
        expect.sort();
        assert_eq!(ids, expect);

        let again = split(&all, (0.7, 0.15, 0.15), 3).unwrap();
        assert_eq!(again.0, tr);
        let other = split(&all, (0.7, 0.15, 0.15), 4).unwrap();
        assert_ne!(other.0, tr);
    }

    #[test]
    fn split_rejects_bad_ratios() {
        let all = dummy(10);
        assert!(split(&all, (0.5, 0.5, 0.5), 1).is_err());
        assert!(split(&all, (1.2, -0.1, -0.1), 1).is_err());
    }
}
