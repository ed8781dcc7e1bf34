use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dialog, Turn};
use crate::error::{Error, Result};
use crate::slot_embed::TagSet;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlotSpec {
    pub name: String,
    /// Shared lexicon this slot draws ambiguous answers from.
    #[serde(default)]
    pub class: Option<String>,
    /// Values only this slot uses.
    pub values: Vec<String>,
    /// System prompts asking for this slot.
    pub questions: Vec<String>,
    /// Explicit answer templates; `{v}` marks the value.
    pub answers: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MultiSlotQuestion {
    pub slots: Vec<String>,
    pub questions: Vec<String>,
}

/// Generator configuration for one domain.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DomainSpec {
    pub name: String,
    pub slots: Vec<SlotSpec>,
    /// Class name to values shared by every slot of that class.
    pub shared_lexicons: BTreeMap<String, Vec<String>>,
    pub multi_questions: Vec<MultiSlotQuestion>,
    /// Open system prompts that target no slot.
    pub opening_prompts: Vec<String>,
    /// User-initiative utterances; `{slot}` tokens are filled from private lexicons.
    pub openings: Vec<String>,
    /// Answer templates that carry no cue about the slot; `{v}` marks the value.
    pub bare_answers: Vec<String>,
    pub closing_prompts: Vec<String>,
    pub closing_replies: Vec<String>,
    /// Probability that an answer for a slot with a class uses the shared lexicon.
    pub ambiguity: f64,
    /// Probability that a question turn targets several slots at once.
    pub multi_rate: f64,
    /// Probability that a dialog opens with a slotless prompt.
    pub opening_rate: f64,
    /// Probability that a dialog of three or more turns ends with a slotless exchange.
    pub closing_rate: f64,
    pub min_turns: usize,
    pub max_turns: usize,
}

fn tokens(s: &str) -> impl Iterator<Item = &str> {
    s.split_whitespace()
}

fn placeholder(tok: &str) -> Option<&str> {
    tok.strip_prefix('{').and_then(|t| t.strip_suffix('}'))
}

impl DomainSpec {
    pub fn tagset(&self) -> TagSet {
        TagSet::new(self.slots.iter().map(|s| s.name.clone())).expect("validated slot names")
    }

    fn slot(&self, name: &str) -> Option<&SlotSpec> {
        self.slots.iter().find(|s| s.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("domain `{}`: {m}", self.name)));
        if !(0.0..=1.0).contains(&self.ambiguity) {
            return bad(format!("ambiguity {} outside [0, 1]", self.ambiguity));
        }
        for (what, p) in [
            ("multi_rate", self.multi_rate),
            ("opening_rate", self.opening_rate),
            ("closing_rate", self.closing_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{what} {p} outside [0, 1]"));
            }
        }
        if self.min_turns == 0 || self.min_turns > self.max_turns {
            return bad("turn range must satisfy 1 <= min <= max".into());
        }
        if self.slots.is_empty() {
            return bad("no slots".into());
        }
        TagSet::new(self.slots.iter().map(|s| s.name.clone()))?;

        // value tokens: private lexicons pairwise disjoint, and disjoint from
        // every shared lexicon
        let mut owner: HashMap<&str, String> = HashMap::new();
        for (class, values) in &self.shared_lexicons {
            if values.is_empty() {
                return bad(format!("shared lexicon `{class}` is empty"));
            }
            for v in values {
                for t in tokens(v) {
                    if let Some(prev) = owner.insert(t, format!("class {class}")) {
                        if prev != format!("class {class}") {
                            return bad(format!("token `{t}` in both {prev} and class {class}"));
                        }
                    }
                }
            }
        }
        for s in &self.slots {
            if s.values.is_empty() || s.questions.is_empty() || s.answers.is_empty() {
                return bad(format!("slot `{}` needs values, questions and answers", s.name));
            }
            if let Some(c) = &s.class {
                if !self.shared_lexicons.contains_key(c) {
                    return bad(format!("slot `{}` references unknown class `{c}`", s.name));
                }
            }
            for a in &s.answers {
                let n = tokens(a).filter(|t| *t == "{v}").count();
                if n != 1 || tokens(a).any(|t| placeholder(t).is_some_and(|p| p != "v")) {
                    return bad(format!("answer template `{a}` must contain `{{v}}` once"));
                }
            }
            let me = format!("slot {}", s.name);
            for v in &s.values {
                for t in tokens(v) {
                    if let Some(prev) = owner.insert(t, me.clone()) {
                        if prev != me {
                            return bad(format!("token `{t}` in both {prev} and {me}"));
                        }
                    }
                }
            }
        }
        for b in &self.bare_answers {
            if tokens(b).filter(|t| *t == "{v}").count() != 1 {
                return bad(format!("bare template `{b}` must contain `{{v}}` once"));
            }
        }
        for o in &self.openings {
            let mut seen = HashSet::new();
            for t in tokens(o) {
                if let Some(p) = placeholder(t) {
                    if self.slot(p).is_none() {
                        return bad(format!("opening `{o}` references unknown slot `{p}`"));
                    }
                    if !seen.insert(p) {
                        return bad(format!("opening `{o}` repeats slot `{p}`"));
                    }
                }
            }
        }
        for m in &self.multi_questions {
            if m.slots.len() < 2 || m.questions.is_empty() {
                return bad("multi-slot question needs >= 2 slots and a prompt".into());
            }
            let mut classes = HashSet::new();
            let mut names = HashSet::new();
            for s in &m.slots {
                let Some(spec) = self.slot(s) else {
                    return bad(format!("multi-slot question references unknown slot `{s}`"));
                };
                if !names.insert(s) {
                    return bad(format!("multi-slot question repeats `{s}`"));
                }
                if let Some(c) = &spec.class {
                    if !classes.insert(c) {
                        return bad(format!("multi-slot question has two slots of class `{c}`"));
                    }
                }
            }
        }
        if self.opening_rate > 0.0 && (self.opening_prompts.is_empty() || self.openings.is_empty()) {
            return bad("openings enabled without templates".into());
        }
        if self.closing_rate > 0.0 && (self.closing_prompts.is_empty() || self.closing_replies.is_empty()) {
            return bad("closings enabled without templates".into());
        }
        if self.bare_answers.is_empty() {
            return bad("no bare answer templates".into());
        }
        Ok(())
    }
}

struct Utterance {
    tokens: Vec<String>,
    labels: Vec<String>,
}

impl Utterance {
    fn new() -> Self {
        Self {
            tokens: Vec::new(),
            labels: Vec::new(),
        }
    }

    fn words(&mut self, text: &str) {
        for t in tokens(text) {
            self.tokens.push(t.to_string());
            self.labels.push("O".into());
        }
    }

    fn value(&mut self, slot: &str, value: &str) {
        for (i, t) in tokens(value).enumerate() {
            self.tokens.push(t.to_string());
            let prefix = if i == 0 { "B" } else { "I" };
            self.labels.push(format!("{prefix}-{slot}"));
        }
    }

    /// Fill a template where `{name}` tokens resolve through `fill`.
    fn template(&mut self, template: &str, mut fill: impl FnMut(&str) -> (String, String)) {
        for t in tokens(template) {
            match placeholder(t) {
                Some(p) => {
                    let (slot, value) = fill(p);
                    self.value(&slot, &value);
                }
                None => self.words(t),
            }
        }
    }
}

fn pick<'a, R: Rng + ?Sized>(rng: &mut R, xs: &'a [String]) -> &'a str {
    xs.choose(rng).expect("validated non-empty")
}

fn split_text(s: &str) -> Vec<String> {
    tokens(s).map(String::from).collect()
}

struct DialogBuilder<'s> {
    spec: &'s DomainSpec,
    filled: HashSet<&'s str>,
    turns: Vec<Turn>,
}

impl<'s> DialogBuilder<'s> {
    /// Answer for `slot`, ambiguous at the configured rate.
    fn answer<R: Rng + ?Sized>(&mut self, slot: &'s SlotSpec, out: &mut Utterance, rng: &mut R) {
        self.filled.insert(&slot.name);
        let shared = slot
            .class
            .as_ref()
            .filter(|_| rng.gen::<f64>() < self.spec.ambiguity)
            .map(|c| &self.spec.shared_lexicons[c]);
        match shared {
            Some(lexicon) => {
                let value = pick(rng, lexicon).to_string();
                let template = pick(rng, &self.spec.bare_answers);
                out.template(template, |_| (slot.name.clone(), value.clone()));
            }
            None => {
                let value = pick(rng, &slot.values).to_string();
                let template = if rng.gen::<f64>() < 0.25 {
                    pick(rng, &self.spec.bare_answers)
                } else {
                    pick(rng, &slot.answers)
                };
                out.template(template, |_| (slot.name.clone(), value.clone()));
            }
        }
    }

    fn opening<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let spec = self.spec;
        let prompt = pick(rng, &spec.opening_prompts);
        let template = pick(rng, &spec.openings);
        let mut u = Utterance::new();
        let mut used = Vec::new();
        u.template(template, |name| {
            let slot = spec.slot(name).expect("validated");
            used.push(&slot.name);
            (slot.name.clone(), pick(rng, &slot.values).to_string())
        });
        for name in used {
            self.filled.insert(name);
        }
        self.push(Vec::new(), prompt, u);
    }

    fn closing<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let prompt = pick(rng, &self.spec.closing_prompts);
        let mut u = Utterance::new();
        u.words(pick(rng, &self.spec.closing_replies));
        self.push(Vec::new(), prompt, u);
    }

    fn question<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let spec = self.spec;
        let open: Vec<&MultiSlotQuestion> = spec
            .multi_questions
            .iter()
            .filter(|m| m.slots.iter().all(|s| !self.filled.contains(s.as_str())))
            .collect();
        if !open.is_empty() && rng.gen::<f64>() < spec.multi_rate {
            let m = *open.choose(rng).unwrap();
            let prompt = pick(rng, &m.questions);
            let mut u = Utterance::new();
            if rng.gen::<f64>() < 0.3 {
                // answer every targeted slot
                for (i, name) in m.slots.iter().enumerate() {
                    if i > 0 {
                        u.words("and");
                    }
                    let slot = spec.slot(name).unwrap();
                    let value = pick(rng, &slot.values).to_string();
                    self.filled.insert(&slot.name);
                    u.value(&slot.name, &value);
                }
            } else {
                let name = m.slots.choose(rng).unwrap();
                let slot = spec.slot(name).unwrap();
                self.answer(slot, &mut u, rng);
            }
            self.push(m.slots.clone(), prompt, u);
            return true;
        }
        let remaining: Vec<&SlotSpec> = spec
            .slots
            .iter()
            .filter(|s| !self.filled.contains(s.name.as_str()))
            .collect();
        let Some(slot) = remaining.choose(rng).copied() else {
            return false;
        };
        let prompt = pick(rng, &slot.questions);
        let mut u = Utterance::new();
        self.answer(slot, &mut u, rng);
        self.push(vec![slot.name.clone()], prompt, u);
        true
    }

    fn push(&mut self, system_slots: Vec<String>, prompt: &str, u: Utterance) {
        self.turns.push(Turn {
            system_slots,
            system_text: split_text(prompt),
            user_tokens: u.tokens,
            labels: u.labels,
        });
    }
}

/// Generate `n` dialogs. Deterministic in `seed`.
pub fn generate(spec: &DomainSpec, n: usize, seed: u64) -> Result<Vec<Dialog>> {
    spec.validate()?;
    let mut rng = crate::rng::stream(seed, crate::rng::DATA);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let n_turns = rng.gen_range(spec.min_turns..=spec.max_turns);
        let mut b = DialogBuilder {
            spec,
            filled: HashSet::new(),
            turns: Vec::with_capacity(n_turns),
        };
        if rng.gen::<f64>() < spec.opening_rate {
            b.opening(&mut rng);
        }
        let close = n_turns >= 3 && rng.gen::<f64>() < spec.closing_rate;
        let questions = n_turns - usize::from(close);
        while b.turns.len() < questions {
            if !b.question(&mut rng) {
                break;
            }
        }
        while b.turns.len() < n_turns {
            if spec.closing_prompts.is_empty() {
                break;
            }
            b.closing(&mut rng);
        }
        out.push(Dialog {
            id: format!("{}-{seed}-{i:05}", spec.name),
            domain: spec.name.clone(),
            turns: b.turns,
        });
    }
    Ok(out)
}
