//! Train every variant on every domain and tabulate test F1.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, Dialog};
use crate::error::{Error, Result};
use crate::models::{evaluate_dialogs, save_checkpoint, train, ModelVariant, TrainConfig, TrainLog};

/// Train/dev/test dialogs of one domain.
#[derive(Clone, Debug)]
pub struct DomainCorpus {
    pub name: String,
    pub train: Vec<Dialog>,
    pub dev: Vec<Dialog>,
    pub test: Vec<Dialog>,
}

impl DomainCorpus {
    /// Reads `dir/{train,dev,test}.jsonl`.
    pub fn load(name: &str, dir: &Path) -> Result<Self> {
        let part = |p: &str| data::load(&dir.join(format!("{p}.jsonl")));
        Ok(Self {
            name: name.to_string(),
            train: part("train")?,
            dev: part("dev")?,
            test: part("test")?,
        })
    }
}

pub fn split_paths(dir: &Path) -> [PathBuf; 3] {
    ["train", "dev", "test"].map(|p| dir.join(format!("{p}.jsonl")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub domain: String,
    pub variant: ModelVariant,
    pub test_f1: Option<f64>,
    pub error: Option<String>,
    pub log: Option<TrainLog>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub domains: Vec<String>,
    pub variants: Vec<ModelVariant>,
    pub cells: Vec<CellResult>,
}

impl ExperimentResults {
    pub fn cell(&self, domain: &str, variant: ModelVariant) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.domain == domain && c.variant == variant)
    }

    pub fn f1(&self, domain: &str, variant: ModelVariant) -> Option<f64> {
        self.cell(domain, variant).and_then(|c| c.test_f1)
    }

    /// Mean test F1 over domains; `None` if any cell failed.
    pub fn average(&self, variant: ModelVariant) -> Option<f64> {
        let scores: Option<Vec<f64>> = self.domains.iter().map(|d| self.f1(d, variant)).collect();
        let scores = scores?;
        (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64)
    }

    fn rows(&self) -> Vec<(String, Vec<String>)> {
        let fmt = |v: Option<f64>| v.map_or_else(|| "ERR".to_string(), |x| format!("{x:.2}"));
        let mut rows: Vec<(String, Vec<String>)> = self
            .domains
            .iter()
            .map(|d| (d.clone(), self.variants.iter().map(|v| fmt(self.f1(d, *v))).collect()))
            .collect();
        rows.push((
            "Average".into(),
            self.variants.iter().map(|v| fmt(self.average(*v))).collect(),
        ));
        rows
    }

    pub fn markdown(&self) -> String {
        let mut s = String::from("| Domain |");
        for v in &self.variants {
            write!(s, " {} |", v.heading()).unwrap();
        }
        s.push_str("\n|---|");
        s.push_str(&"---:|".repeat(self.variants.len()));
        s.push('\n');
        for (name, cells) in self.rows() {
            write!(s, "| {name} |").unwrap();
            for c in cells {
                write!(s, " {c} |").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("domain");
        for v in &self.variants {
            write!(s, ",{}", v.heading()).unwrap();
        }
        s.push('\n');
        for (name, cells) in self.rows() {
            s.push_str(&name);
            for c in cells {
                write!(s, ",{c}").unwrap();
            }
            s.push('\n');
        }
        s
    }
}

fn run_cell(corpus: &DomainCorpus, variant: ModelVariant, base: &TrainConfig, out: Option<&Path>) -> Result<(f64, TrainLog)> {
    let config = TrainConfig {
        variant,
        ..base.clone()
    };
    let trained = train(&corpus.train, &corpus.dev, None, &config)?;
    let test = corpus
        .test
        .iter()
        .map(|d| trained.params.prepare(d))
        .collect::<Result<Vec<_>>>()?;
    let score = evaluate_dialogs(&trained.params, &test)?;
    if let Some(dir) = out {
        let dir = dir.join(&corpus.name).join(variant.id());
        std::fs::create_dir_all(&dir)?;
        save_checkpoint(&trained.params, &dir.join("model.ckpt"))?;
        std::fs::write(dir.join("log.json"), serde_json::to_string_pretty(&trained.log)?)?;
        std::fs::write(dir.join("score.txt"), score.table())?;
    }
    Ok((score.f1(), trained.log))
}

/// Every (domain, variant) cell with the same base configuration. A failing
/// cell is reported in place and does not stop the others. `threads = 0`
/// uses rayon's default pool size.
pub fn run_experiment(
    corpora: &[DomainCorpus],
    variants: &[ModelVariant],
    base: &TrainConfig,
    threads: usize,
    output_dir: Option<&Path>,
) -> Result<ExperimentResults> {
    base.validate()?;
    if corpora.is_empty() || variants.is_empty() {
        return Err(Error::Config("experiment needs at least one domain and one variant".into()));
    }
    let jobs: Vec<(&DomainCorpus, ModelVariant)> = corpora
        .iter()
        .flat_map(|c| variants.iter().map(move |v| (c, *v)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let cells = pool.install(|| {
        jobs.par_iter()
            .map(|(corpus, variant)| match run_cell(corpus, *variant, base, output_dir) {
                Ok((f1, log)) => CellResult {
                    domain: corpus.name.clone(),
                    variant: *variant,
                    test_f1: Some(f1),
                    error: None,
                    log: Some(log),
                },
                Err(e) => CellResult {
                    domain: corpus.name.clone(),
                    variant: *variant,
                    test_f1: None,
                    error: Some(e.to_string()),
                    log: None,
                },
            })
            .collect()
    });
    let results = ExperimentResults {
        domains: corpora.iter().map(|c| c.name.clone()).collect(),
        variants: variants.to_vec(),
        cells,
    };
    if let Some(dir) = output_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("results.md"), results.markdown())?;
        std::fs::write(dir.join("results.csv"), results.csv())?;
        std::fs::write(dir.join("results.json"), serde_json::to_string_pretty(&results)?)?;
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn results() -> ExperimentResults {
        let cell = |d: &str, v, f| CellResult {
            domain: d.into(),
            variant: v,
            test_f1: f,
            error: None,
            log: None,
        };
        ExperimentResults {
            domains: vec!["a".into(), "b".into()],
            variants: vec![ModelVariant::Lstm, ModelVariant::Ssdmn],
            cells: vec![
                cell("a", ModelVariant::Lstm, Some(90.0)),
                cell("a", ModelVariant::Ssdmn, Some(97.5)),
                cell("b", ModelVariant::Lstm, Some(80.0)),
                cell("b", ModelVariant::Ssdmn, None),
            ],
        }
    }

    #[test]
    fn tables() {
        let r = results();
        assert_eq!(r.average(ModelVariant::Lstm), Some(85.0));
        assert_eq!(r.average(ModelVariant::Ssdmn), None);
        let md = r.markdown();
        assert!(md.starts_with("| Domain | LSTM | SSDMNs |"), "{md}");
        assert!(md.contains("| a | 90.00 | 97.50 |"));
        assert!(md.contains("| b | 80.00 | ERR |"));
        let csv = r.csv();
        assert!(csv.contains("Average,85.00,ERR"), "{csv}");
    }
}
