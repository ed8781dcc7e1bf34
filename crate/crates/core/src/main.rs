use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ssdmn::data::{self, builtin_domain, generate, read_dialogs_with, split, Dialog, DOMAIN_NAMES};
use ssdmn::encoder::CarryMode;
use ssdmn::eval::{conll_lines, evaluate};
use ssdmn::experiment::{run_experiment, split_paths, DomainCorpus};
use ssdmn::models::{self, load_checkpoint, predict_dialog, save_checkpoint, ModelVariant, TrainConfig};
use ssdmn::slot_embed::{build_cca_pairs, cca_pretrain};
use ssdmn::{Error, Result};

#[derive(Parser)]
#[command(name = "ssdmn", version, about = "Contextual slot tagging with dual memory networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic dialogs and write train/dev/test splits.
    GenData(GenDataArgs),
    /// Pretrain the slot projection with CCA on a labelled corpus.
    PretrainCca(PretrainArgs),
    /// Train one model variant.
    Train(TrainCmdArgs),
    /// Score predicted labels against gold labels.
    Eval(EvalArgs),
    /// Tag dialogs with a trained model.
    Tag(TagArgs),
    /// Train and test every variant on every domain.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Domain name, or `all`.
    #[arg(long, default_value = "all")]
    domain: String,
    /// Dialogs per domain.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    ambiguity: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Train, dev and test fractions.
    #[arg(long, value_delimiter = ',', default_value = "0.7,0.15,0.15")]
    split: Vec<f64>,
    /// Output directory (one sub-directory per domain), or a `.jsonl` file
    /// for a single domain with splits written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long, default_value_t = 100)]
    dim: usize,
    #[arg(long, default_value_t = 1e-3)]
    reg: f64,
    #[arg(long)]
    out: PathBuf,
}

/// Training options; each flag overrides the config file.
#[derive(Args, Default)]
struct TrainOpts {
    /// TOML or JSON file with training options.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    keep_prob: Option<f64>,
    /// Sets both the embedding and the hidden size.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    input_dim: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    init_scale: Option<f64>,
    #[arg(long)]
    cca_reg: Option<f64>,
    /// Pretrained slot projection for the variants that use one.
    #[arg(long)]
    projection: Option<PathBuf>,
    /// Pretrained word vectors, `word v1 ... v_d` per line.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    detach_memory: bool,
    #[arg(long)]
    carry: Option<CarryArg>,
    #[arg(long)]
    max_memory: Option<usize>,
    #[arg(long)]
    clip_norm: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CarryArg {
    HAndC,
    HOnly,
}

impl TrainOpts {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut c = match &self.config {
            Some(path) => read_config(path)?,
            None => TrainConfig::default(),
        };
        macro_rules! set {
            ($field:ident, $value:expr) => {
                if let Some(v) = $value {
                    c.$field = v;
                }
            };
        }
        set!(seed, self.seed);
        set!(lr, self.lr);
        set!(keep_prob, self.keep_prob);
        set!(input_dim, self.dim);
        set!(hidden_dim, self.dim);
        set!(input_dim, self.input_dim);
        set!(hidden_dim, self.hidden_dim);
        set!(max_epochs, self.epochs);
        set!(patience, self.patience);
        set!(init_scale, self.init_scale);
        set!(cca_reg, self.cca_reg);
        if self.projection.is_some() {
            c.projection_path = self.projection.clone();
        }
        if self.embeddings.is_some() {
            c.embeddings_path = self.embeddings.clone();
        }
        if self.detach_memory {
            c.detach_memory = true;
        }
        set!(
            carry_mode,
            self.carry.map(|m| match m {
                CarryArg::HAndC => CarryMode::HAndC,
                CarryArg::HOnly => CarryMode::HOnly,
            })
        );
        if self.max_memory.is_some() {
            c.max_memory = self.max_memory;
        }
        if self.clip_norm.is_some() {
            c.clip_norm = self.clip_norm;
        }
        c.validate()?;
        Ok(c)
    }
}

fn read_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[derive(Args)]
struct TrainCmdArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    /// Also report test F1 of the returned model.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    variant: Option<ModelVariant>,
    #[command(flatten)]
    opts: TrainOpts,
    #[arg(long, env = "SSDMN_OUTPUT_DIR", default_value = "runs")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalFormat {
    Table,
    Conll,
    Json,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// `conll` prints token/gold/pred columns on stdout and the table on stderr.
    #[arg(long, value_enum, default_value = "table")]
    format: EvalFormat,
}

#[derive(Args)]
struct TagArgs {
    #[arg(long)]
    model: PathBuf,
    /// Dialog JSONL; standard input when absent or `-`.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Add per-token attention weights to every turn.
    #[arg(long)]
    dump_attention: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Directory with `<domain>/{train,dev,test}.jsonl`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',')]
    domains: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    variants: Option<Vec<ModelVariant>>,
    #[command(flatten)]
    opts: TrainOpts,
    /// Worker threads; 0 picks the number of cores.
    #[arg(long, env = "SSDMN_THREADS", default_value_t = 0)]
    threads: usize,
    #[arg(long, env = "SSDMN_OUTPUT_DIR", default_value = "runs")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::PretrainCca(a) => pretrain(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Tag(a) => tag_cmd(a),
        Command::Experiment(a) => experiment_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("no such file: {}", path.display())))
    }
}

fn write_manifest(dir: &Path, command: &str, config: serde_json::Value) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "args": std::env::args().skip(1).collect::<Vec<_>>(),
        "config": config,
    });
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let [tr, dv, te] = a.split[..] else {
        return Err(Error::Config("--split takes three comma-separated fractions".into()));
    };
    let names: Vec<&str> = if a.domain == "all" {
        DOMAIN_NAMES.to_vec()
    } else {
        vec![a.domain.as_str()]
    };
    let single_file = a.out.extension().is_some_and(|e| e == "jsonl");
    if single_file && names.len() != 1 {
        return Err(Error::Config("a .jsonl output needs a single --domain".into()));
    }
    let specs = names
        .iter()
        .map(|n| builtin_domain(n, a.ambiguity))
        .collect::<Result<Vec<_>>>()?;
    for spec in specs {
        let dialogs = generate(&spec, a.n, a.seed)?;
        let (train, dev, test) = split(&dialogs, (tr, dv, te), a.seed)?;
        let (corpus_path, paths) = if single_file {
            let stem = a.out.with_extension("");
            let sibling = |p: &str| PathBuf::from(format!("{}.{p}.jsonl", stem.display()));
            (a.out.clone(), [sibling("train"), sibling("dev"), sibling("test")])
        } else {
            let dir = a.out.join(&spec.name);
            (dir.join("all.jsonl"), split_paths(&dir))
        };
        if let Some(parent) = corpus_path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        data::save(&dialogs, &corpus_path)?;
        for (part, path) in [&train, &dev, &test].into_iter().zip(&paths) {
            data::save(part, path)?;
        }
        eprintln!(
            "{}: {} dialogs, turns train/dev/test {}/{}/{}",
            spec.name,
            dialogs.len(),
            data::count_turns(&train),
            data::count_turns(&dev),
            data::count_turns(&test)
        );
    }
    Ok(())
}

fn pretrain(a: PretrainArgs) -> Result<()> {
    require_file(&a.train)?;
    let dialogs = data::load(&a.train)?;
    let tags = data::tagset_from_dialogs(&dialogs)?;
    let vocab = models::build_vocab(&dialogs);
    let corpus: Vec<(&[String], &[String])> = dialogs
        .iter()
        .flat_map(|d| &d.turns)
        .map(|t| (t.user_tokens.as_slice(), t.labels.as_slice()))
        .collect();
    let pairs = build_cca_pairs(&corpus, &tags, &vocab)?;
    let p = cca_pretrain(&pairs, a.dim, a.reg)?;
    p.save(&tags, &a.out)?;
    eprintln!("{} pairs, {} slots, wrote {}", pairs.len(), tags.len(), a.out.display());
    Ok(())
}

fn train_cmd(a: TrainCmdArgs) -> Result<()> {
    for p in [Some(&a.train), Some(&a.dev), a.test.as_ref()].into_iter().flatten() {
        require_file(p)?;
    }
    let mut config = a.opts.resolve()?;
    if let Some(v) = a.variant {
        config.variant = v;
    }
    write_manifest(&a.out_dir, "train", serde_json::to_value(&config)?)?;
    let train = data::load(&a.train)?;
    let dev = data::load(&a.dev)?;
    let trained = models::train(&train, &dev, None, &config)?;
    for e in &trained.log.epochs {
        eprintln!(
            "epoch {:>3}  loss {:>12.4}  dev F1 {}",
            e.epoch,
            e.train_loss,
            e.dev_f1.map_or("-".into(), |f| format!("{f:.2}"))
        );
    }
    save_checkpoint(&trained.params, &a.out_dir.join("model.ckpt"))?;
    std::fs::write(a.out_dir.join("log.json"), serde_json::to_string_pretty(&trained.log)?)?;
    if let Some(test) = &a.test {
        let test = data::load(test)?;
        let prepared = test
            .iter()
            .map(|d| trained.params.prepare(d))
            .collect::<Result<Vec<_>>>()?;
        let score = models::evaluate_dialogs(&trained.params, &prepared)?;
        print!("{}", score.table());
    }
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    require_file(&a.gold)?;
    require_file(&a.pred)?;
    let gold = data::load(&a.gold)?;
    let pred = data::load(&a.pred)?;
    let by_id: HashMap<&str, &Dialog> = pred.iter().map(|d| (d.id.as_str(), d)).collect();
    let (mut tokens, mut g, mut p) = (Vec::new(), Vec::new(), Vec::new());
    for d in &gold {
        let other = by_id
            .get(d.id.as_str())
            .ok_or_else(|| Error::Malformed(format!("no prediction for dialog `{}`", d.id)))?;
        if other.turns.len() != d.turns.len() {
            return Err(Error::Malformed(format!("dialog `{}`: turn counts differ", d.id)));
        }
        for (gt, pt) in d.turns.iter().zip(&other.turns) {
            tokens.push(gt.user_tokens.clone());
            g.push(gt.labels.clone());
            p.push(pt.labels.clone());
        }
    }
    let score = evaluate(&g, &p)?;
    match a.format {
        EvalFormat::Table => print!("{}", score.table()),
        EvalFormat::Conll => {
            print!("{}", conll_lines(&tokens, &g, &p));
            eprint!("{}", score.table());
        }
        EvalFormat::Json => println!("{}", serde_json::to_string_pretty(&score)?),
    }
    Ok(())
}

fn tag_cmd(a: TagArgs) -> Result<()> {
    require_file(&a.model)?;
    let params = load_checkpoint(&a.model)?;
    let (reader, path): (Box<dyn BufRead>, PathBuf) = match &a.input {
        Some(p) if p.as_os_str() != "-" => {
            require_file(p)?;
            (Box::new(BufReader::new(std::fs::File::open(p)?)), p.clone())
        }
        _ => {
            let mut buf = Vec::new();
            std::io::stdin().read_to_end(&mut buf)?;
            (Box::new(std::io::Cursor::new(buf)), PathBuf::from("<stdin>"))
        }
    };
    let dialogs = read_dialogs_with(reader, &path, false)?;
    let mut out: Box<dyn Write> = match &a.output {
        Some(p) => Box::new(BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    };
    for d in &dialogs {
        let prepared = params.prepare(d).map_err(|e| match e {
            Error::UnknownSlot(s) => Error::Config(format!("slot `{s}` is not in the model's inventory")),
            other => other,
        })?;
        let predictions = predict_dialog(&params, &prepared)?;
        let mut tagged = d.clone();
        for (turn, p) in tagged.turns.iter_mut().zip(&predictions) {
            turn.labels = p.labels.clone();
        }
        let mut value = serde_json::to_value(&tagged)?;
        if a.dump_attention {
            for (turn, p) in value["turns"].as_array_mut().into_iter().flatten().zip(&predictions) {
                turn["attention"] = json!({
                    "alpha": p.alpha,
                    "beta": p.beta,
                    "user_memory": p.user_memory,
                    "system_memory": p.system_memory,
                });
            }
        }
        serde_json::to_writer(&mut out, &value)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn experiment_cmd(a: ExperimentArgs) -> Result<()> {
    let config = a.opts.resolve()?;
    let domains = a
        .domains
        .unwrap_or_else(|| DOMAIN_NAMES.iter().map(|s| s.to_string()).collect());
    let variants = a.variants.unwrap_or_else(|| ModelVariant::ALL.to_vec());
    for d in &domains {
        for p in split_paths(&a.data.join(d)) {
            require_file(&p)?;
        }
    }
    write_manifest(
        &a.out_dir,
        "experiment",
        json!({ "train": config, "domains": domains, "variants": variants, "data": a.data }),
    )?;
    let corpora = domains
        .iter()
        .map(|d| DomainCorpus::load(d, &a.data.join(d)))
        .collect::<Result<Vec<_>>>()?;
    let results = run_experiment(&corpora, &variants, &config, a.threads, Some(&a.out_dir))?;
    for c in results.cells.iter().filter(|c| c.error.is_some()) {
        eprintln!("{} / {}: {}", c.domain, c.variant.heading(), c.error.as_deref().unwrap_or(""));
    }
    print!("{}", results.markdown());
    Ok(())
}
