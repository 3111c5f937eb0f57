use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use mpcm::eval::{
    evaluate, layer_ablations, parse_grid, predict, probability_dumps, run_ablation, write_answers,
    write_probability_dumps, EvalOptions,
};
use mpcm::model::{gradient_suite, ModelConfig};
use mpcm::text::{
    load_squad, synthetic_document, synthetic_embeddings, synthetic_examples, Example, SynthConfig,
    Unaligned,
};
use mpcm::train::{build_model, train, Checkpoint, Ensemble, TrainConfig, TrainOptions};
use mpcm::Exec;

#[derive(Parser, Debug)]
#[command(
    name = "mpcm",
    version,
    about = "Multi-perspective context matching for extractive QA"
)]
struct Cli {
    /// Seed for every random choice (initialisation, shuffling, dropout).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Run on one thread even when built with parallel support.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write checkpoints.
    Train(TrainArgs),
    /// Score one checkpoint, or an ensemble of several, on a labeled dataset.
    Evaluate(EvalArgs),
    /// Write predictions for a dataset without scoring.
    Predict(PredictArgs),
    /// Train and score one model per setting and print a comparison table.
    Ablate(AblateArgs),
    /// Finite-difference check of every parameter gradient on a tiny model.
    Gradcheck(GradcheckArgs),
    /// Generate a synthetic SQuAD-format corpus and matching word vectors.
    Synth(SynthArgs),
}

/// One flag per configuration key; set flags replace values from `--config`.
#[derive(Args, Debug, Default)]
struct ConfigFlags {
    #[arg(long)]
    word_dim: Option<usize>,
    #[arg(long)]
    char_emb_dim: Option<usize>,
    #[arg(long)]
    char_hidden: Option<usize>,
    #[arg(long)]
    lstm_hidden: Option<usize>,
    #[arg(long)]
    perspectives: Option<usize>,
    #[arg(long)]
    dropout_rate: Option<f64>,
    #[arg(long)]
    prediction_hidden: Option<usize>,
    #[arg(long)]
    use_char: Option<bool>,
    #[arg(long)]
    use_filter: Option<bool>,
    #[arg(long)]
    use_full: Option<bool>,
    #[arg(long)]
    use_max: Option<bool>,
    #[arg(long)]
    use_mean: Option<bool>,
    #[arg(long)]
    use_aggregation: Option<bool>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    max_passage_len: Option<usize>,
    #[arg(long)]
    max_span_len: Option<usize>,
}

impl ConfigFlags {
    fn overrides(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut push = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                out.push((key.to_owned(), v));
            }
        };
        push("word_dim", self.word_dim.map(|v| v.to_string()));
        push("char_emb_dim", self.char_emb_dim.map(|v| v.to_string()));
        push("char_hidden", self.char_hidden.map(|v| v.to_string()));
        push("lstm_hidden", self.lstm_hidden.map(|v| v.to_string()));
        push("perspectives", self.perspectives.map(|v| v.to_string()));
        push("dropout_rate", self.dropout_rate.map(float));
        push(
            "prediction_hidden",
            self.prediction_hidden.map(|v| v.to_string()),
        );
        push("use_char", self.use_char.map(|v| v.to_string()));
        push("use_filter", self.use_filter.map(|v| v.to_string()));
        push("use_full", self.use_full.map(|v| v.to_string()));
        push("use_max", self.use_max.map(|v| v.to_string()));
        push("use_mean", self.use_mean.map(|v| v.to_string()));
        push(
            "use_aggregation",
            self.use_aggregation.map(|v| v.to_string()),
        );
        push("batch_size", self.batch_size.map(|v| v.to_string()));
        push("epochs", self.epochs.map(|v| v.to_string()));
        push("clip_norm", self.clip_norm.map(float));
        push("learning_rate", self.learning_rate.map(float));
        push("beta1", self.beta1.map(float));
        push("beta2", self.beta2.map(float));
        push("eps", self.eps.map(float));
        push(
            "max_passage_len",
            self.max_passage_len.map(|v| v.to_string()),
        );
        push("max_span_len", self.max_span_len.map(|v| v.to_string()));
        out
    }
}

// TOML floats need a decimal point or exponent.
fn float(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Args, Debug)]
struct ConfigSource {
    /// TOML file with any subset of the configuration keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: ConfigFlags,
}

impl ConfigSource {
    fn resolve(&self, seed: Option<u64>) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => TrainConfig::load(p)?,
            None => TrainConfig::default(),
        };
        let mut overrides = self.flags.overrides();
        if let Some(s) = seed {
            overrides.push(("seed".into(), s.to_string()));
        }
        cfg.apply(&overrides)?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// SQuAD-format training set.
    #[arg(long)]
    train: PathBuf,
    /// SQuAD-format dev set used to pick the best epoch.
    #[arg(long)]
    dev: Option<PathBuf>,
    /// GloVe-format word vectors; random vectors are used when absent.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Output directory for latest.ckpt, best.ckpt and history.json.
    #[arg(long)]
    out: PathBuf,
    /// Continue from a saved checkpoint instead of starting fresh.
    #[arg(long, conflicts_with_all = ["config", "embeddings"])]
    resume: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigSource,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint file; repeat to average an ensemble.
    #[arg(long, required = true)]
    checkpoint: Vec<PathBuf>,
    /// Predictions JSON, `{id: answer}`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Machine-readable report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-position begin/end probabilities for every question.
    #[arg(long)]
    dump_probs: Option<PathBuf>,
    /// Cap on decoded span length in tokens.
    #[arg(long)]
    max_span_len: Option<usize>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, required = true)]
    checkpoint: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    dump_probs: Option<PathBuf>,
    #[arg(long)]
    max_span_len: Option<usize>,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// `key=v1,v2,...`; repeat for a Cartesian product.
    #[arg(long)]
    grid: Vec<String>,
    /// Remove one layer or matching strategy per row.
    #[arg(long, conflicts_with = "grid")]
    layers: bool,
    /// Keep each run's checkpoints here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the table as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigSource,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 2)]
    question_len: usize,
    #[arg(long, default_value_t = 4)]
    passage_len: usize,
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Print the error of every parameter tensor.
    #[arg(long)]
    verbose: bool,
    #[command(flatten)]
    config: ConfigSource,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output SQuAD-format JSON.
    #[arg(long)]
    out: PathBuf,
    /// Also write GloVe-format vectors for every token.
    #[arg(long)]
    embeddings_out: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    dim: usize,
    #[arg(long, default_value_t = 1000)]
    examples: usize,
    #[arg(long, default_value_t = 6)]
    facts: usize,
    #[arg(long, default_value_t = 40)]
    subjects: usize,
    #[arg(long, default_value_t = 12)]
    relations: usize,
    #[arg(long, default_value_t = 60)]
    objects: usize,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn load(path: &Path, exec: Exec) -> Result<Vec<Example>> {
    let set = load_squad(path, Unaligned::Keep, exec)?;
    if set.unaligned > 0 {
        log::warn!(
            "{}: {} answers could not be aligned to tokens",
            path.display(),
            set.unaligned
        );
    }
    info!("{}: {} questions", path.display(), set.examples.len());
    Ok(set.examples)
}

fn load_scorer(paths: &[PathBuf]) -> Result<Ensemble> {
    let models = paths
        .iter()
        .map(|p| Ok(Checkpoint::load(p)?.model))
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble::new(models)?)
}

fn cmd_train(args: TrainArgs, seed: Option<u64>, exec: Exec) -> Result<()> {
    let train_set = load(&args.train, exec)?;
    let dev_set = args.dev.as_deref().map(|p| load(p, exec)).transpose()?;
    let start = match &args.resume {
        Some(p) => {
            let mut ckpt = Checkpoint::load(p)?;
            let mut hyper = TrainConfig {
                model: ckpt.model.config.clone(),
                hyper: ckpt.hyper.clone(),
            };
            let mut overrides = args.config.flags.overrides();
            if let Some(s) = seed {
                overrides.push(("seed".into(), s.to_string()));
            }
            hyper.apply(&overrides)?;
            if !hyper.model.compatible_with(&ckpt.model.config) {
                bail!("model shape flags cannot change when resuming");
            }
            ckpt.model.config.dropout_rate = hyper.model.dropout_rate;
            ckpt.hyper = hyper.hyper;
            info!(
                "resuming {} after epoch {}",
                p.display(),
                ckpt.progress.epoch
            );
            ckpt
        }
        None => {
            let cfg = args.config.resolve(seed)?;
            let corpus: Vec<Example> = train_set
                .iter()
                .chain(dev_set.iter().flatten())
                .cloned()
                .collect();
            let model = build_model(
                &cfg.model,
                &corpus,
                args.embeddings.as_deref(),
                cfg.hyper.seed,
            )?;
            info!("{} trainable parameters", model.params.trainable.size());
            Checkpoint::initial(model, cfg.hyper)
        }
    };
    let outcome = train(
        start,
        &train_set,
        TrainOptions {
            exec,
            out_dir: Some(&args.out),
            dev: dev_set.as_deref(),
            on_epoch: None,
        },
    )?;
    if outcome.history.is_empty() {
        outcome.latest.save(args.out.join("latest.ckpt"))?;
        outcome.best.save(args.out.join("best.ckpt"))?;
    }
    for r in &outcome.history {
        let dev = match (r.dev_em, r.dev_f1) {
            (Some(em), Some(f1)) => format!("  dev EM {em:6.2}  F1 {f1:6.2}"),
            _ => String::new(),
        };
        println!("epoch {:3}  loss {:.4}{dev}", r.epoch, r.mean_loss);
    }
    println!("checkpoints written to {}", args.out.display());
    Ok(())
}

fn cmd_evaluate(args: EvalArgs, exec: Exec) -> Result<()> {
    let examples = load(&args.data, exec)?;
    let scorer = load_scorer(&args.checkpoint)?;
    let opts = EvalOptions {
        max_span_len: args.max_span_len,
        exec,
    };
    let ev = evaluate(&scorer, &examples, opts)?;
    print!("{}", ev.report);
    if let Some(p) = &args.out {
        let mut w = create(p)?;
        write_answers(&mut w, &ev.predictions)?;
        w.flush()?;
    }
    if let Some(p) = &args.report {
        let mut w = create(p)?;
        w.write_all(ev.report.to_json().as_bytes())?;
        w.flush()?;
    }
    if let Some(p) = &args.dump_probs {
        let mut w = create(p)?;
        write_probability_dumps(&mut w, &ev.probability_dumps(&examples))?;
        w.flush()?;
    }
    Ok(())
}

fn cmd_predict(args: PredictArgs, exec: Exec) -> Result<()> {
    let examples = load(&args.data, exec)?;
    let scorer = load_scorer(&args.checkpoint)?;
    let opts = EvalOptions {
        max_span_len: args.max_span_len,
        exec,
    };
    let (preds, dists) = predict(&scorer, &examples, opts)?;
    let mut w = create(&args.out)?;
    write_answers(&mut w, &preds)?;
    w.flush()?;
    if let Some(p) = &args.dump_probs {
        let mut w = create(p)?;
        write_probability_dumps(&mut w, &probability_dumps(&examples, &dists))?;
        w.flush()?;
    }
    Ok(())
}

fn cmd_ablate(args: AblateArgs, seed: Option<u64>, exec: Exec) -> Result<()> {
    let base = args.config.resolve(seed)?;
    let settings = if args.layers {
        layer_ablations(&base)
    } else {
        parse_grid(&base, &args.grid)?
    };
    let train_set = load(&args.train, exec)?;
    let dev_set = load(&args.dev, exec)?;
    let corpus: Vec<Example> = train_set.iter().chain(&dev_set).cloned().collect();
    let embeddings = args.embeddings.clone();
    let build =
        |config: &ModelConfig, seed: u64| build_model(config, &corpus, embeddings.as_deref(), seed);
    let table = run_ablation(
        &settings,
        &build,
        &train_set,
        &dev_set,
        exec,
        args.out.as_deref(),
    )?;
    print!("{table}");
    if let Some(p) = &args.json {
        let mut w = create(p)?;
        serde_json::to_writer_pretty(&mut w, &table)?;
        w.flush()?;
    }
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs, seed: Option<u64>) -> Result<()> {
    let mut flags = args.config.flags;
    // small defaults so the check runs in seconds
    flags.word_dim = flags.word_dim.or(Some(5));
    flags.char_emb_dim = flags.char_emb_dim.or(Some(3));
    flags.char_hidden = flags.char_hidden.or(Some(3));
    flags.lstm_hidden = flags.lstm_hidden.or(Some(3));
    flags.perspectives = flags.perspectives.or(Some(2));
    flags.prediction_hidden = flags.prediction_hidden.or(Some(3));
    let source = ConfigSource {
        config: args.config.config,
        flags,
    };
    let cfg = source.resolve(seed)?;
    let reports = gradient_suite(
        &cfg.model,
        args.question_len,
        args.passage_len,
        cfg.hyper.seed,
        args.step as mpcm::Real,
        args.tol as mpcm::Real,
    )?;
    let mut failed = false;
    for (label, r) in &reports {
        let verdict = if r.passed { "ok" } else { "FAILED" };
        println!(
            "{label}: max relative error {:.3e} ({}) tolerance {:.0e} {verdict}",
            r.max_rel_error, r.worst, r.tolerance
        );
        if args.verbose {
            for (name, p) in &r.per_param {
                println!("  {name:<28} {:.3e}", p.max_rel_error);
            }
        }
        failed |= !r.passed;
    }
    if failed {
        bail!("gradient check failed");
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs, seed: Option<u64>) -> Result<()> {
    let cfg = SynthConfig {
        examples: args.examples,
        facts: args.facts,
        subjects: args.subjects,
        relations: args.relations,
        objects: args.objects,
        ..Default::default()
    };
    if cfg.subjects < 2 || cfg.relations < 2 || cfg.objects == 0 || cfg.facts == 0 {
        bail!("need at least 2 subjects, 2 relations, 1 object and 1 fact per passage");
    }
    let seed = seed.unwrap_or(1);
    let doc = synthetic_document(&cfg, seed);
    let mut w = create(&args.out)?;
    serde_json::to_writer(&mut w, &doc)?;
    w.flush()?;
    if let Some(p) = &args.embeddings_out {
        let examples = synthetic_examples(&cfg, seed)?;
        let mut w = create(p)?;
        w.write_all(synthetic_embeddings(&examples, args.dim, seed).as_bytes())?;
        w.flush()?;
    }
    println!(
        "{} questions written to {}",
        cfg.examples,
        args.out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::default()
    };
    match cli.command {
        Command::Train(a) => cmd_train(a, cli.seed, exec),
        Command::Evaluate(a) => cmd_evaluate(a, exec),
        Command::Predict(a) => cmd_predict(a, exec),
        Command::Ablate(a) => cmd_ablate(a, cli.seed, exec),
        Command::Gradcheck(a) => cmd_gradcheck(a, cli.seed),
        Command::Synth(a) => cmd_synth(a, cli.seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
