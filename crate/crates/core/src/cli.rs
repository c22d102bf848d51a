//! Command-line front end. Exit codes: 0 success, 1 bad input, 2 failure
//! while running.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::config::{parse_with_overrides, RunConfig};
use crate::data::synth::{gen_synthetic, SynthSpec};
use crate::data::{load_jsonl, subsample, EventInstance};
use crate::error::{Error, Result};
use crate::evaluation::{breakdown_argnum, breakdown_distance, score_all, ScoreReport};
use crate::inference::{
    load_predictions, predict_event, predictions_to_jsonl, DecodeMode, PredictStats,
};
use crate::neural::{Checkpoint, ModelParams};
use crate::ontology::{build_schema, validate_instance, Ontology, Phase};
use crate::pipeline::Pipeline;
use crate::prompting::{load_templates, PromptVariant, TemplateSet};
use crate::textenc::Vocab;
use crate::train::{evaluate, sweep, DevScores};

#[derive(Debug, Parser)]
#[command(
    name = "spanprompt",
    version,
    about = "Event argument extraction with joint role prompts"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model (seed x learning-rate sweep, best dev Arg-C kept).
    Train(TrainArgs),
    /// Extract arguments for every event of a dataset.
    Predict(PredictArgs),
    /// Score a prediction file against gold annotations.
    Eval(EvalArgs),
    /// Time joint against per-slot decoding and count prompt passes.
    Bench(BenchArgs),
    /// Write a synthetic corpus with ontology and templates.
    GenData(GenDataArgs),
    /// Derive the role ontology (slot counts) from a training file.
    Schema(SchemaArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override any config key, e.g. `--set training.steps=100`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long)]
    pub ontology: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Output checkpoint; the metrics log and manifest are written next to it.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Learning rate(s) of the sweep; repeatable.
    #[arg(long = "lr")]
    pub learning_rates: Vec<f64>,
    /// Seed(s) of the sweep; repeatable.
    #[arg(long = "seed")]
    pub seeds: Vec<u64>,
    #[arg(long, value_parser = ["manual", "concat", "soft"])]
    pub prompt_variant: Option<String>,
    #[arg(long, value_parser = ["bipartite", "fixed_order"])]
    pub loss_mode: Option<String>,
    #[arg(long)]
    pub shuffle_gold: bool,
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Gold-format JSONL whose events are decoded (arguments are ignored).
    #[arg(long)]
    pub data: PathBuf,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Inference settings are read from this config's [inference] section.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub max_span_len: Option<usize>,
    /// Decode one slot per full pass.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub max_span_len: Option<usize>,
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// TOML generator spec; defaults otherwise.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Every event gets exactly two arguments for its multi-slot roles.
    #[arg(long)]
    pub stress: bool,
    /// Override a spec field, e.g. `--set train_docs=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SchemaArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Write the ontology JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Validate further files against the derived ontology; repeatable.
    #[arg(long)]
    pub check: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
}

/// Parses arguments, runs the command and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::GenData(a) => cmd_gen_data(&a),
        Command::Schema(a) => cmd_schema(&a),
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{what}: {} does not exist",
            path.display()
        )))
    }
}

fn print_out(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn quoted(p: &Path) -> String {
    toml::Value::String(p.display().to_string()).to_string()
}

/// File contents plus flag overrides, flags last so they win.
pub fn resolve_config(a: &TrainArgs) -> Result<RunConfig> {
    let text = match &a.config {
        Some(p) => {
            require_file(p, "--config")?;
            fs::read_to_string(p)?
        }
        None => String::new(),
    };
    let mut o = a.set.clone();
    for (key, path) in [
        ("train", &a.train),
        ("dev", &a.dev),
        ("test", &a.test),
        ("templates", &a.templates),
        ("ontology", &a.ontology),
        ("vocab", &a.vocab),
        ("checkpoint", &a.checkpoint),
    ] {
        if let Some(p) = path {
            o.push(format!("paths.{key}={}", quoted(p)));
        }
    }
    if let Some(v) = a.steps {
        o.push(format!("training.steps={v}"));
    }
    if let Some(v) = a.batch_size {
        o.push(format!("training.batch_size={v}"));
    }
    if let Some(v) = a.eval_every {
        o.push(format!("training.eval_every={v}"));
    }
    if !a.learning_rates.is_empty() {
        let xs: Vec<String> = a.learning_rates.iter().map(|x| format!("{x:e}")).collect();
        o.push(format!("training.learning_rates=[{}]", xs.join(",")));
    }
    if !a.seeds.is_empty() {
        let xs: Vec<String> = a.seeds.iter().map(u64::to_string).collect();
        o.push(format!("training.seeds=[{}]", xs.join(",")));
    }
    if let Some(v) = &a.prompt_variant {
        o.push(format!("prompt_variant=\"{v}\""));
    }
    if let Some(v) = &a.loss_mode {
        o.push(format!("loss_mode=\"{v}\""));
    }
    if a.shuffle_gold {
        o.push("data.shuffle_gold=true".into());
    }
    if let Some(v) = a.ratio {
        o.push(format!("data.ratio={v:e}"));
    }
    RunConfig::from_toml_with(&text, &o)
}

/// Instances must use known event types and roles.
fn check_split(data: &[EventInstance], ont: &Ontology, phase: Phase) -> Result<()> {
    for inst in data {
        validate_instance(inst, ont).into_result(phase)?;
    }
    Ok(())
}

fn load_ontology_for(cfg: &RunConfig, train: &[EventInstance]) -> Result<Ontology> {
    match &cfg.paths.ontology {
        Some(p) => Ontology::load(p),
        None => build_schema(train),
    }
}

fn load_template_set(cfg: &RunConfig, ont: &Ontology) -> Result<TemplateSet> {
    match &cfg.paths.templates {
        Some(p) => load_templates(p, ont),
        None if cfg.prompt_variant == PromptVariant::Manual => {
            Err(Error::Config("manual prompts need paths.templates".into()))
        }
        None => Ok(TemplateSet::new()),
    }
}

/// Paths derived from the checkpoint location.
fn sidecar(checkpoint: &Path, suffix: &str) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Git-style description of the code that produced a run.
pub fn revision() -> String {
    let git = std::process::Command::new("git")
        .args(["rev-parse", "--short=12", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .filter(|s| !s.is_empty());
    match git {
        Some(sha) => format!("v{}-g{sha}", env!("CARGO_PKG_VERSION")),
        None => format!("v{}", env!("CARGO_PKG_VERSION")),
    }
}

#[derive(Serialize)]
struct RunSummary {
    seed: u64,
    learning_rate: f64,
    best_step: usize,
    best_dev: Option<DevScores>,
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = resolve_config(a)?;
    cfg.check_paths()?;
    let train_path = cfg
        .paths
        .train
        .clone()
        .ok_or_else(|| Error::Config("paths.train is required".into()))?;
    let ckpt_path = cfg
        .paths
        .checkpoint
        .clone()
        .ok_or_else(|| Error::Config("paths.checkpoint is required".into()))?;

    let full_train = load_jsonl(&train_path)?;
    let ont = load_ontology_for(&cfg, &full_train)?;
    check_split(&full_train, &ont, Phase::Training)?;
    let dev = match &cfg.paths.dev {
        Some(p) => load_jsonl(p)?,
        None => Vec::new(),
    };
    check_split(&dev, &ont, Phase::Inference)?;
    let test = match &cfg.paths.test {
        Some(p) => load_jsonl(p)?,
        None => Vec::new(),
    };
    check_split(&test, &ont, Phase::Inference)?;
    let train = subsample(&full_train, cfg.data.ratio, cfg.training.seeds[0])?;
    let templates = load_template_set(&cfg, &ont)?;
    let pipeline = match &cfg.paths.vocab {
        Some(p) => Pipeline::new(
            Vocab::load(p)?,
            ont,
            cfg.prompt_variant,
            templates,
            cfg.data.max_len,
        )?,
        None => {
            Pipeline::from_corpus(&train, ont, cfg.prompt_variant, templates, cfg.data.max_len)?
        }
    };
    let vocab_hash = pipeline.vocab.hash();
    log::info!(
        "{} training events ({} before subsampling), {} dev, vocab {}",
        train.len(),
        full_train.len(),
        dev.len(),
        pipeline.vocab.len()
    );

    let metrics_path = sidecar(&ckpt_path, ".metrics.jsonl");
    let mut metrics = std::io::BufWriter::new(fs::File::create(&metrics_path)?);
    let mut write_err: Option<std::io::Error> = None;
    let lrs = cfg.training.learning_rates.clone();
    let seeds = cfg.training.seeds.clone();
    let base = cfg.settings(seeds[0], lrs[0]);
    let (runs, chosen) = sweep(
        &pipeline,
        &cfg.model,
        &base,
        &seeds,
        &lrs,
        &train,
        &dev,
        |seed, lr, r| {
            let mut line = serde_json::to_value(r).expect("record serializes");
            line["seed"] = json!(seed);
            line["learning_rate"] = json!(lr);
            if let Err(e) = writeln!(metrics, "{line}") {
                write_err.get_or_insert(e);
            }
        },
    )?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    metrics.flush()?;

    let best = &runs[chosen];
    let ckpt = Checkpoint::from_params(
        &best.outcome.best,
        &vocab_hash,
        best.outcome.best_step,
        pipeline.to_json(),
    );
    ckpt.save(&ckpt_path)?;

    let test_scores = if test.is_empty() {
        None
    } else {
        let prepared = pipeline.prepare_all(&test)?;
        Some(evaluate(
            &best.outcome.best,
            &pipeline,
            &prepared,
            &test,
            cfg.inference.max_span_len,
        )?)
    };
    let summaries: Vec<RunSummary> = runs
        .iter()
        .map(|r| RunSummary {
            seed: r.seed,
            learning_rate: r.learning_rate,
            best_step: r.outcome.best_step,
            best_dev: r.outcome.best_dev,
        })
        .collect();
    let manifest = json!({
        "config_hash": cfg.hash(),
        "vocab_hash": vocab_hash,
        "seed": best.seed,
        "learning_rate": best.learning_rate,
        "revision": revision(),
        "checkpoint": ckpt_path,
        "metrics": metrics_path,
        "best_step": best.outcome.best_step,
        "best_dev": best.outcome.best_dev,
        "test": test_scores,
        "runs": summaries,
        "config": cfg.to_toml(),
    });
    fs::write(
        sidecar(&ckpt_path, ".manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;

    match a.format {
        Format::Json => print_out(&serde_json::to_string_pretty(&manifest)?),
        Format::Table => {
            let mut s = String::new();
            let _ = writeln!(
                s,
                "{:<8} {:>10} {:>6} {:>8} {:>8} {:>8}",
                "seed", "lr", "step", "arg_i", "arg_c", "head_c"
            );
            for (i, r) in summaries.iter().enumerate() {
                let d = r
                    .best_dev
                    .map_or(["-".to_string(), "-".into(), "-".into()], |d| {
                        [
                            format!("{:.4}", d.arg_i),
                            format!("{:.4}", d.arg_c),
                            format!("{:.4}", d.head_c),
                        ]
                    });
                let _ = writeln!(
                    s,
                    "{:<8} {:>10.1e} {:>6} {:>8} {:>8} {:>8}{}",
                    r.seed,
                    r.learning_rate,
                    r.best_step,
                    d[0],
                    d[1],
                    d[2],
                    if i == chosen { "  *" } else { "" }
                );
            }
            if let Some(t) = test_scores {
                let _ = writeln!(
                    s,
                    "test arg_i {:.4} arg_c {:.4} head_c {:.4}",
                    t.arg_i, t.arg_c, t.head_c
                );
            }
            let _ = writeln!(s, "checkpoint {}", ckpt_path.display());
            print_out(&s)
        }
    }
}

/// Weights and pipeline of a checkpoint file.
pub fn load_model(path: &Path) -> Result<(ModelParams<f32>, Pipeline)> {
    require_file(path, "checkpoint")?;
    let ckpt = Checkpoint::load(path)?;
    let pipeline = Pipeline::from_json(&ckpt.pipeline)?;
    let params = ckpt.to_params(&pipeline.vocab.hash())?;
    Ok((params, pipeline))
}

fn load_eval_data(path: &Path, ont: &Ontology) -> Result<Vec<EventInstance>> {
    require_file(path, "data")?;
    let data = load_jsonl(path)?;
    check_split(&data, ont, Phase::Inference)?;
    Ok(data)
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let inference = match &a.config {
        Some(p) => {
            require_file(p, "--config")?;
            RunConfig::load(p, &[])?.inference
        }
        None => Default::default(),
    };
    let max_span_len = a.max_span_len.unwrap_or(inference.max_span_len);
    if max_span_len == 0 {
        return Err(Error::Config("max_span_len must be >= 1".into()));
    }
    let mode = if a.sequential {
        DecodeMode::Sequential
    } else {
        inference.mode()
    };
    let (params, pipeline) = load_model(&a.checkpoint)?;
    let data = load_eval_data(&a.data, &pipeline.ontology)?;
    let mut stats = PredictStats::default();
    let preds = data
        .iter()
        .map(|inst| {
            predict_event(
                &params,
                &pipeline,
                &pipeline.prepare(inst)?,
                mode,
                max_span_len,
                &mut stats,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let text = predictions_to_jsonl(&preds);
    match &a.out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    log::info!(
        "{} events, {} prompt passes",
        stats.events,
        stats.prompt_passes
    );
    Ok(())
}

/// Overall metrics plus distance and argument-count breakdowns.
pub fn full_report(
    pred: &[crate::inference::EventPrediction],
    gold: &[EventInstance],
) -> Result<ScoreReport> {
    let mut report = score_all(pred, gold)?;
    report.distance = Some(breakdown_distance(pred, gold)?);
    report.argnum = Some(breakdown_argnum(pred, gold)?);
    Ok(report)
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    require_file(&a.pred, "--pred")?;
    require_file(&a.gold, "--gold")?;
    let pred = load_predictions(&a.pred)?;
    let gold = load_jsonl(&a.gold)?;
    let report = full_report(&pred, &gold)?;
    print_out(&match a.format {
        Format::Json => report.to_json(),
        Format::Table => report.to_table(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeTiming {
    pub prompt_passes: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub events: usize,
    pub slots: usize,
    pub joint: ModeTiming,
    pub sequential: ModeTiming,
    /// Sequential time over joint time.
    pub speedup: f64,
    pub predictions_agree: bool,
}

/// Decodes `data` in both modes and reports pass counts and wall-clock.
pub fn bench(
    params: &ModelParams<f32>,
    pipeline: &Pipeline,
    data: &[EventInstance],
    max_span_len: usize,
) -> Result<BenchReport> {
    let prepared = pipeline.prepare_all(data)?;
    let run = |mode| -> Result<(PredictStats, f64, Vec<_>)> {
        let mut stats = PredictStats::default();
        let t0 = Instant::now();
        let preds = prepared
            .iter()
            .map(|ev| predict_event(params, pipeline, ev, mode, max_span_len, &mut stats))
            .collect::<Result<Vec<_>>>()?;
        Ok((stats, t0.elapsed().as_secs_f64(), preds))
    };
    let (js, jt, jp) = run(DecodeMode::Joint)?;
    let (ss, st, sp) = run(DecodeMode::Sequential)?;
    Ok(BenchReport {
        events: js.events,
        slots: js.slots,
        joint: ModeTiming {
            prompt_passes: js.prompt_passes,
            seconds: jt,
        },
        sequential: ModeTiming {
            prompt_passes: ss.prompt_passes,
            seconds: st,
        },
        speedup: if jt > 0.0 { st / jt } else { f64::NAN },
        predictions_agree: jp == sp,
    })
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let (params, pipeline) = load_model(&a.checkpoint)?;
    let data = load_eval_data(&a.data, &pipeline.ontology)?;
    let max_span_len = a
        .max_span_len
        .unwrap_or(crate::inference::DEFAULT_MAX_SPAN_LEN)
        .max(1);
    let r = bench(&params, &pipeline, &data, max_span_len)?;
    print_out(&match a.format {
        Format::Json => serde_json::to_string_pretty(&r)?,
        Format::Table => {
            let mut s = String::new();
            let _ = writeln!(s, "events {}  slots {}", r.events, r.slots);
            let _ = writeln!(
                s,
                "{:<11} {:>14} {:>10}",
                "mode", "prompt passes", "seconds"
            );
            let _ = writeln!(
                s,
                "{:<11} {:>14} {:>10.3}",
                "joint", r.joint.prompt_passes, r.joint.seconds
            );
            let _ = writeln!(
                s,
                "{:<11} {:>14} {:>10.3}",
                "sequential", r.sequential.prompt_passes, r.sequential.seconds
            );
            let _ = writeln!(
                s,
                "speedup {:.2}x, predictions agree: {}",
                r.speedup, r.predictions_agree
            );
            s
        }
    })
}

fn cmd_gen_data(a: &GenDataArgs) -> Result<()> {
    let text = match &a.spec {
        Some(p) => {
            require_file(p, "--spec")?;
            fs::read_to_string(p)?
        }
        None => String::new(),
    };
    let mut o = Vec::new();
    if a.stress {
        o.push(format!(
            "multi_arg_prob={:e}",
            SynthSpec::multi_arg_stress().multi_arg_prob
        ));
    }
    o.extend(a.set.iter().cloned());
    let spec: SynthSpec = parse_with_overrides(&text, &o)?;
    let corpus = gen_synthetic(&spec, a.seed)?;
    corpus.write_dir(&a.out)?;
    fs::write(
        a.out.join("spec.toml"),
        toml::to_string(&spec).expect("spec serializes"),
    )?;
    log::info!(
        "wrote {} / {} / {} events to {}",
        corpus.train.len(),
        corpus.dev.len(),
        corpus.test.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_schema(a: &SchemaArgs) -> Result<()> {
    require_file(&a.train, "--train")?;
    let train = load_jsonl(&a.train)?;
    let ont = build_schema(&train)?;
    if let Some(p) = &a.out {
        ont.save(p)?;
    }
    let mut reports = Vec::new();
    for p in &a.check {
        require_file(p, "--check")?;
        for inst in load_jsonl(p)? {
            let r = validate_instance(&inst, &ont);
            if !r.is_empty() {
                reports.push((p.display().to_string(), r));
            }
        }
    }
    let failed = reports.iter().any(|(_, r)| r.has_errors(Phase::Inference));
    match a.format {
        Format::Json => {
            let findings: Vec<_> = reports
                .iter()
                .map(|(f, r)| json!({"file": f, "report": r}))
                .collect();
            print_out(&serde_json::to_string_pretty(
                &json!({"ontology": ont, "findings": findings}),
            )?)?;
        }
        Format::Table => {
            let mut s = String::new();
            let _ = writeln!(s, "{:<20} {:<20} {:>5}", "event type", "role", "slots");
            for (ty, roles) in &ont.event_types {
                for r in roles {
                    let _ = writeln!(s, "{:<20} {:<20} {:>5}", ty, r.role, r.slot_count);
                }
            }
            for (f, r) in &reports {
                let _ = writeln!(
                    s,
                    "{f}: {}: {}",
                    r.doc_id,
                    serde_json::to_string(&r.findings)?
                );
            }
            print_out(&s)?;
        }
    }
    if failed {
        return Err(Error::Validation(format!(
            "{} documents failed validation",
            reports.len()
        )));
    }
    Ok(())
}
