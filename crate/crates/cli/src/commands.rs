use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use ham_core::checks::{gradcheck_suite, verify_suite, Scale};
use ham_core::data::{Corpus, Task};
use ham_core::eval::evaluate;
use ham_core::model::{Connector, Seq2SeqModel};
use ham_core::train::{
    corpus_loss, depth_sweep, exact_match, generate_all, records_csv, train_cell, OptimizerKind, TrainConfig,
};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::{Cli, Command, ConnectorArg, OptimizerArg, ScaleArg, TaskArgs, TrainArgs};

pub enum CliError {
    /// bad flags, config or inputs: exit 2
    Usage(anyhow::Error),
    /// a check failed or the run broke down: exit 1
    Failed(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Failed(e)
    }
}

impl From<ham_core::Error> for CliError {
    fn from(e: ham_core::Error) -> Self {
        CliError::Failed(e.into())
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

fn usage<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Usage(e.into())
}

pub fn run(cli: Cli) -> CliResult {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(usage)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    match cli.command {
        Command::Verify { trials } => {
            if let Some(t) = trials {
                cfg.verify.trials = t;
            }
            verify(&cfg)
        }
        Command::Gradcheck { scale, instances } => {
            if let Some(s) = scale {
                cfg.gradcheck.scale = match s {
                    ScaleArg::Tiny => Scale::Tiny,
                    ScaleArg::Small => Scale::Small,
                };
            }
            if let Some(n) = instances {
                cfg.gradcheck.instances = n;
            }
            gradcheck(&cfg)
        }
        Command::Gendata { task, file } => {
            apply_task(&mut cfg, &task)?;
            gendata(&cfg, file)
        }
        Command::Train { task, train, depth } => {
            apply_task(&mut cfg, &task)?;
            apply_train(&mut cfg, &train);
            if let Some(d) = depth {
                cfg.train.depth = d;
            }
            train_one(&cfg)
        }
        Command::Sweep {
            task,
            train,
            depths,
            restarts,
            timing,
        } => {
            apply_task(&mut cfg, &task)?;
            apply_train(&mut cfg, &train);
            if let Some(d) = depths {
                cfg.depths = d;
            }
            if let Some(r) = restarts {
                cfg.train.restarts = r;
            }
            cfg.record_wall_time |= timing;
            sweep(&cfg)
        }
        Command::Eval {
            gold,
            generated,
            model,
            quatrains,
        } => eval(&cfg, &gold, generated.as_deref(), model.as_deref(), quatrains),
    }
}

fn apply_task(cfg: &mut ExperimentConfig, a: &TaskArgs) -> CliResult {
    if let Some(t) = &a.task {
        cfg.task.kind = t.parse::<Task>().map_err(usage)?;
    }
    if let Some(n) = a.pairs {
        cfg.task.pairs = n;
    }
    if let Some(n) = a.seq_len {
        cfg.task.seq_len = n;
    }
    if let Some(n) = a.payload_vocab {
        cfg.task.payload_vocab = n;
    }
    if let Some(p) = &a.corpus {
        cfg.task.corpus = Some(p.clone());
    }
    Ok(())
}

fn apply_train(cfg: &mut ExperimentConfig, a: &TrainArgs) {
    if let Some(lr) = a.lr {
        cfg.train.lr = lr;
    }
    match a.optimizer {
        Some(OptimizerArg::Sgd) => cfg.train.optimizer = OptimizerKind::Sgd,
        Some(OptimizerArg::Adam) if cfg.train.optimizer == OptimizerKind::Sgd => {
            cfg.train.optimizer = OptimizerKind::default()
        }
        _ => {}
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(b) = a.batch_size {
        cfg.train.batch_size = b;
    }
    if let Some(h) = a.hidden {
        cfg.model.hidden = h;
    }
    if let Some(c) = a.connector {
        cfg.model.connector = match c {
            ConnectorArg::Ham => Connector::Ham,
            ConnectorArg::MultiLevel => Connector::MultiLevel,
        };
    }
    if a.unidirectional {
        cfg.model.bidirectional = false;
    }
    cfg.train.freeze_level_weights |= a.freeze_level_weights;
}

fn create_out(dir: &Path) -> CliResult {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))
        .map_err(usage)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let mut text = serde_json::to_string_pretty(value).map_err(anyhow::Error::from)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn verify(cfg: &ExperimentConfig) -> CliResult {
    if cfg.verify.trials == 0 {
        return Err(usage(anyhow!("--trials must be at least 1")));
    }
    create_out(&cfg.out)?;
    let report = verify_suite(cfg.verify.trials, cfg.seed)?;
    let path = cfg.out.join("verify_report.json");
    write_json(&path, &report)?;

    let nb = &report.norm_bound;
    println!(
        "norm bound: {} trials, {} checks, {} upper-bound violations",
        nb.trials, nb.checks, nb.upper_violations
    );
    println!("equal keys reach both bounds: {}", nb.equal_keys_tight);
    let ce = &nb.lower_bound_counterexample;
    println!(
        "note: lower bound min|k_i| <= |output| is false; K={:?}, q={:?} gives |output| = {} < {}",
        ce.instance.keys, ce.instance.query, ce.output_norm, ce.bound
    );
    println!(
        "      {} of {} random trials also fell below min |k_i|",
        nb.lower_violations, nb.trials
    );
    for c in &report.checks {
        println!(
            "{:<48} {:>6} max err {:.3e} (tol {:.0e}) {}",
            c.name,
            c.instances,
            c.max_error,
            c.tolerance,
            if c.passed { "ok" } else { "FAIL" }
        );
    }
    println!("report: {}", path.display());
    if report.passed {
        return Ok(());
    }
    if let Some(v) = &nb.first_upper_violation {
        eprintln!(
            "upper-bound violation: {}",
            serde_json::to_string(v).map_err(anyhow::Error::from)?
        );
    }
    for c in report.checks.iter().filter(|c| !c.passed) {
        eprintln!("{} failed on: {}", c.name, c.failure.clone().unwrap_or_default());
    }
    Err(CliError::Failed(anyhow!("verification failed")))
}

fn gradcheck(cfg: &ExperimentConfig) -> CliResult {
    if cfg.gradcheck.instances == 0 {
        return Err(usage(anyhow!("--instances must be at least 1")));
    }
    create_out(&cfg.out)?;
    let rows = gradcheck_suite(cfg.gradcheck.scale, cfg.seed, cfg.gradcheck.instances)?;
    let path = cfg.out.join("gradcheck.json");
    write_json(&path, &rows)?;
    println!("{:<22} {:>9} {:>12} {:>8}", "op", "instances", "max rel err", "tol");
    for r in &rows {
        println!(
            "{:<22} {:>9} {:>12.3e} {:>8.0e} {}",
            r.op,
            r.instances,
            r.max_rel_error,
            r.tolerance,
            if r.passed { "ok" } else { "FAIL" }
        );
    }
    println!("report: {}", path.display());
    let failed: Vec<String> = rows
        .iter()
        .filter(|r| !r.passed)
        .map(|r| {
            format!(
                "{} (instance {}, input {}, coordinate {}: {:.3e})",
                r.op, r.worst.0, r.worst.1, r.worst.2, r.max_rel_error
            )
        })
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(anyhow!(
            "gradient check failed: {}",
            failed.join("; ")
        )))
    }
}

fn gendata(cfg: &ExperimentConfig, file: Option<String>) -> CliResult {
    if cfg.task.corpus.is_some() {
        return Err(usage(anyhow!("gendata generates a corpus; --corpus does not apply")));
    }
    let corpus = cfg.corpus().map_err(usage)?;
    let name = file.unwrap_or_else(|| format!("{}.jsonl", cfg.task.kind));
    if Path::new(&name).components().count() != 1 {
        return Err(usage(anyhow!("--file must be a plain file name, got {name:?}")));
    }
    create_out(&cfg.out)?;
    let path = cfg.out.join(name);
    corpus.save(&path)?;
    println!("wrote {} pairs to {}", corpus.len(), path.display());
    Ok(())
}

#[derive(Serialize)]
struct TrainLog<'a> {
    config: &'a ExperimentConfig,
    depth: usize,
    epoch_losses: Vec<f64>,
    final_loss: f64,
    exact_match: f64,
}

fn train_one(cfg: &ExperimentConfig) -> CliResult {
    cfg.validate_training().map_err(usage)?;
    if cfg.train.depth == 0 {
        return Err(usage(anyhow!("--depth must be positive")));
    }
    let corpus = cfg.corpus().map_err(usage)?;
    create_out(&cfg.out)?;
    let tcfg = TrainConfig {
        depth: cfg.train.depth,
        ..cfg.train_config()
    };
    let (model, outcome) = train_cell(&corpus, &cfg.model, &tcfg, tcfg.depth, cfg.seed)?;
    let final_loss = corpus_loss(&model, &corpus, tcfg.batch_size)?;
    let em = exact_match(&model, &corpus)?;
    let ckpt = cfg.out.join("model.json");
    model.save(&ckpt)?;
    write_json(
        &cfg.out.join("train_log.json"),
        &TrainLog {
            config: cfg,
            depth: tcfg.depth,
            epoch_losses: outcome.epoch_losses,
            final_loss,
            exact_match: em,
        },
    )?;
    println!(
        "depth {} final loss {final_loss:.6} exact match {em:.4}; level weights {:?}",
        tcfg.depth,
        model.ham.level_weights().data()
    );
    println!("checkpoint: {}", ckpt.display());
    Ok(())
}

#[derive(Serialize)]
struct SweepOutput<'a> {
    config: &'a ExperimentConfig,
    #[serde(flatten)]
    summary: &'a ham_core::train::SweepSummary,
}

fn sweep(cfg: &ExperimentConfig) -> CliResult {
    cfg.validate_sweep().map_err(usage)?;
    let corpus = cfg.corpus().map_err(usage)?;
    create_out(&cfg.out)?;
    let report = depth_sweep(&corpus, &cfg.depths, &cfg.model, &cfg.train_config())?;
    let csv = cfg.out.join("sweep.csv");
    fs::write(&csv, records_csv(&report.records, cfg.record_wall_time))
        .with_context(|| format!("writing {}", csv.display()))?;
    let summary = cfg.out.join("summary.json");
    write_json(
        &summary,
        &SweepOutput {
            config: cfg,
            summary: &report.summary,
        },
    )?;
    println!(
        "{:>5} {:>12} {:>9} {:>12} {:>11}",
        "depth", "best loss", "best seed", "mean loss", "best match"
    );
    for d in &report.summary.depths {
        println!(
            "{:>5} {:>12.6} {:>9} {:>12.6} {:>11.4}",
            d.depth, d.best_loss, d.best_seed, d.mean_loss, d.best_metric
        );
    }
    for t in &report.summary.transitions {
        println!("d={} -> d={}: ratio {:.4}", t.from_depth, t.to_depth, t.ratio);
    }
    println!("verdict: {}", report.summary.verdict);
    println!("records: {}\nsummary: {}", csv.display(), summary.display());
    Ok(())
}

fn eval(
    cfg: &ExperimentConfig,
    gold: &Path,
    generated: Option<&Path>,
    model: Option<&Path>,
    quatrains: bool,
) -> CliResult {
    let load = |p: &Path| -> CliResult<Corpus> {
        Corpus::load(p)
            .with_context(|| format!("loading corpus {}", p.display()))
            .map_err(usage)
    };
    let gold_corpus = load(gold)?;
    let gold_lines: Vec<Vec<usize>> = gold_corpus.pairs.iter().map(|p| p.tgt.clone()).collect();
    let lines = match (generated, model) {
        (Some(path), _) => load(path)?.pairs.into_iter().map(|p| p.tgt).collect::<Vec<_>>(),
        (None, Some(path)) => {
            let m = Seq2SeqModel::load(path)
                .with_context(|| format!("loading checkpoint {}", path.display()))
                .map_err(usage)?;
            generate_all(&m, &gold_corpus)?
        }
        (None, None) => return Err(usage(anyhow!("one of --generated or --model is required"))),
    };
    if lines.len() != gold_lines.len() {
        return Err(usage(anyhow!(
            "{} generated lines for {} gold lines",
            lines.len(),
            gold_lines.len()
        )));
    }
    let empty = lines.iter().filter(|l| l.is_empty()).count();
    if empty > 0 {
        eprintln!("warning: {empty} empty generations, each scored 0");
    }
    let report = evaluate(&lines, &gold_lines, quatrains).map_err(usage)?;
    create_out(&cfg.out)?;
    let path: PathBuf = cfg.out.join("eval_report.json");
    write_json(&path, &report)?;
    println!("{}", serde_json::to_string(&report).map_err(anyhow::Error::from)?);
    Ok(())
}
