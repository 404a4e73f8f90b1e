//! Optimizers, the teacher-forced training loop and the depth sweep.
//!
//! Seeding: a run with seed `s` initializes its model from
//! `ChaCha8Rng::seed_from_u64(s)` (stream 0) and shuffles batches with the
//! same seed on stream 1. Sweep restart `r` under root seed `S` uses
//! `s = S + r`, identical across depths, so every depth starts from the
//! same non-attention parameters.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data::{Corpus, Pair};
use crate::error::{domain, Error, Result};
use crate::eval::exact_match_rate;
use crate::ham::HamWeights;
use crate::model::{generate, Connector, ModelConfig, Seq2SeqModel};
use crate::tensor::Tensor;

/// Gradients with a larger global L2 norm are rescaled to this norm.
pub const MAX_GRAD_NORM: f64 = 5.0;

/// Logit magnitude used to freeze level weights onto one level.
pub const ONE_HOT_LOGIT: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub depth: usize,
    pub restarts: usize,
    /// keep the level logits fixed at their initial values
    pub freeze_level_weights: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            optimizer: OptimizerKind::default(),
            epochs: 200,
            batch_size: 32,
            seed: 0,
            depth: 1,
            restarts: 1,
            freeze_level_weights: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(m.to_string()));
        // zero is allowed as a no-update baseline
        if !self.lr.is_finite() || self.lr < 0.0 {
            return bad("learning rate must be a non-negative finite number");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if self.depth == 0 {
            return bad("depth must be at least 1");
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1");
        }
        if let OptimizerKind::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !eps.is_finite() || eps <= 0.0 {
                return bad("adam needs beta1, beta2 in [0, 1) and eps > 0");
            }
        }
        Ok(())
    }
}

/// `p ← p − lr·g`.
pub fn sgd_step(params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) {
    for (p, g) in params.iter_mut().zip(grads) {
        for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
            *pv -= lr * gv;
        }
    }
}

/// First and second moment estimates for Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u32,
}

impl AdamState {
    pub fn new<'a>(shapes: impl IntoIterator<Item = &'a [usize]>) -> Self {
        let m: Vec<Tensor> = shapes.into_iter().map(Tensor::zeros).collect();
        Self { v: m.clone(), m, t: 0 }
    }
}

/// Adam with bias correction.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    state.t += 1;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let iter = p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
        for ((pv, &gv), (mv, vv)) in iter {
            *mv = beta1 * *mv + (1.0 - beta1) * gv;
            *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            *pv -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

enum Optimizer {
    Sgd,
    Adam(AdamState, f64, f64, f64),
}

impl Optimizer {
    fn new(kind: OptimizerKind, model: &Seq2SeqModel) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let shapes: Vec<Vec<usize>> = model.named_params().iter().map(|(_, t)| t.shape().to_vec()).collect();
                let state = AdamState::new(shapes.iter().map(Vec::as_slice));
                Optimizer::Adam(state, beta1, beta2, eps)
            }
        }
    }

    fn step(&mut self, model: &mut Seq2SeqModel, grads: &[Tensor], lr: f64) {
        let mut params = model.params_mut();
        match self {
            Optimizer::Sgd => sgd_step(&mut params, grads, lr),
            Optimizer::Adam(state, b1, b2, eps) => adam_step(&mut params, grads, state, lr, *b1, *b2, *eps),
        }
    }
}

/// Splits pair indices into batches whose members share source and target
/// lengths. Order within a length bucket follows `order`.
fn make_batches(pairs: &[Pair], order: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    let mut buckets: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for &i in order {
        buckets
            .entry((pairs[i].src.len(), pairs[i].tgt.len()))
            .or_default()
            .push(i);
    }
    buckets
        .into_values()
        .flat_map(|idx| idx.chunks(batch_size).map(<[usize]>::to_vec).collect::<Vec<_>>())
        .collect()
}

fn batch_pairs<'a>(pairs: &'a [Pair], idx: &[usize]) -> Vec<(&'a [usize], &'a [usize])> {
    idx.iter()
        .map(|&i| (pairs[i].src.as_slice(), pairs[i].tgt.as_slice()))
        .collect()
}

/// Mean per-example loss and gradients for one batch.
fn batch_gradients(model: &Seq2SeqModel, pairs: &[(&[usize], &[usize])]) -> Result<(f64, Vec<Tensor>)> {
    let tape = Tape::new();
    let mv = model.bind(&tape);
    let loss = mv.batch_loss(pairs)?;
    let grads = tape.backward(loss)?;
    let value = loss.value().item()?;
    Ok((value, mv.leaves.iter().map(|&l| grads.wrt(l)).collect()))
}

fn clip_gradients(grads: &mut [Tensor]) {
    let norm = grads.iter().flat_map(|g| g.data()).map(|v| v * v).sum::<f64>().sqrt();
    if norm > MAX_GRAD_NORM {
        let s = MAX_GRAD_NORM / norm;
        for g in grads.iter_mut() {
            *g = g.scale(s);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// mean per-example cross-entropy of each epoch, measured before each update
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch training with teacher forcing.
pub fn train(model: &mut Seq2SeqModel, corpus: &Corpus, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if corpus.is_empty() {
        return domain("cannot train on an empty corpus");
    }
    corpus.validate()?;
    if corpus.vocab > model.config.vocab {
        return Err(Error::Validation(format!(
            "corpus vocab {} exceeds model vocab {}",
            corpus.vocab, model.config.vocab
        )));
    }
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut optimizer = Optimizer::new(cfg.optimizer, model);
    let frozen = cfg.freeze_level_weights.then(|| model.level_logits_index());
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut batches = make_batches(&corpus.pairs, &order, cfg.batch_size);
        batches.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for (b, idx) in batches.iter().enumerate() {
            let pairs = batch_pairs(&corpus.pairs, idx);
            let (loss, mut grads) = batch_gradients(model, &pairs).map_err(|e| match e {
                Error::NonFinite(what) => Error::NonFinite(format!("{what} at epoch {epoch}, batch {b}")),
                other => other,
            })?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "loss or gradient at epoch {epoch}, batch {b}"
                )));
            }
            total += loss * idx.len() as f64;
            if let Some(i) = frozen {
                grads[i] = Tensor::zeros(grads[i].shape());
            }
            clip_gradients(&mut grads);
            optimizer.step(model, &grads, cfg.lr);
        }
        epoch_losses.push(total / corpus.len() as f64);
    }
    Ok(TrainOutcome { epoch_losses })
}

/// Mean per-example teacher-forced cross-entropy over the whole corpus.
pub fn corpus_loss(model: &Seq2SeqModel, corpus: &Corpus, batch_size: usize) -> Result<f64> {
    if corpus.is_empty() {
        return domain("empty corpus");
    }
    let order: Vec<usize> = (0..corpus.len()).collect();
    let mut total = 0.0;
    for idx in make_batches(&corpus.pairs, &order, batch_size.max(1)) {
        let tape = Tape::new();
        let loss = model.bind(&tape).batch_loss(&batch_pairs(&corpus.pairs, &idx))?;
        total += loss.value().item()? * idx.len() as f64;
    }
    Ok(total / corpus.len() as f64)
}

/// Greedy decoding of every source, with room for two extra tokens.
pub fn generate_all(model: &Seq2SeqModel, corpus: &Corpus) -> Result<Vec<Vec<usize>>> {
    corpus
        .pairs
        .iter()
        .map(|p| generate(&p.src, model, p.tgt.len() + 2))
        .collect()
}

pub fn exact_match(model: &Seq2SeqModel, corpus: &Corpus) -> Result<f64> {
    let generated = generate_all(model, corpus)?;
    let pairs: Vec<(Vec<usize>, Vec<usize>)> = generated
        .into_iter()
        .zip(corpus.pairs.iter().map(|p| p.tgt.clone()))
        .collect();
    Ok(exact_match_rate(&pairs))
}

/// Architecture shared by every cell of a sweep; depth varies per cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelTemplate {
    pub hidden: usize,
    pub bidirectional: bool,
    pub connector: Connector,
}

impl Default for ModelTemplate {
    fn default() -> Self {
        Self {
            hidden: 16,
            bidirectional: true,
            connector: Connector::Ham,
        }
    }
}

impl ModelTemplate {
    pub fn config(&self, vocab: usize, depth: usize) -> ModelConfig {
        ModelConfig {
            vocab,
            hidden: self.hidden,
            depth,
            bidirectional: self.bidirectional,
            connector: self.connector,
        }
    }
}

/// One trained (depth, restart) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub depth: usize,
    pub seed: u64,
    pub final_loss: f64,
    /// exact-match rate of greedy decoding on the training corpus
    pub metric: f64,
    pub wall_time_s: f64,
}

/// Best-over-restarts loss at one depth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthSummary {
    pub depth: usize,
    pub best_loss: f64,
    pub best_seed: u64,
    pub mean_loss: f64,
    pub best_metric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from_depth: usize,
    pub to_depth: usize,
    /// `best_loss(to) / best_loss(from)`
    pub ratio: f64,
    pub within_tolerance: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub depths: Vec<DepthSummary>,
    pub transitions: Vec<Transition>,
    pub epsilon: f64,
    pub monotone: bool,
    pub verdict: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub records: Vec<SweepRecord>,
    pub summary: SweepSummary,
}

/// Relative slack allowed between consecutive best-of-restarts losses.
pub const MONOTONE_EPSILON: f64 = 0.05;

pub fn summarize(records: &[SweepRecord], depths: &[usize], epsilon: f64) -> SweepSummary {
    let depth_summaries: Vec<DepthSummary> = depths
        .iter()
        .map(|&d| {
            let cells: Vec<&SweepRecord> = records.iter().filter(|r| r.depth == d).collect();
            // ties resolve to the first restart
            let best = cells
                .iter()
                .copied()
                .reduce(|a, b| if b.final_loss < a.final_loss { b } else { a })
                .expect("every depth has at least one restart");
            DepthSummary {
                depth: d,
                best_loss: best.final_loss,
                best_seed: best.seed,
                mean_loss: cells.iter().map(|r| r.final_loss).sum::<f64>() / cells.len() as f64,
                best_metric: cells.iter().map(|r| r.metric).fold(0.0, f64::max),
            }
        })
        .collect();
    let transitions: Vec<Transition> = depth_summaries
        .windows(2)
        .map(|w| Transition {
            from_depth: w[0].depth,
            to_depth: w[1].depth,
            ratio: w[1].best_loss / w[0].best_loss,
            within_tolerance: w[1].best_loss <= w[0].best_loss * (1.0 + epsilon),
        })
        .collect();
    let monotone = transitions.iter().all(|t| t.within_tolerance);
    let pct = (epsilon * 100.0).round();
    let verdict = if monotone {
        format!("monotone within {pct}%")
    } else {
        format!("not monotone within {pct}%")
    };
    SweepSummary {
        depths: depth_summaries,
        transitions,
        epsilon,
        monotone,
        verdict,
    }
}

/// Trains `restarts` seeded models at each depth with an identical budget
/// and reports the best final loss per depth.
pub fn depth_sweep(
    corpus: &Corpus,
    depths: &[usize],
    template: &ModelTemplate,
    cfg: &TrainConfig,
) -> Result<SweepReport> {
    cfg.validate()?;
    if depths.is_empty() || depths.contains(&0) {
        return Err(Error::Validation(
            "depths must be a non-empty list of positive integers".into(),
        ));
    }
    if depths.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Validation("depths must be sorted ascending".into()));
    }
    let mut records = Vec::with_capacity(depths.len() * cfg.restarts);
    for &depth in depths {
        for r in 0..cfg.restarts {
            let seed = cfg.seed.wrapping_add(r as u64);
            let started = Instant::now();
            let (model, _) = train_cell(corpus, template, cfg, depth, seed)?;
            let final_loss = corpus_loss(&model, corpus, cfg.batch_size)?;
            let metric = exact_match(&model, corpus)?;
            records.push(SweepRecord {
                depth,
                seed,
                final_loss,
                metric,
                wall_time_s: started.elapsed().as_secs_f64(),
            });
        }
    }
    let summary = summarize(&records, depths, MONOTONE_EPSILON);
    Ok(SweepReport { records, summary })
}

/// Initializes and trains one model. With `freeze_level_weights`, the
/// level logits are pinned one-hot on the deepest level.
pub fn train_cell(
    corpus: &Corpus,
    template: &ModelTemplate,
    cfg: &TrainConfig,
    depth: usize,
    seed: u64,
) -> Result<(Seq2SeqModel, TrainOutcome)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Seq2SeqModel::init(template.config(corpus.vocab, depth), &mut rng)?;
    if cfg.freeze_level_weights {
        model.ham = HamWeights::one_hot(depth, depth - 1, ONE_HOT_LOGIT)?;
    }
    let cell_cfg = TrainConfig {
        depth,
        seed,
        ..cfg.clone()
    };
    let outcome = train(&mut model, corpus, &cell_cfg)?;
    Ok((model, outcome))
}

/// CSV with header `depth,seed,final_loss,metric,wall_time_s`. When
/// `with_time` is false the wall-time column is left empty so that reruns
/// produce identical bytes.
pub fn records_csv(records: &[SweepRecord], with_time: bool) -> String {
    let mut out = String::from("depth,seed,final_loss,metric,wall_time_s\n");
    for r in records {
        let time = if with_time {
            format!("{:.3}", r.wall_time_s)
        } else {
            String::new()
        };
        writeln!(out, "{},{},{},{},{}", r.depth, r.seed, r.final_loss, r.metric, time).expect("string write");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_task, Task};

    #[test]
    fn sgd_examples() {
        let mut x = Tensor::vector(vec![1.0]);
        let g = x.clone(); // f = x²/2
        sgd_step(&mut [&mut x], &[g], 0.1);
        assert!((x.data()[0] - 0.9).abs() < 1e-15);
        let mut y = Tensor::vector(vec![0.3, -0.2]);
        sgd_step(&mut [&mut y], &[Tensor::zeros(&[2])], 0.5);
        assert_eq!(y.data(), &[0.3, -0.2]);
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let mut x = Tensor::vector(vec![0.3, -0.2]);
        let mut st = AdamState::new([x.shape()]);
        adam_step(&mut [&mut x], &[Tensor::zeros(&[2])], &mut st, 0.01, 0.9, 0.999, 1e-8);
        assert_eq!(x.data(), &[0.3, -0.2]);
    }

    #[test]
    fn adam_first_step_magnitude_is_lr() {
        // m̂ = g and v̂ = g², so the step is lr·g/(|g| + eps)
        for g in [1e-3, 0.5, 40.0] {
            let mut x = Tensor::vector(vec![1.0]);
            let mut st = AdamState::new([x.shape()]);
            adam_step(
                &mut [&mut x],
                &[Tensor::vector(vec![g])],
                &mut st,
                0.01,
                0.9,
                0.999,
                1e-8,
            );
            let expected = 0.01 * g / (g + 1e-8);
            assert!(((1.0 - x.data()[0]) - expected).abs() < 1e-15);
            assert!(((1.0 - x.data()[0]) - 0.01).abs() < 1e-7);
        }
    }

    #[test]
    fn batches_share_lengths() {
        let pairs = vec![
            Pair {
                src: vec![3],
                tgt: vec![3],
            },
            Pair {
                src: vec![3, 4],
                tgt: vec![3, 4],
            },
            Pair {
                src: vec![5],
                tgt: vec![5],
            },
            Pair {
                src: vec![4, 4],
                tgt: vec![4],
            },
        ];
        let batches = make_batches(&pairs, &[0, 1, 2, 3], 8);
        assert_eq!(batches, vec![vec![0, 2], vec![3], vec![1]]);
    }

    fn small_corpus() -> Corpus {
        gen_task(Task::Copy, 12, 3, 4, 5).unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_size: 4,
            depth: 2,
            seed: 8,
            ..Default::default()
        }
    }

    fn template() -> ModelTemplate {
        ModelTemplate {
            hidden: 6,
            ..Default::default()
        }
    }

    #[test]
    fn zero_learning_rate_keeps_loss_constant() {
        let cfg = TrainConfig { lr: 0.0, ..small_cfg() };
        let corpus = small_corpus();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut model = Seq2SeqModel::init(template().config(corpus.vocab, 2), &mut rng).unwrap();
        let before = model.clone();
        let out = train(&mut model, &corpus, &cfg).unwrap();
        assert_eq!(model, before);
        for l in &out.epoch_losses {
            assert!((l - out.epoch_losses[0]).abs() < 1e-12 * l);
        }
    }

    #[test]
    fn identical_seeds_give_identical_trajectories() {
        let corpus = small_corpus();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let mut m = Seq2SeqModel::init(template().config(corpus.vocab, 2), &mut rng).unwrap();
            (train(&mut m, &corpus, &small_cfg()).unwrap(), m)
        };
        let (a, ma) = run();
        let (b, mb) = run();
        assert_eq!(a, b);
        assert_eq!(ma, mb);
        assert!(a.epoch_losses.iter().all(|&l| l > 0.0));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let corpus = small_corpus();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = Seq2SeqModel::init(template().config(corpus.vocab, 1), &mut rng).unwrap();
        for cfg in [
            TrainConfig {
                epochs: 0,
                ..small_cfg()
            },
            TrainConfig {
                lr: -1.0,
                ..small_cfg()
            },
            TrainConfig {
                restarts: 0,
                ..small_cfg()
            },
        ] {
            assert!(matches!(train(&mut m, &corpus, &cfg), Err(Error::Validation(_))));
        }
        let empty = Corpus {
            pairs: vec![],
            ..corpus
        };
        assert!(train(&mut m, &empty, &small_cfg()).is_err());
    }

    #[test]
    fn nan_loss_names_epoch_and_batch() {
        let corpus = small_corpus();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = Seq2SeqModel::init(template().config(corpus.vocab, 1), &mut rng).unwrap();
        m.w_out.data_mut()[0] = f64::NAN;
        let err = train(&mut m, &corpus, &small_cfg()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("epoch 0") && msg.contains("batch 0"), "{msg}");
    }

    #[test]
    fn summary_verdicts() {
        let rec = |depth, seed, final_loss| SweepRecord {
            depth,
            seed,
            final_loss,
            metric: 0.0,
            wall_time_s: 0.0,
        };
        let s = summarize(&[rec(1, 0, 0.5), rec(1, 1, 0.4)], &[1], MONOTONE_EPSILON);
        assert!(s.monotone);
        assert_eq!(s.depths[0].best_loss, 0.4);
        assert_eq!(s.depths[0].best_seed, 1);
        let s = summarize(&[rec(1, 0, 0.4), rec(2, 0, 0.41), rec(5, 0, 0.5)], &[1, 2, 5], 0.05);
        assert!(s.transitions[0].within_tolerance);
        assert!(!s.transitions[1].within_tolerance);
        assert_eq!(s.verdict, "not monotone within 5%");
    }

    #[test]
    fn sweep_repeats_exactly_and_writes_csv() {
        let corpus = small_corpus();
        let cfg = TrainConfig {
            restarts: 2,
            epochs: 2,
            ..small_cfg()
        };
        let a = depth_sweep(&corpus, &[1, 1], &template(), &cfg).unwrap();
        assert_eq!(a.summary.depths[0], a.summary.depths[1]);
        let b = depth_sweep(&corpus, &[1, 1], &template(), &cfg).unwrap();
        assert_eq!(records_csv(&a.records, false), records_csv(&b.records, false));
        let csv = records_csv(&a.records, false);
        assert!(csv.starts_with("depth,seed,final_loss,metric,wall_time_s\n1,8,"));
        assert!(depth_sweep(&corpus, &[2, 1], &template(), &cfg).is_err());
    }
}
