//! GRU encoder-decoder with a hierarchical-attention connector.
//!
//! The encoder runs a GRU over the source embeddings (optionally in both
//! directions, summing the two state sequences). At every decoder step the
//! previous decoder state queries the encoder states through Ham-V, the
//! resulting context is concatenated with the previous token's embedding
//! and fed to the decoder GRU, and a linear map produces vocabulary logits.
//!
//! Everything is computed batched on an autodiff [`Tape`]; sequences in a
//! batch must share their source length and their target length.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::vanilla_attention_var;
use crate::autodiff::{Tape, Var};
use crate::error::{dim_err, domain, Error, Result};
use crate::ham::{ham_v_var, HamWeights};
use crate::tensor::Tensor;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
/// Number of reserved ids at the bottom of every vocabulary.
pub const RESERVED: usize = 3;

pub const INIT_RANGE: f64 = 0.1;

/// How decoder queries are turned into a context vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connector {
    /// softmax-weighted sum of all attention levels
    #[default]
    Ham,
    /// last attention level only
    MultiLevel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab: usize,
    pub hidden: usize,
    pub depth: usize,
    pub bidirectional: bool,
    #[serde(default)]
    pub connector: Connector,
}

impl ModelConfig {
    pub fn new(vocab: usize, hidden: usize, depth: usize) -> Self {
        Self {
            vocab,
            hidden,
            depth,
            bidirectional: true,
            connector: Connector::Ham,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab <= RESERVED {
            return Err(Error::Validation(format!(
                "vocab {} leaves no room for payload tokens",
                self.vocab
            )));
        }
        if self.hidden == 0 || self.depth == 0 {
            return Err(Error::Validation("hidden size and depth must be positive".into()));
        }
        Ok(())
    }
}

/// Weights of one GRU cell. Inputs multiply from the left (`x · W`).
#[derive(Clone, Debug, PartialEq)]
pub struct GruParams {
    pub w_z: Tensor,
    pub u_z: Tensor,
    pub b_z: Tensor,
    pub w_r: Tensor,
    pub u_r: Tensor,
    pub b_r: Tensor,
    pub w_h: Tensor,
    pub u_h: Tensor,
    pub b_h: Tensor,
}

const GRU_FIELDS: [&str; 9] = ["w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h"];

impl GruParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self::from_fn(input, hidden, Tensor::zeros)
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, input: usize, hidden: usize) -> Self {
        Self::from_fn(input, hidden, |shape| {
            Tensor::uniform(rng, shape, -INIT_RANGE, INIT_RANGE)
        })
    }

    fn from_fn(input: usize, hidden: usize, mut f: impl FnMut(&[usize]) -> Tensor) -> Self {
        Self {
            w_z: f(&[input, hidden]),
            u_z: f(&[hidden, hidden]),
            b_z: f(&[hidden]),
            w_r: f(&[input, hidden]),
            u_r: f(&[hidden, hidden]),
            b_r: f(&[hidden]),
            w_h: f(&[input, hidden]),
            u_h: f(&[hidden, hidden]),
            b_h: f(&[hidden]),
        }
    }

    /// Fields in canonical order.
    pub fn tensors(&self) -> [&Tensor; 9] {
        [
            &self.w_z, &self.u_z, &self.b_z, &self.w_r, &self.u_r, &self.b_r, &self.w_h, &self.u_h, &self.b_h,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 9] {
        [
            &mut self.w_z,
            &mut self.u_z,
            &mut self.b_z,
            &mut self.w_r,
            &mut self.u_r,
            &mut self.b_r,
            &mut self.w_h,
            &mut self.u_h,
            &mut self.b_h,
        ]
    }
}

/// GRU parameters registered on a tape.
#[derive(Clone, Copy, Debug)]
pub struct GruVars<'t> {
    w_z: Var<'t>,
    u_z: Var<'t>,
    b_z: Var<'t>,
    w_r: Var<'t>,
    u_r: Var<'t>,
    b_r: Var<'t>,
    w_h: Var<'t>,
    u_h: Var<'t>,
    b_h: Var<'t>,
}

impl<'t> GruVars<'t> {
    /// Builds from nine leaves in canonical order.
    pub fn from_slice(v: &[Var<'t>]) -> Self {
        Self {
            w_z: v[0],
            u_z: v[1],
            b_z: v[2],
            w_r: v[3],
            u_r: v[4],
            b_r: v[5],
            w_h: v[6],
            u_h: v[7],
            b_h: v[8],
        }
    }

    pub fn bind(tape: &'t Tape, p: &GruParams) -> Self {
        let vars: Vec<Var<'t>> = p.tensors().iter().map(|t| tape.leaf((*t).clone())).collect();
        Self::from_slice(&vars)
    }
}

/// One GRU step on a batch: `x` is `[B×in]`, `h` is `[B×hidden]`.
///
/// `z = σ(xW_z + hU_z + b_z)`, `r = σ(xW_r + hU_r + b_r)`,
/// `h̃ = tanh(xW_h + (r⊙h)U_h + b_h)`, `h' = (1−z)⊙h + z⊙h̃`.
pub fn gru_step_var<'t>(x: Var<'t>, h: Var<'t>, p: &GruVars<'t>) -> Result<Var<'t>> {
    let z = x.matmul(p.w_z)?.add(h.matmul(p.u_z)?)?.add_row(p.b_z)?.sigmoid();
    let r = x.matmul(p.w_r)?.add(h.matmul(p.u_r)?)?.add_row(p.b_r)?.sigmoid();
    let cand = x.matmul(p.w_h)?.add(r.mul(h)?.matmul(p.u_h)?)?.add_row(p.b_h)?.tanh();
    h.add(z.mul(cand.sub(h)?)?)
}

/// Single-vector GRU step.
pub fn gru_step(x: &Tensor, h: &Tensor, p: &GruParams) -> Result<Tensor> {
    if x.rank() != 1 || h.rank() != 1 {
        return dim_err("gru_step", x.shape(), h.shape());
    }
    if x.numel() != p.w_z.rows() || h.numel() != p.u_z.rows() {
        return dim_err("gru_step", x.shape(), p.w_z.shape());
    }
    let tape = Tape::new();
    let vars = GruVars::bind(&tape, p);
    let xv = tape.leaf(x.reshape(&[1, x.numel()])?);
    let hv = tape.leaf(h.reshape(&[1, h.numel()])?);
    gru_step_var(xv, hv, &vars)?.value().reshape(&[h.numel()])
}

#[derive(Clone, Debug, PartialEq)]
pub struct Seq2SeqModel {
    pub config: ModelConfig,
    /// `[vocab × hidden]`
    pub embedding: Tensor,
    pub encoder: GruParams,
    /// backward-direction encoder, present iff `config.bidirectional`
    pub encoder_bwd: Option<GruParams>,
    /// input is `concat(embedding, context)`, width `2·hidden`
    pub decoder: GruParams,
    pub ham: HamWeights,
    /// `[hidden × vocab]`
    pub w_out: Tensor,
}

impl Seq2SeqModel {
    /// Uniform `[-0.1, 0.1]` init in a fixed parameter order; level logits start at zero.
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (v, h) = (config.vocab, config.hidden);
        let embedding = Tensor::uniform(rng, &[v, h], -INIT_RANGE, INIT_RANGE);
        let encoder = GruParams::random(rng, h, h);
        let encoder_bwd = config.bidirectional.then(|| GruParams::random(rng, h, h));
        let decoder = GruParams::random(rng, 2 * h, h);
        let w_out = Tensor::uniform(rng, &[h, v], -INIT_RANGE, INIT_RANGE);
        let ham = HamWeights::uniform(config.depth)?;
        Ok(Self {
            config,
            embedding,
            encoder,
            encoder_bwd,
            decoder,
            ham,
            w_out,
        })
    }

    /// All-zero parameters.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (v, h) = (config.vocab, config.hidden);
        Ok(Self {
            embedding: Tensor::zeros(&[v, h]),
            encoder: GruParams::zeros(h, h),
            encoder_bwd: config.bidirectional.then(|| GruParams::zeros(h, h)),
            decoder: GruParams::zeros(2 * h, h),
            ham: HamWeights::uniform(config.depth)?,
            w_out: Tensor::zeros(&[h, v]),
            config,
        })
    }

    /// Named parameters in their canonical order.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        fn gru<'a>(prefix: &str, p: &'a GruParams) -> Vec<(String, &'a Tensor)> {
            GRU_FIELDS
                .iter()
                .zip(p.tensors())
                .map(|(f, t)| (format!("{prefix}.{f}"), t))
                .collect()
        }
        let mut out = vec![("embedding".to_string(), &self.embedding)];
        out.extend(gru("encoder", &self.encoder));
        if let Some(bwd) = &self.encoder_bwd {
            out.extend(gru("encoder_bwd", bwd));
        }
        out.extend(gru("decoder", &self.decoder));
        out.push(("ham.c".to_string(), self.ham.logits()));
        out.push(("w_out".to_string(), &self.w_out));
        out
    }

    /// Mutable parameters, same order as [`Self::named_params`].
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![&mut self.embedding];
        out.extend(self.encoder.tensors_mut());
        if let Some(bwd) = &mut self.encoder_bwd {
            out.extend(bwd.tensors_mut());
        }
        out.extend(self.decoder.tensors_mut());
        out.push(self.ham.logits_mut());
        out.push(&mut self.w_out);
        out
    }

    /// Index of the level logits within the canonical parameter order.
    pub fn level_logits_index(&self) -> usize {
        self.named_params().len() - 2
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Registers every parameter as a tape leaf.
    pub fn bind<'t>(&self, tape: &'t Tape) -> ModelVars<'t> {
        let leaves: Vec<Var<'t>> = self
            .named_params()
            .into_iter()
            .map(|(_, t)| tape.leaf(t.clone()))
            .collect();
        ModelVars::from_leaves(&self.config, leaves)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            tensors: self
                .named_params()
                .into_iter()
                .map(|(name, t)| NamedTensor {
                    name,
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
        };
        fs::write(path, serde_json::to_string_pretty(&ckpt)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported checkpoint {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        let mut model = Self::zeros(ckpt.config)?;
        let names: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
        if names.len() != ckpt.tensors.len() {
            return Err(Error::Validation(format!(
                "checkpoint has {} tensors, model expects {}",
                ckpt.tensors.len(),
                names.len()
            )));
        }
        for ((slot, name), saved) in model.params_mut().into_iter().zip(&names).zip(ckpt.tensors) {
            if &saved.name != name || saved.shape != slot.shape() {
                return Err(Error::Validation(format!(
                    "checkpoint tensor {} {:?} does not match {} {:?}",
                    saved.name,
                    saved.shape,
                    name,
                    slot.shape()
                )));
            }
            *slot = Tensor::new(saved.shape, saved.data)?;
        }
        Ok(model)
    }
}

pub const CHECKPOINT_FORMAT: &str = "ham-seq2seq";
pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk checkpoint: JSON with the model config and every parameter in
/// canonical order as `{name, shape, data}` (row-major).
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub tensors: Vec<NamedTensor>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Model parameters bound to a tape for one forward pass.
pub struct ModelVars<'t> {
    config: ModelConfig,
    pub leaves: Vec<Var<'t>>,
    embedding: Var<'t>,
    encoder: GruVars<'t>,
    encoder_bwd: Option<GruVars<'t>>,
    decoder: GruVars<'t>,
    level_logits: Var<'t>,
    w_out: Var<'t>,
}

impl<'t> ModelVars<'t> {
    /// Wraps leaves given in [`Seq2SeqModel::named_params`] order.
    pub fn from_leaves(config: &ModelConfig, leaves: Vec<Var<'t>>) -> Self {
        let mut at = 1;
        let mut next_gru = || {
            let g = GruVars::from_slice(&leaves[at..at + 9]);
            at += 9;
            g
        };
        let encoder = next_gru();
        let encoder_bwd = config.bidirectional.then(&mut next_gru);
        let decoder = next_gru();
        Self {
            config: config.clone(),
            embedding: leaves[0],
            encoder,
            encoder_bwd,
            decoder,
            level_logits: leaves[at],
            w_out: leaves[at + 1],
            leaves,
        }
    }

    fn tape(&self) -> &'t Tape {
        self.embedding.tape()
    }

    fn check_ids(&self, ids: &[usize]) -> Result<()> {
        match ids.iter().find(|&&t| t >= self.config.vocab) {
            Some(t) => domain(format!("token id {t} out of vocabulary of size {}", self.config.vocab)),
            None => Ok(()),
        }
    }

    /// Encodes a batch of equally long sources. Returns the per-position
    /// states (each `[B×hidden]`).
    pub fn encode(&self, sources: &[&[usize]]) -> Result<Vec<Var<'t>>> {
        let Some(first) = sources.first() else {
            return domain("empty batch");
        };
        let n = first.len();
        if n == 0 {
            return domain("empty source sequence");
        }
        if sources.iter().any(|s| s.len() != n) {
            return domain("source lengths differ within a batch");
        }
        let b = sources.len();
        let h = self.config.hidden;
        let inputs = (0..n)
            .map(|i| {
                let ids: Vec<usize> = sources.iter().map(|s| s[i]).collect();
                self.check_ids(&ids)?;
                self.embedding.gather_rows(&ids)
            })
            .collect::<Result<Vec<_>>>()?;

        let zero = self.tape().leaf(Tensor::zeros(&[b, h]));
        let mut fwd = Vec::with_capacity(n);
        let mut state = zero;
        for x in &inputs {
            state = gru_step_var(*x, state, &self.encoder)?;
            fwd.push(state);
        }
        let Some(bwd_params) = &self.encoder_bwd else {
            return Ok(fwd);
        };
        let mut bwd = vec![zero; n];
        let mut state = zero;
        for i in (0..n).rev() {
            state = gru_step_var(inputs[i], state, bwd_params)?;
            bwd[i] = state;
        }
        fwd.into_iter().zip(bwd).map(|(f, b)| f.add(b)).collect()
    }

    /// Context vector for decoder queries `[B×hidden]` against encoder
    /// states `[B×n×hidden]`.
    pub fn context(&self, query: Var<'t>, enc: Var<'t>) -> Result<Var<'t>> {
        match self.config.connector {
            Connector::Ham => ham_v_var(query, enc, self.level_logits),
            Connector::MultiLevel => {
                let mut q = query;
                for _ in 0..self.config.depth {
                    q = vanilla_attention_var(q, enc)?;
                }
                Ok(q)
            }
        }
    }

    /// One decoder step; returns `(logits [B×vocab], new state [B×hidden])`.
    pub fn decode_step(&self, h_dec: Var<'t>, enc: Var<'t>, prev: &[usize]) -> Result<(Var<'t>, Var<'t>)> {
        self.check_ids(prev)?;
        let ctx = self.context(h_dec, enc)?;
        let emb = self.embedding.gather_rows(prev)?;
        let x = self.tape().concat(&[emb, ctx])?;
        let h_next = gru_step_var(x, h_dec, &self.decoder)?;
        let logits = h_next.matmul(self.w_out)?;
        Ok((logits, h_next))
    }

    /// Stacks per-position states into `[B×n×hidden]`; the decoder starts
    /// from the state at the last source position.
    pub fn encoder_memory(&self, states: &[Var<'t>]) -> Result<(Var<'t>, Var<'t>)> {
        let enc = self.tape().stack(states, 1)?;
        Ok((enc, *states.last().expect("non-empty source")))
    }

    /// Mean per-token cross-entropy under teacher forcing. All pairs must
    /// share source length and target length.
    pub fn batch_loss(&self, pairs: &[(&[usize], &[usize])]) -> Result<Var<'t>> {
        let sources: Vec<&[usize]> = pairs.iter().map(|p| p.0).collect();
        let m = pairs[0].1.len();
        if pairs.iter().any(|p| p.1.len() != m) {
            return domain("target lengths differ within a batch");
        }
        let states = self.encode(&sources)?;
        let (enc, mut h) = self.encoder_memory(&states)?;
        let mut prev: Vec<usize> = vec![BOS; pairs.len()];
        let mut total: Option<Var<'t>> = None;
        for step in 0..=m {
            let (logits, h_next) = self.decode_step(h, enc, &prev)?;
            h = h_next;
            let gold: Vec<usize> = pairs.iter().map(|p| if step < m { p.1[step] } else { EOS }).collect();
            let ce = logits.cross_entropy(&gold)?;
            total = Some(match total {
                Some(t) => t.add(ce)?,
                None => ce,
            });
            prev = gold;
        }
        Ok(total.expect("at least one decoder step").scale(1.0 / (m + 1) as f64))
    }
}

/// Encoder states for one source, `[n × hidden]`.
pub fn encode(tokens: &[usize], model: &Seq2SeqModel) -> Result<Tensor> {
    let tape = Tape::new();
    let mv = model.bind(&tape);
    let states = mv.encode(&[tokens])?;
    let rows: Vec<Tensor> = states
        .iter()
        .map(|s| s.value().reshape(&[model.config.hidden]))
        .collect::<Result<_>>()?;
    Tensor::from_rows(&rows)
}

/// One decoder step for a single sequence; `enc_states` is `[n × hidden]`.
pub fn decode_step(
    h_dec: &Tensor,
    enc_states: &Tensor,
    prev_token: usize,
    model: &Seq2SeqModel,
) -> Result<(Tensor, Tensor)> {
    let hidden = model.config.hidden;
    if h_dec.numel() != hidden || enc_states.rank() != 2 || enc_states.cols() != hidden {
        return dim_err("decode_step", h_dec.shape(), enc_states.shape());
    }
    let tape = Tape::new();
    let mv = model.bind(&tape);
    let h = tape.leaf(h_dec.reshape(&[1, hidden])?);
    let enc = tape.leaf(enc_states.reshape(&[1, enc_states.rows(), hidden])?);
    let (logits, h_next) = mv.decode_step(h, enc, &[prev_token])?;
    Ok((
        logits.value().reshape(&[model.config.vocab])?,
        h_next.value().reshape(&[hidden])?,
    ))
}

/// Greedy decoding from BOS until EOS or `max_len` tokens. Ties go to the
/// smallest token id. The EOS token is not included in the output.
pub fn generate(src: &[usize], model: &Seq2SeqModel, max_len: usize) -> Result<Vec<usize>> {
    let tape = Tape::new();
    let mv = model.bind(&tape);
    let states = mv.encode(&[src])?;
    let (enc, mut h) = mv.encoder_memory(&states)?;
    let mut prev = BOS;
    let mut out = Vec::new();
    while out.len() < max_len {
        let (logits, h_next) = mv.decode_step(h, enc, &[prev])?;
        h = h_next;
        let next = logits.value().argmax();
        if next == EOS {
            break;
        }
        out.push(next);
        prev = next;
    }
    Ok(out)
}

/// Mean per-token cross-entropy of one pair (no gradient).
pub fn pair_loss(model: &Seq2SeqModel, src: &[usize], tgt: &[usize]) -> Result<f64> {
    let tape = Tape::new();
    model.bind(&tape).batch_loss(&[(src, tgt)])?.value().item()
}
