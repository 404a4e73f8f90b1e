//! Hierarchical attention: a softmax-weighted sum over every level of an
//! iterated attention stack.
//!
//! Ham-V iterates vanilla attention against fixed keys; Ham-S iterates
//! self-attention over the whole sequence. Level `t` (1-based) is the
//! output of the `t`-th application; the raw input (level 0) never enters
//! the sum. Level weights are `softmax(c)` for trainable logits `c`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{
    attention_levels, self_attention_layer, self_attention_var, vanilla_attention, vanilla_attention_var, KeySequence,
    Query,
};
use crate::autodiff::Var;
use crate::error::{domain, Result};
use crate::tensor::Tensor;

/// Trainable level logits `c_1 … c_d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamWeights {
    c: Tensor,
}

impl HamWeights {
    /// Zero logits, i.e. uniform level weights `1/d`.
    pub fn uniform(depth: usize) -> Result<Self> {
        if depth == 0 {
            return domain("ham depth must be at least 1");
        }
        Ok(Self {
            c: Tensor::zeros(&[depth]),
        })
    }

    pub fn from_logits(c: Tensor) -> Result<Self> {
        if c.rank() != 1 {
            return domain(format!("level logits must be a vector, got {:?}", c.shape()));
        }
        Ok(Self { c })
    }

    /// Logits with `hot` (0-based level index) set to `magnitude`, others zero.
    pub fn one_hot(depth: usize, hot: usize, magnitude: f64) -> Result<Self> {
        if hot >= depth {
            return domain(format!("level {hot} out of range for depth {depth}"));
        }
        let mut c = Self::uniform(depth)?;
        c.c.data_mut()[hot] = magnitude;
        Ok(c)
    }

    pub fn depth(&self) -> usize {
        self.c.numel()
    }

    pub fn logits(&self) -> &Tensor {
        &self.c
    }

    pub fn logits_mut(&mut self) -> &mut Tensor {
        &mut self.c
    }

    /// `α = softmax(c)`.
    pub fn level_weights(&self) -> Tensor {
        self.c.softmax_vec().expect("logits are a vector")
    }
}

fn weighted_sum(levels: &[Tensor], alpha: &Tensor) -> Result<Tensor> {
    let mut acc = Tensor::zeros(levels[0].shape());
    for (level, &a) in levels.iter().zip(alpha.data()) {
        acc = acc.add(&level.scale(a))?;
    }
    Ok(acc)
}

/// Ham-V: `Σ_t α_t q_t` with `q_t = Attention(q_{t-1}, K, K)`, `q_0 = q`.
pub fn ham_v(q: &Query, keys: &KeySequence, w: &HamWeights) -> Result<Tensor> {
    let levels = attention_levels(q, keys, w.depth())?;
    weighted_sum(&levels, &w.level_weights())
}

/// Outputs `X_1 … X_depth` of iterated self-attention.
pub fn self_attention_levels(x: &Tensor, depth: usize) -> Result<Vec<Tensor>> {
    if depth == 0 {
        return domain("attention depth must be at least 1");
    }
    let mut levels = Vec::with_capacity(depth);
    let mut current = x.clone();
    for _ in 0..depth {
        current = self_attention_layer(&current)?;
        levels.push(current.clone());
    }
    Ok(levels)
}

/// Ham-S: `Σ_t α_t X_t` with `X_t = SelfAttention(X_{t-1})`, `X_0 = X`.
pub fn ham_s(x: &Tensor, w: &HamWeights) -> Result<Tensor> {
    let levels = self_attention_levels(x, w.depth())?;
    weighted_sum(&levels, &w.level_weights())
}

/// Softmax-weighted sum of equally shaped level outputs on a tape.
fn combine_levels_var<'t>(levels: &[Var<'t>], c: Var<'t>) -> Result<Var<'t>> {
    let shape = levels[0].shape();
    let numel: usize = shape.iter().product();
    let stacked = c.tape().stack(levels, 0)?.reshape(&[levels.len(), numel])?;
    c.softmax().vecmat(stacked)?.reshape(&shape)
}

/// Batched Ham-V on a tape. `queries` is `[B×dk]`, `keys` is `[B×n×dk]`,
/// `c` holds the `d` level logits.
pub fn ham_v_var<'t>(queries: Var<'t>, keys: Var<'t>, c: Var<'t>) -> Result<Var<'t>> {
    let depth = c.shape()[0];
    let mut levels = Vec::with_capacity(depth);
    let mut current = queries;
    for _ in 0..depth {
        current = vanilla_attention_var(current, keys)?;
        levels.push(current);
    }
    combine_levels_var(&levels, c)
}

/// Ham-S on a tape for a single `n × dk` sequence.
pub fn ham_s_var<'t>(x: Var<'t>, c: Var<'t>) -> Result<Var<'t>> {
    let depth = c.shape()[0];
    let mut levels = Vec::with_capacity(depth);
    let mut current = x;
    for _ in 0..depth {
        current = self_attention_var(current)?;
        levels.push(current);
    }
    combine_levels_var(&levels, c)
}

/// Sampling ranges for [`norm_bound_suite`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormBoundConfig {
    pub trials: usize,
    pub dk: (usize, usize),
    pub n: (usize, usize),
    /// entries are drawn from `[-entry_bound, entry_bound]`
    pub entry_bound: f64,
    pub max_depth: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for NormBoundConfig {
    fn default() -> Self {
        Self {
            trials: 10_000,
            dk: (2, 16),
            n: (1, 32),
            entry_bound: 3.0,
            max_depth: 10,
            tolerance: 1e-9,
            seed: 0,
        }
    }
}

/// A query/key instance, serialized for replay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub query: Vec<f64>,
    /// key vectors, one per entry
    pub keys: Vec<Vec<f64>>,
}

impl Instance {
    pub fn build(&self) -> Result<(Query, KeySequence)> {
        let cols: Vec<Tensor> = self.keys.iter().map(|k| Tensor::vector(k.clone())).collect();
        Ok((
            Query::new(Tensor::vector(self.query.clone()))?,
            KeySequence::from_columns(&cols)?,
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundViolation {
    pub trial: usize,
    /// 0 for the Ham-V combination, `t` for attention level `t`
    pub level: usize,
    pub output_norm: f64,
    pub bound: f64,
    pub instance: Instance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormBoundReport {
    pub trials: usize,
    pub checks: usize,
    pub upper_violations: Vec<BoundViolation>,
    /// trials whose first-level output fell below `min ‖k_i‖`
    pub lower_violations: usize,
    pub counterexample: BoundViolation,
    /// every all-equal-keys trial met both bounds with equality (to tolerance)
    pub equal_keys_tight: bool,
}

impl NormBoundReport {
    pub fn upper_bound_holds(&self) -> bool {
        self.upper_violations.is_empty()
    }
}

/// The fixed instance `K = [(1,0), (-1,0)]`, `q = (0,1)`: both scores are
/// zero, the weights are uniform and the keys cancel.
pub fn lower_bound_counterexample() -> Result<BoundViolation> {
    let instance = Instance {
        query: vec![0.0, 1.0],
        keys: vec![vec![1.0, 0.0], vec![-1.0, 0.0]],
    };
    let (q, keys) = instance.build()?;
    let out = vanilla_attention(&q, &keys)?;
    Ok(BoundViolation {
        trial: 0,
        level: 1,
        output_norm: out.l2_norm(),
        bound: keys.min_key_norm(),
        instance,
    })
}

/// Randomized check of `min ‖k_i‖ ≤ ‖Attention(q, K, K)‖ ≤ max ‖k_i‖`.
///
/// The upper half is asserted at every level up to `max_depth` and for a
/// Ham-V combination with random logits. The lower half is only counted:
/// it fails whenever keys cancel.
pub fn norm_bound_suite(cfg: &NormBoundConfig) -> Result<NormBoundReport> {
    if cfg.trials == 0 || cfg.max_depth == 0 {
        return domain("norm-bound suite needs at least one trial and depth 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = NormBoundReport {
        trials: cfg.trials,
        checks: 0,
        upper_violations: Vec::new(),
        lower_violations: 0,
        counterexample: lower_bound_counterexample()?,
        equal_keys_tight: true,
    };
    let b = cfg.entry_bound;
    for trial in 0..cfg.trials {
        let dk = rng.gen_range(cfg.dk.0..=cfg.dk.1);
        let n = rng.gen_range(cfg.n.0..=cfg.n.1);
        // every 100th trial uses identical keys, where both bounds are equalities
        let equal_keys = trial % 100 == 99;
        let query: Vec<f64> = (0..dk).map(|_| rng.gen_range(-b..=b)).collect();
        let keys: Vec<Vec<f64>> = if equal_keys {
            let k: Vec<f64> = (0..dk).map(|_| rng.gen_range(-b..=b)).collect();
            vec![k; n]
        } else {
            (0..n)
                .map(|_| (0..dk).map(|_| rng.gen_range(-b..=b)).collect())
                .collect()
        };
        let instance = Instance { query, keys };
        let (q, ks) = instance.build()?;
        let upper = ks.max_key_norm();
        let lower = ks.min_key_norm();

        let levels = attention_levels(&q, &ks, cfg.max_depth)?;
        let logits = Tensor::vector((0..cfg.max_depth).map(|_| rng.gen_range(-b..=b)).collect());
        let combined = weighted_sum(&levels, &logits.softmax_vec()?)?;

        let outputs = std::iter::once((0, &combined)).chain(levels.iter().enumerate().map(|(i, l)| (i + 1, l)));
        for (level, out) in outputs {
            report.checks += 1;
            let norm = out.l2_norm();
            if norm > upper + cfg.tolerance {
                report.upper_violations.push(BoundViolation {
                    trial,
                    level,
                    output_norm: norm,
                    bound: upper,
                    instance: instance.clone(),
                });
            }
            if equal_keys && ((norm - upper).abs() > cfg.tolerance || (norm - lower).abs() > cfg.tolerance) {
                report.equal_keys_tight = false;
            }
        }
        if levels[0].l2_norm() < lower - cfg.tolerance {
            report.lower_violations += 1;
        }
    }
    Ok(report)
}
