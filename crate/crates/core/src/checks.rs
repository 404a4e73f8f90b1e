//! Randomized verification suites behind `ham verify` and `ham gradcheck`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{
    attention_distribution, attention_levels, multi_head, sdp_attention, self_attention_layer, self_attention_var,
    vanilla_attention, vanilla_attention_var, KeySequence, MultiHeadParams, Query,
};
use crate::autodiff::{grad_check_all, Tape, Var};
use crate::error::{domain, Result};
use crate::ham::{
    ham_s, ham_s_var, ham_v, ham_v_var, norm_bound_suite, self_attention_levels, HamWeights, Instance, NormBoundConfig,
    NormBoundReport,
};
use crate::model::{gru_step_var, GruParams, GruVars, ModelConfig, Seq2SeqModel, RESERVED};
use crate::tensor::Tensor;

/// Logit used for the one-hot reduction checks.
pub const REDUCTION_LOGIT: f64 = 20.0;
pub const REDUCTION_TOL: f64 = 1e-7;
pub const EXACT_TOL: f64 = 1e-12;
pub const PRIMITIVE_TOL: f64 = 1e-5;
pub const END_TO_END_TOL: f64 = 1e-4;
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub instances: usize,
    /// largest observed error (or violation count for counting checks)
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// first failing instance, for replay
    pub failure: Option<serde_json::Value>,
}

impl CheckResult {
    fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            instances: 0,
            max_error: 0.0,
            tolerance,
            passed: true,
            failure: None,
        }
    }

    fn record(&mut self, err: f64, instance: impl FnOnce() -> serde_json::Value) {
        self.instances += 1;
        if err > self.max_error || err.is_nan() {
            self.max_error = err;
        }
        if (err.is_nan() || err >= self.tolerance) && self.passed {
            self.passed = false;
            self.failure = Some(instance());
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub norm_bound: NormBoundSummary,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

/// Condensed norm-bound results; upper-bound violations are kept in full.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormBoundSummary {
    pub trials: usize,
    pub checks: usize,
    pub upper_violations: usize,
    pub first_upper_violation: Option<crate::ham::BoundViolation>,
    pub lower_violations: usize,
    pub lower_bound_counterexample: crate::ham::BoundViolation,
    pub equal_keys_tight: bool,
}

impl From<NormBoundReport> for NormBoundSummary {
    fn from(r: NormBoundReport) -> Self {
        Self {
            trials: r.trials,
            checks: r.checks,
            upper_violations: r.upper_violations.len(),
            first_upper_violation: r.upper_violations.into_iter().next(),
            lower_violations: r.lower_violations,
            lower_bound_counterexample: r.counterexample,
            equal_keys_tight: r.equal_keys_tight,
        }
    }
}

fn random_instance(rng: &mut ChaCha8Rng, dk: usize, n: usize, bound: f64) -> Instance {
    Instance {
        query: (0..dk).map(|_| rng.gen_range(-bound..=bound)).collect(),
        keys: (0..n)
            .map(|_| (0..dk).map(|_| rng.gen_range(-bound..=bound)).collect())
            .collect(),
    }
}

fn json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("serializable")
}

#[derive(Serialize)]
struct SequenceInstance<'a> {
    x: &'a [f64],
    shape: &'a [usize],
    logits: &'a [f64],
}

/// Ham-V / Ham-S reduce to a single level for one-hot logits, and to plain
/// attention at depth 1.
pub fn reduction_checks(instances: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v_hot = CheckResult::new("ham_v one-hot reduction", REDUCTION_TOL);
    let mut s_hot = CheckResult::new("ham_s one-hot reduction", REDUCTION_TOL);
    let mut v_one = CheckResult::new("ham_v depth-1 reduction", EXACT_TOL);
    let mut s_one = CheckResult::new("ham_s depth-1 reduction", EXACT_TOL);
    for _ in 0..instances {
        let dk = rng.gen_range(2..=16);
        let n = rng.gen_range(1..=32);
        let depth = rng.gen_range(2..=10);
        let inst = random_instance(&mut rng, dk, n, 3.0);
        let (q, keys) = inst.build()?;

        let levels = attention_levels(&q, &keys, depth)?;
        let x = keys.matrix().transpose()?;
        let s_levels = self_attention_levels(&x, depth)?;
        for t in 0..depth {
            let w = HamWeights::one_hot(depth, t, REDUCTION_LOGIT)?;
            let err = ham_v(&q, &keys, &w)?.max_abs_diff(&levels[t])?;
            v_hot.record(err, || json(&(&inst, w.logits().data())));
            let err = ham_s(&x, &w)?.max_abs_diff(&s_levels[t])?;
            s_hot.record(err, || {
                json(&SequenceInstance {
                    x: x.data(),
                    shape: x.shape(),
                    logits: w.logits().data(),
                })
            });
        }

        let c1 = HamWeights::from_logits(Tensor::vector(vec![rng.gen_range(-3.0..3.0)]))?;
        let err = ham_v(&q, &keys, &c1)?.max_abs_diff(&vanilla_attention(&q, &keys)?)?;
        v_one.record(err, || json(&inst));
        let err = ham_s(&x, &c1)?.max_abs_diff(&self_attention_layer(&x)?)?;
        s_one.record(err, || json(&inst));
    }
    Ok(vec![v_hot, s_hot, v_one, s_one])
}

/// Probability-vector, permutation and degenerate-case identities of the
/// baseline mechanisms.
pub fn attention_checks(instances: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prob = CheckResult::new("attention distribution is a probability vector", EXACT_TOL);
    let mut perm = CheckResult::new("permutation equivariance of vanilla attention", EXACT_TOL);
    let mut sdp_vs_vanilla = CheckResult::new("sdp_attention m=1 equals vanilla_attention", EXACT_TOL);
    let mut mh_identity = CheckResult::new("multi_head h=1 identity equals sdp_attention", EXACT_TOL);
    let mut self_perm = CheckResult::new("self attention permutation equivariance", EXACT_TOL);
    for _ in 0..instances {
        let dk = rng.gen_range(2..=16);
        let n = rng.gen_range(1..=32);
        let inst = random_instance(&mut rng, dk, n, 3.0);
        let (q, keys) = inst.build()?;

        let p = attention_distribution(&keys, &q)?;
        let min = p.data().iter().copied().fold(f64::INFINITY, f64::min);
        let err = if min > 0.0 {
            (p.sum() - 1.0).abs()
        } else {
            f64::INFINITY
        };
        prob.record(err, || json(&inst));

        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let pk = keys.permuted(&order)?;
        let pp = attention_distribution(&pk, &q)?;
        let moved = Tensor::vector(order.iter().map(|&i| p.data()[i]).collect());
        let out_err = vanilla_attention(&q, &pk)?.max_abs_diff(&vanilla_attention(&q, &keys)?)?;
        perm.record(pp.max_abs_diff(&moved)?.max(out_err), || json(&(&inst, &order)));

        let x = keys.matrix().transpose()?;
        let sdp = sdp_attention(&q.0.reshape(&[1, dk])?, &x, &x)?.reshape(&[dk])?;
        sdp_vs_vanilla.record(sdp.max_abs_diff(&vanilla_attention(&q, &keys)?)?, || json(&inst));

        let m = rng.gen_range(1..=8);
        let qm = Tensor::uniform(&mut rng, &[m, dk], -3.0, 3.0);
        let v = Tensor::uniform(&mut rng, &[n, dk], -3.0, 3.0);
        let id = Tensor::identity(dk);
        let params = MultiHeadParams::new(vec![(id.clone(), id.clone(), id.clone())], id)?;
        let err = multi_head(&qm, &x, &v, &params)?.max_abs_diff(&sdp_attention(&qm, &x, &v)?)?;
        mh_identity.record(err, || json(&(qm.data(), x.data(), v.data())));

        let rows: Vec<Tensor> = order.iter().map(|&i| x.row(i)).collect::<Result<_>>()?;
        let px = Tensor::from_rows(&rows)?;
        let base = self_attention_layer(&x)?;
        let moved_rows: Vec<Tensor> = order.iter().map(|&i| base.row(i)).collect::<Result<_>>()?;
        let err = self_attention_layer(&px)?.max_abs_diff(&Tensor::from_rows(&moved_rows)?)?;
        self_perm.record(err, || json(&(x.data(), &order)));
    }
    Ok(vec![prob, perm, sdp_vs_vanilla, mh_identity, self_perm])
}

/// Everything `ham verify` runs.
pub fn verify_suite(trials: usize, seed: u64) -> Result<VerifyReport> {
    if trials == 0 {
        return domain("verify needs at least one trial");
    }
    let norm = norm_bound_suite(&NormBoundConfig {
        trials,
        seed,
        ..Default::default()
    })?;
    let side = (trials / 10).max(1);
    let mut checks = reduction_checks(side, seed.wrapping_add(1))?;
    checks.extend(attention_checks(side, seed.wrapping_add(2))?);
    let norm = NormBoundSummary::from(norm);
    let passed = norm.upper_violations == 0 && norm.equal_keys_tight && checks.iter().all(|c| c.passed);
    Ok(VerifyReport {
        seed,
        norm_bound: norm,
        checks,
        passed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Tiny,
    Small,
}

impl Scale {
    fn max_dim(self) -> usize {
        match self {
            Scale::Tiny => 4,
            Scale::Small => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckRow {
    pub op: String,
    pub instances: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// (instance, input index, flat coordinate) of the worst error
    pub worst: (usize, usize, usize),
}

type Builder = Box<dyn Fn(&mut ChaCha8Rng, usize) -> Case>;

type ScalarFn = Box<dyn for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>>;

/// One random instance: inputs plus a scalar function of them.
pub struct Case {
    inputs: Vec<Tensor>,
    f: ScalarFn,
}

fn u(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::uniform(rng, shape, -2.0, 2.0)
}

/// Reduces any output to a scalar through fixed random weights.
fn weighted<'t>(tape: &'t Tape, out: Var<'t>, w: &Tensor) -> Result<Var<'t>> {
    out.mul(tape.leaf(w.clone())).map(Var::sum)
}

fn dims(rng: &mut ChaCha8Rng, max: usize) -> usize {
    rng.gen_range(1..=max)
}

fn unary_case(rng: &mut ChaCha8Rng, max: usize, op: fn(Var<'_>) -> Result<Var<'_>>, rank2: bool) -> Case {
    let shape = if rank2 {
        vec![dims(rng, max), dims(rng, max)]
    } else {
        vec![dims(rng, max)]
    };
    let x = u(rng, &shape);
    let out_shape = {
        let t = Tape::new();
        op(t.leaf(x.clone())).expect("valid op").shape()
    };
    let w = u(rng, &out_shape);
    Case {
        inputs: vec![x],
        f: Box::new(move |t, v| weighted(t, op(v[0])?, &w)),
    }
}

fn binary_same_shape(rng: &mut ChaCha8Rng, max: usize, op: for<'t> fn(Var<'t>, Var<'t>) -> Result<Var<'t>>) -> Case {
    let shape = [dims(rng, max), dims(rng, max)];
    let (a, b, w) = (u(rng, &shape), u(rng, &shape), u(rng, &shape));
    Case {
        inputs: vec![a, b],
        f: Box::new(move |t, v| weighted(t, op(v[0], v[1])?, &w)),
    }
}

fn primitive_builders() -> Vec<(&'static str, Builder)> {
    vec![
        (
            "matmul",
            Box::new(|rng, max| {
                let (m, k, n) = (dims(rng, max), dims(rng, max), dims(rng, max));
                let (a, b, w) = (u(rng, &[m, k]), u(rng, &[k, n]), u(rng, &[m, n]));
                Case {
                    inputs: vec![a, b],
                    f: Box::new(move |t, v| weighted(t, v[0].matmul(v[1])?, &w)),
                }
            }),
        ),
        (
            "bmm",
            Box::new(|rng, max| {
                let (b, m, k, n) = (dims(rng, 3), dims(rng, max), dims(rng, max), dims(rng, max));
                let (x, y, w) = (u(rng, &[b, m, k]), u(rng, &[b, k, n]), u(rng, &[b, m, n]));
                Case {
                    inputs: vec![x, y],
                    f: Box::new(move |t, v| weighted(t, v[0].bmm(v[1])?, &w)),
                }
            }),
        ),
        (
            "matvec",
            Box::new(|rng, max| {
                let (m, k) = (dims(rng, max), dims(rng, max));
                let (a, x, w) = (u(rng, &[m, k]), u(rng, &[k]), u(rng, &[m]));
                Case {
                    inputs: vec![a, x],
                    f: Box::new(move |t, v| weighted(t, v[0].matvec(v[1])?, &w)),
                }
            }),
        ),
        (
            "vecmat",
            Box::new(|rng, max| {
                let (m, k) = (dims(rng, max), dims(rng, max));
                let (x, a, w) = (u(rng, &[m]), u(rng, &[m, k]), u(rng, &[k]));
                Case {
                    inputs: vec![x, a],
                    f: Box::new(move |t, v| weighted(t, v[0].vecmat(v[1])?, &w)),
                }
            }),
        ),
        (
            "softmax",
            Box::new(|rng, max| unary_case(rng, max, |v| Ok(v.softmax()), true)),
        ),
        (
            "tanh",
            Box::new(|rng, max| unary_case(rng, max, |v| Ok(v.tanh()), true)),
        ),
        (
            "sigmoid",
            Box::new(|rng, max| unary_case(rng, max, |v| Ok(v.sigmoid()), true)),
        ),
        (
            "scale",
            Box::new(|rng, max| unary_case(rng, max, |v| Ok(v.scale(-1.7)), true)),
        ),
        (
            "add_scalar",
            Box::new(|rng, max| unary_case(rng, max, |v| Ok(v.add_scalar(0.3)), false)),
        ),
        (
            "transpose",
            Box::new(|rng, max| unary_case(rng, max, |v| v.transpose(), true)),
        ),
        ("sum", Box::new(|rng, max| unary_case(rng, max, |v| Ok(v.sum()), true))),
        ("add", Box::new(|rng, max| binary_same_shape(rng, max, |a, b| a.add(b)))),
        ("sub", Box::new(|rng, max| binary_same_shape(rng, max, |a, b| a.sub(b)))),
        ("mul", Box::new(|rng, max| binary_same_shape(rng, max, |a, b| a.mul(b)))),
        (
            "add_row",
            Box::new(|rng, max| {
                let (r, c) = (dims(rng, max), dims(rng, max));
                let (m, b, w) = (u(rng, &[r, c]), u(rng, &[c]), u(rng, &[r, c]));
                Case {
                    inputs: vec![m, b],
                    f: Box::new(move |t, v| weighted(t, v[0].add_row(v[1])?, &w)),
                }
            }),
        ),
        (
            "dot",
            Box::new(|rng, max| {
                let n = dims(rng, max);
                Case {
                    inputs: vec![u(rng, &[n]), u(rng, &[n])],
                    f: Box::new(|_, v| v[0].dot(v[1])),
                }
            }),
        ),
        (
            "concat",
            Box::new(|rng, max| {
                let r = dims(rng, max);
                let (c1, c2) = (dims(rng, max), dims(rng, max));
                let (a, b, w) = (u(rng, &[r, c1]), u(rng, &[r, c2]), u(rng, &[r, c1 + c2]));
                Case {
                    inputs: vec![a, b],
                    f: Box::new(move |t, v| weighted(t, t.concat(&[v[0], v[1]])?, &w)),
                }
            }),
        ),
        (
            "stack",
            Box::new(|rng, max| {
                let (r, c) = (dims(rng, max), dims(rng, max));
                let axis = rng.gen_range(0..=2);
                let (a, b) = (u(rng, &[r, c]), u(rng, &[r, c]));
                let mut shape = vec![r, c];
                shape.insert(axis, 2);
                let w = u(rng, &shape);
                Case {
                    inputs: vec![a, b],
                    f: Box::new(move |t, v| weighted(t, t.stack(&[v[0], v[1]], axis)?, &w)),
                }
            }),
        ),
        (
            "gather_rows",
            Box::new(|rng, max| {
                let (r, c) = (dims(rng, max) + 1, dims(rng, max));
                let ids: Vec<usize> = (0..dims(rng, max) + 1).map(|_| rng.gen_range(0..r)).collect();
                let (table, w) = (u(rng, &[r, c]), u(rng, &[ids.len(), c]));
                Case {
                    inputs: vec![table],
                    f: Box::new(move |t, v| weighted(t, v[0].gather_rows(&ids)?, &w)),
                }
            }),
        ),
        (
            "cross_entropy",
            Box::new(|rng, max| {
                let (b, c) = (dims(rng, max), dims(rng, max) + 1);
                let targets: Vec<usize> = (0..b).map(|_| rng.gen_range(0..c)).collect();
                Case {
                    inputs: vec![u(rng, &[b, c])],
                    f: Box::new(move |_, v| v[0].cross_entropy(&targets)),
                }
            }),
        ),
        (
            "vanilla_attention",
            Box::new(|rng, max| {
                let (b, n, dk) = (dims(rng, 3), dims(rng, max), dims(rng, max));
                let (q, k, w) = (u(rng, &[b, dk]), u(rng, &[b, n, dk]), u(rng, &[b, dk]));
                Case {
                    inputs: vec![q, k],
                    f: Box::new(move |t, v| weighted(t, vanilla_attention_var(v[0], v[1])?, &w)),
                }
            }),
        ),
        (
            "self_attention",
            Box::new(|rng, max| {
                let (n, dk) = (dims(rng, max), dims(rng, max));
                let (x, w) = (u(rng, &[n, dk]), u(rng, &[n, dk]));
                Case {
                    inputs: vec![x],
                    f: Box::new(move |t, v| weighted(t, self_attention_var(v[0])?, &w)),
                }
            }),
        ),
        (
            "ham_v",
            Box::new(|rng, max| {
                let (b, n, dk, d) = (dims(rng, 2), dims(rng, max), dims(rng, max), dims(rng, 5));
                let (q, k, c, w) = (u(rng, &[b, dk]), u(rng, &[b, n, dk]), u(rng, &[d]), u(rng, &[b, dk]));
                Case {
                    inputs: vec![q, k, c],
                    f: Box::new(move |t, v| weighted(t, ham_v_var(v[0], v[1], v[2])?, &w)),
                }
            }),
        ),
        (
            "ham_s",
            Box::new(|rng, max| {
                let (n, dk, d) = (dims(rng, max), dims(rng, max), dims(rng, 5));
                let (x, c, w) = (u(rng, &[n, dk]), u(rng, &[d]), u(rng, &[n, dk]));
                Case {
                    inputs: vec![x, c],
                    f: Box::new(move |t, v| weighted(t, ham_s_var(v[0], v[1])?, &w)),
                }
            }),
        ),
        (
            "ham_v_composite",
            Box::new(|rng, max| {
                let (n, dk, d) = (dims(rng, max), dims(rng, max), dims(rng, 5));
                let (q, k, c) = (u(rng, &[1, dk]), u(rng, &[1, n, dk]), u(rng, &[d]));
                Case {
                    inputs: vec![q, k, c],
                    f: Box::new(|_, v| {
                        let out = ham_v_var(v[0], v[1], v[2])?.reshape(&[v[0].shape()[1]])?;
                        // squared norm plus one keeps the square root smooth
                        let sq = out.dot(out)?.add_scalar(1.0);
                        sq.tanh().add_scalar(1.0).scale(0.5).mul(sq)
                    }),
                }
            }),
        ),
        (
            "gru_step_x3",
            Box::new(|rng, max| {
                let (b, input, hidden) = (dims(rng, 2), dims(rng, max), dims(rng, max));
                let p = GruParams::random(rng, input, hidden);
                let mut inputs: Vec<Tensor> = p.tensors().iter().map(|t| u(rng, t.shape())).collect();
                for _ in 0..3 {
                    inputs.push(u(rng, &[b, input]));
                }
                inputs.push(u(rng, &[b, hidden]));
                let w = u(rng, &[b, hidden]);
                Case {
                    inputs,
                    f: Box::new(move |t, v| {
                        let g = GruVars::from_slice(&v[..9]);
                        let mut h = v[12];
                        for x in &v[9..12] {
                            h = gru_step_var(*x, h, &g)?;
                        }
                        weighted(t, h, &w)
                    }),
                }
            }),
        ),
    ]
}

/// Builds a tiny seq2seq model with parameters in `[-1, 1]` and a two-pair
/// batch; the loss is the mean teacher-forced cross-entropy.
fn seq2seq_case(rng: &mut ChaCha8Rng, max: usize) -> Case {
    let hidden = rng.gen_range(2..=max.min(4));
    let vocab = RESERVED + rng.gen_range(2..=4);
    let depth = rng.gen_range(1..=3);
    let cfg = ModelConfig::new(vocab, hidden, depth);
    let mut model = Seq2SeqModel::init(cfg.clone(), rng).expect("valid config");
    for p in model.params_mut() {
        *p = Tensor::uniform(rng, p.shape(), -1.0, 1.0);
    }
    let src_len = rng.gen_range(1..=3);
    let tgt_len = rng.gen_range(1..=3);
    let mut seq = |len: usize| -> Vec<usize> { (0..len).map(|_| rng.gen_range(RESERVED..vocab)).collect() };
    let pairs: Vec<(Vec<usize>, Vec<usize>)> = (0..2).map(|_| (seq(src_len), seq(tgt_len))).collect();
    let inputs = model.named_params().into_iter().map(|(_, t)| t.clone()).collect();
    Case {
        inputs,
        f: Box::new(move |_, v| {
            let mv = crate::model::ModelVars::from_leaves(&cfg, v.to_vec());
            let batch: Vec<(&[usize], &[usize])> = pairs.iter().map(|(s, t)| (s.as_slice(), t.as_slice())).collect();
            mv.batch_loss(&batch)
        }),
    }
}

fn run_rows(
    op: &str,
    tol: f64,
    instances: usize,
    rng: &mut ChaCha8Rng,
    build: impl Fn(&mut ChaCha8Rng) -> Case,
) -> Result<GradCheckRow> {
    let mut row = GradCheckRow {
        op: op.to_string(),
        instances,
        max_rel_error: 0.0,
        tolerance: tol,
        passed: true,
        worst: (0, 0, 0),
    };
    for i in 0..instances {
        let case = build(rng);
        let r = grad_check_all(&case.f, &case.inputs, FD_STEP)?;
        if r.max_rel_error > row.max_rel_error || r.max_rel_error.is_nan() {
            row.max_rel_error = r.max_rel_error;
            row.worst = (i, r.worst.0, r.worst.1);
        }
    }
    row.passed = row.max_rel_error < tol;
    Ok(row)
}

/// Central-difference checks of every differentiable primitive and of the
/// full seq2seq loss, `instances` random cases each.
pub fn gradcheck_suite(scale: Scale, seed: u64, instances: usize) -> Result<Vec<GradCheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max = scale.max_dim();
    let mut rows = Vec::new();
    for (name, build) in primitive_builders() {
        rows.push(run_rows(name, PRIMITIVE_TOL, instances, &mut rng, |r| build(r, max))?);
    }
    rows.push(run_rows(
        "seq2seq_end_to_end",
        END_TO_END_TOL,
        instances,
        &mut rng,
        |r| seq2seq_case(r, max),
    )?);
    Ok(rows)
}

/// Replays a serialized query/key instance through vanilla attention.
pub fn replay_instance(inst: &Instance) -> Result<(Tensor, f64)> {
    let (q, keys): (Query, KeySequence) = inst.build()?;
    let out = vanilla_attention(&q, &keys)?;
    let bound = keys.max_key_norm();
    Ok((out, bound))
}
