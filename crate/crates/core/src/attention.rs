//! Soft attention with the scaled dot-product compatibility function.
//!
//! Two layouts are used. The query-vector form stores keys as the columns
//! of a `dk × n` matrix ([`KeySequence`]); the matrix form
//! ([`sdp_attention`], [`self_attention_layer`]) stores one token per row.
//! Vanilla, multi-level and self attention use the keys as values.
//!
//! The `*_var` functions are the differentiable counterparts used by the
//! model; they record onto an autodiff tape and work on batches.

use crate::autodiff::Var;
use crate::error::{dim_err, domain, Result};
use crate::tensor::Tensor;

/// `n` keys of dimension `dk`, stored as the columns of a `dk × n` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct KeySequence {
    k: Tensor,
}

impl KeySequence {
    pub fn new(k: Tensor) -> Result<Self> {
        if k.rank() != 2 {
            return domain(format!("key matrix must be dk × n, got {:?}", k.shape()));
        }
        Ok(Self { k })
    }

    pub fn from_columns(cols: &[Tensor]) -> Result<Self> {
        if cols.is_empty() {
            return domain("empty key sequence");
        }
        Self::new(Tensor::from_rows(cols)?.transpose()?)
    }

    /// Builds keys from a row-per-token matrix (`n × dk`).
    pub fn from_token_rows(x: &Tensor) -> Result<Self> {
        Self::new(x.transpose()?)
    }

    pub fn dk(&self) -> usize {
        self.k.rows()
    }

    pub fn len(&self) -> usize {
        self.k.cols()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn matrix(&self) -> &Tensor {
        &self.k
    }

    pub fn key(&self, i: usize) -> Tensor {
        self.k.col(i).expect("key index in range")
    }

    pub fn keys(&self) -> impl Iterator<Item = Tensor> + '_ {
        (0..self.len()).map(|i| self.key(i))
    }

    pub fn max_key_norm(&self) -> f64 {
        self.keys().map(|k| k.l2_norm()).fold(0.0, f64::max)
    }

    pub fn min_key_norm(&self) -> f64 {
        self.keys().map(|k| k.l2_norm()).fold(f64::INFINITY, f64::min)
    }

    /// Reorders the keys: column `i` of the result is column `perm[i]` here.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let cols: Vec<Tensor> = perm.iter().map(|&p| self.key(p)).collect();
        Self::from_columns(&cols)
    }
}

/// A query vector of dimension `dk`.
#[derive(Clone, Debug, PartialEq)]
pub struct Query(pub Tensor);

impl Query {
    pub fn new(q: Tensor) -> Result<Self> {
        if q.rank() != 1 {
            return domain(format!("query must be a vector, got {:?}", q.shape()));
        }
        Ok(Self(q))
    }

    fn check(&self, keys: &KeySequence) -> Result<()> {
        if self.0.numel() != keys.dk() {
            return dim_err("attention", self.0.shape(), keys.k.shape());
        }
        Ok(())
    }
}

/// `⟨k, q⟩ / √dk`.
pub fn scaled_dot_score(k: &Tensor, q: &Tensor) -> Result<f64> {
    let dk = k.numel() as f64;
    Ok(k.dot(q)? / dk.sqrt())
}

pub fn attention_distribution(keys: &KeySequence, q: &Query) -> Result<Tensor> {
    q.check(keys)?;
    let scores = keys.k.transpose()?.matvec(&q.0)?;
    scores.scale(1.0 / (keys.dk() as f64).sqrt()).softmax_vec()
}

/// Convex combination of the keys weighted by the attention distribution.
pub fn vanilla_attention(q: &Query, keys: &KeySequence) -> Result<Tensor> {
    let p = attention_distribution(keys, q)?;
    keys.k.matvec(&p)
}

/// `softmax(Q Kᵀ / √dk) V`, row-wise softmax.
pub fn sdp_attention(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<Tensor> {
    if q.rank() != 2 || k.rank() != 2 || q.cols() != k.cols() {
        return dim_err("sdp_attention", q.shape(), k.shape());
    }
    if v.rank() != 2 || v.rows() != k.rows() {
        return dim_err("sdp_attention", k.shape(), v.shape());
    }
    let dk = k.cols() as f64;
    let scores = q.matmul(&k.transpose()?)?.scale(1.0 / dk.sqrt());
    scores.softmax_last().matmul(v)
}

/// Projection matrices for multi-head attention.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiHeadParams {
    /// `(W_Q, W_K, W_V)` per head, each `d_model × dk` (`d_model × dv` for `W_V`).
    pub heads: Vec<(Tensor, Tensor, Tensor)>,
    /// `h·dv × d_model`
    pub w_o: Tensor,
}

impl MultiHeadParams {
    pub fn new(heads: Vec<(Tensor, Tensor, Tensor)>, w_o: Tensor) -> Result<Self> {
        let Some((wq0, wk0, wv0)) = heads.first() else {
            return domain("multi-head attention needs at least one head");
        };
        for (wq, wk, wv) in &heads {
            if wq.shape() != wq0.shape() || wk.shape() != wk0.shape() || wv.shape() != wv0.shape() {
                return dim_err("multi_head", wq0.shape(), wq.shape());
            }
            if wq.cols() != wk.cols() {
                return dim_err("multi_head", wq.shape(), wk.shape());
            }
        }
        if w_o.rank() != 2 || w_o.rows() != heads.len() * wv0.cols() {
            return dim_err("multi_head", wv0.shape(), w_o.shape());
        }
        Ok(Self { heads, w_o })
    }

    pub fn head_count(&self) -> usize {
        self.heads.len()
    }
}

/// `Concat(head_1, …, head_h) W_O` with `head_i = Attention(Q W_Qi, K W_Ki, V W_Vi)`.
pub fn multi_head(q: &Tensor, k: &Tensor, v: &Tensor, p: &MultiHeadParams) -> Result<Tensor> {
    let outputs = p
        .heads
        .iter()
        .map(|(wq, wk, wv)| sdp_attention(&q.matmul(wq)?, &k.matmul(wk)?, &v.matmul(wv)?))
        .collect::<Result<Vec<_>>>()?;
    let rows = outputs[0].rows();
    let mut data = Vec::new();
    for r in 0..rows {
        for o in &outputs {
            data.extend_from_slice(o.row(r)?.data());
        }
    }
    let width = data.len() / rows;
    Tensor::new(vec![rows, width], data)?.matmul(&p.w_o)
}

/// Feeds each attention output back in as the next query; returns the last level.
pub fn multi_level_attention(q: &Query, keys: &KeySequence, depth: usize) -> Result<Tensor> {
    Ok(attention_levels(q, keys, depth)?.pop().expect("depth >= 1"))
}

/// All intermediate outputs `q_1 … q_depth` of iterated vanilla attention.
pub fn attention_levels(q: &Query, keys: &KeySequence, depth: usize) -> Result<Vec<Tensor>> {
    if depth == 0 {
        return domain("attention depth must be at least 1");
    }
    let mut levels = Vec::with_capacity(depth);
    let mut current = q.clone();
    for _ in 0..depth {
        let next = vanilla_attention(&current, keys)?;
        levels.push(next.clone());
        current = Query(next);
    }
    Ok(levels)
}

/// `sdp_attention(X, X, X)` on a row-per-token sequence.
pub fn self_attention_layer(x: &Tensor) -> Result<Tensor> {
    if x.rank() != 2 {
        return domain(format!("self attention expects n × dk, got {:?}", x.shape()));
    }
    sdp_attention(x, x, x)
}

/// Batched vanilla attention on a tape: `queries` is `[B×dk]`, `keys` is
/// `[B×n×dk]` (one key sequence per batch row); returns `[B×dk]`.
pub fn vanilla_attention_var<'t>(queries: Var<'t>, keys: Var<'t>) -> Result<Var<'t>> {
    let ks = keys.shape();
    let qs = queries.shape();
    if ks.len() != 3 || qs.len() != 2 || qs[0] != ks[0] || qs[1] != ks[2] {
        return dim_err("vanilla_attention_var", &qs, &ks);
    }
    let (b, n, dk) = (ks[0], ks[1], ks[2]);
    let scores = keys
        .bmm(queries.reshape(&[b, dk, 1])?)?
        .reshape(&[b, n])?
        .scale(1.0 / (dk as f64).sqrt());
    let p = scores.softmax().reshape(&[b, 1, n])?;
    p.bmm(keys)?.reshape(&[b, dk])
}

/// Differentiable `softmax(Q Kᵀ / √dk) V` for matrices.
pub fn sdp_attention_var<'t>(q: Var<'t>, k: Var<'t>, v: Var<'t>) -> Result<Var<'t>> {
    let dk = *k.shape().last().expect("rank >= 1") as f64;
    let scores = q.matmul(k.transpose()?)?.scale(1.0 / dk.sqrt());
    scores.softmax().matmul(v)
}

pub fn self_attention_var(x: Var<'_>) -> Result<Var<'_>> {
    sdp_attention_var(x, x, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn keys(cols: &[&[f64]]) -> KeySequence {
        KeySequence::from_columns(&cols.iter().map(|c| Tensor::vector(c.to_vec())).collect::<Vec<_>>()).unwrap()
    }

    fn query(v: &[f64]) -> Query {
        Query::new(Tensor::vector(v.to_vec())).unwrap()
    }

    #[test]
    fn score_examples() {
        let e1 = Tensor::vector(vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(scaled_dot_score(&e1, &e1).unwrap(), 0.5);
        let e2 = Tensor::vector(vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(scaled_dot_score(&e1, &e2).unwrap(), 0.0);
        let s = scaled_dot_score(&Tensor::vector(vec![1.0, 1.0]), &Tensor::vector(vec![2.0, 0.0])).unwrap();
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
        assert!(scaled_dot_score(&e1, &Tensor::vector(vec![1.0])).is_err());
    }

    #[test]
    fn distribution_examples() {
        let p = attention_distribution(&keys(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]]), &query(&[0.3, -1.0])).unwrap();
        for v in p.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = attention_distribution(&keys(&[&[4.0, 5.0]]), &query(&[1.0, 1.0])).unwrap();
        assert_eq!(p.data(), &[1.0]);

        // oracle: direct two-way softmax of the scores 10/√2 and 0
        let s = 10.0 / 2f64.sqrt();
        let expected0 = s.exp() / (s.exp() + 1.0);
        let p = attention_distribution(&keys(&[&[1.0, 0.0], &[0.0, 1.0]]), &query(&[10.0, 0.0])).unwrap();
        assert!((p.data()[0] - expected0).abs() < 1e-15);
        assert!((p.data()[0] - 0.99916).abs() < 1e-5);
        assert!((p.data()[1] - 0.00084).abs() < 1e-5);
    }

    #[test]
    fn vanilla_examples() {
        let k = keys(&[&[1.5, -2.0]]);
        assert_eq!(vanilla_attention(&query(&[9.0, 3.0]), &k).unwrap().data(), &[1.5, -2.0]);
        let v = [0.25, -0.5, 2.0];
        let out = vanilla_attention(&query(&[1.0, 2.0, 3.0]), &keys(&[&v, &v, &v, &v])).unwrap();
        assert!(out.max_abs_diff(&Tensor::vector(v.to_vec())).unwrap() < 1e-15);
        let out = vanilla_attention(&query(&[0.0, 1.0]), &keys(&[&[1.0, 0.0], &[-1.0, 0.0]])).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0]);
    }

    #[test]
    fn query_dimension_mismatch() {
        let err = vanilla_attention(&query(&[1.0]), &keys(&[&[1.0, 0.0]]));
        assert!(matches!(err, Err(crate::Error::Dimension { .. })));
        assert!(KeySequence::from_columns(&[]).is_err());
    }

    #[test]
    fn sdp_with_zero_queries_gives_column_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = Tensor::uniform(&mut rng, &[4, 3], -1.0, 1.0);
        let v = Tensor::uniform(&mut rng, &[4, 2], -1.0, 1.0);
        let out = sdp_attention(&Tensor::zeros(&[3, 3]), &k, &v).unwrap();
        for r in 0..3 {
            for c in 0..2 {
                let mean = (0..4).map(|i| v.at(i, c)).sum::<f64>() / 4.0;
                assert!((out.at(r, c) - mean).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn sdp_single_row_is_vanilla() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.gen_range(1..8);
            let dk = rng.gen_range(1..6);
            let x = Tensor::uniform(&mut rng, &[n, dk], -2.0, 2.0);
            let q = Tensor::uniform(&mut rng, &[dk], -2.0, 2.0);
            let sdp = sdp_attention(&q.reshape(&[1, dk]).unwrap(), &x, &x).unwrap();
            let van = vanilla_attention(&Query(q), &KeySequence::from_token_rows(&x).unwrap()).unwrap();
            assert!(sdp.reshape(&[dk]).unwrap().max_abs_diff(&van).unwrap() < 1e-12);
        }
    }

    #[test]
    fn multi_level_examples() {
        let k = keys(&[&[1.0, 0.5], &[-0.3, 2.0], &[0.7, 0.7]]);
        let q = query(&[0.2, -0.4]);
        assert_eq!(
            multi_level_attention(&q, &k, 1).unwrap(),
            vanilla_attention(&q, &k).unwrap()
        );
        let two = vanilla_attention(&Query(vanilla_attention(&q, &k).unwrap()), &k).unwrap();
        assert_eq!(multi_level_attention(&q, &k, 2).unwrap(), two);
        let v = [3.0, -1.0];
        let out = multi_level_attention(&q, &keys(&[&v, &v]), 7).unwrap();
        assert!(out.max_abs_diff(&Tensor::vector(v.to_vec())).unwrap() < 1e-15);
        assert!(multi_level_attention(&q, &k, 0).is_err());
    }

    #[test]
    fn self_attention_examples() {
        let x = Tensor::matrix(&[vec![0.3, -0.7, 1.1]]).unwrap();
        assert_eq!(self_attention_layer(&x).unwrap(), x);
        let row = vec![0.5, 1.5];
        let x = Tensor::matrix(&[row.clone(), row.clone(), row.clone()]).unwrap();
        let out = self_attention_layer(&x).unwrap();
        assert!(out.max_abs_diff(&x).unwrap() < 1e-15);
    }

    #[test]
    fn multi_head_shape_validation() {
        let w = Tensor::identity(2);
        assert!(MultiHeadParams::new(vec![], w.clone()).is_err());
        assert!(MultiHeadParams::new(vec![(w.clone(), w.clone(), w.clone())], Tensor::identity(3)).is_err());
        assert!(MultiHeadParams::new(vec![(w.clone(), w.clone(), w.clone())], w).is_ok());
    }

    #[test]
    fn multi_head_duplicate_heads_concat() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Tensor::uniform(&mut rng, &[3, 4], -1.0, 1.0);
        let w = Tensor::uniform(&mut rng, &[4, 2], -1.0, 1.0);
        let w_o = Tensor::uniform(&mut rng, &[4, 4], -1.0, 1.0);
        let p = MultiHeadParams::new(vec![(w.clone(), w.clone(), w.clone()); 2], w_o.clone()).unwrap();
        let s = sdp_attention(&x.matmul(&w).unwrap(), &x.matmul(&w).unwrap(), &x.matmul(&w).unwrap()).unwrap();
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|r| [s.row(r).unwrap().into_data(), s.row(r).unwrap().into_data()].concat())
            .collect();
        let expected = Tensor::matrix(&rows).unwrap().matmul(&w_o).unwrap();
        assert!(multi_head(&x, &x, &x, &p).unwrap().max_abs_diff(&expected).unwrap() < 1e-15);
    }
}
