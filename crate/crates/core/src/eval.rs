//! Sentence BLEU-2, the averaged continuation BLEU for four-line
//! generations, and exact-sequence match.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Scores written by `eval`. `bleu_1..3` are only present for four-line
/// groupings; `bleu_avg` is their mean in that case and the mean sentence
/// BLEU-2 otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bleu_1: Option<f64>,
    pub bleu_2: Option<f64>,
    pub bleu_3: Option<f64>,
    pub bleu_avg: f64,
    pub exact_match: f64,
    pub n: usize,
}

fn ngram_counts<T: Eq + Hash>(seq: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    for w in seq.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// (clipped matches, candidate n-gram count)
fn modified_precision<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let matches = cand
        .iter()
        .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum();
    (matches, candidate.len().saturating_sub(n - 1))
}

/// Sentence-level BLEU-2: `BP · sqrt(p1 · p2)`.
///
/// The bigram precision gets add-one smoothing when it has no matches; the
/// unigram precision is never smoothed, so a candidate with no overlapping
/// tokens scores 0. An empty candidate scores 0.
pub fn bleu2<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> f64 {
    if candidate.is_empty() {
        return 0.0;
    }
    let (m1, c1) = modified_precision(candidate, reference, 1);
    if m1 == 0 {
        return 0.0;
    }
    let p1 = m1 as f64 / c1 as f64;
    let (m2, c2) = modified_precision(candidate, reference, 2);
    let p2 = if m2 == 0 {
        1.0 / (c2 as f64 + 1.0)
    } else {
        m2 as f64 / c2 as f64
    };
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    bp * (p1 * p2).sqrt()
}

/// BLEU-2 of lines 2, 3 and 4 of a four-line generation against the gold
/// lines. Line `i + 1` is expected to have been generated given gold lines
/// `1..=i`; that conditioning belongs to the generation harness.
pub fn continuation_bleu<T: Eq + Hash>(generated: &[Vec<T>], gold: &[Vec<T>]) -> Result<[f64; 3]> {
    if generated.len() != 4 || gold.len() != 4 {
        return domain(format!(
            "averaged BLEU needs exactly 4 lines each, got {} and {}",
            generated.len(),
            gold.len()
        ));
    }
    Ok([1, 2, 3].map(|i| bleu2(&generated[i], &gold[i])))
}

/// `(BLEU_1 + BLEU_2 + BLEU_3) / 3` over the three continuation lines.
pub fn averaged_bleu<T: Eq + Hash>(generated: &[Vec<T>], gold: &[Vec<T>]) -> Result<f64> {
    let parts = continuation_bleu(generated, gold)?;
    Ok(parts.iter().sum::<f64>() / 3.0)
}

/// Fraction of pairs whose sequences are identical. Zero for an empty list.
pub fn exact_match_rate<T: PartialEq>(pairs: &[(Vec<T>, Vec<T>)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let hits = pairs.iter().filter(|(g, t)| g == t).count();
    hits as f64 / pairs.len() as f64
}

/// Scores generated sequences against gold sequences. With `quatrains`,
/// consecutive groups of four lines are scored with [`averaged_bleu`] and
/// the per-position BLEU values are averaged over groups.
pub fn evaluate(generated: &[Vec<usize>], gold: &[Vec<usize>], quatrains: bool) -> Result<EvalReport> {
    if generated.len() != gold.len() {
        return domain(format!(
            "{} generated lines for {} gold lines",
            generated.len(),
            gold.len()
        ));
    }
    let n = gold.len();
    let pairs: Vec<(Vec<usize>, Vec<usize>)> = generated.iter().cloned().zip(gold.iter().cloned()).collect();
    let exact_match = exact_match_rate(&pairs);
    if !quatrains {
        let bleu_avg = if n == 0 {
            0.0
        } else {
            generated.iter().zip(gold).map(|(g, r)| bleu2(g, r)).sum::<f64>() / n as f64
        };
        return Ok(EvalReport {
            bleu_1: None,
            bleu_2: None,
            bleu_3: None,
            bleu_avg,
            exact_match,
            n,
        });
    }
    if n == 0 || !n.is_multiple_of(4) {
        return domain(format!("{n} lines do not split into four-line groups"));
    }
    let groups = n / 4;
    let mut sums = [0.0; 3];
    for (g, r) in generated.chunks(4).zip(gold.chunks(4)) {
        let parts = continuation_bleu(g, r)?;
        for (s, p) in sums.iter_mut().zip(parts) {
            *s += p;
        }
    }
    let [b1, b2, b3] = sums.map(|s| s / groups as f64);
    Ok(EvalReport {
        bleu_1: Some(b1),
        bleu_2: Some(b2),
        bleu_3: Some(b3),
        bleu_avg: (b1 + b2 + b3) / 3.0,
        exact_match,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn bleu2_examples() {
        assert_eq!(bleu2(&toks("a b c d"), &toks("a b c d")), 1.0);
        assert_eq!(bleu2(&toks("a b c"), &toks("x y z")), 0.0);
        assert!((bleu2(&toks("a b c d"), &toks("a b x d")) - 0.5).abs() < 1e-15);
        assert_eq!(bleu2::<&str>(&[], &toks("a")), 0.0);
    }

    #[test]
    fn brevity_penalty_applies_to_short_candidates() {
        let score = bleu2(&toks("a b"), &toks("a b c d"));
        assert!((score - (1.0f64 - 2.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn averaged_bleu_examples() {
        let gold: Vec<Vec<u32>> = vec![vec![1, 2], vec![3, 4], vec![5, 6], vec![7, 8]];
        assert_eq!(averaged_bleu(&gold, &gold).unwrap(), 1.0);
        let wrong: Vec<Vec<u32>> = vec![vec![1, 2], vec![9], vec![9], vec![9]];
        assert_eq!(averaged_bleu(&wrong, &gold).unwrap(), 0.0);
        // continuation scores 1.0, 0.5 and 0.0
        let gold: Vec<Vec<&str>> = vec![toks("z"), toks("p q"), toks("a b x d"), toks("m n")];
        let gen: Vec<Vec<&str>> = vec![toks("z"), toks("p q"), toks("a b c d"), toks("u v")];
        assert_eq!(continuation_bleu(&gen, &gold).unwrap(), [1.0, 0.5, 0.0]);
        assert!((averaged_bleu(&gen, &gold).unwrap() - 0.5).abs() < 1e-15);
        assert!(averaged_bleu(&gen[..3], &gold[..3]).is_err());
    }

    #[test]
    fn exact_match_examples() {
        let same = vec![(vec![1], vec![1]); 4];
        assert_eq!(exact_match_rate(&same), 1.0);
        let none = vec![(vec![1], vec![2]); 4];
        assert_eq!(exact_match_rate(&none), 0.0);
        let mut three = same.clone();
        three[2] = (vec![3, 4], vec![3]);
        assert_eq!(exact_match_rate(&three), 0.75);
    }

    #[test]
    fn evaluate_quatrain_grouping() {
        let gold: Vec<Vec<usize>> = (0..8).map(|i| vec![i + 3, i + 4]).collect();
        let r = evaluate(&gold, &gold, true).unwrap();
        assert_eq!((r.bleu_avg, r.exact_match, r.n), (1.0, 1.0, 8));
        assert_eq!(r.bleu_2, Some(1.0));
        assert!(evaluate(&gold[..6], &gold[..6], true).is_err());
        let r = evaluate(&gold[..6], &gold[..6], false).unwrap();
        assert_eq!(r.bleu_1, None);
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(
            json,
            "{\"bleu_1\":null,\"bleu_2\":null,\"bleu_3\":null,\"bleu_avg\":1.0,\"exact_match\":1.0,\"n\":6}"
        );
    }

    proptest! {
        #[test]
        fn bleu2_is_invariant_under_relabeling(
            cand in prop::collection::vec(0u8..6, 1..12),
            reference in prop::collection::vec(0u8..6, 1..12),
            shift in 1u8..6,
        ) {
            let relabel = |s: &[u8]| s.iter().map(|t| (t + shift) % 6).collect::<Vec<_>>();
            let a = bleu2(&cand, &reference);
            let b = bleu2(&relabel(&cand), &relabel(&reference));
            prop_assert_eq!(a, b);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
