//! Prediction-quality metrics shared by training and the CLI.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("empty input")]
    Empty,
    #[error("labels and scores have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("AUC needs both classes present")]
    SingleClass,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub auc: f64,
    pub acc: f64,
    pub n: usize,
    pub threshold: f64,
}

/// Probability that a random positive outranks a random negative, with ties
/// counted as 0.5 (the Mann-Whitney formulation), computed in O(n log n)
/// via average ranks.
pub fn auc(labels: &[bool], scores: &[f64]) -> Result<f64, MetricsError> {
    if labels.len() != scores.len() {
        return Err(MetricsError::LengthMismatch(labels.len(), scores.len()));
    }
    if labels.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));

    // Average ranks over tie groups (1-based ranks).
    let mut rank = vec![0.0f64; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            rank[idx] = avg;
        }
        i = j + 1;
    }

    let rank_sum_pos: f64 =
        labels.iter().zip(&rank).filter(|(l, _)| **l).map(|(_, r)| *r).sum();
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Fraction of predictions on the correct side of `threshold`; a score
/// exactly at the threshold counts as positive.
pub fn acc(labels: &[bool], scores: &[f64], threshold: f64) -> Result<f64, MetricsError> {
    if labels.len() != scores.len() {
        return Err(MetricsError::LengthMismatch(labels.len(), scores.len()));
    }
    if labels.is_empty() {
        return Err(MetricsError::Empty);
    }
    let hits = labels
        .iter()
        .zip(scores)
        .filter(|(l, s)| (**s >= threshold) == **l)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

pub fn evaluate(labels: &[bool], scores: &[f64], threshold: f64) -> Result<EvalResult, MetricsError> {
    Ok(EvalResult {
        auc: auc(labels, scores)?,
        acc: acc(labels, scores, threshold)?,
        n: labels.len(),
        threshold,
    })
}

/// Quadratic reference: average pairwise win rate with 0.5 tie credit.
/// Kept public so acceptance checks can pit it against the fast path.
pub fn auc_pairwise_oracle(labels: &[bool], scores: &[f64]) -> Result<f64, MetricsError> {
    if labels.len() != scores.len() {
        return Err(MetricsError::LengthMismatch(labels.len(), scores.len()));
    }
    let pos: Vec<f64> =
        labels.iter().zip(scores).filter(|(l, _)| **l).map(|(_, s)| *s).collect();
    let neg: Vec<f64> =
        labels.iter().zip(scores).filter(|(l, _)| !**l).map(|(_, s)| *s).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(MetricsError::SingleClass);
    }
    let mut total = 0.0;
    for p in &pos {
        for n in &neg {
            total += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    Ok(total / (pos.len() * neg.len()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfectly_separated_scores_hit_one() {
        let labels = [true, true, false, false];
        let scores = [0.9, 0.8, 0.2, 0.1];
        assert_eq!(auc(&labels, &scores).unwrap(), 1.0);
    }

    #[test]
    fn worked_example_with_tie() {
        // Pairs: (0.8 vs 0.8) = 0.5, (0.8 vs 0.1) = 1, (0.3 vs 0.8) = 0,
        // (0.3 vs 0.1) = 1  =>  2.5 / 4 = 0.625.
        let labels = [true, false, true, false];
        let scores = [0.8, 0.8, 0.3, 0.1];
        assert_eq!(auc(&labels, &scores).unwrap(), 0.625);
    }

    #[test]
    fn single_class_is_an_error() {
        assert_eq!(auc(&[true, true], &[0.1, 0.2]), Err(MetricsError::SingleClass));
    }

    #[test]
    fn random_scores_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20_000;
        let labels: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
        let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let a = auc(&labels, &scores).unwrap();
        // 3 sigma of the U statistic at n/2 per class is ~0.0122.
        assert!((a - 0.5).abs() < 0.0123, "auc {a}");
    }

    #[test]
    fn acc_counts_threshold_as_positive() {
        let labels = [true, false];
        let scores = [0.5, 0.5];
        assert_eq!(acc(&labels, &scores, 0.5).unwrap(), 0.5);
    }

    #[test]
    fn acc_manual_count_of_six() {
        let labels = [true, true, false, false, true, false];
        let scores = [0.9, 0.4, 0.3, 0.7, 0.6, 0.2];
        // Correct: 0.9->T, 0.4->F(miss), 0.3->F ok, 0.7->T(miss), 0.6->T ok, 0.2 ok.
        assert_eq!(acc(&labels, &scores, 0.5).unwrap(), 4.0 / 6.0);
    }

    #[test]
    fn fast_auc_equals_pairwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(4..60);
            let labels: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
            if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
                continue;
            }
            // Coarse grid to force ties.
            let scores: Vec<f64> =
                (0..n).map(|_| (rng.random_range(0..8) as f64) / 8.0).collect();
            let fast = auc(&labels, &scores).unwrap();
            let slow = auc_pairwise_oracle(&labels, &scores).unwrap();
            assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
        }
    }

    #[test]
    fn auc_invariant_under_monotone_transform_and_flip() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let n = rng.random_range(4..40);
            let labels: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
            if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
                continue;
            }
            let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp()).collect();
            let a = auc(&labels, &scores).unwrap();
            assert!((a - auc(&labels, &transformed).unwrap()).abs() < 1e-12);

            let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
            assert!((a + auc(&flipped, &scores).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
