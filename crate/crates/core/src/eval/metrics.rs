use std::collections::HashMap;

use crate::error::{Error, Result};

/// Candidates ordered by descending score; equal scores keep ascending
/// product index.
pub fn rank_by_scores(candidates: &[usize], scores: &[f64]) -> Vec<usize> {
    debug_assert_eq!(candidates.len(), scores.len());
    let mut order: Vec<(usize, f64)> = candidates.iter().copied().zip(scores.iter().copied()).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    order.into_iter().map(|(i, _)| i).collect()
}

/// 1-based rank of `item` in a ranked list.
pub fn position_of(ranked: &[usize], item: usize) -> Option<usize> {
    ranked.iter().position(|&i| i == item).map(|p| p + 1)
}

/// 1 if the item is ranked within the top `k`.
pub fn hit_at(position: usize, k: usize) -> f64 {
    if position <= k {
        1.0
    } else {
        0.0
    }
}

/// `1/log₂(p+1)` for a hit at position `p ≤ k`, else 0.
pub fn ndcg_at(position: usize, k: usize) -> f64 {
    if position <= k {
        1.0 / ((position + 1) as f64).log2()
    } else {
        0.0
    }
}

fn positions(lists: &[Vec<usize>], held_out: &[usize]) -> Result<Vec<usize>> {
    if lists.len() != held_out.len() {
        return Err(Error::SizeMismatch {
            left: lists.len(),
            right: held_out.len(),
        });
    }
    lists
        .iter()
        .zip(held_out)
        .enumerate()
        .map(|(u, (list, &item))| {
            position_of(list, item).ok_or_else(|| Error::HeldOutNotCandidate {
                consumer: format!("#{u}"),
                item: format!("#{item}"),
            })
        })
        .collect()
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    values.sum::<f64>() / n as f64
}

/// Fraction of consumers whose held-out item is in their top `k`.
pub fn hit_ratio(lists: &[Vec<usize>], held_out: &[usize], k: usize) -> Result<f64> {
    let p = positions(lists, held_out)?;
    Ok(mean(p.iter().map(|&p| hit_at(p, k))))
}

/// Mean nDCG@k with a single relevant item per consumer.
pub fn ndcg(lists: &[Vec<usize>], held_out: &[usize], k: usize) -> Result<f64> {
    let p = positions(lists, held_out)?;
    Ok(mean(p.iter().map(|&p| ndcg_at(p, k))))
}

/// Rank of each item of `truth` (0-based) and the same ranks read in the
/// order of `predicted`.
fn aligned_ranks(truth: &[usize], predicted: &[usize]) -> Result<Vec<usize>> {
    if truth.len() != predicted.len() {
        return Err(Error::SizeMismatch {
            left: truth.len(),
            right: predicted.len(),
        });
    }
    if truth.len() < 2 {
        return Err(Error::InsufficientData(
            "rank correlation needs at least two items".into(),
        ));
    }
    let rank: HashMap<usize, usize> = truth.iter().enumerate().map(|(r, &i)| (i, r)).collect();
    if rank.len() != truth.len() {
        return Err(Error::ItemMismatch);
    }
    let mut seen = vec![false; truth.len()];
    predicted
        .iter()
        .map(|i| {
            let r = *rank.get(i).ok_or(Error::ItemMismatch)?;
            if std::mem::replace(&mut seen[r], true) {
                return Err(Error::ItemMismatch);
            }
            Ok(r)
        })
        .collect()
}

/// Kendall's τ between two rankings of the same items:
/// `4P / (n(n−1)) − 1` with `P` the number of concordant pairs. Discordant
/// pairs are counted as inversions with a merge sort.
pub fn kendall_tau(truth: &[usize], predicted: &[usize]) -> Result<f64> {
    let mut seq = aligned_ranks(truth, predicted)?;
    let n = seq.len() as f64;
    let mut buffer = vec![0; seq.len()];
    let discordant = count_inversions(&mut seq, &mut buffer) as f64;
    let concordant = n * (n - 1.0) / 2.0 - discordant;
    Ok(4.0 * concordant / (n * (n - 1.0)) - 1.0)
}

fn count_inversions(seq: &mut [usize], buffer: &mut [usize]) -> u64 {
    let n = seq.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = {
        let (left, right) = seq.split_at_mut(mid);
        let (bl, br) = buffer.split_at_mut(mid);
        count_inversions(left, bl) + count_inversions(right, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if seq[i] <= seq[j] {
            buffer[k] = seq[i];
            i += 1;
        } else {
            buffer[k] = seq[j];
            count += (mid - i) as u64;
            j += 1;
        }
        k += 1;
    }
    buffer[k..k + mid - i].copy_from_slice(&seq[i..mid]);
    let k = k + mid - i;
    buffer[k..k + n - j].copy_from_slice(&seq[j..n]);
    seq.copy_from_slice(&buffer[..n]);
    count
}

/// Spearman's ρ: `1 − 6 Σ d² / (n³ − n)`.
pub fn spearman_rho(truth: &[usize], predicted: &[usize]) -> Result<f64> {
    let seq = aligned_ranks(truth, predicted)?;
    let n = seq.len() as f64;
    let d2: f64 = seq
        .iter()
        .enumerate()
        .map(|(pos, &r)| (pos as f64 - r as f64).powi(2))
        .sum();
    Ok(1.0 - 6.0 * d2 / (n * n * n - n))
}
