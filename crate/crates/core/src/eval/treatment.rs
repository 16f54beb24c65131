use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::par_map;

use super::{position_of, rank_by_scores, Recommender};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreatmentConfig {
    /// Consumers sampled from each sensitivity group per repetition.
    pub group_size: usize,
    /// Candidate products per consumer.
    pub candidates: usize,
    pub repetitions: usize,
    /// Relative price changes; `-0.1` is a 10% discount.
    pub deltas: Vec<f64>,
    /// Rank within the whole assortment instead of the candidate set.
    pub full_assortment: bool,
}

impl Default for TreatmentConfig {
    fn default() -> Self {
        TreatmentConfig {
            group_size: 50,
            candidates: 30,
            repetitions: 30,
            deltas: vec![-0.1, 0.1],
            full_assortment: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityGroup {
    Low,
    High,
}

impl SensitivityGroup {
    pub fn label(self) -> &'static str {
        match self {
            SensitivityGroup::Low => "low",
            SensitivityGroup::High => "high",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TreatmentRow {
    pub repetition: usize,
    pub treatment: f64,
    pub group: SensitivityGroup,
    pub ate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TreatmentSummary {
    pub treatment: f64,
    pub group: SensitivityGroup,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TreatmentReport {
    pub rows: Vec<TreatmentRow>,
    pub summary: Vec<TreatmentSummary>,
}

impl TreatmentReport {
    pub fn mean_ate(&self, treatment: f64, group: SensitivityGroup) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.treatment == treatment && s.group == group)
            .map(|s| s.mean)
    }

    /// `repetition,treatment,group,ate` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("repetition,treatment,group,ate\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.repetition, r.treatment, r.group.label(), r.ate));
        }
        out
    }
}

/// Splits consumers at the median sensitivity magnitude: the lower half is
/// the low group, the rest the high group. Ties go by consumer index.
pub fn sensitivity_groups(consumers: &[usize], sensitivity: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut sorted = consumers.to_vec();
    sorted.sort_by(|&a, &b| sensitivity[a].abs().total_cmp(&sensitivity[b].abs()).then(a.cmp(&b)));
    let high = sorted.split_off(sorted.len() / 2);
    (sorted, high)
}

/// Rank change of every candidate when its own price alone is multiplied
/// by `1 + delta`, averaged over the candidates.
pub fn mean_rank_change<R: Recommender + ?Sized>(
    ranker: &R,
    consumer: usize,
    history: &[usize],
    treated: &[usize],
    pool: &[usize],
    prices: &[f64],
    delta: f64,
) -> Result<f64> {
    let base = ranker.scores(consumer, history, pool, None)?;
    let before = rank_by_scores(pool, &base);
    let mut total = 0.0;
    for &i in treated {
        let at = pool.iter().position(|&p| p == i).ok_or_else(|| {
            Error::Config(format!("treated product #{i} is not in the ranking pool"))
        })?;
        let new_price = prices[i] * (1.0 + delta);
        let moved = ranker.scores(consumer, history, &[i], Some(&[new_price]))?[0];
        let mut scores = base.clone();
        scores[at] = moved;
        let after = rank_by_scores(pool, &scores);
        let rank_before = position_of(&before, i).expect("in pool") as f64;
        let rank_after = position_of(&after, i).expect("in pool") as f64;
        total += rank_after - rank_before;
    }
    Ok(total / treated.len() as f64)
}

/// Controlled price experiment. Consumers with a non-empty history are
/// split into low and high sensitivity halves; each repetition samples
/// `group_size` from each half and `candidates` products per consumer, and
/// records the mean rank change of the treated products per group.
pub fn treatment_experiment<R: Recommender + Sync>(
    ranker: &R,
    histories: &[Vec<usize>],
    sensitivity: &[f64],
    prices: &[f64],
    config: &TreatmentConfig,
    rng: &mut impl Rng,
    workers: usize,
) -> Result<TreatmentReport> {
    let num_products = prices.len();
    if config.candidates < 2 || config.candidates > num_products {
        return Err(Error::Config(format!(
            "treatment needs 2..={num_products} candidates, got {}",
            config.candidates
        )));
    }
    if config.repetitions == 0 || config.group_size == 0 {
        return Err(Error::Config("treatment repetitions and group size must be positive".into()));
    }
    let eligible: Vec<usize> = (0..histories.len()).filter(|&u| !histories[u].is_empty()).collect();
    let (low, high) = sensitivity_groups(&eligible, sensitivity);
    if low.len() < config.group_size || high.len() < config.group_size {
        return Err(Error::InsufficientData(format!(
            "need {} consumers per sensitivity group, have {} and {}",
            config.group_size,
            low.len(),
            high.len()
        )));
    }
    let all: Vec<usize> = (0..num_products).collect();
    let mut rows = Vec::new();
    for repetition in 0..config.repetitions {
        let mut draws = Vec::with_capacity(2 * config.group_size);
        for (group, members) in [(SensitivityGroup::Low, &low), (SensitivityGroup::High, &high)] {
            for m in sample(rng, members.len(), config.group_size) {
                let mut candidates = sample(rng, num_products, config.candidates).into_vec();
                candidates.sort_unstable();
                draws.push((group, members[m], candidates));
            }
        }
        for &delta in &config.deltas {
            let effects: Vec<f64> = par_map(&draws, workers, |(_, u, candidates)| {
                let pool = if config.full_assortment { &all } else { candidates };
                mean_rank_change(ranker, *u, &histories[*u], candidates, pool, prices, delta)
            })
            .into_iter()
            .collect::<Result<_>>()?;
            for group in [SensitivityGroup::Low, SensitivityGroup::High] {
                let mut sum = 0.0;
                for ((g, _, _), e) in draws.iter().zip(&effects) {
                    if *g == group {
                        sum += e;
                    }
                }
                rows.push(TreatmentRow {
                    repetition,
                    treatment: delta,
                    group,
                    ate: sum / config.group_size as f64,
                });
            }
        }
    }
    let mut summary = Vec::new();
    for &delta in &config.deltas {
        for group in [SensitivityGroup::Low, SensitivityGroup::High] {
            let values: Vec<f64> = rows
                .iter()
                .filter(|r| r.treatment == delta && r.group == group)
                .map(|r| r.ate)
                .collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            summary.push(TreatmentSummary {
                treatment: delta,
                group,
                mean,
                std: var.sqrt(),
            });
        }
    }
    Ok(TreatmentReport { rows, summary })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Utility `base[i] - slope·price`.
    struct Linear {
        base: Vec<f64>,
        prices: Vec<f64>,
        slope: Vec<f64>,
    }

    impl Recommender for Linear {
        fn scores(&self, u: usize, _: &[usize], c: &[usize], p: Option<&[f64]>) -> Result<Vec<f64>> {
            Ok(c.iter()
                .enumerate()
                .map(|(n, &i)| {
                    let price = p.map_or(self.prices[i], |p| p[n]);
                    self.base[i] - self.slope[u] * price
                })
                .collect())
        }
    }

    #[test]
    fn crossing_pair_moves_one_rank() {
        let r = Linear {
            base: vec![2.0, 1.95],
            prices: vec![1.0, 1.0],
            slope: vec![1.0],
        };
        let up = mean_rank_change(&r, 0, &[0], &[0], &[0, 1], &r.prices, 0.1).unwrap();
        assert_eq!(up, 1.0);
        let down = mean_rank_change(&r, 0, &[0], &[1], &[0, 1], &r.prices, -0.1).unwrap();
        assert_eq!(down, -1.0);
    }

    #[test]
    fn zero_delta_and_price_blind_models_give_zero() {
        let n = 40;
        let r = Linear {
            base: (0..n).map(|i| (i as f64 * 0.37).sin()).collect(),
            prices: (0..n).map(|i| 1.0 + i as f64 / 10.0).collect(),
            slope: (0..6).map(|u| u as f64 / 5.0).collect(),
        };
        let histories = vec![vec![0]; 6];
        let sens: Vec<f64> = (0..6).map(|u| u as f64).collect();
        let config = TreatmentConfig {
            group_size: 3,
            candidates: 10,
            repetitions: 4,
            deltas: vec![0.0],
            full_assortment: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rep = treatment_experiment(&r, &histories, &sens, &r.prices, &config, &mut rng, 2).unwrap();
        assert!(rep.rows.iter().all(|row| row.ate == 0.0));
        let blind = Linear { slope: vec![0.0; 6], ..r };
        let config = TreatmentConfig { deltas: vec![-0.1, 0.1], ..config };
        let rep = treatment_experiment(&blind, &histories, &sens, &blind.prices, &config, &mut rng, 2).unwrap();
        assert!(rep.rows.iter().all(|row| row.ate == 0.0));
        assert_eq!(rep.rows.len(), 4 * 2 * 2);
    }

    #[test]
    fn groups_split_at_median() {
        let (low, high) = sensitivity_groups(&[0, 1, 2, 3, 4], &[-5.0, -1.0, -3.0, -2.0, -4.0]);
        assert_eq!(low, vec![1, 3]);
        assert_eq!(high, vec![2, 4, 0]);
    }

    #[test]
    fn too_few_consumers() {
        let r = Linear {
            base: vec![0.0; 5],
            prices: vec![1.0; 5],
            slope: vec![1.0; 2],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let config = TreatmentConfig {
            candidates: 3,
            ..TreatmentConfig::default()
        };
        let out = treatment_experiment(&r, &[vec![0], vec![1]], &[1.0, 2.0], &r.prices, &config, &mut rng, 1);
        assert!(matches!(out, Err(Error::InsufficientData(_))));
    }
}
