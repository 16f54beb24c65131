use crate::error::Result;
use crate::graphs::distinct_recent;
use crate::model::Scorer;

/// Anything that can score candidate products for a consumer given their
/// purchase history.
pub trait Recommender {
    /// Scores `candidates` for `consumer` with `history` as the purchase
    /// record (time order). `target_prices` optionally overrides each
    /// candidate's own price.
    fn scores(
        &self,
        consumer: usize,
        history: &[usize],
        candidates: &[usize],
        target_prices: Option<&[f64]>,
    ) -> Result<Vec<f64>>;
}

/// Distinct products of `history`, most recent last, capped at `cap`.
pub fn reference_set(history: &[usize], cap: usize) -> Vec<usize> {
    let mut refs = distinct_recent(history);
    if refs.len() > cap {
        refs.drain(..refs.len() - cap);
    }
    refs
}

/// [`Recommender`] over a trained ArcRec scorer.
#[derive(Clone, Debug)]
pub struct ArcRecRanker {
    pub scorer: Scorer,
    pub reference_cap: usize,
}

impl Recommender for ArcRecRanker {
    fn scores(
        &self,
        _consumer: usize,
        history: &[usize],
        candidates: &[usize],
        target_prices: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        let refs = reference_set(history, self.reference_cap);
        let weights = self.scorer.attribute_weights(&refs)?;
        self.scorer.score(&weights, &refs, candidates, target_prices)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cap_keeps_most_recent() {
        assert_eq!(reference_set(&[1, 2, 3, 2, 4], 2), vec![2, 4]);
        assert_eq!(reference_set(&[1, 1], 5), vec![1]);
    }
}
