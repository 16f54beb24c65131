use std::collections::BTreeSet;

/// Leave-last-one-out split of per-consumer purchase sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    /// Training purchases per consumer, time order.
    pub train: Vec<Vec<usize>>,
    /// Last-but-one purchase, for consumers with at least three.
    pub validation: Vec<Option<usize>>,
    /// Last purchase, for consumers with at least two.
    pub test: Vec<Option<usize>>,
}

/// The last purchase of each consumer goes to test, the one before it to
/// validation, the rest to training. Consumers with two purchases get no
/// validation item; consumers with fewer are left out entirely.
pub fn leave_last_one_out(sequences: &[Vec<usize>]) -> Split {
    let mut split = Split {
        train: Vec::with_capacity(sequences.len()),
        validation: Vec::with_capacity(sequences.len()),
        test: Vec::with_capacity(sequences.len()),
    };
    for seq in sequences {
        let (train, validation, test) = match seq.len() {
            0 | 1 => (Vec::new(), None, None),
            2 => (vec![seq[0]], None, Some(seq[1])),
            n => (seq[..n - 2].to_vec(), Some(seq[n - 2]), Some(seq[n - 1])),
        };
        split.train.push(train);
        split.validation.push(validation);
        split.test.push(test);
    }
    split
}

impl Split {
    /// Training purchases followed by the validation item: the history a
    /// test query sees.
    pub fn test_history(&self, consumer: usize) -> Vec<usize> {
        let mut h = self.train[consumer].clone();
        h.extend(self.validation[consumer]);
        h
    }

    /// Every product the consumer has not bought before the test period,
    /// plus the held-out test item itself.
    pub fn test_candidates(&self, consumer: usize, num_products: usize) -> Vec<usize> {
        candidates_excluding(&self.test_history(consumer), self.test[consumer], num_products)
    }

    pub fn validation_candidates(&self, consumer: usize, num_products: usize) -> Vec<usize> {
        candidates_excluding(&self.train[consumer], self.validation[consumer], num_products)
    }
}

/// All products outside `history`, with `keep` added back if given.
pub fn candidates_excluding(history: &[usize], keep: Option<usize>, num_products: usize) -> Vec<usize> {
    let seen: BTreeSet<usize> = history.iter().copied().collect();
    (0..num_products)
        .filter(|i| !seen.contains(i) || Some(*i) == keep)
        .collect()
}
