//! Order-preserving parallel map over scoped threads.

/// Applies `f` to every item using up to `workers` threads. Results keep
/// the input order, so output is independent of the worker count.
pub fn par_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = workers.max(1).min(items.len().max(1));
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| {
                let f = &f;
                scope.spawn(move || part.iter().map(f).collect::<Vec<R>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let items: Vec<u64> = (0..103).collect();
        let one = par_map(&items, 1, |x| x * x);
        let many = par_map(&items, 4, |x| x * x);
        assert_eq!(one, many);
        assert!(par_map(&Vec::<u64>::new(), 3, |x| *x).is_empty());
    }
}
