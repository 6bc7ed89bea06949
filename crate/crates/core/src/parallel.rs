//! Scoped-thread map helper (std only). Results come back in input order, so
//! callers that reduce sequentially get identical bits for any worker count.

/// Applies `f` to every item, splitting work across up to `workers` threads.
pub fn parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    if workers <= 1 || items.len() <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let chunk = items.len().div_ceil(workers.min(items.len()));
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .enumerate()
            .map(|(ci, part)| {
                let f = &f;
                scope.spawn(move || {
                    part.iter()
                        .enumerate()
                        .map(|(j, t)| f(ci * chunk + j, t))
                        .collect::<Vec<R>>()
                })
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
    fn preserves_input_order() {
        let items: Vec<usize> = (0..23).collect();
        let doubled = parallel_map(&items, 4, |i, &x| {
            assert_eq!(i, x);
            x * 2
        });
        assert_eq!(doubled, (0..23).map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn single_worker_matches_many() {
        let items: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let one = parallel_map(&items, 1, |_, &x| x * x + 1.0);
        let four = parallel_map(&items, 4, |_, &x| x * x + 1.0);
        assert!(one.iter().zip(&four).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
