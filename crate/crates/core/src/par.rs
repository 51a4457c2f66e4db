//! Order-preserving batch map. With the `parallel` feature it runs on the
//! rayon pool; without it, or through [`map_sequential`], in a plain loop.

pub const PARALLEL: bool = cfg!(feature = "parallel");

pub fn map_sequential<T, R>(items: &[T], f: impl Fn(&T) -> R) -> Vec<R> {
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    map_sequential(items, f)
}

/// [`map`] limited to `threads` workers; `None` uses the default pool.
#[cfg(feature = "parallel")]
pub fn map_with_threads<T: Sync, R: Send>(
    items: &[T],
    threads: Option<usize>,
    f: impl Fn(&T) -> R + Sync + Send,
) -> Vec<R> {
    match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(|| map(items, f)),
            Err(_) => map(items, f),
        },
        None => map(items, f),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_with_threads<T: Sync, R: Send>(
    items: &[T],
    _threads: Option<usize>,
    f: impl Fn(&T) -> R + Sync + Send,
) -> Vec<R> {
    map_sequential(items, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let items: Vec<u64> = (0..1000).collect();
        let want: Vec<u64> = items.iter().map(|x| x * x).collect();
        assert_eq!(map(&items, |x| x * x), want);
        assert_eq!(map_sequential(&items, |x| x * x), want);
        assert_eq!(map_with_threads(&items, Some(2), |x| x * x), want);
    }
}
