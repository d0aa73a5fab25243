//! Order-preserving data-parallel helpers.
//!
//! Every helper maps items independently and collects results in input
//! order, so reductions done afterwards run over a fixed sequence and
//! the output is bitwise identical with or without the `parallel`
//! feature. The `_seq` variants are always compiled; benches use them
//! to compare against the rayon path.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Sequential map, always available.
pub fn map_seq<T, U>(items: &[T], f: impl Fn(&T) -> U) -> Vec<U> {
    items.iter().map(f).collect()
}

/// Sequential indexed map, always available.
pub fn map_indexed_seq<T, U>(items: &[T], f: impl Fn(usize, &T) -> U) -> Vec<U> {
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Map over a range of indices, sequentially.
pub fn map_range_seq<U>(n: usize, f: impl Fn(usize) -> U) -> Vec<U> {
    (0..n).map(f).collect()
}

/// Map over items, in parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub fn map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Send + Sync) -> Vec<U> {
    items.par_iter().map(f).collect()
}

/// Map over items, in parallel when the `parallel` feature is on.
#[cfg(not(feature = "parallel"))]
pub fn map<T, U>(items: &[T], f: impl Fn(&T) -> U) -> Vec<U> {
    map_seq(items, f)
}

/// Indexed map over items, parallel when the feature is on.
#[cfg(feature = "parallel")]
pub fn map_indexed<T: Sync, U: Send>(
    items: &[T],
    f: impl Fn(usize, &T) -> U + Send + Sync,
) -> Vec<U> {
    items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Indexed map over items, parallel when the feature is on.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, U>(items: &[T], f: impl Fn(usize, &T) -> U) -> Vec<U> {
    map_indexed_seq(items, f)
}

/// Map over a range of indices, parallel when the feature is on.
#[cfg(feature = "parallel")]
pub fn map_range<U: Send>(n: usize, f: impl Fn(usize) -> U + Send + Sync) -> Vec<U> {
    (0..n).into_par_iter().map(f).collect()
}

/// Map over a range of indices, parallel when the feature is on.
#[cfg(not(feature = "parallel"))]
pub fn map_range<U>(n: usize, f: impl Fn(usize) -> U) -> Vec<U> {
    map_range_seq(n, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_matches_sequential_bitwise() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin() * 1e3).collect();
        let f = |x: &f64| x.exp().ln_1p() * x.cos();
        let a = map(&xs, f);
        let b = map_seq(&xs, f);
        assert_eq!(a.len(), b.len());
        for (u, v) in a.iter().zip(&b) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn indexed_map_preserves_order() {
        let xs: Vec<u64> = (0..517).collect();
        let got = map_indexed(&xs, |i, x| i as u64 * 1000 + x);
        for (i, v) in got.iter().enumerate() {
            assert_eq!(*v, i as u64 * 1000 + i as u64);
        }
    }

    #[test]
    fn range_map_matches_sequential() {
        let a = map_range(311, |i| (i * i) as f64 / 7.0);
        let b = map_range_seq(311, |i| (i * i) as f64 / 7.0);
        assert_eq!(a, b);
    }
}
