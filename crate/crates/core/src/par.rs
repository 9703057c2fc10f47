//! Replica fan-out over the current rayon pool.
//!
//! Replica `i` always draws from `stream.child(i)` and results come back in
//! index order, so anything computed from them is independent of the number
//! of workers.

use rayon::prelude::*;

use crate::rng::RandomStream;

pub fn replicate<T, F>(stream: &RandomStream, count: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut RandomStream) -> T + Sync + Send,
{
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.child(i);
            f(i, &mut rng)
        })
        .collect()
}

/// Fallible variant; the first error in index order wins.
pub fn try_replicate<T, E, F>(stream: &RandomStream, count: u64, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(u64, &mut RandomStream) -> Result<T, E> + Sync + Send,
{
    replicate(stream, count, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn results_do_not_depend_on_pool_size() {
        let stream = RandomStream::new(11, 0);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| replicate(&stream, 500, |_, r| r.next_u64()))
        };
        assert_eq!(run(1), run(4));
    }
}
