//! Replication loops with a reduction order that does not depend on the
//! number of worker threads.

use rayon::prelude::*;

/// Replications handled by one task; partial results are merged in chunk order.
pub(crate) const CHUNK: usize = 1024;

/// Folds `body(acc, i)` over `0..n` in fixed chunks and returns the per-chunk
/// accumulators in index order.
pub(crate) fn chunked<A, M, F>(n: usize, make: M, body: F) -> Vec<A>
where
    A: Send,
    M: Fn() -> A + Sync,
    F: Fn(&mut A, usize) + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = make();
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                body(&mut acc, i);
            }
            acc
        })
        .collect()
}

/// Running sum and sum of squares.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Moments {
    pub n: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    pub fn merge(parts: &[Moments]) -> Moments {
        parts.iter().fold(Moments::default(), |mut a, p| {
            a.n += p.n;
            a.sum += p.sum;
            a.sum_sq += p.sum_sq;
            a
        })
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let var = ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_order_is_stable_across_pools() {
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let parts = chunked(10_000, Moments::default, |m, i| m.push((i as f64).sqrt().sin()));
                Moments::merge(&parts).sum
            })
        };
        assert_eq!(run(1).to_bits(), run(7).to_bits());
    }

    #[test]
    fn moments() {
        let mut m = Moments::default();
        for v in [1.0, 2.0, 3.0, 4.0] {
            m.push(v);
        }
        assert_eq!(m.mean(), 2.5);
        assert!((m.stderr() - (5.0f64 / 12.0).sqrt()).abs() < 1e-12);
    }
}
