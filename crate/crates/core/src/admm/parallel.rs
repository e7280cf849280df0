//! Per-agent dispatch: a rayon pool when the `rayon` feature is on and more
//! than one thread is requested, a plain loop otherwise. Results always come
//! back in agent order, so the reduction downstream is order-independent of
//! scheduling.

use crate::error::Result;

pub(crate) struct Dispatcher {
    #[cfg(feature = "rayon")]
    pool: Option<rayon::ThreadPool>,
}

impl Dispatcher {
    /// `threads == 0` selects the rayon default; `threads == 1` the sequential path.
    pub(crate) fn new(threads: usize) -> Result<Self> {
        #[cfg(feature = "rayon")]
        {
            let pool = if threads == 1 {
                None
            } else {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| crate::error::Error::InvalidParameter(format!("thread pool: {e}")))?;
                Some(pool)
            };
            Ok(Dispatcher { pool })
        }
        #[cfg(not(feature = "rayon"))]
        {
            let _ = threads;
            Ok(Dispatcher {})
        }
    }

    pub(crate) fn map<W, T, F>(&self, items: &mut [W], f: F) -> Vec<T>
    where
        W: Send,
        T: Send,
        F: Fn(usize, &mut W) -> T + Sync,
    {
        #[cfg(feature = "rayon")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| {
                items
                    .par_iter_mut()
                    .enumerate()
                    .map(|(i, w)| f(i, w))
                    .collect()
            });
        }
        items.iter_mut().enumerate().map(|(i, w)| f(i, w)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_in_index_order() {
        for threads in [0, 1, 3] {
            let d = Dispatcher::new(threads).unwrap();
            let mut items: Vec<usize> = (0..50).collect();
            let out = d.map(&mut items, |i, w| {
                *w += 1;
                i * 10
            });
            assert_eq!(out, (0..50).map(|i| i * 10).collect::<Vec<_>>());
            assert_eq!(items[49], 50);
        }
    }
}
