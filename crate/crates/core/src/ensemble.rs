//! Deterministic parallel execution over configurations.
//!
//! Configurations are simulated in parallel, but every floating-point
//! reduction happens sequentially in configuration-index order, so results
//! are bit-identical regardless of worker count or completion order.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::observables::ObservableSeries;

/// Upper bound on per-configuration results held in memory at once.
const CHUNK: usize = 64;

/// Run `f` inside a rayon pool of `workers` threads (0 = default pool).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::validation(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Evaluate `f(0..n_configs)` in parallel and feed results to `fold` strictly
/// in index order. Memory use is bounded by `CHUNK` pending results.
pub fn map_reduce_ordered<T, F, G>(n_configs: usize, f: F, mut fold: G) -> Result<()>
where
    T: Send,
    F: Sync + Fn(usize) -> Result<T>,
    G: FnMut(usize, T) -> Result<()>,
{
    let mut start = 0;
    while start < n_configs {
        let end = (start + CHUNK).min(n_configs);
        let chunk: Vec<(usize, Result<T>)> =
            (start..end).into_par_iter().map(|i| (i, f(i))).collect();
        for (i, r) in chunk {
            fold(i, r?)?;
        }
        start = end;
    }
    Ok(())
}

/// Sum per-configuration value arrays in index order and divide once at the
/// end. `merge_series` over the same partials gives bit-identical output.
pub struct SeriesAccumulator {
    sums: Vec<f64>,
    count: usize,
}

impl SeriesAccumulator {
    pub fn new(len: usize) -> Self {
        SeriesAccumulator {
            sums: vec![0.0; len],
            count: 0,
        }
    }

    pub fn add(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.sums.len() {
            return Err(Error::GridMismatch);
        }
        for (s, v) in self.sums.iter_mut().zip(values) {
            *s += v;
        }
        self.count += 1;
        Ok(())
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.count.max(1) as f64;
        self.sums.iter().map(|s| s / n).collect()
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

/// Pointwise arithmetic mean of per-configuration series. Partials are
/// sorted by configuration index before summation; the reduction order is
/// therefore independent of the input permutation.
pub fn merge_series(partials: &[(usize, ObservableSeries)]) -> Result<ObservableSeries> {
    let Some((_, first)) = partials.first() else {
        return Err(Error::validation("cannot merge an empty partial list"));
    };
    let mut order: Vec<&(usize, ObservableSeries)> = partials.iter().collect();
    order.sort_by_key(|(idx, _)| *idx);

    let mut acc = SeriesAccumulator::new(first.values.len());
    for (_, series) in &order {
        if series.times != first.times || series.label != first.label {
            return Err(Error::GridMismatch);
        }
        acc.add(&series.values)?;
    }
    Ok(ObservableSeries {
        times: first.times.clone(),
        values: acc.mean(),
        n_configs: partials.len(),
        label: first.label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observables::SeriesLabel;

    fn series(idx: usize, values: Vec<f64>) -> (usize, ObservableSeries) {
        (
            idx,
            ObservableSeries {
                times: (1..=values.len() as u64).collect(),
                values,
                n_configs: 1,
                label: SeriesLabel::FlipRate,
            },
        )
    }

    #[test]
    fn merge_identical_partials() {
        let parts = vec![series(0, vec![0.5, 0.25]), series(1, vec![0.5, 0.25])];
        let merged = merge_series(&parts).unwrap();
        assert_eq!(merged.values, vec![0.5, 0.25]);
        assert_eq!(merged.n_configs, 2);
    }

    #[test]
    fn merge_zeros_and_ones() {
        let parts = vec![series(0, vec![0.0, 0.0]), series(1, vec![1.0, 1.0])];
        let merged = merge_series(&parts).unwrap();
        assert_eq!(merged.values, vec![0.5, 0.5]);
    }

    #[test]
    fn merge_is_permutation_invariant() {
        let a = series(0, vec![0.1, 0.7, 0.3]);
        let b = series(1, vec![0.9, 0.2, 0.8]);
        let c = series(2, vec![0.4, 0.5, 0.6]);
        let m1 = merge_series(&[a.clone(), b.clone(), c.clone()]).unwrap();
        let m2 = merge_series(&[c, a, b]).unwrap();
        assert_eq!(m1.values, m2.values);
    }

    #[test]
    fn merge_rejects_mismatched_grids() {
        let a = series(0, vec![0.1, 0.2]);
        let b = series(1, vec![0.1, 0.2, 0.3]);
        assert!(matches!(
            merge_series(&[a, b]).unwrap_err(),
            Error::GridMismatch
        ));
    }

    #[test]
    fn ordered_reduction_is_worker_independent() {
        // sum of many values whose float addition is order-sensitive
        let per_config = |i: usize| -> Result<Vec<f64>> {
            let x = (i as f64 + 1.0).sqrt() * 1e-3;
            Ok(vec![x, x * x, 1.0 / (x + 1.0)])
        };
        let run = |workers: usize| -> Vec<f64> {
            with_workers(workers, || {
                let mut acc = SeriesAccumulator::new(3);
                map_reduce_ordered(257, per_config, |_, v| acc.add(&v)).unwrap();
                acc.mean()
            })
            .unwrap()
        };
        let serial = run(1);
        let parallel = run(8);
        assert_eq!(serial, parallel);
    }

    #[test]
    fn accumulator_matches_merge_series() {
        let partials: Vec<(usize, ObservableSeries)> = (0..5)
            .map(|i| series(i, vec![i as f64 * 0.1, 1.0 - i as f64 * 0.05]))
            .collect();
        let merged = merge_series(&partials).unwrap();

        let mut acc = SeriesAccumulator::new(2);
        for (_, s) in &partials {
            acc.add(&s.values).unwrap();
        }
        assert_eq!(acc.mean(), merged.values);
    }
}
