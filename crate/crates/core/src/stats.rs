//! Sufficient statistics for Monte Carlo tables and their error bars.
//!
//! Samples are split into a fixed number of contiguous batches by sample
//! index. Each batch keeps integer sums, so merging is exact and the result
//! does not depend on which thread produced which batch. Derived quantities
//! get error bars by deleting one batch at a time (jackknife).

use serde::{Deserialize, Serialize};

use rustc_hash::FxHashMap;

/// A number with its standard error and the sample count behind it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n: u64,
}

impl Estimate {
    pub fn new(value: f64, stderr: f64, n: u64) -> Self {
        Estimate { value, stderr, n }
    }

    pub fn exact(value: f64) -> Self {
        Estimate { value, stderr: 0.0, n: 0 }
    }

    /// Jackknife estimate from the full-sample value and leave-one-batch-out replicates.
    pub fn jackknife(full: f64, replicates: &[f64], n: u64) -> Self {
        Estimate { value: full, stderr: jackknife_stderr(replicates), n }
    }
}

pub fn jackknife_stderr(replicates: &[f64]) -> f64 {
    let b = replicates.len();
    if b < 2 {
        return 0.0;
    }
    let mean = replicates.iter().sum::<f64>() / b as f64;
    let ss: f64 = replicates.iter().map(|r| (r - mean) * (r - mean)).sum();
    ((b - 1) as f64 / b as f64 * ss).sqrt()
}

/// Right side minus left side of an inequality `lhs <= rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: Estimate,
    /// displacement or momentum index where the margin was taken, if any
    pub at: Option<Vec<i64>>,
}

impl Margin {
    pub fn new(lhs: f64, rhs: f64, stderr: f64, n: u64) -> Self {
        Margin { lhs, rhs, margin: Estimate::new(rhs - lhs, stderr, n), at: None }
    }

    pub fn at(mut self, at: Vec<i64>) -> Self {
        self.at = Some(at);
        self
    }

    /// No violation beyond `sigmas` standard errors.
    pub fn holds_within(&self, sigmas: f64) -> bool {
        self.margin.value >= -sigmas * self.margin.stderr
    }
}

/// Default number of batches for `n` samples.
pub fn batch_count(n: u64) -> usize {
    n.clamp(1, 16) as usize
}

/// Sample index range of batch `b` out of `nb`.
pub fn batch_range(n: u64, nb: usize, b: usize) -> std::ops::Range<u64> {
    let lo = (n as u128 * b as u128 / nb as u128) as u64;
    let hi = (n as u128 * (b + 1) as u128 / nb as u128) as u64;
    lo..hi
}

/// Per-cell integer sums over the samples of one batch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CellSums {
    pub n: u64,
    pub sum: Vec<u64>,
    pub sumsq: Vec<u64>,
}

impl CellSums {
    pub fn new(cells: usize) -> Self {
        CellSums { n: 0, sum: vec![0; cells], sumsq: vec![0; cells] }
    }

    /// Fold in one sample given as sparse cell counts.
    pub fn push_sample(&mut self, counts: &FxHashMap<usize, u64>) {
        self.n += 1;
        for (&c, &v) in counts {
            self.sum[c] += v;
            self.sumsq[c] += v * v;
        }
    }

    pub fn merge(&mut self, other: &CellSums) {
        self.n += other.n;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sumsq.iter_mut().zip(&other.sumsq) {
            *a += b;
        }
    }
}

/// Batched per-cell statistics of a count-valued observable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchedCells {
    pub batches: Vec<CellSums>,
}

impl BatchedCells {
    pub fn total(&self) -> CellSums {
        let mut t = CellSums::new(self.batches.first().map(|b| b.sum.len()).unwrap_or(0));
        for b in &self.batches {
            t.merge(b);
        }
        t
    }

    pub fn n(&self) -> u64 {
        self.batches.iter().map(|b| b.n).sum()
    }

    /// Sums with batch `skip` removed.
    pub fn without(&self, skip: usize) -> CellSums {
        let mut t = CellSums::new(self.batches[skip].sum.len());
        for (i, b) in self.batches.iter().enumerate() {
            if i != skip {
                t.merge(b);
            }
        }
        t
    }
}

/// Batched sums of a scalar count-valued observable.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScalarSums {
    pub n: u64,
    pub sum: u128,
    pub sumsq: u128,
}

impl ScalarSums {
    pub fn push(&mut self, v: u64) {
        self.n += 1;
        self.sum += v as u128;
        self.sumsq += (v as u128) * (v as u128);
    }

    pub fn merge(&mut self, o: &ScalarSums) {
        self.n += o.n;
        self.sum += o.sum;
        self.sumsq += o.sumsq;
    }

    pub fn estimate(&self) -> Estimate {
        if self.n == 0 {
            return Estimate::new(f64::NAN, f64::NAN, 0);
        }
        let n = self.n as f64;
        let mean = self.sum as f64 / n;
        let var = if self.n > 1 { ((self.sumsq as f64 / n) - mean * mean).max(0.0) * n / (n - 1.0) } else { 0.0 };
        Estimate::new(mean, (var / n).sqrt(), self.n)
    }
}

/// Mean and standard error of per-sample values from sums.
pub fn mean_stderr(n: u64, sum: f64, sumsq: f64) -> (f64, f64) {
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let nf = n as f64;
    let mean = sum / nf;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = ((sumsq / nf) - mean * mean).max(0.0) * nf / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

/// Ordinary least squares y = a + b x; returns (a, b, se_b, residual rms).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let rss: f64 = x.iter().zip(y).map(|(xi, yi)| (yi - a - b * xi).powi(2)).sum();
    let dof = (n - 2.0).max(1.0);
    let se_b = (rss / dof / sxx).sqrt();
    (a, b, se_b, (rss / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_ranges_partition() {
        for n in [1u64, 7, 16, 100, 1001] {
            let nb = batch_count(n);
            let mut next = 0;
            for b in 0..nb {
                let r = batch_range(n, nb, b);
                assert_eq!(r.start, next);
                next = r.end;
            }
            assert_eq!(next, n);
        }
    }

    #[test]
    fn jackknife_of_mean_matches_classical() {
        // for the plain mean of equal batches the jackknife error is the
        // standard error of the batch means
        let batch_means = [1.0, 2.0, 4.0, 3.0];
        let total: f64 = batch_means.iter().sum();
        let reps: Vec<f64> = batch_means.iter().map(|m| (total - m) / 3.0).collect();
        let sd = {
            let mu = total / 4.0;
            (batch_means.iter().map(|m| (m - mu) * (m - mu)).sum::<f64>() / 3.0).sqrt()
        };
        assert!((jackknife_stderr(&reps) - sd / 2.0).abs() < 1e-12);
    }

    #[test]
    fn exact_line_fit() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 3.0 * v).collect();
        let (a, b, se, rms) = linear_fit(&x, &y);
        assert!((a - 2.0).abs() < 1e-12 && (b + 3.0).abs() < 1e-12);
        assert!(se < 1e-12 && rms < 1e-12);
    }
}
