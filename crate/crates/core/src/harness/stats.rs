use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Sample mean and standard error of the mean; the error is 0 for fewer
/// than two values.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub critical: f64,
    pub pass: bool,
}

/// Pearson goodness of fit of `counts[i]` (outcome `lo + i`) against
/// `probs(lo + i)`.
///
/// Outcomes are merged from the tails inward until every bin expects at
/// least 5 observations; outcomes outside `counts` join the end bins.
pub fn chi_square(counts: &[u64], lo: u64, probs: impl Fn(u64) -> f64, level: f64) -> ChiSquare {
    let total: u64 = counts.iter().sum();
    let nf = total as f64;
    let mut expected: Vec<f64> = (0..counts.len()).map(|i| probs(lo + i as u64) * nf).collect();
    let covered: f64 = expected.iter().sum();
    // unobserved tails: push the missing mass into the last bin
    if let Some(last) = expected.last_mut() {
        *last += (nf - covered).max(0.0);
    }
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (&c, &e) in counts.iter().zip(&expected) {
        acc.0 += c as f64;
        acc.1 += e;
        if acc.1 >= 5.0 {
            bins.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.1 > 0.0 || acc.0 > 0.0 {
        match bins.last_mut() {
            Some(b) => {
                b.0 += acc.0;
                b.1 += acc.1;
            }
            None => bins.push(acc),
        }
    }
    let statistic: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = bins.len().saturating_sub(1);
    if dof == 0 {
        return ChiSquare { statistic, dof, critical: f64::INFINITY, pass: true };
    }
    let critical = ChiSquared::new(dof as f64).unwrap().inverse_cdf(level);
    ChiSquare { statistic, dof, critical, pass: statistic <= critical }
}

/// Histogram of `samples` as `(lo, counts)`.
pub fn histogram(samples: &[u64]) -> (u64, Vec<u64>) {
    let lo = samples.iter().copied().min().unwrap_or(0);
    let hi = samples.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0u64; (hi - lo + 1) as usize];
    for &s in samples {
        counts[(s - lo) as usize] += 1;
    }
    (lo, counts)
}
