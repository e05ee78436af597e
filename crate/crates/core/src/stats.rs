//! Output analysis helpers: batch means and Kolmogorov–Smirnov.

/// Default number of batches for batch-means standard errors.
pub const DEFAULT_BATCHES: usize = 30;

/// Mean and standard error of a ratio estimator `Σnum / Σden`.
///
/// The observations are split into `batches` groups of equal count (the
/// remainder goes to the last group) and the standard error is taken over the
/// per-batch ratios. With `den ≡ 1` this is the ordinary batch-means SE.
pub fn batch_ratio(num: &[f64], den: &[f64], batches: usize) -> (f64, f64) {
    assert_eq!(num.len(), den.len());
    let n = num.len();
    let total = num.iter().sum::<f64>() / den.iter().sum::<f64>();
    let batches = batches.min(n);
    if batches < 2 {
        return (total, f64::NAN);
    }
    let size = n / batches;
    let ratios: Vec<f64> = (0..batches)
        .map(|b| {
            let lo = b * size;
            let hi = if b + 1 == batches { n } else { lo + size };
            num[lo..hi].iter().sum::<f64>() / den[lo..hi].iter().sum::<f64>()
        })
        .collect();
    let m = ratios.iter().sum::<f64>() / batches as f64;
    let var = ratios.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (total, (var / batches as f64).sqrt())
}

/// Batch-means mean and standard error of a sequence.
pub fn batch_mean(xs: &[f64], batches: usize) -> (f64, f64) {
    let ones = vec![1.0; xs.len()];
    batch_ratio(xs, &ones, batches)
}

/// Two-sided KS statistic `sup |F_n − F|` for **sorted** samples.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Same statistic when the CDF values at the sorted samples are already known.
pub fn ks_statistic_from_cdf_values(cdf_at_sorted: &[f64]) -> f64 {
    let n = cdf_at_sorted.len() as f64;
    cdf_at_sorted
        .iter()
        .enumerate()
        .map(|(i, &f)| (f - i as f64 / n).max((i + 1) as f64 / n - f))
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.627_6 / (n as f64).sqrt()
}
