use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

pub const MIN_RESAMPLES: usize = 100;

/// Mean computed around the first element, so a constant sample returns
/// that constant exactly.
pub fn shifted_mean(xs: &[f64]) -> f64 {
    let x0 = xs[0];
    x0 + xs.iter().map(|x| x - x0).sum::<f64>() / xs.len() as f64
}

/// Linear-interpolated quantile of sorted data (R type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap interval for the mean of `values`.
pub fn bootstrap_ci(values: &[f64], resamples: usize, level: f64, seed: u64) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::InvalidInput(
            "bootstrap needs at least one value".into(),
        ));
    }
    if resamples < MIN_RESAMPLES {
        return Err(Error::InvalidInput(format!(
            "bootstrap needs at least {MIN_RESAMPLES} resamples, got {resamples}"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!(
            "confidence level must be in (0, 1), got {level}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = values.len();
    let mut buf = vec![0.0; n];
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = values[rng.gen_range(0..n)];
            }
            shifted_mean(&buf)
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok((
        quantile_sorted(&means, alpha),
        quantile_sorted(&means, 1.0 - alpha),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sample_gives_degenerate_interval() {
        let (lo, hi) = bootstrap_ci(&[0.1; 7], 200, 0.95, 3).unwrap();
        assert_eq!((lo, hi), (0.1, 0.1));
    }

    #[test]
    fn interval_is_ordered_and_seeded() {
        let v: Vec<f64> = (0..40).map(|i| (i % 7) as f64).collect();
        let a = bootstrap_ci(&v, 500, 0.9, 11).unwrap();
        assert!(a.0 <= a.1);
        assert_eq!(a, bootstrap_ci(&v, 500, 0.9, 11).unwrap());
    }

    #[test]
    fn quantiles_interpolate() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
        assert_eq!(quantile_sorted(&s, 0.5), 2.5);
    }

    #[test]
    fn bad_inputs() {
        assert!(bootstrap_ci(&[], 10, 0.9, 0).is_err());
        assert!(bootstrap_ci(&[1.0], 99, 0.9, 0).is_err());
        assert!(bootstrap_ci(&[1.0], 100, 1.0, 0).is_err());
    }
}
