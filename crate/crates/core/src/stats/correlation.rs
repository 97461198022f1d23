use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub coefficient: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Two-sided p-value of a correlation coefficient via the t statistic with
/// n - 2 degrees of freedom.
pub fn correlation_p_value(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.cdf(-t.abs())).min(1.0)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Pearson product-moment correlation. `None` when either input is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Point-biserial correlation between a 0/1 variable and a continuous one:
///
/// ```text
/// r_pb = (M1 - M0) / s_n * sqrt(n1 * n0 / n^2)
/// ```
///
/// with `s_n` the population standard deviation of the continuous variable.
pub fn point_biserial(binary: &[u8], continuous: &[f64]) -> Result<Correlation> {
    if binary.len() != continuous.len() {
        return Err(Error::InvalidInput("inputs differ in length".into()));
    }
    let n = binary.len();
    if n < 3 {
        return Err(Error::InvalidInput(
            "point-biserial correlation needs at least 3 observations".into(),
        ));
    }
    if let Some(bad) = binary.iter().find(|&&b| b > 1) {
        return Err(Error::InvalidInput(format!(
            "binary variable contains {bad}"
        )));
    }
    let (mut n1, mut sum1, mut sum0) = (0usize, 0.0, 0.0);
    for (&b, &x) in binary.iter().zip(continuous) {
        if b == 1 {
            n1 += 1;
            sum1 += x;
        } else {
            sum0 += x;
        }
    }
    let n0 = n - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::InvalidInput(
            "point-biserial correlation needs both classes".into(),
        ));
    }
    let m = mean(continuous);
    let var = continuous.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
    if var == 0.0 {
        return Err(Error::InvalidInput(
            "continuous variable has zero variance".into(),
        ));
    }
    let (m1, m0) = (sum1 / n1 as f64, sum0 / n0 as f64);
    let r = ((m1 - m0) / var.sqrt() * ((n1 * n0) as f64 / (n * n) as f64).sqrt()).clamp(-1.0, 1.0);
    Ok(Correlation {
        coefficient: r,
        p_value: correlation_p_value(r, n),
        n,
    })
}

/// 1-based ranks with ties sharing the mean of the ranks they span.
pub fn mid_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        // Positions i..=j hold ranks i+1..=j+1.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of mid-ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput("inputs differ in length".into()));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::InvalidInput(
            "Spearman correlation needs at least 3 observations".into(),
        ));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("inputs must be finite".into()));
    }
    let r = pearson(&mid_ranks(x), &mid_ranks(y)).ok_or_else(|| {
        Error::InvalidInput("Spearman correlation is undefined for a constant input".into())
    })?;
    Ok(Correlation {
        coefficient: r,
        p_value: correlation_p_value(r, n),
        n,
    })
}
