//! Logistic regression by iteratively reweighted least squares.
//!
//! The acceptability model regresses trial correctness on log prefix length
//! and two sum-coded factors (prefix polarity and prefix domain) with all
//! interactions. Per-suite intercepts enter as indicator columns with a ridge
//! penalty, the shrinkage analogue of a random intercept. Fixed effects are
//! unpenalized. P-values are two-sided Wald tests.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::context::{Domain, Polarity};
use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 100;
pub const SCORE_TOLERANCE: f64 = 1e-8;
pub const DEVIANCE_TOLERANCE: f64 = 1e-10;
/// Coefficients beyond this magnitude are taken as evidence of separation.
pub const SEPARATION_BOUND: f64 = 30.0;
/// Fitted probabilities within this distance of 0 or 1 also count as
/// separation (|linear predictor| above about 18.4).
pub const FITTED_PROBABILITY_EPS: f64 = 1e-8;

pub const FIXED_EFFECTS: [&str; 8] = [
    "(Intercept)",
    "log_length",
    "polarity",
    "domain",
    "log_length:polarity",
    "log_length:domain",
    "polarity:domain",
    "log_length:polarity:domain",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSpec {
    /// Add one penalized intercept column per suite.
    pub group_by_suite: bool,
    /// Ridge penalty on the suite-intercept coefficients only.
    pub ridge_lambda: f64,
}

impl Default for RegressionSpec {
    fn default() -> Self {
        RegressionSpec {
            group_by_suite: true,
            ridge_lambda: 1.0,
        }
    }
}

/// One prefixed trial as the regression sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTrial {
    pub correct: bool,
    /// Measured prefix length; must be at least 1.
    pub prefix_tokens: usize,
    pub polarity: Polarity,
    pub domain: Domain,
    pub suite_id: String,
}

/// Acceptable = +1, unacceptable = -1.
pub fn polarity_code(p: Polarity) -> Result<f64> {
    match p {
        Polarity::Acceptable => Ok(1.0),
        Polarity::Unacceptable => Ok(-1.0),
        Polarity::NotApplicable => Err(Error::InvalidInput("polarity has no sum code".into())),
    }
}

/// In-domain = +1, out-of-domain = -1.
pub fn domain_code(d: Domain) -> Result<f64> {
    match d {
        Domain::InDomain => Ok(1.0),
        Domain::OutOfDomain => Ok(-1.0),
        Domain::Control => Err(Error::InvalidInput(
            "control prefixes have no domain sum code".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
    pub penalized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub coefficients: Vec<Coefficient>,
    pub converged: bool,
    /// Set when the response is perfectly (or nearly) separable.
    pub separation: bool,
    pub iterations: usize,
    pub loglik: f64,
    pub gradient_max_norm: f64,
    pub n: usize,
    pub ridge_lambda: f64,
}

impl RegressionFit {
    pub fn get(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn estimates(&self) -> BTreeMap<String, f64> {
        self.coefficients
            .iter()
            .map(|c| (c.name.clone(), c.estimate))
            .collect()
    }
}

/// A design matrix with named columns and a per-column ridge penalty.
#[derive(Debug, Clone)]
pub struct Design {
    pub names: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub penalty: Vec<f64>,
}

/// Builds the acceptability design. Rows are in input order.
pub fn design(spec: &RegressionSpec, data: &[RegressionTrial]) -> Result<Design> {
    if data.is_empty() {
        return Err(Error::InvalidInput(
            "regression needs at least one trial".into(),
        ));
    }
    if !(spec.ridge_lambda >= 0.0 && spec.ridge_lambda.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "ridge_lambda must be >= 0, got {}",
            spec.ridge_lambda
        )));
    }
    let suites: Vec<String> = if spec.group_by_suite {
        let set: std::collections::BTreeSet<&str> =
            data.iter().map(|t| t.suite_id.as_str()).collect();
        let mut v: Vec<String> = set.into_iter().map(str::to_string).collect();
        // With one suite the indicator duplicates the intercept; without a
        // penalty the first suite becomes the reference level.
        if v.len() == 1 || spec.ridge_lambda == 0.0 {
            v.remove(0);
        }
        v
    } else {
        Vec::new()
    };

    let mut names: Vec<String> = FIXED_EFFECTS.iter().map(|s| s.to_string()).collect();
    names.extend(suites.iter().map(|s| format!("suite[{s}]")));
    let p = names.len();
    let mut x = DMatrix::zeros(data.len(), p);
    let mut y = DVector::zeros(data.len());
    for (i, t) in data.iter().enumerate() {
        if t.prefix_tokens == 0 {
            return Err(Error::InvalidInput(
                "log length is undefined for an empty prefix".into(),
            ));
        }
        let l = (t.prefix_tokens as f64).ln();
        let a = polarity_code(t.polarity)?;
        let d = domain_code(t.domain)?;
        let row = [1.0, l, a, d, l * a, l * d, a * d, l * a * d];
        for (j, v) in row.into_iter().enumerate() {
            x[(i, j)] = v;
        }
        if let Some(k) = suites.iter().position(|s| *s == t.suite_id) {
            x[(i, FIXED_EFFECTS.len() + k)] = 1.0;
        }
        y[i] = if t.correct { 1.0 } else { 0.0 };
    }
    let mut penalty = vec![0.0; FIXED_EFFECTS.len()];
    penalty.extend(std::iter::repeat(spec.ridge_lambda).take(suites.len()));
    Ok(Design {
        names,
        x,
        y,
        penalty,
    })
}

/// Fits the acceptability regression.
pub fn fit_logistic(spec: &RegressionSpec, data: &[RegressionTrial]) -> Result<RegressionFit> {
    let d = design(spec, data)?;
    let mut fit = fit_irls(&d)?;
    fit.ridge_lambda = spec.ridge_lambda;
    Ok(fit)
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(x)) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn loglik(eta: &DVector<f64>, y: &DVector<f64>) -> f64 {
    eta.iter()
        .zip(y.iter())
        .map(|(&e, &y)| y * -softplus(-e) + (1.0 - y) * -softplus(e))
        .sum()
}

/// Two-sided normal tail probability of |z|.
pub fn wald_p_value(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// Penalized Newton-Raphson (IRLS) on an arbitrary design.
pub fn fit_irls(d: &Design) -> Result<RegressionFit> {
    let (n, p) = d.x.shape();
    if d.y.len() != n || d.penalty.len() != p || d.names.len() != p {
        return Err(Error::InvalidInput("design dimensions disagree".into()));
    }
    let positives = d.y.iter().filter(|&&v| v > 0.5).count();
    let single_class = positives == 0 || positives == n;
    let penalty = DMatrix::from_diagonal(&DVector::from_column_slice(&d.penalty));

    let mut beta = DVector::zeros(p);
    let mut converged = false;
    let mut separation = single_class;
    let mut iterations = 0;
    let mut objective_old = f64::INFINITY;
    let mut hessian = DMatrix::zeros(p, p);
    let mut gradient_max_norm = f64::INFINITY;

    while iterations < MAX_ITERATIONS {
        let eta = &d.x * &beta;
        let mu = eta.map(sigmoid);
        let w = mu.map(|m| m * (1.0 - m));
        let gradient = d.x.transpose() * (&d.y - &mu) - &penalty * &beta;
        let mut xw = d.x.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= w[i];
        }
        hessian = d.x.transpose() * xw + &penalty;
        gradient_max_norm = gradient.amax();

        let penalized_deviance = -2.0 * loglik(&eta, &d.y) + beta.dot(&(&penalty * &beta));
        let rel_change =
            (penalized_deviance - objective_old).abs() / (penalized_deviance.abs() + 0.1);
        if gradient_max_norm < SCORE_TOLERANCE || rel_change < DEVIANCE_TOLERANCE {
            converged = true;
            break;
        }
        objective_old = penalized_deviance;

        let step = hessian
            .clone()
            .cholesky()
            .ok_or_else(|| {
                Error::Singular("weighted normal equations are not positive definite".into())
            })?
            .solve(&gradient);
        beta += step;
        iterations += 1;

        if beta.amax() > SEPARATION_BOUND {
            separation = true;
            break;
        }
    }
    let eta = &d.x * &beta;
    let extreme = eta
        .iter()
        .map(|&e| sigmoid(e))
        .any(|m| !(FITTED_PROBABILITY_EPS..=1.0 - FITTED_PROBABILITY_EPS).contains(&m));
    if separation || extreme {
        separation = true;
        converged = false;
    }

    let covariance = hessian
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Singular("information matrix is not invertible".into()))?;
    let coefficients = (0..p)
        .map(|j| {
            let se = covariance[(j, j)].max(0.0).sqrt();
            let z = beta[j] / se;
            Coefficient {
                name: d.names[j].clone(),
                estimate: beta[j],
                std_error: se,
                z,
                p_value: wald_p_value(z),
                penalized: d.penalty[j] > 0.0,
            }
        })
        .collect();

    Ok(RegressionFit {
        coefficients,
        converged,
        separation,
        iterations,
        loglik: loglik(&eta, &d.y),
        gradient_max_norm,
        n,
        ridge_lambda: 0.0,
    })
}
