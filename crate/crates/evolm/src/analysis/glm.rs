//! Weighted Gamma GLM with log link, fitted by iteratively reweighted least
//! squares with step halving, plus Wald inference and the Cox-Snell pseudo
//! R-squared.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

use super::AnalysisError;

const MAX_IRLS_ITERS: usize = 100;
const Z_975: f64 = 1.959963984540054;

/// A fitted regression: coefficients with Wald inference, multiplicative
/// factors, and goodness of fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFit {
    pub response_name: String,
    pub feature_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// `exp(coefficient)` per feature.
    pub factors: Vec<f64>,
    /// 95% confidence intervals on the coefficients.
    pub ci95: Vec<(f64, f64)>,
    /// Two-sided Wald p-values.
    pub p_values: Vec<f64>,
    /// Cox-Snell likelihood-ratio pseudo R-squared against the
    /// intercept-only model.
    pub pseudo_r2: f64,
    pub weighted: bool,
    pub dispersion: f64,
    pub deviance: f64,
    pub log_likelihood: f64,
    pub n_obs: usize,
    pub n_iter: usize,
    /// Deviance after each IRLS iteration; non-increasing.
    pub deviance_trace: Vec<f64>,
}

/// Solves `A x = b` in place by Gaussian elimination with partial pivoting.
/// A near-zero pivot reports the offending column as rank deficiency.
fn solve(mut a: Array2<f64>, mut b: Array1<f64>) -> Result<Array1<f64>, AnalysisError> {
    let n = b.len();
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for col in 0..n {
        let mut pivot_row = col;
        for r in col + 1..n {
            if a[[r, col]].abs() > a[[pivot_row, col]].abs() {
                pivot_row = r;
            }
        }
        let pivot = a[[pivot_row, col]];
        if pivot.abs() < 1e-12 * scale {
            return Err(AnalysisError::RankDeficient { col, pivot });
        }
        if pivot_row != col {
            for c in 0..n {
                let tmp = a[[col, c]];
                a[[col, c]] = a[[pivot_row, c]];
                a[[pivot_row, c]] = tmp;
            }
            b.swap(col, pivot_row);
        }
        for r in col + 1..n {
            let factor = a[[r, col]] / a[[col, col]];
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                a[[r, c]] -= factor * a[[col, c]];
            }
            b[r] -= factor * b[col];
        }
    }
    let mut x = Array1::zeros(n);
    for row in (0..n).rev() {
        let mut acc = b[row];
        for c in row + 1..n {
            acc -= a[[row, c]] * x[c];
        }
        x[row] = acc / a[[row, row]];
    }
    Ok(x)
}

/// Inverse of a small positive-definite matrix via column-wise solves.
fn invert(a: &Array2<f64>) -> Result<Array2<f64>, AnalysisError> {
    let n = a.nrows();
    let mut inv = Array2::zeros((n, n));
    for j in 0..n {
        let mut e = Array1::zeros(n);
        e[j] = 1.0;
        let col = solve(a.clone(), e)?;
        inv.column_mut(j).assign(&col);
    }
    Ok(inv)
}

fn gamma_deviance(y: &Array1<f64>, mu: &Array1<f64>, w: &Array1<f64>) -> f64 {
    let mut dev = 0.0;
    for i in 0..y.len() {
        dev += 2.0 * w[i] * ((y[i] - mu[i]) / mu[i] - (y[i] / mu[i]).ln());
    }
    dev
}

/// Gamma log-likelihood with per-observation shape `w_i / phi`.
fn gamma_log_likelihood(y: &Array1<f64>, mu: &Array1<f64>, w: &Array1<f64>, phi: f64) -> f64 {
    let mut ll = 0.0;
    for i in 0..y.len() {
        let k = w[i] / phi;
        ll += k * (k * y[i] / mu[i]).ln() - k * y[i] / mu[i] - y[i].ln() - ln_gamma(k);
    }
    ll
}

struct IrlsOutcome {
    beta: Array1<f64>,
    mu: Array1<f64>,
    deviance: f64,
    trace: Vec<f64>,
    info: Array2<f64>, // X^T W X at convergence
}

/// Core IRLS loop. For the Gamma family with log link the working weight is
/// exactly the prior weight, and the working response is
/// `eta + (y - mu) / mu`. Steps that would increase the deviance are halved.
fn irls(
    x: &Array2<f64>,
    y: &Array1<f64>,
    w: &Array1<f64>,
) -> Result<IrlsOutcome, AnalysisError> {
    let n = y.len();
    let p = x.ncols();

    let weighted_normal_eq = |mu: &Array1<f64>, eta: &Array1<f64>| {
        let mut xtwx = Array2::zeros((p, p));
        let mut xtwz = Array1::zeros(p);
        for i in 0..n {
            let z = eta[i] + (y[i] - mu[i]) / mu[i];
            for a in 0..p {
                let xa = x[[i, a]] * w[i];
                xtwz[a] += xa * z;
                for b in 0..p {
                    xtwx[[a, b]] += xa * x[[i, b]];
                }
            }
        }
        (xtwx, xtwz)
    };

    // Start from mu = y (strictly positive by precondition).
    let mut mu = y.clone();
    let mut eta = mu.mapv(f64::ln);
    let (xtwx, xtwz) = weighted_normal_eq(&mu, &eta);
    let mut beta = solve(xtwx, xtwz)?;
    eta = x.dot(&beta);
    mu = eta.mapv(f64::exp);
    let mut deviance = gamma_deviance(y, &mu, w);
    if !deviance.is_finite() {
        return Err(AnalysisError::NoConvergence {
            iters: 0,
            deviance,
        });
    }
    let mut trace = vec![deviance];

    for iter in 1..=MAX_IRLS_ITERS {
        let (xtwx, xtwz) = weighted_normal_eq(&mu, &eta);
        let proposal = solve(xtwx, xtwz)?;

        // step halving keeps the deviance non-increasing
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let beta_try: Array1<f64> = &beta + &((&proposal - &beta) * step);
            let eta_try = x.dot(&beta_try);
            let mu_try = eta_try.mapv(f64::exp);
            if mu_try.iter().all(|&m| m > 0.0 && m.is_finite()) {
                let dev_try = gamma_deviance(y, &mu_try, w);
                if dev_try.is_finite() && dev_try <= deviance + 1e-12 * (deviance.abs() + 1.0) {
                    accepted = Some((beta_try, eta_try, mu_try, dev_try));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((beta_new, eta_new, mu_new, dev_new)) = accepted else {
            // no improving step exists; treat the current point as converged
            break;
        };
        let delta = (deviance - dev_new).abs();
        beta = beta_new;
        eta = eta_new;
        mu = mu_new;
        deviance = dev_new.min(deviance);
        trace.push(deviance);
        if delta <= 1e-14 * (deviance.abs() + 0.1) {
            let (info, _) = weighted_normal_eq(&mu, &eta);
            return Ok(IrlsOutcome {
                beta,
                mu,
                deviance,
                trace,
                info,
            });
        }
        if iter == MAX_IRLS_ITERS {
            return Err(AnalysisError::NoConvergence {
                iters: MAX_IRLS_ITERS,
                deviance,
            });
        }
    }
    let (info, _) = weighted_normal_eq(&mu, &eta);
    Ok(IrlsOutcome {
        beta,
        mu,
        deviance,
        trace,
        info,
    })
}

/// Fits `response ~ Gamma(log link)` on the design matrix, optionally with
/// prior weights multiplying the working weights. The design must contain an
/// explicit intercept column for the null-model comparison to be meaningful.
pub fn fit_gamma_glm(
    design: &Array2<f64>,
    response: &Array1<f64>,
    weights: Option<&Array1<f64>>,
    response_name: &str,
    feature_names: &[String],
) -> Result<ModelFit, AnalysisError> {
    let n = response.len();
    let p = design.ncols();
    if design.nrows() != n {
        return Err(AnalysisError::LengthMismatch(design.nrows(), n));
    }
    if feature_names.len() != p {
        return Err(AnalysisError::LengthMismatch(feature_names.len(), p));
    }
    if n <= p {
        return Err(AnalysisError::TooFew { need: p + 1, got: n });
    }
    for &v in response {
        if !(v > 0.0 && v.is_finite()) {
            return Err(AnalysisError::NonPositive {
                name: "response",
                value: v,
            });
        }
    }
    let w = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(AnalysisError::LengthMismatch(w.len(), n));
            }
            for &v in w {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(AnalysisError::NonPositive {
                        name: "weight",
                        value: v,
                    });
                }
            }
            w.clone()
        }
        None => Array1::ones(n),
    };

    let fit = irls(design, response, &w)?;

    // Pearson dispersion estimate.
    let mut pearson = 0.0;
    for i in 0..n {
        let r = (response[i] - fit.mu[i]) / fit.mu[i];
        pearson += w[i] * r * r;
    }
    let dispersion = pearson / (n - p) as f64;

    let cov = invert(&fit.info)?;
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut std_errors = Vec::with_capacity(p);
    let mut ci95 = Vec::with_capacity(p);
    let mut p_values = Vec::with_capacity(p);
    for j in 0..p {
        let se = (cov[[j, j]] * dispersion).sqrt();
        std_errors.push(se);
        ci95.push((fit.beta[j] - Z_975 * se, fit.beta[j] + Z_975 * se));
        let z = fit.beta[j] / se;
        p_values.push(2.0 * (1.0 - normal.cdf(z.abs())));
    }

    let log_likelihood = gamma_log_likelihood(response, &fit.mu, &w, dispersion);

    // Null model: intercept only, same weights, evaluated at the full
    // model's dispersion so the likelihood ratio compares like with like.
    let pseudo_r2 = if p == 1 {
        0.0
    } else {
        let ones = Array2::ones((n, 1));
        let null = irls(&ones, response, &w)?;
        let ll_null = gamma_log_likelihood(response, &null.mu, &w, dispersion);
        cox_snell_r2(log_likelihood, ll_null, n)
    };

    Ok(ModelFit {
        response_name: response_name.to_string(),
        feature_names: feature_names.to_vec(),
        coefficients: fit.beta.to_vec(),
        std_errors,
        factors: fit.beta.iter().map(|b| b.exp()).collect(),
        ci95,
        p_values,
        pseudo_r2,
        weighted: weights.is_some(),
        dispersion,
        deviance: fit.deviance,
        log_likelihood,
        n_obs: n,
        n_iter: fit.trace.len(),
        deviance_trace: fit.trace,
    })
}

/// `1 - exp(-(2/n) (ll_model - ll_null))`.
pub fn cox_snell_r2(ll_model: f64, ll_null: f64, n: usize) -> f64 {
    1.0 - (-(2.0 / n as f64) * (ll_model - ll_null)).exp()
}

/// One row of the factor report: multiplicative factor, percent change from
/// the baseline, factor-scale confidence interval, and p-value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorRow {
    pub feature: String,
    pub factor: f64,
    pub percent_change: f64,
    pub ci95: (f64, f64),
    pub p_value: f64,
}

/// Formats a fit as factor rows: `factor = exp(beta)`, percent change
/// `100 * (factor - 1)`, and the interval endpoints exponentiated.
pub fn factor_table(fit: &ModelFit) -> Vec<FactorRow> {
    fit.feature_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let factor = fit.factors[j];
            FactorRow {
                feature: name.clone(),
                factor,
                percent_change: 100.0 * (factor - 1.0),
                ci95: (fit.ci95[j].0.exp(), fit.ci95[j].1.exp()),
                p_value: fit.p_values[j],
            }
        })
        .collect()
}
