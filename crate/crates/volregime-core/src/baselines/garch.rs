//! GARCH(1,1) and GJR-GARCH(1,1,1) with Gaussian quasi-maximum likelihood.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::simplex::{self, SimplexOptions};
use super::{BaselineError, FitDiagnostics};
use crate::math;

/// Soft sample-size floor below which diagnostics flag the fit.
pub const GARCH_MIN_OBS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Asymmetry coefficient; zero for plain GARCH(1,1).
    pub gamma: f64,
}

impl GarchParams {
    pub fn validate(&self) -> Result<(), BaselineError> {
        if !(self.omega > 0.0) {
            return Err(BaselineError::InvalidParams(format!("omega must be > 0, got {}", self.omega)));
        }
        if self.alpha < 0.0 || self.beta < 0.0 || self.gamma < 0.0 {
            return Err(BaselineError::InvalidParams(format!(
                "alpha, beta, gamma must be >= 0, got ({}, {}, {})",
                self.alpha, self.beta, self.gamma
            )));
        }
        let persistence = self.alpha + self.beta + self.gamma / 2.0;
        if !(persistence < 1.0) {
            return Err(BaselineError::InvalidParams(format!(
                "stationarity requires alpha + beta + gamma/2 < 1, got {persistence}"
            )));
        }
        Ok(())
    }

    /// One recursion step: sigma2_{t+1} = omega + (alpha + gamma*[r<0]) r^2 + beta*sigma2_t.
    pub fn step(&self, r: f64, sigma2: f64) -> f64 {
        let arch = if r < 0.0 { self.alpha + self.gamma } else { self.alpha };
        self.omega + arch * r * r + self.beta * sigma2
    }
}

/// Conditional variance path; output[0] is `initial_variance` and
/// output[t] is driven by returns[t-1]. Same length as `returns`.
pub fn garch_filter(
    params: &GarchParams,
    returns: &[f64],
    initial_variance: f64,
) -> Result<Vec<f64>, BaselineError> {
    params.validate()?;
    if returns.is_empty() {
        return Err(BaselineError::EmptyInput);
    }
    if !(initial_variance > 0.0) {
        return Err(BaselineError::NonPositiveVariance(initial_variance));
    }
    let mut out = Vec::with_capacity(returns.len());
    let mut sigma2 = initial_variance;
    out.push(sigma2);
    for &r in &returns[..returns.len() - 1] {
        sigma2 = params.step(r, sigma2);
        out.push(sigma2);
    }
    Ok(out)
}

/// One-step-ahead conditional variance.
pub fn garch_forecast(
    params: &GarchParams,
    r_t: f64,
    sigma2_t: f64,
) -> Result<f64, BaselineError> {
    params.validate()?;
    if !(sigma2_t > 0.0) {
        return Err(BaselineError::NonPositiveVariance(sigma2_t));
    }
    Ok(params.step(r_t, sigma2_t))
}

/// Gaussian log-likelihood up to the additive constant: -1/2 sum(ln s2 + r^2/s2).
pub fn log_likelihood(params: &GarchParams, returns: &[f64], initial_variance: f64) -> f64 {
    let mut sigma2 = initial_variance;
    let mut acc = 0.0;
    for (i, &r) in returns.iter().enumerate() {
        if i > 0 {
            sigma2 = params.step(returns[i - 1], sigma2);
        }
        acc += math::ln(sigma2) + r * r / sigma2;
    }
    -0.5 * acc
}

// Unconstrained coordinates: theta[0] = ln omega; theta[1] controls total
// persistence p = sigmoid(theta[1]); remaining coordinates split p among
// alpha, beta (and gamma/2 when asymmetric) through a softmax. Every theta
// maps to a feasible parameter set, so the simplex search needs no bounds.
fn decode(theta: &[f64], asymmetric: bool) -> GarchParams {
    let omega = math::exp(theta[0]);
    let p = math::sigmoid(theta[1]);
    if asymmetric {
        let ea = math::exp(theta[2]);
        let eg = math::exp(theta[3]);
        let denom = ea + eg + 1.0;
        GarchParams {
            omega,
            alpha: p * ea / denom,
            beta: p / denom,
            gamma: 2.0 * p * eg / denom,
        }
    } else {
        let frac_alpha = math::sigmoid(theta[2]);
        GarchParams { omega, alpha: p * frac_alpha, beta: p * (1.0 - frac_alpha), gamma: 0.0 }
    }
}

fn encode(params: &GarchParams, asymmetric: bool) -> Vec<f64> {
    let p = (params.alpha + params.beta + params.gamma / 2.0).clamp(1e-6, 1.0 - 1e-6);
    let mut theta = alloc::vec![math::ln(params.omega), math::logit(p)];
    if asymmetric {
        let beta = params.beta.max(1e-8);
        theta.push(math::ln(params.alpha.max(1e-8) / beta));
        theta.push(math::ln((params.gamma / 2.0).max(1e-8) / beta));
    } else {
        let frac = (params.alpha / p).clamp(1e-6, 1.0 - 1e-6);
        theta.push(math::logit(frac));
    }
    theta
}

/// Fits by maximizing the Gaussian log-likelihood with a simplex search
/// restarted from three seeded initial points; the best run wins.
/// `asymmetric = false` pins gamma to exactly zero.
pub fn fit_garch(
    returns: &[f64],
    asymmetric: bool,
) -> Result<(GarchParams, FitDiagnostics), BaselineError> {
    if returns.is_empty() {
        return Err(BaselineError::EmptyInput);
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let sample_var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    if !(sample_var > 0.0) {
        return Err(BaselineError::DegenerateData(format!(
            "returns have zero variance over {} observations",
            returns.len()
        )));
    }
    let initial_variance = sample_var;

    let starts = [(0.05, 0.90, 0.02), (0.10, 0.80, 0.05), (0.20, 0.60, 0.10)];
    let mut rng = ChaCha8Rng::seed_from_u64(0x6a5c_47e1);

    let objective = |theta: &[f64]| {
        let p = decode(theta, asymmetric);
        let ll = log_likelihood(&p, returns, initial_variance);
        if ll.is_finite() {
            -ll
        } else {
            f64::INFINITY
        }
    };

    let opts = SimplexOptions { max_iterations: 2000, f_tolerance: 1e-9, initial_step: 0.25 };
    let mut best: Option<simplex::SimplexResult> = None;
    let mut total_iterations = 0;
    for &(alpha, beta, gamma_frac) in &starts {
        let gamma = if asymmetric { gamma_frac } else { 0.0 };
        // Seed target scale from the data, with a small jitter so restarts
        // do not collapse onto one basin.
        let omega = sample_var * (1.0 - alpha - beta - gamma / 2.0);
        let mut theta = encode(&GarchParams { omega, alpha, beta, gamma }, asymmetric);
        for t in theta.iter_mut() {
            *t += rng.random_range(-0.05..0.05);
        }
        let result = simplex::minimize(objective, &theta, &opts);
        total_iterations += result.iterations;
        if best.as_ref().map(|b| result.f < b.f).unwrap_or(true) {
            best = Some(result);
        }
    }
    let best = best.expect("at least one restart ran");
    let params = decode(&best.x, asymmetric);
    let diagnostics = FitDiagnostics {
        log_likelihood_or_sse: -best.f,
        iterations: total_iterations,
        converged: best.converged,
        short_sample: returns.len() < GARCH_MIN_OBS,
    };
    Ok((params, diagnostics))
}
