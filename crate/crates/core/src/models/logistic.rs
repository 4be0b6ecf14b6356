//! L2-penalized logistic regression fit by iteratively reweighted least
//! squares with step-halving on the penalized objective.

use nalgebra::{DMatrix, DVector};

pub const MAX_ITERATIONS: usize = 100;
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
pub const FALLBACK_L2: f64 = 1e-6;
/// Scores are kept this far from 0 and 1.
pub const SCORE_FLOOR: f64 = 1e-12;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn clamp_score(p: f64) -> f64 {
    p.clamp(SCORE_FLOOR, 1.0 - SCORE_FLOOR)
}

/// `theta[0]` is the intercept, `theta[1..]` the column coefficients.
fn linear_predictor(theta: &[f64], cols: &[&[f64]], n: usize) -> Vec<f64> {
    let mut eta = vec![theta[0]; n];
    for (c, b) in cols.iter().zip(&theta[1..]) {
        if *b != 0.0 {
            for (e, x) in eta.iter_mut().zip(c.iter()) {
                *e += b * x;
            }
        }
    }
    eta
}

fn log_likelihood_from_eta(eta: &[f64], y: &[u8]) -> f64 {
    eta.iter()
        .zip(y)
        .map(|(&z, &yi)| f64::from(yi) * z - softplus(z))
        .sum()
}

fn ridge(theta: &[f64], l2: f64) -> f64 {
    0.5 * l2 * theta[1..].iter().map(|b| b * b).sum::<f64>()
}

/// Log-likelihood minus `l2/2 * |beta|^2` (intercept unpenalized).
pub fn penalized_log_likelihood(theta: &[f64], cols: &[&[f64]], y: &[u8], l2: f64) -> f64 {
    log_likelihood_from_eta(&linear_predictor(theta, cols, y.len()), y) - ridge(theta, l2)
}

/// Gradient of [`penalized_log_likelihood`] with respect to `theta`.
pub fn penalized_score(theta: &[f64], cols: &[&[f64]], y: &[u8], l2: f64) -> Vec<f64> {
    let eta = linear_predictor(theta, cols, y.len());
    let resid: Vec<f64> = eta.iter().zip(y).map(|(&z, &yi)| f64::from(yi) - sigmoid(z)).collect();
    let mut g = Vec::with_capacity(theta.len());
    g.push(resid.iter().sum());
    for (c, b) in cols.iter().zip(&theta[1..]) {
        g.push(c.iter().zip(&resid).map(|(x, r)| x * r).sum::<f64>() - l2 * b);
    }
    g
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Unpenalized deviance, -2 log-likelihood.
    pub deviance: f64,
    pub iterations: usize,
    pub converged: bool,
    pub l2: f64,
    pub warnings: Vec<String>,
}

impl LogisticFit {
    pub fn theta(&self) -> Vec<f64> {
        let mut t = vec![self.intercept];
        t.extend_from_slice(&self.coefficients);
        t
    }
}

struct Singular;

fn irls(cols: &[&[f64]], y: &[u8], l2: f64, jitter: f64, start: Option<&[f64]>) -> Result<LogisticFit, Singular> {
    let n = y.len();
    let k = cols.len() + 1;
    let mut theta = match start {
        Some(s) => s.to_vec(),
        None => {
            let mut t = vec![0.0; k];
            let ybar = (y.iter().map(|&v| f64::from(v)).sum::<f64>() / n.max(1) as f64).clamp(1e-6, 1.0 - 1e-6);
            t[0] = (ybar / (1.0 - ybar)).ln();
            t
        }
    };
    let mut eta = linear_predictor(&theta, cols, n);
    let mut objective = -log_likelihood_from_eta(&eta, y) + ridge(&theta, l2);
    let mut converged = false;
    let mut iterations = 0;
    let mut p = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut wx = vec![0.0; n];
    while iterations < MAX_ITERATIONS {
        for i in 0..n {
            p[i] = sigmoid(eta[i]);
            w[i] = p[i] * (1.0 - p[i]);
        }
        // gradient of the objective (negative penalized log-likelihood)
        let mut g = DVector::<f64>::zeros(k);
        g[0] = (0..n).map(|i| p[i] - f64::from(y[i])).sum();
        for (a, c) in cols.iter().enumerate() {
            g[a + 1] = (0..n).map(|i| c[i] * (p[i] - f64::from(y[i]))).sum::<f64>() + l2 * theta[a + 1];
        }
        if g.norm() < GRADIENT_TOLERANCE {
            converged = true;
            break;
        }
        let mut h = DMatrix::<f64>::zeros(k, k);
        h[(0, 0)] = w.iter().sum::<f64>() + jitter;
        for a in 0..cols.len() {
            let ca = cols[a];
            for i in 0..n {
                wx[i] = w[i] * ca[i];
            }
            h[(0, a + 1)] = wx.iter().sum();
            h[(a + 1, 0)] = h[(0, a + 1)];
            for b in a..cols.len() {
                let v: f64 = wx.iter().zip(cols[b].iter()).map(|(u, x)| u * x).sum();
                h[(a + 1, b + 1)] = v;
                h[(b + 1, a + 1)] = v;
            }
            h[(a + 1, a + 1)] += l2 + jitter;
        }
        let chol = h.cholesky().ok_or(Singular)?;
        let delta = chol.solve(&g);
        if delta.iter().any(|d| !d.is_finite()) {
            return Err(Singular);
        }
        iterations += 1;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = theta.iter().zip(delta.iter()).map(|(t, d)| t - step * d).collect();
            let cand_eta = linear_predictor(&cand, cols, n);
            let cand_obj = -log_likelihood_from_eta(&cand_eta, y) + ridge(&cand, l2);
            if cand_obj <= objective + 1e-12 * objective.abs().max(1.0) {
                let change = objective - cand_obj;
                theta = cand;
                eta = cand_eta;
                objective = cand_obj;
                accepted = true;
                if change.abs() <= 1e-15 * objective.abs().max(1.0) && step * delta.norm() < 1e-10 {
                    converged = true;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted || converged {
            converged = converged || !accepted;
            break;
        }
    }
    let deviance = -2.0 * log_likelihood_from_eta(&eta, y);
    Ok(LogisticFit {
        intercept: theta[0],
        coefficients: theta[1..].to_vec(),
        deviance,
        iterations,
        converged,
        l2,
        warnings: Vec::new(),
    })
}

/// Fits the model; a singular unpenalized design falls back to
/// [`FALLBACK_L2`] and records a warning.
pub fn fit_logistic(cols: &[&[f64]], y: &[u8], l2: f64) -> LogisticFit {
    fit_logistic_from(cols, y, l2, None)
}

pub fn fit_logistic_from(cols: &[&[f64]], y: &[u8], l2: f64, start: Option<&[f64]>) -> LogisticFit {
    if let Ok(fit) = irls(cols, y, l2, 0.0, start) {
        return finish(fit);
    }
    let mut warnings = Vec::new();
    let mut l2_used = l2;
    if l2 == 0.0 {
        l2_used = FALLBACK_L2;
        warnings.push(format!("ill-conditioned design; fell back to L2 strength {FALLBACK_L2:e}"));
        if let Ok(mut fit) = irls(cols, y, l2_used, 0.0, None) {
            fit.warnings = warnings;
            return finish(fit);
        }
    }
    warnings.push("singular Hessian; added diagonal jitter 1e-8".into());
    let mut fit = irls(cols, y, l2_used, 1e-8, None).unwrap_or_else(|_| LogisticFit {
        intercept: 0.0,
        coefficients: vec![0.0; cols.len()],
        deviance: f64::INFINITY,
        iterations: 0,
        converged: false,
        l2: l2_used,
        warnings: vec![],
    });
    fit.warnings = warnings;
    finish(fit)
}

fn finish(mut fit: LogisticFit) -> LogisticFit {
    if !fit.converged {
        fit.warnings.push(format!("IRLS stopped after {} iterations without converging", fit.iterations));
    }
    fit
}

/// Coefficients with an L1 penalty (`penalty * |beta|_1` on the mean
/// negative log-likelihood, columns standardized internally), fit by
/// proximal Newton with cyclic coordinate descent. Returns coefficients on
/// the standardized scale.
pub fn fit_l1_logistic(cols: &[&[f64]], y: &[u8], penalty: f64) -> Vec<f64> {
    let n = y.len();
    let nf = n as f64;
    let stats: Vec<(f64, f64)> = cols
        .iter()
        .map(|c| {
            let m = c.iter().sum::<f64>() / nf;
            let v = c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / nf;
            (m, v.sqrt())
        })
        .collect();
    let z: Vec<Vec<f64>> = cols
        .iter()
        .zip(&stats)
        .map(|(c, &(m, s))| if s > 0.0 { c.iter().map(|x| (x - m) / s).collect() } else { vec![0.0; n] })
        .collect();
    let ybar = (y.iter().map(|&v| f64::from(v)).sum::<f64>() / nf).clamp(1e-6, 1.0 - 1e-6);
    let mut b0 = (ybar / (1.0 - ybar)).ln();
    let mut beta = vec![0.0; cols.len()];
    let mut eta = vec![b0; n];
    for _outer in 0..MAX_ITERATIONS {
        let mut w = vec![0.0; n];
        let mut work = vec![0.0; n];
        for i in 0..n {
            let p = sigmoid(eta[i]);
            w[i] = (p * (1.0 - p)).max(1e-5);
            work[i] = eta[i] + (f64::from(y[i]) - p) / w[i];
        }
        // residual of the quadratic approximation
        let mut r: Vec<f64> = (0..n).map(|i| work[i] - eta[i]).collect();
        let beta_start = beta.clone();
        let b0_start = b0;
        for _sweep in 0..1000 {
            let mut max_change: f64 = 0.0;
            let sw: f64 = w.iter().sum();
            let shift = (0..n).map(|i| w[i] * r[i]).sum::<f64>() / sw;
            b0 += shift;
            for i in 0..n {
                r[i] -= shift;
            }
            max_change = max_change.max(shift.abs());
            for (j, zj) in z.iter().enumerate() {
                if stats[j].1 == 0.0 {
                    continue;
                }
                let denom = (0..n).map(|i| w[i] * zj[i] * zj[i]).sum::<f64>() / nf;
                let rho = (0..n).map(|i| w[i] * zj[i] * (r[i] + zj[i] * beta[j])).sum::<f64>() / nf;
                let new = soft_threshold(rho, penalty) / denom;
                let d = new - beta[j];
                if d != 0.0 {
                    for i in 0..n {
                        r[i] -= d * zj[i];
                    }
                    beta[j] = new;
                    max_change = max_change.max(d.abs());
                }
            }
            if max_change < 1e-9 {
                break;
            }
        }
        for i in 0..n {
            eta[i] = b0 + z.iter().zip(&beta).map(|(zj, b)| zj[i] * b).sum::<f64>();
        }
        let change = beta
            .iter()
            .zip(&beta_start)
            .map(|(a, b)| (a - b).abs())
            .fold((b0 - b0_start).abs(), f64::max);
        if change < 1e-8 {
            break;
        }
    }
    beta
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}
