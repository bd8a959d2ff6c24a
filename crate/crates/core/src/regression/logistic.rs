use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{effective_sample_size, mean};
use crate::error::{Error, Result};
use crate::regression::DesignMatrix;
use crate::sampler::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    /// Total iterations, burn-in included.
    pub n_iterations: usize,
    pub burn_in_iterations: usize,
    pub thin: usize,
    pub seed: u64,
    pub target_acceptance: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            n_iterations: 20_000,
            burn_in_iterations: 5_000,
            thin: 5,
            seed: 1,
            target_acceptance: 0.234,
        }
    }
}

impl LogisticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::Validation("thin must be at least 1".into()));
        }
        if self.burn_in_iterations >= self.n_iterations {
            return Err(Error::Validation("burn-in must be shorter than the run".into()));
        }
        if !(0.0 < self.target_acceptance && self.target_acceptance < 1.0) {
            return Err(Error::Validation("target acceptance must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn retained_draws(&self) -> usize {
        (self.n_iterations - self.burn_in_iterations) / self.thin
    }
}

/// Retained coefficient draws with sampler diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSamples {
    pub names: Vec<String>,
    /// `draws[t][c]`
    pub draws: Vec<Vec<f64>>,
    pub map_estimate: Vec<f64>,
    /// Post-burn-in acceptance rate.
    pub acceptance_rate: f64,
    pub ess: Vec<f64>,
    pub warnings: Vec<String>,
}

impl CoefficientSamples {
    pub fn column(&self, c: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[c]).collect()
    }

    pub fn posterior_mean(&self) -> Vec<f64> {
        (0..self.names.len()).map(|c| mean(&self.column(c))).collect()
    }
}

/// log(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

struct Posterior<'a> {
    x: &'a DMatrix<f64>,
    y: DVector<f64>,
    precision: f64,
}

impl Posterior<'_> {
    fn log_density(&self, beta: &DVector<f64>) -> f64 {
        let eta = self.x * beta;
        let ll: f64 = eta
            .iter()
            .zip(self.y.iter())
            .map(|(e, y)| y * e - softplus(*e))
            .sum();
        ll - 0.5 * self.precision * beta.norm_squared()
    }

    /// Gradient and negative Hessian.
    fn derivatives(&self, beta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let eta = self.x * beta;
        let p = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
        let grad = self.x.transpose() * (&self.y - &p) - beta * self.precision;
        let w = p.map(|q| q * (1.0 - q));
        let mut xw = self.x.clone();
        for (mut row, wi) in xw.row_iter_mut().zip(w.iter()) {
            row *= *wi;
        }
        let mut info = self.x.transpose() * xw;
        for i in 0..info.nrows() {
            info[(i, i)] += self.precision;
        }
        (grad, info)
    }

    /// Damped Newton ascent; the posterior is strictly log-concave.
    fn mode(&self, d: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let mut beta = DVector::zeros(d);
        let mut lp = self.log_density(&beta);
        for _ in 0..200 {
            let (grad, info) = self.derivatives(&beta);
            let chol = Cholesky::new(info)
                .ok_or_else(|| Error::Domain("information matrix is not positive definite".into()))?;
            let step = chol.solve(&grad);
            let mut t = 1.0;
            let mut improved = false;
            while t > 1e-12 {
                let cand = &beta + &step * t;
                let lc = self.log_density(&cand);
                if lc >= lp {
                    beta = cand;
                    lp = lc;
                    improved = true;
                    break;
                }
                t *= 0.5;
            }
            if !improved || step.norm() * t < 1e-10 {
                break;
            }
        }
        let (_, info) = self.derivatives(&beta);
        Ok((beta, info))
    }
}

fn covariance_factor(cov: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    Cholesky::new(cov.clone()).map(|c| c.l())
}

fn empirical_covariance(states: &[DVector<f64>]) -> DMatrix<f64> {
    let d = states[0].len();
    let m = states.len() as f64;
    let centre = states.iter().fold(DVector::zeros(d), |acc, s| acc + s) / m;
    let mut cov = DMatrix::zeros(d, d);
    for s in states {
        let c = s - &centre;
        cov += &c * c.transpose();
    }
    cov / (m - 1.0)
}

/// Samples `beta | y` under independent Normal(0, prior_sd^2) priors with a
/// random-walk Metropolis started at the posterior mode. During burn-in the
/// proposal covariance is re-estimated from the chain and its scale is
/// adapted toward `target_acceptance`; both are frozen afterwards.
pub fn fit_logistic(
    design: &DesignMatrix,
    outcome: &[u8],
    prior_sd: f64,
    config: &LogisticConfig,
) -> Result<CoefficientSamples> {
    config.validate()?;
    if !(prior_sd > 0.0 && prior_sd.is_finite()) {
        return Err(Error::Validation(format!("prior sd must be positive, got {prior_sd}")));
    }
    if outcome.len() != design.n_obs() {
        return Err(Error::Validation(format!(
            "{} outcomes for {} design rows",
            outcome.len(),
            design.n_obs()
        )));
    }
    if let Some(i) = outcome.iter().position(|&y| y > 1) {
        return Err(Error::Validation(format!("outcome {i} is {} (must be 0 or 1)", outcome[i])));
    }
    if design.n_obs() == 0 || design.d() == 0 {
        return Err(Error::Validation("empty design matrix".into()));
    }
    let collinear = design.collinear_columns();
    if !collinear.is_empty() {
        return Err(Error::Validation(format!(
            "design matrix is rank deficient; collinear columns: {}",
            collinear.join(", ")
        )));
    }

    let d = design.d();
    let x = DMatrix::from_fn(design.n_obs(), d, |i, j| design.rows[i][j]);
    let post = Posterior {
        x: &x,
        y: DVector::from_iterator(outcome.len(), outcome.iter().map(|&y| f64::from(y))),
        precision: 1.0 / (prior_sd * prior_sd),
    };
    let (map, info) = post.mode(d)?;
    let mut factor = info
        .try_inverse()
        .and_then(|cov| covariance_factor(&cov))
        .ok_or_else(|| Error::Domain("cannot invert the information matrix at the mode".into()))?;

    let mut rng = stream_rng(config.seed, 0);
    let mut log_scale = (2.38 / (d as f64).sqrt()).ln();
    let mut beta = map.clone();
    let mut lp = post.log_density(&beta);
    let burn = config.burn_in_iterations;
    let window_start = burn / 4;
    let mut window: Vec<DVector<f64>> = Vec::new();
    let mut draws = Vec::with_capacity(config.retained_draws());
    let mut accepted_after_burn = 0usize;

    for t in 1..=config.n_iterations {
        let noise = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let cand = &beta + (&factor * noise) * log_scale.exp();
        let lc = post.log_density(&cand);
        let accept = lc - lp >= 0.0 || rng.random::<f64>().ln() < lc - lp;
        if accept {
            beta = cand;
            lp = lc;
        }
        if t <= burn {
            let rate = if accept { 1.0 } else { 0.0 };
            log_scale += (rate - config.target_acceptance) / (t as f64).powf(0.6);
            if t > window_start {
                window.push(beta.clone());
            }
            if t % 500 == 0 && window.len() >= 20 * d.max(5) {
                if let Some(f) = covariance_factor(&empirical_covariance(&window)) {
                    factor = f;
                }
            }
        } else {
            accepted_after_burn += usize::from(accept);
            if (t - burn).is_multiple_of(config.thin) {
                draws.push(beta.iter().copied().collect::<Vec<f64>>());
            }
        }
    }

    let mut samples = CoefficientSamples {
        names: design.names.clone(),
        draws,
        map_estimate: map.iter().copied().collect(),
        acceptance_rate: accepted_after_burn as f64 / (config.n_iterations - burn) as f64,
        ess: Vec::new(),
        warnings: Vec::new(),
    };
    samples.ess = (0..d).map(|c| effective_sample_size(&samples.column(c))).collect();
    for (c, m) in samples.posterior_mean().iter().enumerate() {
        if m.abs() > 10.0 && samples.ess[c] < 50.0 {
            let msg = format!(
                "possible separation: coefficient {:?} has posterior mean {m:.2} with ESS {:.1}",
                samples.names[c], samples.ess[c]
            );
            log::warn!("{msg}");
            samples.warnings.push(msg);
        }
    }
    Ok(samples)
}

/// Logistic data with an intercept and `beta.len() - 1` independent
/// Bernoulli(1/2) covariates. Returns the design and the outcomes.
pub fn simulate_logistic(n: usize, beta: &[f64], seed: u64) -> Result<(DesignMatrix, Vec<u8>)> {
    if beta.is_empty() {
        return Err(Error::Validation("beta needs an intercept".into()));
    }
    let mut rng = stream_rng(seed, 0);
    let mut names = vec!["intercept".to_string()];
    names.extend((1..beta.len()).map(|c| format!("x{c}")));
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = vec![1.0];
        row.extend((1..beta.len()).map(|_| f64::from(u8::from(rng.random::<bool>()))));
        let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
        y.push(u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp())));
        rows.push(row);
    }
    Ok((DesignMatrix::new(names, rows)?, y))
}
