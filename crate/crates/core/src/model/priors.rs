use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::log_sum_exp;

/// Prior on the number of components K.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KPrior {
    /// Poisson(lambda) truncated to {1, ..., k_max}.
    #[default]
    TruncatedPoisson,
    Uniform,
}

/// How the symmetric Dirichlet concentration is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DirichletKind {
    /// Every component gets `gamma`.
    #[default]
    Unit,
    /// Every component gets `1 / k_max`.
    OneOverKmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Priors {
    pub lambda: f64,
    pub k_max: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub k_prior: KPrior,
    pub dirichlet: DirichletKind,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            k_max: 50,
            gamma: 1.0,
            alpha: 1.0,
            beta: 1.0,
            k_prior: KPrior::TruncatedPoisson,
            dirichlet: DirichletKind::Unit,
        }
    }
}

impl Priors {
    pub fn with_k_max(k_max: usize) -> Self {
        Self {
            k_max,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Validation(format!("prior {name} must be positive, got {v}")))
            }
        };
        positive("lambda", self.lambda)?;
        positive("gamma", self.gamma)?;
        positive("alpha", self.alpha)?;
        positive("beta", self.beta)?;
        if self.k_max == 0 {
            return Err(Error::Validation("k_max must be at least 1".into()));
        }
        Ok(())
    }

    /// Per-component Dirichlet concentration.
    pub fn concentration(&self) -> f64 {
        match self.dirichlet {
            DirichletKind::Unit => self.gamma,
            DirichletKind::OneOverKmax => 1.0 / self.k_max as f64,
        }
    }

    /// Normalized log p(K = k); `-inf` outside {1, ..., k_max}.
    pub fn log_prior_k(&self, k: usize) -> f64 {
        if k == 0 || k > self.k_max {
            return f64::NEG_INFINITY;
        }
        match self.k_prior {
            KPrior::Uniform => -(self.k_max as f64).ln(),
            KPrior::TruncatedPoisson => {
                let unnorm = |k: usize| {
                    k as f64 * self.lambda.ln() - statrs::function::gamma::ln_gamma(k as f64 + 1.0)
                };
                let norm: Vec<f64> = (1..=self.k_max).map(unnorm).collect();
                unnorm(k) - log_sum_exp(&norm)
            }
        }
    }

    pub fn sample_k<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let logs: Vec<f64> = (1..=self.k_max).map(|k| self.log_prior_k(k)).collect();
        1 + crate::model::sample_log_categorical(&logs, rng)
    }
}
