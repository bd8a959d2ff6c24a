//! Bayesian logistic regression of a binary outcome on profile membership
//! and categorical covariates, reported as odds ratios.

mod design;
mod logistic;
mod odds;

pub use design::{
    build_design, CovariateSpec, DesignMatrix, DesignSpec, PatientColumns, PatientTable,
};
pub use logistic::{fit_logistic, simulate_logistic, CoefficientSamples, LogisticConfig};
pub use odds::{forest_plot_json, odds_ratios, write_odds_csv, OddsRatio, PointEstimate};
