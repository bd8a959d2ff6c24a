use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{mean, quantile_sorted};
use crate::error::{Error, Result};
use crate::regression::CoefficientSamples;

/// Point estimate of a coefficient on the odds scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointEstimate {
    /// exp of the posterior mean of beta
    #[default]
    Mean,
    /// exp of the posterior median of beta
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddsRatio {
    pub name: String,
    #[serde(rename = "or")]
    pub odds_ratio: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Odds ratios with equal-tailed credible intervals at `level`.
pub fn odds_ratios(
    samples: &CoefficientSamples,
    level: f64,
    point: PointEstimate,
) -> Result<Vec<OddsRatio>> {
    if samples.draws.is_empty() {
        return Err(Error::Validation("no coefficient draws".into()));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::Validation(format!("credible level must lie in (0, 1), got {level}")));
    }
    let tail = (1.0 - level) / 2.0;
    Ok(samples
        .names
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let mut col = samples.column(c);
            let centre = match point {
                PointEstimate::Mean => mean(&col),
                PointEstimate::Median => {
                    col.sort_by(f64::total_cmp);
                    quantile_sorted(&col, 0.5)
                }
            };
            col.sort_by(f64::total_cmp);
            OddsRatio {
                name: name.clone(),
                odds_ratio: centre.exp(),
                lower: quantile_sorted(&col, tail).exp(),
                upper: quantile_sorted(&col, 1.0 - tail).exp(),
            }
        })
        .collect())
}

/// `name, or, lower, upper`, every coefficient including the intercept.
pub fn write_odds_csv(rows: &[OddsRatio], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["name", "or", "lower", "upper"])?;
    for r in rows {
        w.write_record([
            r.name.clone(),
            format!("{:.6}", r.odds_ratio),
            format!("{:.6}", r.lower),
            format!("{:.6}", r.upper),
        ])?;
    }
    w.flush().map_err(|e| crate::Error::io(path, e))
}

/// Forest-plot rows: every coefficient except the intercept, whose
/// exponential is a baseline odds rather than a ratio.
pub fn forest_plot_json(rows: &[OddsRatio]) -> serde_json::Value {
    serde_json::Value::Array(
        rows.iter()
            .filter(|r| r.name != "intercept")
            .map(|r| serde_json::to_value(r).expect("plain struct serializes"))
            .collect(),
    )
}
