use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Patient rows: residence unit, binary outcome and categorical covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientTable {
    pub unit_ids: Vec<String>,
    pub outcome: Vec<u8>,
    /// Covariate name -> one level per patient.
    pub covariates: BTreeMap<String, Vec<String>>,
}

/// Column names in the patient CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatientColumns {
    pub unit_id: String,
    pub outcome: String,
    pub covariates: Vec<String>,
}

impl Default for PatientColumns {
    fn default() -> Self {
        Self {
            unit_id: "unit_id".into(),
            outcome: "outcome".into(),
            covariates: Vec::new(),
        }
    }
}

impl PatientTable {
    pub fn n(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn load_csv(path: impl AsRef<Path>, columns: &PatientColumns) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        let col = |name: &str| {
            headers.iter().position(|h| h.trim() == name).ok_or_else(|| {
                Error::Validation(format!("{}: missing column {name:?}", path.display()))
            })
        };
        let id_col = col(&columns.unit_id)?;
        let y_col = col(&columns.outcome)?;
        let cov_cols = columns
            .covariates
            .iter()
            .map(|c| col(c))
            .collect::<Result<Vec<_>>>()?;

        let mut table = PatientTable {
            unit_ids: Vec::new(),
            outcome: Vec::new(),
            covariates: columns.covariates.iter().map(|c| (c.clone(), Vec::new())).collect(),
        };
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let y = match rec.get(y_col).map(str::trim) {
                Some("0") => 0,
                Some("1") => 1,
                other => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        row: row + 1,
                        message: format!("outcome must be 0 or 1, found {other:?}"),
                    })
                }
            };
            table.unit_ids.push(rec[id_col].trim().to_string());
            table.outcome.push(y);
            for (name, &c) in columns.covariates.iter().zip(&cov_cols) {
                table
                    .covariates
                    .get_mut(name)
                    .expect("initialized above")
                    .push(rec[c].trim().to_string());
            }
        }
        Ok(table)
    }
}

/// A categorical covariate and its levels; the first level is the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub levels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignSpec {
    pub n_profiles: usize,
    /// 1-based reference profile.
    pub reference_profile: usize,
    pub covariates: Vec<CovariateSpec>,
}

impl Default for DesignSpec {
    fn default() -> Self {
        Self {
            n_profiles: 1,
            reference_profile: 1,
            covariates: Vec::new(),
        }
    }
}

/// Dense row-major design matrix with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl DesignMatrix {
    pub fn new(names: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.iter().any(|r| r.len() != names.len()) {
            return Err(Error::Validation("design row length differs from column count".into()));
        }
        let mut seen = BTreeSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::Validation(format!("duplicate design column {dup:?}")));
        }
        Ok(Self { names, rows })
    }

    pub fn n_obs(&self) -> usize {
        self.rows.len()
    }

    pub fn d(&self) -> usize {
        self.names.len()
    }

    /// Names of columns that lie (numerically) in the span of earlier ones.
    pub fn collinear_columns(&self) -> Vec<String> {
        let n = self.n_obs();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut bad = Vec::new();
        for (j, name) in self.names.iter().enumerate() {
            let mut v: Vec<f64> = self.rows.iter().map(|r| r[j]).collect();
            let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for q in &basis {
                    let dot: f64 = (0..n).map(|i| q[i] * v[i]).sum();
                    for i in 0..n {
                        v[i] -= dot * q[i];
                    }
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm0 == 0.0 || norm <= 1e-9 * norm0.max(1.0) {
                bad.push(name.clone());
            } else {
                basis.push(v.into_iter().map(|x| x / norm).collect());
            }
        }
        bad
    }
}

/// Dummy-codes profile membership and covariates, omitting reference levels.
/// `assignments` maps unit id to a 1-based profile.
pub fn build_design(
    patients: &PatientTable,
    assignments: &HashMap<String, usize>,
    spec: &DesignSpec,
) -> Result<DesignMatrix> {
    if spec.reference_profile == 0 || spec.reference_profile > spec.n_profiles {
        return Err(Error::Validation(format!(
            "reference profile {} outside 1..={}",
            spec.reference_profile, spec.n_profiles
        )));
    }
    let mut missing: Vec<&str> = patients
        .unit_ids
        .iter()
        .filter(|u| !assignments.contains_key(*u))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        missing.sort_unstable();
        missing.dedup();
        return Err(Error::Validation(format!(
            "patients reference units without a profile assignment: {}",
            missing.join(", ")
        )));
    }

    let mut names = vec!["intercept".to_string()];
    let profiles: Vec<usize> = (1..=spec.n_profiles)
        .filter(|&k| k != spec.reference_profile)
        .collect();
    names.extend(profiles.iter().map(|k| format!("profile_{k}")));

    let mut level_index: Vec<(Vec<String>, HashMap<&str, usize>)> = Vec::new();
    for cov in &spec.covariates {
        let values = patients.covariates.get(&cov.name).ok_or_else(|| {
            Error::Validation(format!("patient table has no covariate {:?}", cov.name))
        })?;
        if cov.levels.is_empty() {
            return Err(Error::Validation(format!("covariate {:?} lists no levels", cov.name)));
        }
        let index: HashMap<&str, usize> = cov
            .levels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let unseen: BTreeSet<&str> = values
            .iter()
            .map(String::as_str)
            .filter(|v| !index.contains_key(v))
            .collect();
        if !unseen.is_empty() {
            return Err(Error::Validation(format!(
                "covariate {:?} has undeclared levels: {}",
                cov.name,
                unseen.into_iter().collect::<Vec<_>>().join(", ")
            )));
        }
        names.extend(cov.levels[1..].iter().map(|l| format!("{}={l}", cov.name)));
        level_index.push((values.clone(), index));
    }

    let mut rows = Vec::with_capacity(patients.n());
    for i in 0..patients.n() {
        let mut row = vec![1.0];
        let profile = assignments[&patients.unit_ids[i]];
        if profile == 0 || profile > spec.n_profiles {
            return Err(Error::Validation(format!(
                "unit {:?} has profile {profile} outside 1..={}",
                patients.unit_ids[i], spec.n_profiles
            )));
        }
        row.extend(profiles.iter().map(|&k| f64::from(u8::from(k == profile))));
        for (cov, (values, index)) in spec.covariates.iter().zip(&level_index) {
            let level = index[values[i].as_str()];
            row.extend((1..cov.levels.len()).map(|l| f64::from(u8::from(l == level))));
        }
        rows.push(row);
    }
    DesignMatrix::new(names, rows)
}
