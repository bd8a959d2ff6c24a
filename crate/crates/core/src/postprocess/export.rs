//! Tabular and GeoJSON exports of a [`ProfileSummary`]. Profiles are numbered
//! from 1 in every export.

use std::collections::HashMap;
use std::path::Path;

use serde_json::{Map, Value};

use crate::diagnostics::quantile_sorted;
use crate::error::{Error, Result};
use crate::postprocess::ProfileSummary;

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

/// `unit_id, profile, max_probability, prob_1, ..., prob_K`.
pub fn write_assignments_csv(
    summary: &ProfileSummary,
    unit_ids: &[String],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if unit_ids.len() != summary.hard_assignment.len() {
        return Err(Error::Validation("unit id count differs from the summary".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["unit_id".to_string(), "profile".into(), "max_probability".into()];
    header.extend((1..=summary.k).map(|k| format!("prob_{k}")));
    w.write_record(&header)?;
    for (i, id) in unit_ids.iter().enumerate() {
        let row = &summary.assignment_probability[i];
        let c = summary.hard_assignment[i];
        let mut rec = vec![id.clone(), (c + 1).to_string(), fmt(row[c])];
        rec.extend(row.iter().map(|v| fmt(*v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads `unit_id -> profile` (1-based) from an assignments CSV.
pub fn read_assignments_csv(path: impl AsRef<Path>) -> Result<HashMap<String, usize>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Validation(format!("{}: missing column {name}", path.display())))
    };
    let (id_col, prof_col) = (col("unit_id")?, col("profile")?);
    let mut out = HashMap::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let profile = rec[prof_col].trim().parse::<usize>().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            row: row + 1,
            message: format!("bad profile label {:?}", &rec[prof_col]),
        })?;
        out.insert(rec[id_col].to_string(), profile);
    }
    Ok(out)
}

/// Rows are variables, columns the posterior mean theta of each profile.
pub fn write_theta_csv(
    summary: &ProfileSummary,
    column_names: &[String],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["variable".to_string()];
    header.extend((1..=summary.k).map(|k| format!("profile_{k}")));
    w.write_record(&header)?;
    for (j, name) in column_names.iter().enumerate() {
        let mut rec = vec![name.clone()];
        rec.extend(summary.theta_mean.iter().map(|t| fmt(t[j])));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-profile weight, size and the spread of the members' assignment
/// probabilities (min, quartiles, max).
pub fn write_profiles_csv(summary: &ProfileSummary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let sizes = summary.sizes();
    let n = summary.hard_assignment.len() as f64;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "profile", "pi_mean", "n_units", "fraction", "prob_min", "prob_q25", "prob_median",
        "prob_q75", "prob_max",
    ])?;
    for k in 0..summary.k {
        let mut probs: Vec<f64> = summary
            .hard_assignment
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == k)
            .map(|(i, _)| summary.assignment_probability[i][k])
            .collect();
        probs.sort_by(f64::total_cmp);
        let q = |x: f64| {
            if probs.is_empty() {
                String::new()
            } else {
                fmt(quantile_sorted(&probs, x))
            }
        };
        w.write_record([
            (k + 1).to_string(),
            fmt(summary.pi_mean[k]),
            sizes[k].to_string(),
            fmt(sizes[k] as f64 / n),
            q(0.0),
            q(0.25),
            q(0.5),
            q(0.75),
            q(1.0),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Outcome of a GeoJSON join.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoJoin {
    pub geojson: Value,
    /// Feature keys with no matching unit.
    pub unmatched: Vec<String>,
}

/// Copies a FeatureCollection, adding `profile`, `profile_probability` and
/// `prob_<k>` to the properties of every feature whose `key_property`
/// matches a unit id.
pub fn join_geojson(
    geojson: &Value,
    key_property: &str,
    summary: &ProfileSummary,
    unit_ids: &[String],
) -> Result<GeoJoin> {
    let index: HashMap<&str, usize> = unit_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut out = geojson.clone();
    let features = out
        .get_mut("features")
        .and_then(Value::as_array_mut)
        .ok_or_else(|| Error::Validation("GeoJSON has no features array".into()))?;
    let mut unmatched = Vec::new();
    for feature in features.iter_mut() {
        let props = feature
            .as_object_mut()
            .ok_or_else(|| Error::Validation("feature is not an object".into()))?
            .entry("properties")
            .or_insert_with(|| Value::Object(Map::new()));
        let props = props
            .as_object_mut()
            .ok_or_else(|| Error::Validation("feature properties are not an object".into()))?;
        let key = match props.get(key_property) {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => {
                unmatched.push(String::new());
                continue;
            }
        };
        let Some(&i) = index.get(key.as_str()) else {
            unmatched.push(key);
            continue;
        };
        let c = summary.hard_assignment[i];
        let row = &summary.assignment_probability[i];
        props.insert("profile".into(), Value::from(c + 1));
        props.insert("profile_probability".into(), Value::from(row[c]));
        for (k, p) in row.iter().enumerate() {
            props.insert(format!("prob_{}", k + 1), Value::from(*p));
        }
    }
    Ok(GeoJoin {
        geojson: out,
        unmatched,
    })
}
