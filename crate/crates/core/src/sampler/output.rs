use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::BinaryDataset;
use crate::error::{Error, Result};
use crate::sampler::{KMoveTally, SwapTally};

/// One retained cold-chain draw. Component labels in `z` are 0-based and
/// index `pi` and `theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub iteration: usize,
    pub k: usize,
    pub k_nonempty: usize,
    pub z: Vec<usize>,
    pub pi: Vec<f64>,
    /// `theta[k][j]`
    pub theta: Vec<Vec<f64>>,
    /// Collapsed log p(z, K, x) on the observed cells.
    pub log_posterior: f64,
    /// Complete-data log-likelihood including imputed cells.
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub heat: f64,
    pub k_moves: KMoveTally,
    pub final_k: usize,
    pub final_k_nonempty: usize,
}

/// Posterior mean of an unobserved cell being one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputedCell {
    pub unit: usize,
    pub variable: usize,
    pub prob_one: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub n_units: usize,
    pub n_variables: usize,
    pub draws: Vec<Draw>,
    pub swaps: SwapTally,
    pub chains: Vec<ChainDiagnostics>,
    pub imputations: Vec<ImputedCell>,
    pub k_nonempty_ess: f64,
    pub log_likelihood_ess: f64,
    pub warnings: Vec<String>,
}

impl PosteriorSamples {
    /// Wraps externally stored draws (e.g. read back from JSON lines).
    pub fn from_draws(n_units: usize, n_variables: usize, draws: Vec<Draw>) -> Self {
        Self {
            n_units,
            n_variables,
            draws,
            swaps: SwapTally::default(),
            chains: Vec::new(),
            imputations: Vec::new(),
            k_nonempty_ess: f64::NAN,
            log_likelihood_ess: f64::NAN,
            warnings: Vec::new(),
        }
    }

    /// Histogram of `k_nonempty` as (k, count), ascending in k.
    pub fn k_nonempty_histogram(&self) -> Vec<(usize, usize)> {
        let mut hist = std::collections::BTreeMap::new();
        for d in &self.draws {
            *hist.entry(d.k_nonempty).or_insert(0) += 1;
        }
        hist.into_iter().collect()
    }

    /// One JSON object per draw, one per line.
    pub fn write_draws_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for d in &self.draws {
            serde_json::to_writer(&mut w, d)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_draws_jsonl(path: impl AsRef<Path>) -> Result<Vec<Draw>> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut draws = Vec::new();
        for (row, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            draws.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                row: row + 1,
                message: e.to_string(),
            })?);
        }
        Ok(draws)
    }

    /// Copy of `data` with each unobserved cell set to 1 when its posterior
    /// mean probability is at least `threshold`.
    pub fn impute_hard(&self, data: &BinaryDataset, threshold: f64) -> Result<BinaryDataset> {
        let p = data.p();
        let mut x = Vec::with_capacity(data.n() * p);
        for i in 0..data.n() {
            x.extend_from_slice(data.row(i));
        }
        for c in &self.imputations {
            x[c.unit * p + c.variable] = u8::from(c.prob_one >= threshold);
        }
        BinaryDataset::new(
            data.unit_ids().to_vec(),
            data.column_names().to_vec(),
            x,
            vec![true; data.n() * p],
        )
    }
}
