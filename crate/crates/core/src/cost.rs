//! Per-Q&A provider cost table and cost estimates.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// Bundled per-Q&A costs; copied into the data directory where it can be
/// edited.
pub const BUNDLED_COSTS_CSV: &str = include_str!("../data/costs.csv");

pub const BASELINE_PROVIDER: &str = "DeepSeek-V3";

#[derive(Debug, Deserialize)]
struct CostRow {
    provider: String,
    cost_per_qa_usd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    per_qa_usd: BTreeMap<String, f64>,
}

impl Default for CostModel {
    fn default() -> Self {
        Self::from_csv(BUNDLED_COSTS_CSV.as_bytes()).expect("bundled cost table is valid")
    }
}

impl CostModel {
    pub fn new(per_qa_usd: BTreeMap<String, f64>) -> Result<Self> {
        if let Some((label, cost)) = per_qa_usd.iter().find(|(_, c)| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::Config(format!(
                "cost for `{label}` must be a positive number, got {cost}"
            )));
        }
        Ok(Self { per_qa_usd })
    }

    /// Reads `provider,cost_per_qa_usd[,...]` rows; extra columns are ignored.
    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
        let mut table = BTreeMap::new();
        for row in reader.deserialize::<CostRow>() {
            let row = row?;
            table.insert(row.provider, row.cost_per_qa_usd);
        }
        Self::new(table)
    }

    /// Loads `path`, writing the bundled table there first if it is absent.
    pub fn load_or_seed(path: &Path) -> Result<Self> {
        if !path.exists() {
            fs::write(path, BUNDLED_COSTS_CSV)?;
        }
        Self::from_csv(&fs::read(path)?)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.per_qa_usd.keys().map(String::as_str)
    }

    /// Cost per Q&A in USD. Labels match case-insensitively.
    pub fn per_qa(&self, label: &str) -> Result<f64> {
        self.per_qa_usd
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(label.trim()))
            .map(|(_, &c)| c)
            .ok_or_else(|| Error::UnknownProvider {
                label: label.to_string(),
                known: self.per_qa_usd.keys().cloned().collect(),
            })
    }

    /// `per_qa × n_queries × (1 − cache_hit_rate)`.
    pub fn estimate_cost(&self, label: &str, n_queries: u64, cache_hit_rate: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&cache_hit_rate) {
            return Err(Error::InvalidRequest(format!(
                "cache hit rate must be within [0, 1], got {cache_hit_rate}"
            )));
        }
        Ok(self.per_qa(label)? * n_queries as f64 * (1.0 - cache_hit_rate))
    }

    pub fn cost_ratio(&self, a: &str, b: &str) -> Result<f64> {
        Ok(self.per_qa(a)? / self.per_qa(b)?)
    }
}
