//! Published per-database PLCC/SRCC tables and their count-weighted Overall columns.

use serde::{Deserialize, Serialize};
use sstam_core::metrics::weighted_overall;

use crate::error::Result;

/// Overall entries are printed to four decimals.
pub const OVERALL_TOLERANCE: f64 = 5e-5;

const BUNDLED: &str = include_str!("../data/tables.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: String,
    /// One entry per database; `None` where no result was published.
    pub values: Vec<Option<f64>>,
    pub overall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub metric: String,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedTables {
    pub databases: Vec<String>,
    pub counts: Vec<usize>,
    pub tables: Vec<Table>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverallCheck {
    pub metric: String,
    pub method: String,
    pub published: f64,
    pub recomputed: f64,
    pub matches: bool,
}

pub fn bundled() -> PublishedTables {
    serde_json::from_str(BUNDLED).expect("bundled tables are valid JSON")
}

impl PublishedTables {
    /// Recomputes every Overall entry from the per-database values and counts.
    pub fn recompute(&self) -> Result<Vec<OverallCheck>> {
        let mut out = Vec::new();
        for table in &self.tables {
            for row in &table.rows {
                let recomputed = weighted_overall(&row.values, &self.counts)?;
                out.push(OverallCheck {
                    metric: table.metric.clone(),
                    method: row.method.clone(),
                    published: row.overall,
                    recomputed,
                    matches: (recomputed - row.overall).abs() <= OVERALL_TOLERANCE,
                });
            }
        }
        Ok(out)
    }
}
