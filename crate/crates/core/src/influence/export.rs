use std::io::Write;

use super::InfluenceTable;
use crate::error::{ChefError, Result};

/// Writes `sample_id,class,score,is_best` rows, classes 1-based.
pub fn write_influence_csv<W: Write>(table: &InfluenceTable, mut out: W) -> Result<()> {
    let fail = |e: std::io::Error| ChefError::Format(format!("writing influence table: {e}"));
    writeln!(out, "sample_id,class,score,is_best").map_err(fail)?;
    for row in &table.rows {
        for (c, s) in row.scores.iter().enumerate() {
            writeln!(out, "{},{},{:?},{}", row.id, c + 1, s, c == row.best_class).map_err(fail)?;
        }
    }
    Ok(())
}
