pub mod bench;
pub mod dist;
pub mod model;
pub mod solve;
pub mod sweep;

use std::io::Write;

use crate::error::Result;
use crate::table::Table;

/// Print `table` to stdout as CSV or JSON.
pub fn emit(table: &Table, json: bool) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    table.write(json, &mut out)?;
    out.flush()?;
    Ok(())
}
