//! Value lists given on the command line: `lo:hi[:step]` (inclusive),
//! comma-separated items, or a mix of both.

use crate::error::{CliError, Result};

/// Expand `spec` into its integer values, in order.
pub fn expand_usize(spec: &str) -> Result<Vec<usize>> {
    let bad = |why: &str| CliError::Config(format!("bad range '{spec}': {why}"));
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim) {
        let parts: Vec<&str> = item.split(':').collect();
        let num = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| bad("not a non-negative integer"))
        };
        match parts[..] {
            [v] => out.push(num(v)?),
            [lo, hi] | [lo, hi, _] => {
                let (lo, hi) = (num(lo)?, num(hi)?);
                let step = if parts.len() == 3 { num(parts[2])? } else { 1 };
                if step == 0 {
                    return Err(bad("step must be positive"));
                }
                if hi < lo {
                    return Err(bad("upper end below lower end"));
                }
                out.extend((lo..=hi).step_by(step));
            }
            _ => return Err(bad("expected lo:hi[:step]")),
        }
    }
    Ok(out)
}

/// Like [`expand_usize`] but returns the values as strings; non-numeric
/// single values pass through unchanged.
pub fn expand(spec: &str) -> Result<Vec<String>> {
    if spec.contains(':') || spec.split(',').all(|s| s.trim().parse::<usize>().is_ok()) {
        Ok(expand_usize(spec)?
            .into_iter()
            .map(|v| v.to_string())
            .collect())
    } else {
        Ok(spec.split(',').map(|s| s.trim().to_string()).collect())
    }
}
