//! Deterministic report emission. Every file opens with a provenance
//! comment (tool version, config hash, seeds), so identical inputs
//! reproduce byte-identical outputs.

use crate::config::sha256_hex;
use crate::errors::CliError;
use std::path::Path;

/// Provenance header for an emitted file. `params` is the canonical
/// parameter string the config hash is computed over (the config file
/// bytes hash when one was supplied).
pub fn provenance(params: &str, config_hash: &str, seed: Option<u64>) -> String {
    let hash = if config_hash.is_empty() {
        sha256_hex(params.as_bytes())
    } else {
        config_hash.to_string()
    };
    let seed_note = seed.map_or_else(|| "none".to_string(), |s| s.to_string());
    format!(
        "# frontier v{} config_hash={} seeds={}",
        env!("CARGO_PKG_VERSION"),
        &hash[..16],
        seed_note
    )
}

/// Write a CSV: provenance comment, optional extra metadata comments,
/// a header row, then data rows.
pub fn write_csv(
    path: &Path,
    provenance_line: &str,
    metadata: &[String],
    header: &str,
    rows: &[String],
) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str(provenance_line);
    out.push('\n');
    for line in metadata {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(row);
        out.push('\n');
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(CliError::infra)?;
        }
    }
    std::fs::write(path, out).map_err(CliError::infra)?;
    Ok(())
}

/// Shortest-round-trip float formatting shared by all reports.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
