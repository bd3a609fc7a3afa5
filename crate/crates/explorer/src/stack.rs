//! Stack manifests: a CSV listing `name, path, weight`.
//!
//! `weight` is either a number or a vote fraction `count/total`. Relative grid
//! paths are resolved against the manifest's directory.

use std::path::{Path, PathBuf};

use owa_core::criteria::{criterion_weight_from_votes, ExpertVotes};
use owa_core::grid::build_stack;
use owa_core::CriterionStack;

use crate::ascii::read_ascii;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub name: String,
    pub path: PathBuf,
    pub weight: f64,
}

pub fn parse_weight(s: &str) -> Result<f64> {
    if let Some((count, total)) = s.split_once('/') {
        let parse = |x: &str| {
            x.trim()
                .parse::<u32>()
                .map_err(|_| Error::Data(format!("bad vote fraction {s:?}")))
        };
        let votes = ExpertVotes {
            service: String::new(),
            count: parse(count)?,
            total: parse(total)?,
            override_weight: None,
        };
        return Ok(criterion_weight_from_votes(&votes)?);
    }
    let w: f64 = s
        .parse()
        .map_err(|_| Error::Data(format!("bad weight {s:?}")))?;
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::Data(format!("weight {s:?} must be positive")));
    }
    Ok(w)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rd = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(Error::csv(path))?;
    let mut entries = Vec::new();
    for (n, rec) in rd.records().enumerate() {
        let rec = rec.map_err(Error::csv(path))?;
        let ctx = |e: Error| Error::Data(format!("{}:{}: {e}", path.display(), n + 2));
        if rec.len() < 3 {
            return Err(ctx(Error::Data("expected name, path, weight".into())));
        }
        entries.push(ManifestEntry {
            name: rec[0].to_string(),
            path: base.join(&rec[1]),
            weight: parse_weight(&rec[2]).map_err(ctx)?,
        });
    }
    Ok(entries)
}

/// Loads every grid of the manifest and assembles the stack.
pub fn load_stack(manifest: &Path) -> Result<(CriterionStack, Vec<ManifestEntry>)> {
    let entries = read_manifest(manifest)?;
    let mut layers = Vec::with_capacity(entries.len());
    for e in &entries {
        layers.push((e.name.clone(), read_ascii(&e.path)?));
    }
    let weights: Vec<f64> = entries.iter().map(|e| e.weight).collect();
    Ok((build_stack(layers, &weights)?, entries))
}

/// Writes a manifest with paths relative to its own directory where possible.
pub fn write_manifest(path: &Path, rows: &[(String, PathBuf, String)]) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut w = csv::Writer::from_path(path).map_err(Error::csv(path))?;
    w.write_record(["name", "path", "weight"])
        .map_err(Error::csv(path))?;
    for (name, grid, weight) in rows {
        let rel = grid.strip_prefix(base).unwrap_or(grid);
        w.write_record([name.as_str(), &rel.to_string_lossy(), weight.as_str()])
            .map_err(Error::csv(path))?;
    }
    w.flush().map_err(Error::io(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_accept_numbers_and_fractions() {
        assert_eq!(parse_weight("0.53").unwrap(), 0.53);
        assert!((parse_weight("8/15").unwrap() - 8.0 / 15.0).abs() < 1e-15);
        assert!(parse_weight("0/15").is_err());
        assert!(parse_weight("-1").is_err());
        assert!(parse_weight("x").is_err());
    }
}
