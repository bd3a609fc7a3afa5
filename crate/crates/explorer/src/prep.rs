//! Criterion preparation from a land-use map, a capacity matrix and modifier
//! layers.

use std::fs;
use std::path::PathBuf;

use owa_core::criteria::{
    build_criterion, criterion_weight_from_votes, CategoricalTable, DistanceBreakpoints,
    ExpertVotes, ModifierRule,
};

use crate::ascii::{read_ascii, write_ascii};
use crate::config::{ModifierConfig, PrepConfig};
use crate::error::{Error, Result};
use crate::stack::write_manifest;
use crate::tables::{read_capacity, read_votes};

#[derive(Debug, Clone)]
pub struct PrepOutput {
    pub manifest: PathBuf,
    /// Every file read, for manifest digests.
    pub inputs: Vec<PathBuf>,
}

fn builtin_table(name: &str) -> Result<CategoricalTable> {
    Ok(match name {
        "soil" | "soil_quality" => CategoricalTable::soil_quality(),
        "protected" | "protected_areas" => CategoricalTable::protected_areas(),
        "flooding" | "flooding_hazard" => CategoricalTable::flooding_hazard(),
        "fire" | "fire_hazard" => CategoricalTable::fire_hazard(),
        other => {
            return Err(Error::Config(format!(
                "unknown categorical table {other:?}"
            )))
        }
    })
}

fn rule(m: &ModifierConfig) -> Result<(ModifierRule, &PathBuf)> {
    Ok(match m {
        ModifierConfig::Categorical {
            raster,
            table,
            factors,
        } => {
            let table = match (table, factors) {
                (Some(name), None) => builtin_table(name)?,
                (None, Some(f)) => CategoricalTable::new(f.iter().copied())?,
                _ => {
                    return Err(Error::Config(
                        "categorical modifier needs exactly one of table or factors".into(),
                    ))
                }
            };
            (ModifierRule::Categorical(table), raster)
        }
        ModifierConfig::Continuous98 { raster } => (ModifierRule::Continuous98, raster),
        ModifierConfig::PiecewiseDistance {
            raster,
            near,
            far,
            floor,
        } => {
            let d = DistanceBreakpoints::default();
            let bp = DistanceBreakpoints::new(
                near.unwrap_or(d.near),
                far.unwrap_or(d.far),
                floor.unwrap_or(d.floor),
            )
            .map_err(|e| Error::Config(e.to_string()))?;
            (ModifierRule::PiecewiseDistance(bp), raster)
        }
    })
}

pub fn run_prep(cfg: &PrepConfig) -> Result<PrepOutput> {
    if cfg.criteria.len() < 2 {
        return Err(Error::Config("prep needs at least 2 criteria".into()));
    }
    let mut inputs = vec![cfg.luc.clone(), cfg.capacity.clone()];
    let luc = read_ascii(&cfg.luc)?;
    let capacity = read_capacity(&cfg.capacity, cfg.score_max)?;
    let votes: Vec<ExpertVotes> = match &cfg.votes {
        Some(p) => {
            inputs.push(p.clone());
            read_votes(p)?
        }
        None => Vec::new(),
    };
    fs::create_dir_all(&cfg.out).map_err(Error::io(&cfg.out))?;

    let mut rows = Vec::with_capacity(cfg.criteria.len());
    for c in &cfg.criteria {
        let modifier = match &c.modifier {
            Some(m) => {
                let (rule, path) = rule(m)?;
                inputs.push(path.clone());
                Some((rule, read_ascii(path)?))
            }
            None => None,
        };
        let layer = build_criterion(
            &luc,
            &capacity,
            &c.service,
            modifier.as_ref().map(|(r, l)| (r, l)),
        )
        .map_err(|e| Error::Data(format!("criterion {}: {e}", c.name)))?;
        let weight = match c.weight {
            Some(w) if w > 0.0 && w.is_finite() => w.to_string(),
            Some(w) => {
                return Err(Error::Config(format!(
                    "criterion {}: weight {w} must be positive",
                    c.name
                )))
            }
            None => {
                let v = votes
                    .iter()
                    .find(|v| v.service == c.service)
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "criterion {}: no weight and no votes for {}",
                            c.name, c.service
                        ))
                    })?;
                let w = criterion_weight_from_votes(v)?;
                match v.override_weight {
                    Some(_) => w.to_string(),
                    None => format!("{}/{}", v.count, v.total),
                }
            }
        };
        let path = cfg.out.join(format!("{}.asc", c.name));
        write_ascii(&path, &layer)?;
        rows.push((c.name.clone(), path, weight));
    }
    let manifest = cfg.out.join("stack.csv");
    write_manifest(&manifest, &rows)?;
    Ok(PrepOutput { manifest, inputs })
}
