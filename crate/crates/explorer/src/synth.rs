//! Seeded synthetic criterion stacks built from low-frequency cosine mixtures.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use owa_core::criteria::ExpertVotes;
use owa_core::grid::DEFAULT_NODATA;
use owa_core::{GridMeta, Raster};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ascii::write_ascii;
use crate::error::{Error, Result};
use crate::stack::write_manifest;
use crate::tables::write_votes;

pub const CELLSIZE: f64 = 5.0;
pub const NODATA_FRACTION: f64 = 0.02;
const COMPONENTS: usize = 4;
const MAX_FREQUENCY: u32 = 3;
const EXPERTS: u32 = 15;

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub manifest: PathBuf,
    pub votes: PathBuf,
    pub grids: Vec<PathBuf>,
}

fn field(rng: &mut ChaCha8Rng, width: usize, height: usize) -> Vec<f64> {
    let waves: Vec<(f64, f64, f64, f64)> = (0..COMPONENTS)
        .map(|_| {
            let fx = rng.random_range(0..=MAX_FREQUENCY) as f64;
            let fy = rng.random_range(0..=MAX_FREQUENCY) as f64;
            (rng.random::<f64>(), fx, fy, rng.random::<f64>() * TAU)
        })
        .collect();
    let mut values = Vec::with_capacity(width * height);
    for row in 0..height {
        for col in 0..width {
            let (x, y) = (col as f64 / width as f64, row as f64 / height as f64);
            values.push(
                waves
                    .iter()
                    .map(|&(a, fx, fy, phase)| a * (TAU * (fx * x + fy * y) + phase).cos())
                    .sum(),
            );
        }
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    for v in &mut values {
        *v = if span > 0.0 { (*v - lo) / span } else { 0.5 };
    }
    values
}

/// Writes `criteria` grids `c01.asc`, ... plus `votes.csv` and `stack.csv`
/// into `out`. The last layer has about 2 % of its cells set to nodata.
pub fn synth_generate(
    width: usize,
    height: usize,
    criteria: usize,
    seed: u64,
    out: &Path,
) -> Result<SynthOutput> {
    if width < 8 || height < 8 {
        return Err(Error::Config(format!(
            "synthetic grid must be at least 8x8, got {width}x{height}"
        )));
    }
    if criteria < 2 {
        return Err(Error::Config(format!(
            "need at least 2 criteria, got {criteria}"
        )));
    }
    fs::create_dir_all(out).map_err(Error::io(out))?;
    let meta = GridMeta::new(width, height, 0.0, 0.0, CELLSIZE, DEFAULT_NODATA)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grids = Vec::with_capacity(criteria);
    let mut votes = Vec::with_capacity(criteria);
    let mut rows = Vec::with_capacity(criteria);
    for j in 0..criteria {
        let name = format!("c{:02}", j + 1);
        let mut values = field(&mut rng, width, height);
        if j + 1 == criteria {
            for v in &mut values {
                if rng.random::<f64>() < NODATA_FRACTION {
                    *v = DEFAULT_NODATA;
                }
            }
        }
        let path = out.join(format!("{name}.asc"));
        write_ascii(&path, &Raster::new(meta, values)?)?;
        let count = rng.random_range(1..=EXPERTS);
        rows.push((name.clone(), path.clone(), format!("{count}/{EXPERTS}")));
        votes.push(ExpertVotes {
            service: name,
            count,
            total: EXPERTS,
            override_weight: None,
        });
        grids.push(path);
    }
    let votes_path = out.join("votes.csv");
    write_votes(&votes_path, &votes)?;
    let manifest = out.join("stack.csv");
    write_manifest(&manifest, &rows)?;
    Ok(SynthOutput {
        manifest,
        votes: votes_path,
        grids,
    })
}
