//! End-to-end runs and re-analysis of an existing map store.
//!
//! Outputs are staged under `<out>/incomplete` and moved into place only when
//! every stage has succeeded; a failed run leaves its partial files there.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use log::{info, warn};
use owa_core::cluster::{
    block_pixels_for_budget, cluster_summaries, cut, segmentation, suggest_k, variance_ratio_curve,
    ward_linkage,
};
use owa_core::owa::rank_pixels;
use owa_core::strategy::{generate_weights, sample_design_with};
use owa_core::{
    CriterionStack, DecisionPoint, ExperimentalDesign, MapSource, OrderWeights, Raster,
    StrategyError,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ascii::{read_ascii, write_ascii};
use crate::config::{ClusterCount, ClusteringConfig, DesignMode, PipelineConfig, Unsolvable};
use crate::error::{Error, Result};
use crate::parallel::{batch_compute, pairwise_euclidean_par, thread_pool, weights_for_design};
use crate::prep::run_prep;
use crate::stack::load_stack;
use crate::store::{mask_digest, MapStoreReader, MapStoreWriter};
use crate::tables;

pub const MANIFEST: &str = "run_manifest.json";
pub const STAGING: &str = "incomplete";
pub const MAPS: &str = "maps.bin";
pub const MAP_INDEX: &str = "maps_index.csv";
pub const MASK: &str = "mask.asc";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub mode: DesignMode,
    pub m: usize,
    pub seed: u64,
    pub draws: u64,
    pub rejected_unsolvable: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringSummary {
    pub k: usize,
    pub k_suggested: Option<usize>,
    pub k_max: usize,
}

/// Provenance record written next to every set of outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    /// Files read; paths as given.
    pub inputs: Vec<FileDigest>,
    /// Files written; paths relative to the manifest's directory.
    pub outputs: Vec<FileDigest>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub stages: Vec<StageTiming>,
    pub design: Option<DesignSummary>,
    pub clustering: Option<ClusteringSummary>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

struct Stages {
    timings: Vec<StageTiming>,
}

impl Stages {
    fn run<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        info!("stage {stage}");
        let t = Instant::now();
        let out = f().map_err(|e| e.in_stage(stage))?;
        self.timings.push(StageTiming {
            stage: stage.into(),
            seconds: t.elapsed().as_secs_f64(),
        });
        Ok(out)
    }
}

fn fresh_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(Error::io(dir))?;
    }
    fs::create_dir_all(dir).map_err(Error::io(dir))
}

fn digests_of(paths: &[PathBuf]) -> Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.to_string_lossy().into_owned(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

fn output_digests(dir: &Path) -> Result<Vec<FileDigest>> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(Error::io(dir))?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_ok_and(|t| t.is_file()))
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n != MANIFEST)
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|n| {
            Ok(FileDigest {
                sha256: sha256_file(&dir.join(&n))?,
                path: n,
            })
        })
        .collect()
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Error::Data(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(Error::io(&path))
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(Error::io(&path))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Re-hashes the outputs listed in `dir`'s manifest, and the inputs that are
/// still present.
pub fn verify_manifest(dir: &Path) -> Result<RunManifest> {
    let manifest = read_manifest(dir)?;
    for d in &manifest.outputs {
        let found = sha256_file(&dir.join(&d.path))?;
        if found != d.sha256 {
            return Err(Error::Data(format!(
                "{}: digest mismatch for output {}",
                dir.display(),
                d.path
            )));
        }
    }
    for d in &manifest.inputs {
        let p = Path::new(&d.path);
        if p.exists() && sha256_file(p)? != d.sha256 {
            return Err(Error::Data(format!(
                "input {} changed since the run",
                d.path
            )));
        }
    }
    Ok(manifest)
}

/// Moves every entry of `staging` into `dest` and removes `staging`.
fn promote(staging: &Path, dest: &Path) -> Result<()> {
    fs::create_dir_all(dest).map_err(Error::io(dest))?;
    let mut entries: Vec<PathBuf> = fs::read_dir(staging)
        .map_err(Error::io(staging))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for from in entries {
        let to = dest.join(from.file_name().expect("entry name"));
        if to.is_dir() {
            fs::remove_dir_all(&to).map_err(Error::io(&to))?;
        }
        fs::rename(&from, &to).map_err(Error::io(&to))?;
    }
    fs::remove_dir(staging).map_err(Error::io(staging))
}

/// Grid marking the stack's valid cells with 1.
pub fn mask_raster(stack: &CriterionStack) -> Result<Raster> {
    let ones = vec![1.0; stack.valid_cells().len()];
    Ok(stack.expand(&ones, stack.meta().nodata_value)?)
}

fn mask_cells(mask: &Raster) -> (Vec<bool>, Vec<usize>) {
    let valid: Vec<bool> = (0..mask.len()).map(|c| mask.is_valid(c)).collect();
    let cells = (0..mask.len()).filter(|&c| valid[c]).collect();
    (valid, cells)
}

fn expand(mask: &Raster, cells: &[usize], values: &[f64]) -> Result<Raster> {
    let nodata = mask.meta().nodata_value;
    let mut out = vec![nodata; mask.len()];
    for (&c, &v) in cells.iter().zip(values) {
        out[c] = v;
    }
    Ok(Raster::new(*mask.meta(), out)?)
}

struct SampledDesign {
    design: ExperimentalDesign,
    weights: Vec<OrderWeights>,
    rejected: u64,
}

fn sample(cfg: &PipelineConfig, n: usize) -> Result<SampledDesign> {
    let d = &cfg.design;
    match d.mode {
        DesignMode::Random if d.unsolvable == Unsolvable::Resample => {
            let mut weights = Vec::with_capacity(d.m);
            let mut rejected = 0u64;
            let mut failure: Option<StrategyError> = None;
            let design = sample_design_with(d.m, d.seed, |p| {
                if failure.is_some() {
                    // stop generating work; the sampler still needs true to finish
                    return true;
                }
                match generate_weights(p, n) {
                    Ok(w) => {
                        weights.push(w);
                        true
                    }
                    Err(e) if e.is_numerical() => {
                        rejected += 1;
                        false
                    }
                    Err(e) => {
                        failure = Some(e);
                        true
                    }
                }
            });
            if let Some(e) = failure {
                return Err(e.into());
            }
            if rejected > 0 {
                warn!("resampled {rejected} points without a generating distribution");
            }
            Ok(SampledDesign {
                design,
                weights,
                rejected,
            })
        }
        mode => {
            let design = match mode {
                DesignMode::Random => owa_core::strategy::sample_design(d.m, d.seed),
                DesignMode::Corners => ExperimentalDesign::corners(),
                DesignMode::File => {
                    let path = d.file.as_ref().expect("validated");
                    ExperimentalDesign::from_points(tables::read_design(path)?)?
                }
            };
            let weights = weights_for_design(&design.points, n)?;
            Ok(SampledDesign {
                design,
                weights,
                rejected: 0,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterOutcome {
    pub k: usize,
    pub k_suggested: Option<usize>,
    pub k_max: usize,
}

struct ClusterSettings<'a> {
    clustering: &'a ClusteringConfig,
    budget_bytes: usize,
    write_dissimilarity: bool,
}

/// Distances, Ward tree, variance curve, cut and per-cluster maps, written to `dest`.
fn cluster_stage(
    stages: &mut Stages,
    store: &MapStoreReader,
    points: &[DecisionPoint],
    mask: &Raster,
    settings: &ClusterSettings,
    dest: &Path,
) -> Result<ClusterOutcome> {
    let ClusterSettings {
        clustering,
        budget_bytes,
        write_dissimilarity,
    } = *settings;
    let m = store.map_count();
    let (_, cells) = mask_cells(mask);
    if cells.len() != store.pixel_count() {
        return Err(Error::Data(format!(
            "mask has {} valid cells, store holds {} per map",
            cells.len(),
            store.pixel_count()
        )));
    }
    let block = block_pixels_for_budget(m, budget_bytes);
    let d = stages.run("distances", || pairwise_euclidean_par(store, block))?;
    if write_dissimilarity {
        let bin = dest.join("dissimilarity.bin");
        let bytes: Vec<u8> = d
            .lower_triangle()
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        fs::write(&bin, bytes).map_err(Error::io(&bin))?;
        let header = dest.join("dissimilarity.csv");
        let text = format!(
            "m,entries,layout\n{m},{},strict_lower_row_major_f64_le\n",
            d.lower_triangle().len()
        );
        fs::write(&header, text).map_err(Error::io(&header))?;
    }
    let tree = stages.run("ward", || Ok(ward_linkage(&d)))?;
    tables::write_merge_tree(&dest.join("merge_tree.csv"), &tree)?;

    let k_max = clustering.k_max.min(m);
    let curve = stages.run("curve", || {
        Ok(variance_ratio_curve(store, &tree, k_max, block)?)
    })?;
    tables::write_variance_curve(&dest.join("variance_curve.csv"), &curve)?;
    let k_suggested = suggest_k(&curve);
    if let Some(s) = k_suggested {
        info!("suggested k = {s} (largest drop of the variance ratio)");
    }
    let k = match clustering.k {
        ClusterCount::Fixed(k) => k,
        ClusterCount::Auto => k_suggested.ok_or_else(|| {
            Error::Config("k = \"auto\" needs clustering.k_max of at least 2".into())
        })?,
    };
    let labels = cut(&tree, k)?;
    let summary = stages.run("summaries", || {
        Ok(cluster_summaries(store, points, &labels, block)?)
    })?;
    tables::write_clusters(&dest.join("clusters.csv"), &summary)?;
    tables::write_segmentation(
        &dest.join("segmentation.csv"),
        &segmentation(points, &labels)?,
    )?;
    for c in &summary.clusters {
        write_ascii(
            &dest.join(format!("cluster{}_mean.asc", c.id)),
            &expand(mask, &cells, &c.mean)?,
        )?;
        write_ascii(
            &dest.join(format!("cluster{}_std.asc", c.id)),
            &expand(mask, &cells, &c.std)?,
        )?;
    }
    Ok(ClusterOutcome {
        k,
        k_suggested,
        k_max,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub out: PathBuf,
    pub maps: usize,
    pub rejected_unsolvable: u64,
    pub clustering: ClusterOutcome,
}

/// Prep (when configured), sampling, batch OWA, clustering and manifest.
pub fn run(cfg: &PipelineConfig) -> Result<RunReport> {
    cfg.validate()?;
    let pool = thread_pool(cfg.worker_count())?;
    pool.install(|| run_in_pool(cfg))
}

fn run_in_pool(cfg: &PipelineConfig) -> Result<RunReport> {
    let started = unix_now();
    let mut stages = Stages {
        timings: Vec::new(),
    };
    let staging = cfg.out.join(STAGING);
    fresh_dir(&staging)?;

    let mut inputs = Vec::new();
    let manifest_path = match &cfg.prep {
        Some(prep) => {
            let out = stages.run("prep", || run_prep(prep))?;
            inputs.extend(out.inputs);
            out.manifest
        }
        None => cfg
            .stack
            .clone()
            .ok_or_else(|| Error::Config("either stack or [prep] must be set".into()))?,
    };
    let (stack, entries) = stages.run("load", || load_stack(&manifest_path))?;
    inputs.push(manifest_path.clone());
    inputs.extend(entries.iter().map(|e| e.path.clone()));
    if let (DesignMode::File, Some(f)) = (cfg.design.mode, &cfg.design.file) {
        inputs.push(f.clone());
    }
    let n = stack.criterion_count();
    info!(
        "stack: {n} criteria, {} valid cells",
        stack.valid_cells().len()
    );

    let sampled = stages.run("sample", || sample(cfg, n))?;
    let points = &sampled.design.points;
    if let ClusterCount::Fixed(k) = cfg.clustering.k {
        if k == 0 || k > points.len() {
            return Err(Error::Config(format!(
                "k = {k} must lie in 1..={}",
                points.len()
            )));
        }
    }
    if points.len() < 2 {
        return Err(Error::Config(
            "clustering needs at least 2 design points".into(),
        ));
    }
    tables::write_design(&staging.join("design.csv"), points)?;
    tables::write_weights(&staging.join("weights.csv"), &sampled.weights)?;

    let budget = cfg.memory_budget_bytes();
    let mask = mask_raster(&stack)?;
    let digest = mask_digest(stack.meta().ncols, stack.meta().nrows, stack.valid_mask());
    stages.run("owa", || {
        let cache = rank_pixels(&stack);
        let path = staging.join(MAPS);
        let mut store =
            MapStoreWriter::create(&path, points.len(), stack.valid_cells().len(), digest)?;
        batch_compute(&stack, &cache, &sampled.weights, budget, &mut store)?;
        store.finish()?;
        let provenance: Vec<Option<DecisionPoint>> =
            sampled.weights.iter().map(|w| w.provenance()).collect();
        tables::write_map_index(&staging.join(MAP_INDEX), &provenance)?;
        write_ascii(&staging.join(MASK), &mask)
    })?;

    let store = MapStoreReader::open(&staging.join(MAPS))?;
    let outcome = cluster_stage(
        &mut stages,
        &store,
        points,
        &mask,
        &ClusterSettings {
            clustering: &cfg.clustering,
            budget_bytes: budget,
            write_dissimilarity: cfg.write_dissimilarity,
        },
        &staging,
    )?;
    drop(store);

    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "run".into(),
        config: serde_json::to_value(cfg).map_err(|e| Error::Data(e.to_string()))?,
        inputs: digests_of(&inputs)?,
        outputs: output_digests(&staging)?,
        started_unix: started,
        finished_unix: unix_now(),
        stages: stages.timings,
        design: Some(DesignSummary {
            mode: cfg.design.mode,
            m: points.len(),
            seed: sampled.design.seed,
            draws: sampled.design.draws,
            rejected_unsolvable: sampled.rejected,
        }),
        clustering: Some((&outcome).into()),
    };
    write_manifest(&staging, &manifest)?;
    promote(&staging, &cfg.out)?;
    Ok(RunReport {
        out: cfg.out.clone(),
        maps: points.len(),
        rejected_unsolvable: sampled.rejected,
        clustering: outcome,
    })
}

impl From<&ClusterOutcome> for ClusteringSummary {
    fn from(o: &ClusterOutcome) -> Self {
        ClusteringSummary {
            k: o.k,
            k_suggested: o.k_suggested,
            k_max: o.k_max,
        }
    }
}

/// Re-clusters the map store of a finished run into `<dir>/analysis-k<K>`.
pub fn analyze(
    dir: &Path,
    clustering: &ClusteringConfig,
    memory_budget_bytes: usize,
    workers: usize,
    write_dissimilarity: bool,
) -> Result<(PathBuf, ClusterOutcome)> {
    let pool = thread_pool(workers)?;
    pool.install(|| {
        let started = unix_now();
        let mut stages = Stages {
            timings: Vec::new(),
        };
        let run_manifest = stages.run("verify", || verify_manifest(dir))?;
        for name in [MAPS, MAP_INDEX, MASK] {
            if !run_manifest.outputs.iter().any(|d| d.path == name) {
                return Err(Error::Data(format!(
                    "{}: manifest does not list {name}",
                    dir.display()
                )));
            }
        }
        let mask = read_ascii(&dir.join(MASK))?;
        let (valid, _) = mask_cells(&mask);
        let store = MapStoreReader::open(&dir.join(MAPS))?;
        store.check_mask(mask_digest(mask.meta().ncols, mask.meta().nrows, &valid))?;
        let points: Vec<DecisionPoint> = tables::read_map_index(&dir.join(MAP_INDEX))?
            .into_iter()
            .map(|p| {
                p.ok_or_else(|| Error::Data("map store has maps without a decision point".into()))
            })
            .collect::<Result<_>>()?;
        if points.len() != store.map_count() {
            return Err(Error::Data(format!(
                "{} index rows for {} stored maps",
                points.len(),
                store.map_count()
            )));
        }

        let staging = dir.join(format!("analysis-{STAGING}"));
        fresh_dir(&staging)?;
        let outcome = cluster_stage(
            &mut stages,
            &store,
            &points,
            &mask,
            &ClusterSettings {
                clustering,
                budget_bytes: memory_budget_bytes,
                write_dissimilarity,
            },
            &staging,
        )?;
        let inputs = [MAPS, MAP_INDEX, MASK]
            .iter()
            .map(|n| {
                Ok(FileDigest {
                    path: dir.join(n).to_string_lossy().into_owned(),
                    sha256: sha256_file(&dir.join(n))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: "analyze".into(),
            config: serde_json::json!({
                "clustering": clustering,
                "memory_budget_bytes": memory_budget_bytes,
                "workers": workers,
                "write_dissimilarity": write_dissimilarity,
            }),
            inputs,
            outputs: output_digests(&staging)?,
            started_unix: started,
            finished_unix: unix_now(),
            stages: stages.timings,
            design: None,
            clustering: Some((&outcome).into()),
        };
        write_manifest(&staging, &manifest)?;
        let dest = dir.join(format!("analysis-k{}", outcome.k));
        if dest.exists() {
            fs::remove_dir_all(&dest).map_err(Error::io(&dest))?;
        }
        fs::rename(&staging, &dest).map_err(Error::io(&dest))?;
        Ok((dest, outcome))
    })
}

/// Design points for the `sample` subcommand, honouring the unsolvable policy.
pub fn sample_points(cfg: &PipelineConfig, n: usize) -> Result<(ExperimentalDesign, u64)> {
    let s = sample(cfg, n)?;
    Ok((s.design, s.rejected))
}
