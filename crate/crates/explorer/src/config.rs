//! Pipeline configuration (TOML) and command-line overrides.
//!
//! ```toml
//! stack = "stack.csv"
//! out = "out"
//! workers = 4
//! memory_budget_mib = 512
//! write_dissimilarity = false
//!
//! [design]
//! mode = "random"        # random | corners | file
//! m = 1000
//! seed = 42
//! unsolvable = "resample" # resample | error
//!
//! [clustering]
//! k = "auto"             # or an integer
//! k_max = 20
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use owa_core::strategy::DEFAULT_DESIGN_SIZE;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DesignMode {
    #[default]
    Random,
    Corners,
    File,
}

/// What to do with a sampled point whose moments no truncated normal reaches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Unsolvable {
    /// Reject it in the sampler and draw again.
    #[default]
    Resample,
    /// Abort with a numerical failure.
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignConfig {
    pub mode: DesignMode,
    pub m: usize,
    pub seed: u64,
    pub file: Option<PathBuf>,
    pub unsolvable: Unsolvable,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            mode: DesignMode::Random,
            m: DEFAULT_DESIGN_SIZE,
            seed: 0,
            file: None,
            unsolvable: Unsolvable::Resample,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterCount {
    /// Use the suggested elbow of the variance curve.
    Auto,
    Fixed(usize),
}

impl std::str::FromStr for ClusterCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(ClusterCount::Auto);
        }
        s.parse()
            .map(ClusterCount::Fixed)
            .map_err(|_| Error::Config(format!("k must be an integer or \"auto\", got {s:?}")))
    }
}

impl Serialize for ClusterCount {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ClusterCount::Auto => s.serialize_str("auto"),
            ClusterCount::Fixed(k) => s.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for ClusterCount {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(k) => Ok(ClusterCount::Fixed(k as usize)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusteringConfig {
    pub k: ClusterCount,
    pub k_max: usize,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            k: ClusterCount::Auto,
            k_max: 20,
        }
    }
}

/// A modifier layer of one prepared criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModifierConfig {
    /// Built-in table (`soil`, `protected`, `flooding`, `fire`) or explicit
    /// `factors` as `[[code, factor], ...]`.
    Categorical {
        raster: PathBuf,
        table: Option<String>,
        factors: Option<Vec<(i64, f64)>>,
    },
    Continuous98 {
        raster: PathBuf,
    },
    PiecewiseDistance {
        raster: PathBuf,
        near: Option<f64>,
        far: Option<f64>,
        floor: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrepCriterion {
    pub name: String,
    pub service: String,
    pub modifier: Option<ModifierConfig>,
    /// Explicit weight; otherwise taken from the votes table by service.
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrepConfig {
    pub luc: PathBuf,
    pub capacity: PathBuf,
    pub votes: Option<PathBuf>,
    #[serde(default = "default_score_max")]
    pub score_max: f64,
    /// Directory for the criterion grids and the stack manifest.
    pub out: PathBuf,
    pub criteria: Vec<PrepCriterion>,
}

fn default_score_max() -> f64 {
    owa_core::criteria::DEFAULT_SCORE_MAX
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub criteria: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            width: 64,
            height: 64,
            criteria: 10,
            seed: 1,
            out: PathBuf::from("synth"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub stack: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub workers: Option<usize>,
    #[serde(default = "default_budget")]
    pub memory_budget_mib: usize,
    #[serde(default)]
    pub write_dissimilarity: bool,
    #[serde(default)]
    pub design: DesignConfig,
    #[serde(default)]
    pub clustering: ClusteringConfig,
    pub prep: Option<PrepConfig>,
    pub synth: Option<SynthConfig>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_budget() -> usize {
    512
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            stack: None,
            out: default_out(),
            workers: None,
            memory_budget_mib: default_budget(),
            write_dissimilarity: false,
            design: DesignConfig::default(),
            clustering: ClusteringConfig::default(),
            prep: None,
            synth: None,
        }
    }
}

/// Command-line values that win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub m: Option<usize>,
    pub k: Option<ClusterCount>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if let Some(s) = &mut self.stack {
            rebase(base, s);
        }
        rebase(base, &mut self.out);
        if let Some(f) = &mut self.design.file {
            rebase(base, f);
        }
        if let Some(p) = &mut self.prep {
            for path in [&mut p.luc, &mut p.capacity, &mut p.out] {
                rebase(base, path);
            }
            if let Some(v) = &mut p.votes {
                rebase(base, v);
            }
            for c in &mut p.criteria {
                match &mut c.modifier {
                    Some(ModifierConfig::Categorical { raster, .. })
                    | Some(ModifierConfig::Continuous98 { raster })
                    | Some(ModifierConfig::PiecewiseDistance { raster, .. }) => {
                        rebase(base, raster)
                    }
                    None => {}
                }
            }
        }
        if let Some(s) = &mut self.synth {
            rebase(base, &mut s.out);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.design.seed = seed;
            if let Some(s) = &mut self.synth {
                s.seed = seed;
            }
        }
        if let Some(m) = o.m {
            self.design.m = m;
        }
        if let Some(k) = o.k {
            self.clustering.k = k;
        }
        if let Some(w) = o.workers {
            self.workers = Some(w);
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
    }

    pub fn worker_count(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    pub fn memory_budget_bytes(&self) -> usize {
        self.memory_budget_mib.saturating_mul(1 << 20)
    }

    /// Checks the run-level invariants.
    pub fn validate(&self) -> Result<()> {
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.memory_budget_mib == 0 {
            return Err(Error::Config("memory_budget_mib must be positive".into()));
        }
        if self.design.mode == DesignMode::Random && self.design.m < 2 {
            return Err(Error::Config(format!(
                "design.m must be at least 2, got {}",
                self.design.m
            )));
        }
        if self.design.mode == DesignMode::File && self.design.file.is_none() {
            return Err(Error::Config(
                "design.mode = \"file\" needs design.file".into(),
            ));
        }
        if self.clustering.k_max == 0 {
            return Err(Error::Config("clustering.k_max must be at least 1".into()));
        }
        if self.design.mode == DesignMode::Random {
            if self.clustering.k_max > self.design.m {
                return Err(Error::Config(format!(
                    "clustering.k_max = {} exceeds design.m = {}",
                    self.clustering.k_max, self.design.m
                )));
            }
            if let ClusterCount::Fixed(k) = self.clustering.k {
                if k == 0 || k > self.design.m {
                    return Err(Error::Config(format!(
                        "k = {k} must lie in 1..={}",
                        self.design.m
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_keys() {
        let cfg = PipelineConfig::parse(
            r#"
            stack = "s.csv"
            workers = 2
            [design]
            m = 50
            seed = 7
            unsolvable = "error"
            [clustering]
            k = 4
            k_max = 10
            "#,
        )
        .unwrap();
        assert_eq!(cfg.design.m, 50);
        assert_eq!(cfg.design.unsolvable, Unsolvable::Error);
        assert_eq!(cfg.clustering.k, ClusterCount::Fixed(4));
        assert_eq!(cfg.memory_budget_mib, 512);
        cfg.validate().unwrap();

        let auto = PipelineConfig::parse("[clustering]\nk = \"auto\"").unwrap();
        assert_eq!(auto.clustering.k, ClusterCount::Auto);
        assert!(PipelineConfig::parse("[clustering]\nk = \"many\"").is_err());
        assert!(PipelineConfig::parse("bogus = 1").is_err());
    }

    #[test]
    fn overrides_win_and_limits_are_checked() {
        let mut cfg = PipelineConfig::parse("[design]\nm = 50\n[clustering]\nk_max = 10").unwrap();
        cfg.apply(&Overrides {
            m: Some(5),
            ..Default::default()
        });
        assert_eq!(cfg.design.m, 5);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.apply(&Overrides {
            m: Some(1000),
            workers: Some(0),
            ..Default::default()
        });
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn relative_paths_follow_the_config() {
        let mut cfg = PipelineConfig::parse("stack = \"a/s.csv\"\nout = \"/abs\"").unwrap();
        cfg.resolve_paths(Path::new("/base"));
        assert_eq!(cfg.stack.unwrap(), PathBuf::from("/base/a/s.csv"));
        assert_eq!(cfg.out, PathBuf::from("/abs"));
    }
}
