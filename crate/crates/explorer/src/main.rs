use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};
use owa_core::strategy::generate_weights;
use owa_core::DecisionPoint;
use owa_explorer::config::{ClusterCount, Overrides, PipelineConfig, SynthConfig};
use owa_explorer::{ascii, pipeline, prep, render, synth, tables, Error, Result};

#[derive(Parser)]
#[command(
    name = "owa-explorer",
    version,
    about = "Explore the OWA decision-strategy space of a criterion stack"
)]
struct Cli {
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    m: Option<usize>,
    /// Cluster count, or "auto" for the suggested elbow.
    #[arg(long, global = true)]
    k: Option<String>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build criterion grids and a stack manifest from the [prep] section.
    Prep,
    /// Write a seeded synthetic stack.
    Synth {
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        #[arg(long)]
        criteria: Option<usize>,
    },
    /// Sample a design and write design.csv.
    Sample {
        /// Criterion count used to screen unsolvable points (default: from the stack).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Print the order weights of one decision point as CSV.
    Weights {
        #[arg(long)]
        r: f64,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 10)]
        n: usize,
    },
    /// Full pipeline: prep, sampling, batch OWA, clustering.
    Run,
    /// Re-cluster the map store of a finished run.
    Analyze { dir: PathBuf },
    /// Render an ASCII grid as a 16-bit PGM.
    Render { grid: PathBuf, output: PathBuf },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let k = cli
        .k
        .as_deref()
        .map(str::parse::<ClusterCount>)
        .transpose()?;
    cfg.apply(&Overrides {
        seed: cli.seed,
        m: cli.m,
        k,
        workers: cli.workers,
        out: cli.out.clone(),
    });
    Ok(cfg)
}

fn criterion_count(cfg: &PipelineConfig) -> Result<usize> {
    let stack = cfg
        .stack
        .as_deref()
        .ok_or_else(|| Error::Config("pass --n or set stack in the config".into()))?;
    Ok(owa_explorer::stack::read_manifest(stack)?.len())
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Prep => {
            let p = cfg
                .prep
                .as_ref()
                .ok_or_else(|| Error::Config("missing [prep] section".into()))?;
            let out = prep::run_prep(p)?;
            info!("wrote {}", out.manifest.display());
        }
        Command::Synth {
            width,
            height,
            criteria,
        } => {
            let mut s = cfg.synth.clone().unwrap_or_default();
            if cfg.synth.is_none() {
                s.seed = cli.seed.unwrap_or(SynthConfig::default().seed);
                if let Some(out) = &cli.out {
                    s.out = out.clone();
                }
            }
            let out = synth::synth_generate(
                width.unwrap_or(s.width),
                height.unwrap_or(s.height),
                criteria.unwrap_or(s.criteria),
                s.seed,
                &s.out,
            )?;
            info!("wrote {}", out.manifest.display());
        }
        Command::Sample { n } => {
            cfg.validate()?;
            let n = match n {
                Some(n) => *n,
                None => criterion_count(&cfg)?,
            };
            let (design, rejected) = pipeline::sample_points(&cfg, n)?;
            std::fs::create_dir_all(&cfg.out).map_err(Error::io(&cfg.out))?;
            let path = cfg.out.join("design.csv");
            tables::write_design(&path, &design.points)?;
            info!(
                "{} points from {} draws ({} unsolvable rejected) -> {}",
                design.len(),
                design.draws,
                rejected,
                path.display()
            );
        }
        Command::Weights { r, t, n } => {
            let w = generate_weights(DecisionPoint::new(*r, *t), *n)?;
            let cells: Vec<String> = w.as_slice().iter().map(f64::to_string).collect();
            let header: Vec<String> = (1..=*n).map(|j| format!("w_{j}")).collect();
            println!("{}", header.join(","));
            println!("{}", cells.join(","));
        }
        Command::Run => {
            let report = pipeline::run(&cfg)?;
            info!(
                "{} maps, k = {} (suggested {:?}) -> {}",
                report.maps,
                report.clustering.k,
                report.clustering.k_suggested,
                report.out.display()
            );
        }
        Command::Analyze { dir } => {
            let (dest, outcome) = pipeline::analyze(
                dir,
                &cfg.clustering,
                cfg.memory_budget_bytes(),
                cfg.worker_count(),
                cfg.write_dissimilarity,
            )?;
            info!(
                "k = {} (suggested {:?}) -> {}",
                outcome.k,
                outcome.k_suggested,
                dest.display()
            );
        }
        Command::Render { grid, output } => {
            let r = ascii::read_ascii(grid)?;
            render::render_pgm_file(&r, Path::new(output))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
