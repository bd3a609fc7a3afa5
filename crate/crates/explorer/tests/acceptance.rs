//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use owa_core::cluster::{pairwise_euclidean, variance_ratio_curve, ward_linkage};
use owa_core::strategy::{
    discretize, empirical_risk, generate_weights, sample_design, solve_generating_distribution,
};
use owa_core::{DecisionPoint, InMemoryMaps, Raster, StrategyError};
use owa_explorer::ascii::write_ascii;
use owa_explorer::config::{ClusterCount, DesignMode, PipelineConfig};
use owa_explorer::parallel::pairwise_euclidean_par;
use owa_explorer::pipeline::{run, MANIFEST, MAPS};
use owa_explorer::stack::load_stack;
use owa_explorer::store::MapStoreReader;
use owa_explorer::synth::synth_generate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use oracles::{brute_force_ward, euclid, node_members, truncnorm_moments_quad};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn ran(start: Instant) -> Duration {
    start.elapsed()
}

fn run_pipeline(
    stack: &Path,
    out: &Path,
    m: usize,
    k: usize,
    workers: usize,
    mode: DesignMode,
) -> Result<(), String> {
    let mut cfg = PipelineConfig {
        stack: Some(stack.to_path_buf()),
        out: out.to_path_buf(),
        workers: Some(workers),
        ..Default::default()
    };
    cfg.design.mode = mode;
    cfg.design.m = m;
    cfg.clustering.k = ClusterCount::Fixed(k);
    cfg.clustering.k_max = k.max(2).min(m);
    run(&cfg).map(|_| ()).map_err(|e| e.to_string())
}

fn random_stack(dir: &Path, rng: &mut ChaCha8Rng) -> PathBuf {
    let (w, h, n) = (13, 7, 5);
    let meta = owa_core::GridMeta::new(w, h, 0.0, 0.0, 10.0, -9999.0).unwrap();
    let mut text = String::from("name,path,weight\n");
    for c in 0..n {
        let values: Vec<f64> = (0..w * h)
            .map(|_| {
                if rng.random::<f64>() < 0.05 {
                    -9999.0
                } else {
                    rng.random()
                }
            })
            .collect();
        let name = format!("k{c}");
        write_ascii(
            &dir.join(format!("{name}.asc")),
            &Raster::new(meta, values).unwrap(),
        )
        .unwrap();
        text.push_str(&format!("{name},{name}.asc,{}\n", rng.random_range(1..10)));
    }
    let path = dir.join("stack.csv");
    fs::write(&path, text).unwrap();
    path
}

fn corner_exactness() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let synth =
        synth_generate(16, 12, 6, 4, &tmp.path().join("synth")).map_err(|e| e.to_string())?;
    let random = tmp.path().join("random");
    fs::create_dir_all(&random).unwrap();
    let random = random_stack(&random, &mut rng);
    let mut worst = 0.0f64;
    let mut pixels = 0;
    for (i, manifest) in [synth.manifest, random].iter().enumerate() {
        let out = tmp.path().join(format!("out{i}"));
        run_pipeline(manifest, &out, 3, 3, 1, DesignMode::Corners)?;
        let (stack, _) = load_stack(manifest).map_err(|e| e.to_string())?;
        let store = MapStoreReader::open(&out.join(MAPS)).map_err(|e| e.to_string())?;
        let maps: Vec<Vec<f64>> = (0..3).map(|k| store.read_map(k).unwrap()).collect();
        let v = stack.weights().as_slice();
        for (p, &cell) in stack.valid_cells().iter().enumerate() {
            let z: Vec<f64> = stack.pixel_values(cell).collect();
            let min = z.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let wlc: f64 = z.iter().zip(v).map(|(a, b)| a * b).sum();
            for (got, want) in [(maps[0][p], min), (maps[1][p], max), (maps[2][p], wlc)] {
                worst = worst.max((got - want).abs());
            }
            pixels += 1;
        }
    }
    check(worst <= 1e-12, format!("max deviation {worst:e}"))?;
    Ok(format!(
        "{pixels} pixels on 2 stacks, max deviation {worst:e}"
    ))
}

fn moment_fidelity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 10;
    let (mut checked, mut unsolvable) = (0, Vec::new());
    let (mut worst_moment, mut worst_risk) = (0.0f64, 0.0f64);
    while checked + unsolvable.len() < 100 {
        let (r, t): (f64, f64) = (rng.random(), rng.random());
        if t < 0.05 || t > 0.95 * 4.0 * r * (1.0 - r) {
            continue;
        }
        let p = DecisionPoint::new(r, t);
        match solve_generating_distribution(p) {
            Ok(spec) => {
                let (mean, std) = truncnorm_moments_quad(spec.mu(), spec.sigma());
                worst_moment = worst_moment
                    .max((mean - r).abs())
                    .max((std - t / 12f64.sqrt()).abs());
                let w = discretize(&spec, n).map_err(|e| e.to_string())?;
                worst_risk = worst_risk.max((empirical_risk(&w) - r).abs());
                checked += 1;
            }
            Err(StrategyError::NoSolution { .. }) => unsolvable.push((r, t)),
            Err(e) => return Err(format!("({r}, {t}): {e}")),
        }
    }
    let elapsed = ran(start);
    let summary = format!(
        "{checked} solved, {} without solution {:?}, moment error {worst_moment:.2e}, \
         risk error {worst_risk:.4} (bound {}), {elapsed:.2?}",
        unsolvable.len(),
        unsolvable,
        0.5 / n as f64 + 1e-6
    );
    check(unsolvable.is_empty(), summary.clone())?;
    check(worst_moment <= 1e-6, summary.clone())?;
    check(worst_risk <= 0.5 / n as f64 + 1e-6, summary.clone())?;
    check(elapsed < Duration::from_secs(5), summary.clone())?;
    Ok(summary)
}

fn vertex_uniformity() -> Outcome {
    let w = generate_weights(DecisionPoint::FULL_TRADE_OFF, 10).map_err(|e| e.to_string())?;
    let worst = w
        .as_slice()
        .iter()
        .map(|x| (x - 0.1).abs())
        .fold(0.0, f64::max);
    check(
        w.len() == 10 && worst <= 1e-3,
        format!("max deviation {worst:e}"),
    )?;
    Ok(format!("max deviation from 0.1: {worst:e}"))
}

fn ward_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for instance in 0..50 {
        let m = rng.random_range(2..=8);
        let dim = rng.random_range(1..=6);
        let pts: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..dim).map(|_| rng.random()).collect())
            .collect();
        let d =
            pairwise_euclidean(&InMemoryMaps::new(&pts).unwrap(), 4).map_err(|e| e.to_string())?;
        let tree = ward_linkage(&d);
        let brute = brute_force_ward(&pts);
        let pairs: Vec<(usize, usize)> = tree.merges.iter().map(|s| (s.a, s.b)).collect();
        let nodes = node_members(m, &pairs);
        for (step, (ours, theirs)) in tree.merges.iter().zip(&brute).enumerate() {
            let mut joined = theirs.left.clone();
            joined.extend(&theirs.right);
            joined.sort_unstable();
            check(
                nodes[m + step] == joined,
                format!("instance {instance} step {step}: partition differs"),
            )?;
            worst = worst.max((ours.height - theirs.height).abs());
        }
    }
    let elapsed = ran(start);
    check(worst <= 1e-9, format!("height deviation {worst:e}"))?;
    check(
        elapsed < Duration::from_secs(10),
        format!("took {elapsed:.2?}"),
    )?;
    Ok(format!(
        "50 instances, identical partitions, height deviation {worst:e}, {elapsed:.2?}"
    ))
}

struct DeskRun {
    _tmp: tempfile::TempDir,
    stack: PathBuf,
    out: PathBuf,
    elapsed: Duration,
}

fn desk_run() -> Result<DeskRun, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let synth =
        synth_generate(64, 64, 10, 1, &tmp.path().join("synth")).map_err(|e| e.to_string())?;
    let out = tmp.path().join("run1");
    let start = Instant::now();
    run_pipeline(&synth.manifest, &out, 200, 4, 1, DesignMode::Random)?;
    Ok(DeskRun {
        stack: synth.manifest,
        out,
        elapsed: start.elapsed(),
        _tmp: tmp,
    })
}

fn variance_curve(desk: &DeskRun) -> Outcome {
    let store = MapStoreReader::open(&desk.out.join(MAPS)).map_err(|e| e.to_string())?;
    let d = pairwise_euclidean_par(&store, 1024).map_err(|e| e.to_string())?;
    let tree = ward_linkage(&d);
    let m = d.len();
    let curve = variance_ratio_curve(&store, &tree, m, 1024).map_err(|e| e.to_string())?;
    check(
        curve[0].ratio == 1.0,
        format!("ratio(1) = {}", curve[0].ratio),
    )?;
    check(
        curve[m - 1].ratio == 0.0,
        format!("ratio(m) = {}", curve[m - 1].ratio),
    )?;
    let (mut worst_rel, mut worst_total) = (0.0f64, 0.0f64);
    let mut beyond = Vec::new();
    for (i, c) in curve.iter().enumerate() {
        if i > 0 {
            check(
                c.ratio <= curve[i - 1].ratio,
                format!("ratio rises at k = {}", c.k),
            )?;
        }
        let diff = (c.within - c.within_from_between).abs();
        let scale = c.within.abs().max(c.within_from_between.abs());
        let rel = if diff == 0.0 { 0.0 } else { diff / scale };
        if rel > 1e-6 {
            beyond.push(c.k);
        }
        worst_rel = worst_rel.max(rel);
        worst_total = worst_total.max(diff / c.total);
    }
    let summary = format!(
        "k = 1..{m}, non-increasing; W(k) vs T - B(k): worst relative {worst_rel:.2e}, \
         worst relative to T {worst_total:.2e}, beyond 1e-6 at k = {beyond:?} (min W there {:.2e})",
        beyond
            .iter()
            .map(|&k| curve[k - 1].within)
            .fold(f64::INFINITY, f64::min)
    );
    check(beyond.is_empty(), summary.clone())?;
    Ok(summary)
}

fn dissimilarity(desk: &DeskRun) -> Outcome {
    let store = MapStoreReader::open(&desk.out.join(MAPS)).map_err(|e| e.to_string())?;
    let d = pairwise_euclidean_par(&store, 1000).map_err(|e| e.to_string())?;
    let m = d.len();
    for a in 0..m {
        check(
            d.get(a, a) == 0.0,
            format!("diagonal {a} = {}", d.get(a, a)),
        )?;
        for b in 0..a {
            check(
                d.get(a, b) == d.get(b, a),
                format!("asymmetric at ({a}, {b})"),
            )?;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = f64::NEG_INFINITY;
    let (pa, pb) = (store.read_map(0).unwrap(), store.read_map(1).unwrap());
    let direct = (d.get(0, 1) - euclid(&pa, &pb)).abs();
    for _ in 0..1000 {
        let (a, b, c) = (
            rng.random_range(0..m),
            rng.random_range(0..m),
            rng.random_range(0..m),
        );
        worst = worst.max(d.get(a, c) - d.get(a, b) - d.get(b, c));
    }
    check(worst <= 1e-9, format!("triangle violation {worst:e}"))?;
    check(
        direct <= 1e-9,
        format!("distance differs from direct sum by {direct:e}"),
    )?;
    Ok(format!(
        "{m} maps, symmetric, zero diagonal, max triangle excess {worst:.2e}"
    ))
}

fn cluster_rows(out: &Path) -> Vec<(f64, f64)> {
    let text = fs::read_to_string(out.join("clusters.csv")).unwrap();
    text.lines()
        .skip(1)
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            (f[2].parse().unwrap(), f[4].parse().unwrap())
        })
        .collect()
}

fn structural(desk: &DeskRun) -> Outcome {
    let mut rows = cluster_rows(&desk.out);
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let means: Vec<String> = rows
        .iter()
        .map(|(r, g)| format!("r {r:.3} -> {g:.4}"))
        .collect();
    let summary = format!("{} in {:.2?}", means.join(", "), desk.elapsed);
    check(rows.len() == 4, summary.clone())?;
    check(rows.windows(2).all(|w| w[1].1 > w[0].1), summary.clone())?;
    check(desk.elapsed < Duration::from_secs(60), summary.clone())?;
    Ok(summary)
}

fn output_set(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        // the run manifest records timestamps, durations and the worker count
        if path.is_file() && name != MANIFEST {
            files.insert(name, fs::read(&path).unwrap());
        }
    }
    files
}

fn determinism(desk: &DeskRun) -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let reference = output_set(&desk.out);
    for (label, workers) in [("repeat", 1), ("workers4", 4)] {
        let out = tmp.path().join(label);
        run_pipeline(&desk.stack, &out, 200, 4, workers, DesignMode::Random)?;
        let other = output_set(&out);
        check(
            other.keys().eq(reference.keys()),
            format!("{label}: file sets differ"),
        )?;
        for (name, bytes) in &reference {
            check(&other[name] == bytes, format!("{label}: {name} differs"))?;
        }
    }
    Ok(format!(
        "{} files identical across 2 runs and workers 1 / 4",
        reference.len()
    ))
}

fn design_sampling() -> Outcome {
    let design = sample_design(10_000, 9);
    let rate = design.acceptance_rate();
    let outside = design
        .points
        .iter()
        .filter(|p| p.t > 4.0 * p.r * (1.0 - p.r))
        .count();
    check(
        (rate - 2.0 / 3.0).abs() <= 0.02,
        format!("acceptance {rate:.4}"),
    )?;
    check(outside == 0, format!("{outside} points above the parabola"))?;
    Ok(format!(
        "acceptance {rate:.4} over {} draws, all points feasible",
        design.draws
    ))
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 corner exactness", corner_exactness()),
        ("2 moment fidelity", moment_fidelity()),
        ("3 vertex uniformity", vertex_uniformity()),
        ("4 ward oracle", ward_equivalence()),
    ];
    match desk_run() {
        Ok(desk) => {
            results.push(("5 variance curve", variance_curve(&desk)));
            results.push(("6 dissimilarity", dissimilarity(&desk)));
            results.push(("7 structural", structural(&desk)));
            results.push(("8 determinism", determinism(&desk)));
        }
        Err(e) => {
            for name in [
                "5 variance curve",
                "6 dissimilarity",
                "7 structural",
                "8 determinism",
            ] {
                results.push((name, Err(format!("desk run failed: {e}"))));
            }
        }
    }
    results.push(("9 design sampling", design_sampling()));
    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
