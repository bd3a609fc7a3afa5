use std::fs;
use std::path::Path;

use owa_core::{GridMeta, Raster};
use owa_explorer::ascii::{read_ascii, write_ascii};
use owa_explorer::config::PipelineConfig;
use owa_explorer::pipeline::run;
use owa_explorer::prep::run_prep;
use owa_explorer::stack::load_stack;

fn write_inputs(dir: &Path) {
    let meta = GridMeta::new(4, 1, 100.0, 200.0, 5.0, -9999.0).unwrap();
    let grid = |name: &str, v: Vec<f64>| {
        write_ascii(&dir.join(name), &Raster::new(meta, v).unwrap()).unwrap()
    };
    grid("luc.asc", vec![1.0, 2.0, 2.0, -9999.0]);
    grid("flood.asc", vec![2.0, 3.0, 1.0, 1.0]);
    grid("roads.asc", vec![100.0, 650.0, 2000.0, 0.0]);
    fs::write(
        dir.join("capacity.csv"),
        "expert_id,luc_class,service,score\n\
         e1,1,food,4\ne2,1,food,4\ne1,2,food,2\ne2,2,food,3\n\
         e1,1,access,5\ne2,1,access,5\ne1,2,access,0\ne2,2,access,0\n\
         e1,1,water,1\ne1,2,water,2\n",
    )
    .unwrap();
    fs::write(
        dir.join("votes.csv"),
        "service,votes,total,override_weight\nfood,8,15,\naccess,5,10,\nwater,0,15,1\n",
    )
    .unwrap();
    fs::write(
        dir.join("prep.toml"),
        r#"
        out = "out"
        [design]
        mode = "corners"
        [clustering]
        k = 2
        k_max = 3
        [prep]
        luc = "luc.asc"
        capacity = "capacity.csv"
        votes = "votes.csv"
        out = "criteria"
        [[prep.criteria]]
        name = "food"
        service = "food"
        modifier = { kind = "categorical", raster = "flood.asc", table = "flooding" }
        [[prep.criteria]]
        name = "access"
        service = "access"
        modifier = { kind = "piecewise_distance", raster = "roads.asc" }
        [[prep.criteria]]
        name = "water"
        service = "water"
        "#,
    )
    .unwrap();
}

#[test]
fn prepares_criteria_from_raw_inputs() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path());
    let cfg = PipelineConfig::load(&dir.path().join("prep.toml")).unwrap();
    let out = run_prep(cfg.prep.as_ref().unwrap()).unwrap();
    let food = read_ascii(&dir.path().join("criteria/food.asc")).unwrap();
    // 0.8 capacity halved by medium flooding; no flooding removes capacity
    assert!((food.value(0) - 0.6).abs() < 1e-15);
    assert_eq!(food.value(1), 1.0);
    assert!((food.value(2) - 0.5).abs() < 1e-15);
    assert!(!food.is_valid(3));
    assert_eq!(
        food.meta(),
        &GridMeta::new(4, 1, 100.0, 200.0, 5.0, -9999.0).unwrap()
    );
    let access = read_ascii(&dir.path().join("criteria/access.asc")).unwrap();
    assert_eq!(access.value(0), 0.0);
    assert_eq!(access.value(1), 1.0);
    let water = read_ascii(&dir.path().join("criteria/water.asc")).unwrap();
    assert!((water.value(0) - 0.8).abs() < 1e-15);

    let manifest = fs::read_to_string(&out.manifest).unwrap();
    assert!(manifest.contains("food,food.asc,8/15"), "{manifest}");
    assert!(manifest.contains("water,water.asc,1"), "{manifest}");
    let (stack, _) = load_stack(&out.manifest).unwrap();
    assert_eq!(stack.valid_cells(), &[0, 1, 2]);
}

#[test]
fn pipeline_runs_prep_first() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path());
    let cfg = PipelineConfig::load(&dir.path().join("prep.toml")).unwrap();
    let report = run(&cfg).unwrap();
    assert_eq!(report.maps, 3);
    let manifest = owa_explorer::pipeline::verify_manifest(&dir.path().join("out")).unwrap();
    // luc, capacity, votes, two modifiers, stack manifest, three criteria
    assert_eq!(manifest.inputs.len(), 9);
    assert!(manifest.stages.iter().any(|s| s.stage == "prep"));
}

#[test]
fn unknown_classes_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path());
    let meta = GridMeta::new(4, 1, 100.0, 200.0, 5.0, -9999.0).unwrap();
    write_ascii(
        &dir.path().join("luc.asc"),
        &Raster::new(meta, vec![1.0, 7.0, 2.0, 1.0]).unwrap(),
    )
    .unwrap();
    let cfg = PipelineConfig::load(&dir.path().join("prep.toml")).unwrap();
    let err = run(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("prep"), "{err}");
}
