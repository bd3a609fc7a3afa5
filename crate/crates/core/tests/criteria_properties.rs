use owa_core::criteria::{
    build_criterion, categorical_factor, continuous_98, criterion_weight_from_votes,
    invert_to_suitability, mean_expert_score, road_distance_factor, CapacityMatrix,
    CategoricalTable, DistanceBreakpoints, ExpertVotes, FloodHazard, ModifierRule,
};
use owa_core::{GridMeta, Raster};
use proptest::prelude::*;

fn meta(cells: usize) -> GridMeta {
    GridMeta::new(cells, 1, 0.0, 0.0, 5.0, -9999.0).unwrap()
}

fn matrix(scores: &[(i64, f64)]) -> CapacityMatrix {
    let mut m = CapacityMatrix::new(5.0).unwrap();
    for &(class, s) in scores {
        m.insert("e1", class, "food", s).unwrap();
    }
    m
}

#[test]
fn composition_examples() {
    // mean score 4/5 = 0.8, medium flooding halves it
    let m = matrix(&[(1, 4.0), (2, 5.0)]);
    let luc = Raster::new(meta(3), vec![1.0, 2.0, -9999.0]).unwrap();
    let flood = Raster::new(meta(3), vec![FloodHazard::Medium.code() as f64, 3.0, 1.0]).unwrap();
    let rule = ModifierRule::Categorical(CategoricalTable::flooding_hazard());
    let z = build_criterion(&luc, &m, "food", Some((&rule, &flood))).unwrap();
    assert!((z.value(0) - 0.6).abs() < 1e-15);
    assert_eq!(z.value(1), 1.0);
    assert!(!z.is_valid(2));
    let plain = build_criterion(&luc, &m, "food", None).unwrap();
    assert_eq!(plain.value(1), 0.0);
}

#[test]
fn documented_tables_are_total() {
    let soil = CategoricalTable::soil_quality();
    for k in 1..=16 {
        let f = categorical_factor(&soil, k).unwrap();
        assert!((f - (1.0 - 0.05 * (k - 1) as f64)).abs() < 1e-15);
    }
    assert!(categorical_factor(&soil, 17).is_err());
    let protected = CategoricalTable::protected_areas();
    assert_eq!(categorical_factor(&protected, 0).unwrap(), 0.75);
    assert_eq!(categorical_factor(&protected, 1).unwrap(), 1.0);
    let fire = CategoricalTable::fire_hazard();
    for k in 1..=6 {
        let f = categorical_factor(&fire, k).unwrap();
        assert!((0.5..=1.0).contains(&f));
    }
}

#[test]
fn vote_weights() {
    let votes = |count, total, o| ExpertVotes {
        service: "s".into(),
        count,
        total,
        override_weight: o,
    };
    assert!((criterion_weight_from_votes(&votes(8, 15, None)).unwrap() - 8.0 / 15.0).abs() < 1e-15);
    assert_eq!(
        criterion_weight_from_votes(&votes(0, 15, Some(1.0))).unwrap(),
        1.0
    );
    assert!(criterion_weight_from_votes(&votes(0, 15, None)).is_err());
    assert!(criterion_weight_from_votes(&votes(16, 15, None)).is_err());
}

proptest! {
    #[test]
    fn road_factor_is_continuous_and_non_increasing(near in 1.0f64..500.0, gap in 1.0f64..1000.0, floor in 0.0f64..=1.0) {
        let bp = DistanceBreakpoints::new(near, near + gap, floor).unwrap();
        let far = near + gap;
        let step = far * 1.5 / 4000.0;
        let mut prev = road_distance_factor(0.0, &bp).unwrap();
        for i in 1..=4000 {
            let f = road_distance_factor(i as f64 * step, &bp).unwrap();
            prop_assert!(f <= prev);
            // Lipschitz bound of the ramp
            prop_assert!(prev - f <= (1.0 - floor) / gap * step + 1e-12);
            prop_assert!((0.0..=1.0).contains(&f));
            prev = f;
        }
    }

    #[test]
    fn continuous_98_ignores_scale(vals in proptest::collection::vec(0.0f64..100.0, 1..40), s in 0.01f64..100.0) {
        let a = Raster::new(meta(vals.len()), vals.clone()).unwrap();
        let b = Raster::new(meta(vals.len()), vals.iter().map(|x| x * s).collect()).unwrap();
        let (fa, fb) = (continuous_98(&a).unwrap(), continuous_98(&b).unwrap());
        for (x, y) in fa.values().iter().zip(fb.values()) {
            prop_assert!((x - y).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(x));
        }
    }

    #[test]
    fn higher_scores_never_raise_suitability(s in 0.0f64..=5.0, bump in 0.0f64..=5.0, factor in 0.0f64..=1.0) {
        let raised = (s + bump).min(5.0);
        let z = |score: f64| invert_to_suitability(mean_expert_score(&matrix(&[(1, score)]), 1, "food").unwrap() * factor).unwrap();
        prop_assert!(z(raised) <= z(s));
        prop_assert!((0.0..=1.0).contains(&z(s)));
    }

    #[test]
    fn higher_factors_never_raise_suitability(s in 0.0f64..=5.0, d1 in 0.0f64..2000.0, d2 in 0.0f64..2000.0) {
        let m = matrix(&[(1, s)]);
        let luc = Raster::new(meta(2), vec![1.0, 1.0]).unwrap();
        let roads = Raster::new(meta(2), vec![d1.min(d2), d1.max(d2)]).unwrap();
        let rule = ModifierRule::PiecewiseDistance(DistanceBreakpoints::default());
        let z = build_criterion(&luc, &m, "food", Some((&rule, &roads))).unwrap();
        // the nearer cell has the larger factor
        prop_assert!(z.value(0) <= z.value(1));
    }
}
