use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xwacoda_core::cube::{build_cube, AxisSpec, Cube, CubeSpec};
use xwacoda_core::query::{evaluate, AggregateFunction, AggregateSpec, AnalyticQuery, GroupKey};
use xwacoda_core::synth::{random_query, random_warehouse, SynthConfig};
use xwacoda_core::{HierarchyMode, Number, WarehouseStore};

fn setup(seed: u64) -> (WarehouseStore, CubeSpec, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = SynthConfig {
        max_facts: 400,
        ..SynthConfig::default()
    };
    let parts = random_warehouse(&mut rng, &config);
    let store = WarehouseStore::from_parts(parts.clone(), HierarchyMode::Strict).unwrap();
    let model = store.model();
    let class = &model.fact_classes[0];
    let mut dims = class.dimension_refs.clone();
    dims.shuffle(&mut rng);
    let axes = dims
        .into_iter()
        .take(rng.gen_range(1..=2))
        .map(|d| AxisSpec {
            level: model.dimension(&d).unwrap().base_level().id.clone(),
            dimension: d,
        })
        .collect();
    let aggregate = *[AggregateFunction::Sum, AggregateFunction::Count, AggregateFunction::Avg, AggregateFunction::Min, AggregateFunction::Max]
        .choose(&mut rng)
        .unwrap();
    let measure = if aggregate == AggregateFunction::Count && rng.gen_bool(0.5) {
        None
    } else {
        Some(class.measures.choose(&mut rng).unwrap().id.clone())
    };
    let predicates = random_query(&mut rng, &parts).predicates.into_iter().take(1).collect();
    let spec = CubeSpec {
        fact_class: class.id.clone(),
        axes,
        measure,
        aggregate,
        predicates,
        filters: vec![],
    };
    (store, spec, rng)
}

fn assert_cubes_match(a: &Cube, b: &Cube, context: &str) {
    assert_eq!(a.axes, b.axes, "{context}");
    assert_eq!(a.cells.len(), b.cells.len(), "{context}");
    for ((ka, ca), (kb, cb)) in a.cells.iter().zip(&b.cells) {
        assert_eq!(ka, kb, "{context}");
        assert_eq!(ca.count, cb.count, "{context} {ka:?}");
        assert!(ca.value.approx_eq(cb.value, 1e-9), "{context} {ka:?}: {:?} vs {:?}", ca.value, cb.value);
    }
}

#[test]
fn roll_up_agrees_with_direct_build_and_conserves_totals() {
    let mut checked = 0;
    for seed in 0..60 {
        let (store, spec, _) = setup(seed);
        let mut cube = build_cube(&store, &spec).unwrap();
        for axis in spec.axes.iter().map(|a| a.dimension.clone()) {
            let levels = store.model().dimension(&axis).unwrap().levels.len();
            for _ in 1..levels {
                let up = cube.roll_up(&axis, &store).unwrap();
                let direct = build_cube(&store, &up.spec()).unwrap();
                assert_cubes_match(&up, &direct, &format!("seed {seed} roll_up {axis}"));
                if matches!(spec.aggregate, AggregateFunction::Sum | AggregateFunction::Count) {
                    let exact = matches!(up.cells.values().next().map(|c| c.value), Some(Number::Int(_)) | None);
                    if exact {
                        assert_eq!(up.total(), cube.total(), "seed {seed}");
                    } else {
                        assert!((up.total() - cube.total()).abs() <= 1e-9 * cube.total().abs().max(1.0));
                    }
                }
                let back = up.drill_down(&axis, &store).unwrap();
                assert_cubes_match(&back, &cube, &format!("seed {seed} round trip {axis}"));
                cube = up;
                checked += 1;
            }
        }
    }
    assert!(checked >= 30, "only {checked} roll-ups exercised");
}

#[test]
fn slices_are_marginals_and_cubes_flatten_to_queries() {
    for seed in 0..30 {
        let (store, spec, mut rng) = setup(seed);
        let cube = build_cube(&store, &spec).unwrap();
        let q = AnalyticQuery {
            fact_class: spec.fact_class.clone(),
            predicates: spec.predicates.clone(),
            group_by: spec
                .axes
                .iter()
                .map(|a| GroupKey {
                    dimension: a.dimension.clone(),
                    level: a.level.clone(),
                })
                .collect(),
            aggregates: vec![AggregateSpec {
                function: spec.aggregate,
                measure: spec.measure.clone(),
            }],
        };
        let table = evaluate(&store, &q).unwrap();
        // rows with no contributing value have no cell
        let key_columns: Vec<usize> = table
            .columns
            .iter()
            .enumerate()
            .filter(|(_, c)| matches!(c.kind, xwacoda_core::query::ColumnKind::GroupKey { .. }))
            .map(|(i, _)| i)
            .collect();
        let mut flattened = Vec::new();
        for row in &table.rows {
            let value = row.last().unwrap();
            let key: Vec<String> = key_columns.iter().map(|&i| row[i].to_string()).collect();
            match cube.cells.get(&key) {
                Some(cell) => {
                    assert!(value.as_f64().is_some_and(|v| xwacoda_core::value::approx_eq_f64(v, cell.value.as_f64(), 1e-9)));
                    flattened.push(key);
                }
                None => assert!(
                    matches!(value, xwacoda_core::query::Cell::Null | xwacoda_core::query::Cell::Int(0)),
                    "seed {seed}: {key:?} missing from cube"
                ),
            }
        }
        assert_eq!(flattened.len(), cube.cells.len(), "seed {seed}");

        if spec.aggregate == AggregateFunction::Sum && !cube.axes[0].members.is_empty() {
            let dim = cube.axes[0].dimension.clone();
            let member = cube.axes[0].members.choose(&mut rng).unwrap().clone();
            let sliced = cube.slice(&dim, &member).unwrap();
            let marginal: f64 = cube.cells.iter().filter(|(k, _)| k[0] == member).map(|(_, c)| c.value.as_f64()).sum();
            assert!((sliced.total() - marginal).abs() <= 1e-9 * marginal.abs().max(1.0));
        }
    }
}
