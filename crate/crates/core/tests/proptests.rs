use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xwacoda_core::query::{evaluate, oracle_evaluate, parse_query};
use xwacoda_core::synth::{random_query, random_warehouse, SynthConfig};
use xwacoda_core::value::{Value, ValueType};
use xwacoda_core::{HierarchyMode, WarehouseStore};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn engine_agrees_with_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = SynthConfig { max_facts: 200, ..SynthConfig::default() };
        let parts = random_warehouse(&mut rng, &config);
        let q = random_query(&mut rng, &parts);
        let store = WarehouseStore::from_parts(parts, HierarchyMode::Strict).unwrap();
        match (evaluate(&store, &q), oracle_evaluate(&store, &q)) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a.diff(&b, 1e-9), None),
            (a, b) => prop_assert_eq!(a.err(), b.err()),
        }
    }

    #[test]
    fn query_text_round_trips(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let parts = random_warehouse(&mut rng, &SynthConfig { max_facts: 0, ..SynthConfig::default() });
        let q = random_query(&mut rng, &parts);
        prop_assert_eq!(parse_query(&q.to_string()).unwrap(), q);
    }

    #[test]
    fn integers_round_trip_through_text(i in any::<i64>()) {
        prop_assert_eq!(ValueType::Integer.parse_value(&Value::Int(i).to_string()).unwrap(), Value::Int(i));
    }

    #[test]
    fn decimals_round_trip_through_text(d in -1e12f64..1e12) {
        prop_assert_eq!(ValueType::Decimal.parse_value(&Value::Dec(d).to_string()).unwrap(), Value::Dec(d));
    }

    #[test]
    fn parser_never_panics(text in "\\PC{0,80}") {
        let _ = parse_query(&text);
    }
}
