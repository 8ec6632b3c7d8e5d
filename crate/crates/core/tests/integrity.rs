use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xwacoda_core::diagnostic::DiagnosticCode;
use xwacoda_core::store::{check_integrity, load_parts, HierarchyMode};
use xwacoda_core::synth::{case_study_model, populate, systematic_mutations, SynthConfig};

fn clean_case_study() -> xwacoda_core::store::StoreParts {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let config = SynthConfig {
        max_base_members: 12,
        ..SynthConfig::default()
    };
    populate(&mut rng, &case_study_model(), 200, &config)
}

#[test]
fn clean_warehouses_have_empty_reports() {
    let parts = clean_case_study();
    assert_eq!(check_integrity(&parts, HierarchyMode::Strict), vec![]);
    let mini = load_parts(&std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/mini/dw-model.xml")).unwrap();
    assert_eq!(check_integrity(&mini, HierarchyMode::Strict), vec![]);
}

#[test]
fn every_systematic_mutation_is_reported_with_its_code() {
    let parts = clean_case_study();
    let mutations = systematic_mutations(&parts, 10);
    assert_eq!(mutations.len(), 50);
    for kind in [
        DiagnosticCode::DanglingFactRef,
        DiagnosticCode::DanglingRollup,
        DiagnosticCode::DanglingDrilldown,
        DiagnosticCode::AsymmetricHierarchy,
        DiagnosticCode::DuplicateMemberId,
    ] {
        assert_eq!(mutations.iter().filter(|m| m.expected == kind).count(), 10);
    }
    for m in &mutations {
        let report = check_integrity(&m.parts, HierarchyMode::Strict);
        assert!(
            report.iter().any(|d| d.code == m.expected),
            "{}: expected {} in {report:?}",
            m.description,
            m.expected.as_str()
        );
    }
}

#[test]
fn integrity_report_is_deterministic() {
    let parts = clean_case_study();
    for m in systematic_mutations(&parts, 2) {
        assert_eq!(check_integrity(&m.parts, HierarchyMode::Strict), check_integrity(&m.parts, HierarchyMode::Strict));
    }
}
