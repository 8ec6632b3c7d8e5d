//! Seeded random warehouses, queries and ETL inputs for tests and
//! benchmarks. Everything here is a pure function of the RNG state.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::diagnostic::DiagnosticCode;
use crate::etl::{BucketRange, Bucketing, DimensionMapping, FieldSource, MappingConfig, SourceRecordSet};
use crate::model::{AttributeDef, DimensionDef, FactClassDef, LevelDef, WarehouseModel};
use crate::query::{AggregateFunction, AggregateSpec, AnalyticQuery, Comparator, GroupKey, Literal, Predicate};
use crate::store::{DimensionMember, FactRecord, StoreParts};
use crate::value::{Number, Value, ValueType};

/// Bounds for [`random_model`] and [`populate`].
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub max_dimensions: usize,
    pub max_levels: usize,
    pub max_facts: usize,
    pub max_base_members: usize,
    /// Probability that a measure value or member attribute is absent.
    pub null_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            max_dimensions: 5,
            max_levels: 3,
            max_facts: 1000,
            max_base_members: 40,
            null_rate: 0.05,
        }
    }
}

const TYPES: [ValueType; 4] = [ValueType::String, ValueType::Integer, ValueType::Decimal, ValueType::Date];

fn base_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date")
}

/// A value from a small domain, so equality predicates and groups collide.
pub fn random_value<R: Rng>(rng: &mut R, ty: ValueType) -> Value {
    match ty {
        ValueType::String => Value::Str(format!("s{}", rng.gen_range(0..6))),
        ValueType::Integer => Value::Int(rng.gen_range(0..12)),
        ValueType::Decimal => Value::Dec(rng.gen_range(0..24) as f64 * 0.25),
        ValueType::Date => Value::Date(base_date() + Duration::days(rng.gen_range(0..20))),
    }
}

pub fn random_model<R: Rng>(rng: &mut R, config: &SynthConfig) -> WarehouseModel {
    let dims = rng.gen_range(1..=config.max_dimensions);
    let mut dimensions = Vec::with_capacity(dims);
    for d in 0..dims {
        let id = format!("D{d}");
        let levels = (0..rng.gen_range(1..=config.max_levels))
            .map(|l| LevelDef {
                id: format!("{id}L{l}"),
                attributes: (0..rng.gen_range(1..=2))
                    .map(|a| AttributeDef::new(format!("a{l}{a}"), *TYPES.choose(rng).expect("non-empty")))
                    .collect(),
            })
            .collect();
        dimensions.push(DimensionDef {
            document_path: format!("dimension_{id}.xml"),
            id,
            levels,
        });
    }
    let mut measures = vec![AttributeDef::new("mi", ValueType::Integer)];
    if rng.gen_bool(0.8) {
        measures.push(AttributeDef::new("md", ValueType::Decimal));
    }
    let fact = FactClassDef {
        id: "F".into(),
        measures,
        dimension_refs: dimensions.iter().map(|d| d.id.clone()).collect(),
        document_path: "facts_F.xml".into(),
    };
    WarehouseModel {
        dimensions,
        fact_classes: vec![fact],
    }
}

/// Members of a strict hierarchy: every non-top member has exactly one
/// parent and every non-base member at least one child.
pub fn random_members<R: Rng>(rng: &mut R, dim: &DimensionDef, base_members: usize, null_rate: f64) -> Vec<DimensionMember> {
    let mut counts = vec![base_members.max(1)];
    for _ in 1..dim.levels.len() {
        let below = *counts.last().expect("non-empty");
        counts.push((below / rng.gen_range(2..=4)).max(1));
    }
    let id = |level: usize, k: usize| format!("{}m{k}", dim.levels[level].id);
    let mut members: Vec<Vec<DimensionMember>> = Vec::new();
    for (l, level) in dim.levels.iter().enumerate() {
        let list = (0..counts[l])
            .map(|k| DimensionMember {
                dimension: dim.id.clone(),
                level: level.id.clone(),
                member_id: id(l, k),
                attributes: level
                    .attributes
                    .iter()
                    .filter_map(|a| {
                        let absent = rng.gen_bool(null_rate);
                        let v = random_value(rng, a.value_type);
                        (!absent).then(|| (a.id.clone(), v))
                    })
                    .collect(),
                roll_up: Vec::new(),
                drill_down: Vec::new(),
            })
            .collect();
        members.push(list);
    }
    for l in 1..dim.levels.len() {
        let mut parents: Vec<usize> = (0..counts[l - 1]).map(|k| if k < counts[l] { k } else { rng.gen_range(0..counts[l]) }).collect();
        parents.shuffle(rng);
        for (child, parent) in parents.into_iter().enumerate() {
            members[l - 1][child].roll_up.push(id(l, parent));
            members[l][parent].drill_down.push(id(l - 1, child));
        }
        for m in &mut members[l] {
            m.drill_down.sort();
        }
    }
    members.into_iter().flatten().collect()
}

/// Random strict members for every dimension and `facts` facts per class.
pub fn populate<R: Rng>(rng: &mut R, model: &WarehouseModel, facts: usize, config: &SynthConfig) -> StoreParts {
    let mut members = BTreeMap::new();
    for dim in &model.dimensions {
        let n = rng.gen_range(1..=config.max_base_members.max(1));
        members.insert(dim.id.clone(), random_members(rng, dim, n, config.null_rate));
    }
    let mut fact_map = BTreeMap::new();
    for class in &model.fact_classes {
        let bases: Vec<Vec<&str>> = class
            .dimension_refs
            .iter()
            .map(|d| {
                let base = &model.dimension(d).expect("valid model").base_level().id;
                members[d]
                    .iter()
                    .filter(|m: &&DimensionMember| &m.level == base)
                    .map(|m| m.member_id.as_str())
                    .collect()
            })
            .collect();
        let records = (0..facts)
            .map(|i| FactRecord {
                id: Some(format!("f{i}")),
                fact_class: class.id.clone(),
                measures: class
                    .measures
                    .iter()
                    .filter_map(|m| {
                        let absent = rng.gen_bool(config.null_rate);
                        let v = random_number(rng, m.value_type);
                        (!absent).then(|| (m.id.clone(), v))
                    })
                    .collect(),
                dim_refs: class
                    .dimension_refs
                    .iter()
                    .zip(&bases)
                    .map(|(d, b)| (d.clone(), b.choose(rng).expect("at least one base member").to_string()))
                    .collect(),
            })
            .collect();
        fact_map.insert(class.id.clone(), records);
    }
    StoreParts {
        model: model.clone(),
        facts: fact_map,
        members,
    }
}

fn random_number<R: Rng>(rng: &mut R, ty: ValueType) -> Number {
    match ty {
        ValueType::Integer => Number::Int(rng.gen_range(-50..=100)),
        _ => Number::Dec((rng.gen_range(-100_000..=100_000) as f64) / 1000.0),
    }
}

/// A random model with a populated warehouse of up to `max_facts` facts.
pub fn random_warehouse<R: Rng>(rng: &mut R, config: &SynthConfig) -> StoreParts {
    let model = random_model(rng, config);
    let facts = rng.gen_range(0..=config.max_facts);
    populate(rng, &model, facts, config)
}

/// A query over `parts` with up to three predicates and two group keys.
/// Literals are mostly drawn from existing member values.
pub fn random_query<R: Rng>(rng: &mut R, parts: &StoreParts) -> AnalyticQuery {
    let model = &parts.model;
    let class = model.fact_classes.choose(rng).expect("at least one fact class");
    let mut predicates = Vec::new();
    for _ in 0..rng.gen_range(0..=3) {
        let dim = model.dimension(class.dimension_refs.choose(rng).expect("refs")).expect("valid");
        let level = dim.levels.choose(rng).expect("levels");
        let attr = level.attributes.choose(rng).expect("attributes");
        let comparator = if attr.value_type.is_ordered() {
            *[Comparator::Eq, Comparator::Ne, Comparator::Lt, Comparator::Le, Comparator::Gt, Comparator::Ge]
                .choose(rng)
                .expect("non-empty")
        } else {
            *[Comparator::Eq, Comparator::Ne].choose(rng).expect("non-empty")
        };
        let existing: Vec<&Value> = parts.members[&dim.id]
            .iter()
            .filter(|m| m.level == level.id)
            .filter_map(|m| m.attributes.get(&attr.id))
            .collect();
        let value = match existing.choose(rng) {
            Some(v) if rng.gen_bool(0.9) => (*v).clone(),
            _ => random_value(rng, attr.value_type),
        };
        let text = value.to_string();
        let literal = if attr.value_type.is_numeric() && rng.gen_bool(0.7) {
            Literal::number(text)
        } else {
            Literal::quoted(text)
        };
        predicates.push(Predicate {
            dimension: dim.id.clone(),
            level: level.id.clone(),
            attribute: attr.id.clone(),
            comparator,
            literal,
        });
    }
    let mut dims = class.dimension_refs.clone();
    dims.shuffle(rng);
    let group_by = dims
        .into_iter()
        .take(rng.gen_range(0..=2))
        .map(|d| {
            let level = model.dimension(&d).expect("valid").levels.choose(rng).expect("levels").id.clone();
            GroupKey { dimension: d, level }
        })
        .collect();
    let aggregates = (0..rng.gen_range(1..=3))
        .map(|_| {
            let function = *[
                AggregateFunction::Sum,
                AggregateFunction::Count,
                AggregateFunction::Avg,
                AggregateFunction::Min,
                AggregateFunction::Max,
            ]
            .choose(rng)
            .expect("non-empty");
            if function == AggregateFunction::Count && rng.gen_bool(0.5) {
                AggregateSpec::count_star()
            } else {
                AggregateSpec::of(function, class.measures.choose(rng).expect("measures").id.clone())
            }
        })
        .collect();
    AnalyticQuery {
        fact_class: class.id.clone(),
        predicates,
        group_by,
        aggregates,
    }
}

fn dimension(id: &str, levels: &[(&str, &[(&str, ValueType)])]) -> DimensionDef {
    DimensionDef {
        id: id.into(),
        document_path: format!("dimension_{id}.xml"),
        levels: levels
            .iter()
            .map(|(level, attrs)| LevelDef {
                id: (*level).into(),
                attributes: attrs.iter().map(|(a, t)| AttributeDef::new(*a, *t)).collect(),
            })
            .collect(),
    }
}

/// The mammography case-study schema: suspicious regions described by ten
/// dimensions.
pub fn case_study_model() -> WarehouseModel {
    use ValueType::*;
    let date = |id: &str| {
        dimension(
            id,
            &[
                ("Day", &[("date", Date)]),
                ("Month", &[("month", String)]),
                ("Year", &[("year", Integer)]),
            ],
        )
    };
    let dimensions = vec![
        dimension(
            "Patient",
            &[
                ("Patient", &[("Patient_id", String), ("Patient_age", Integer)]),
                ("AgeGroup", &[("range", String)]),
            ],
        ),
        dimension("Lesion_type", &[("Lesion_type", &[("name", String)]), ("Category", &[("name", String)])]),
        dimension("Assessment", &[("Assessment", &[("score", Integer)])]),
        dimension("Subtlety", &[("Subtlety", &[("value", Integer)])]),
        dimension("Pathology", &[("Pathology", &[("name", String)])]),
        date("Date_of_study"),
        date("Date_of_digitization"),
        dimension("Digitizer", &[("Digitizer", &[("name", String)])]),
        dimension(
            "Scanner_image",
            &[("Scanner_image", &[("name", String), ("resolution", Decimal)])],
        ),
        dimension("Boundary", &[("Boundary", &[("name", String)])]),
    ];
    let fact = FactClassDef {
        id: "Suspicious_region".into(),
        measures: vec![
            AttributeDef::new("Region_length", Decimal),
            AttributeDef::new("Number_of_regions", Integer),
        ],
        dimension_refs: dimensions.iter().map(|d| d.id.clone()).collect(),
        document_path: "facts.xml".into(),
    };
    WarehouseModel {
        dimensions,
        fact_classes: vec![fact],
    }
}

/// Records, a mapping over them and the target model, with every level
/// mapped and some coarse levels bucketed from a base integer field.
pub fn random_etl_case<R: Rng>(rng: &mut R, config: &SynthConfig) -> (SourceRecordSet, MappingConfig, WarehouseModel) {
    let mut model = random_model(rng, config);
    // bucket targets need label-compatible types; keep it to strings and integers
    for dim in &mut model.dimensions {
        for level in &mut dim.levels {
            for attr in &mut level.attributes {
                if attr.value_type == ValueType::Date && rng.gen_bool(0.5) {
                    attr.value_type = ValueType::String;
                }
            }
        }
    }
    let class = model.fact_classes[0].clone();
    let mut header = vec!["id".to_string()];
    let mut mapping = MappingConfig {
        fact_class: class.id.clone(),
        fact_id_field: rng.gen_bool(0.5).then(|| "id".to_string()),
        measures: BTreeMap::new(),
        dimensions: BTreeMap::new(),
    };
    // (field, type) generators per column
    let mut columns: Vec<ValueType> = vec![ValueType::String];
    for m in &class.measures {
        header.push(format!("meas_{}", m.id));
        columns.push(m.value_type);
        mapping.measures.insert(m.id.clone(), format!("meas_{}", m.id));
    }
    for dim in &model.dimensions {
        let mut dm = DimensionMapping::default();
        let base_int = dim.levels[0]
            .attributes
            .iter()
            .find(|a| a.value_type == ValueType::Integer)
            .map(|a| format!("{}_{}_{}", dim.id, dim.levels[0].id, a.id));
        for level in &dim.levels {
            let mut attrs = BTreeMap::new();
            for attr in &level.attributes {
                let field = format!("{}_{}_{}", dim.id, level.id, attr.id);
                let bucketable = matches!(attr.value_type, ValueType::String | ValueType::Integer);
                let source = match &base_int {
                    Some(b) if level.id != dim.levels[0].id && bucketable && rng.gen_bool(0.5) => {
                        let cut = rng.gen_range(1..11);
                        let label = |i: i64| match attr.value_type {
                            ValueType::Integer => i.to_string(),
                            _ => format!("b{i}"),
                        };
                        FieldSource::Bucket(Bucketing {
                            bucket: b.clone(),
                            ranges: vec![
                                BucketRange {
                                    min: None,
                                    max: Some(cut - 1),
                                    label: label(0),
                                },
                                BucketRange {
                                    min: Some(cut),
                                    max: None,
                                    label: label(1),
                                },
                            ],
                        })
                    }
                    _ => {
                        header.push(field.clone());
                        columns.push(attr.value_type);
                        FieldSource::Field(field)
                    }
                };
                attrs.insert(attr.id.clone(), source);
            }
            dm.levels.insert(level.id.clone(), attrs);
        }
        let base: Vec<String> = dim.levels[0].attributes.iter().map(|a| a.id.clone()).collect();
        if rng.gen_bool(0.5) {
            dm.identity = base.iter().filter(|_| rng.gen_bool(0.6)).cloned().collect();
        }
        mapping.dimensions.insert(dim.id.clone(), dm);
    }
    let rows = (0..rng.gen_range(0..=config.max_facts.min(200)))
        .map(|i| {
            columns
                .iter()
                .enumerate()
                .map(|(c, ty)| {
                    if c == 0 {
                        format!("r{i}")
                    } else if rng.gen_bool(config.null_rate) {
                        String::new()
                    } else if header[c].starts_with("meas_") {
                        random_number(rng, *ty).to_string()
                    } else {
                        random_value(rng, *ty).to_string()
                    }
                })
                .collect()
        })
        .collect();
    let records = SourceRecordSet { header, rows };
    (records, mapping, model)
}

/// A single corruption of a consistent warehouse and the diagnostic it
/// must provoke.
#[derive(Debug, Clone)]
pub struct Mutation {
    pub description: String,
    pub expected: DiagnosticCode,
    pub parts: StoreParts,
}

/// `per_kind` mutations of each kind: dangling fact reference, dangling
/// Roll-up, dangling Drill-Down, broken symmetry and duplicate member id.
/// Targets are taken in order, cycling when there are fewer than
/// `per_kind`. `parts` needs facts and at least one multi-level dimension.
pub fn systematic_mutations(parts: &StoreParts, per_kind: usize) -> Vec<Mutation> {
    let mut out = Vec::new();
    let facts: Vec<(String, usize, String)> = parts
        .facts
        .iter()
        .flat_map(|(class, list)| {
            list.iter()
                .enumerate()
                .flat_map(move |(i, f)| f.dim_refs.keys().map(move |d| (class.clone(), i, d.clone())))
        })
        .collect();
    // (dimension, index) of members with a parent / with children
    let with_parent: Vec<(String, usize)> = parts
        .members
        .iter()
        .flat_map(|(d, list)| list.iter().enumerate().filter(|(_, m)| !m.roll_up.is_empty()).map(move |(i, _)| (d.clone(), i)))
        .collect();
    let with_children: Vec<(String, usize)> = parts
        .members
        .iter()
        .flat_map(|(d, list)| list.iter().enumerate().filter(|(_, m)| !m.drill_down.is_empty()).map(move |(i, _)| (d.clone(), i)))
        .collect();
    let multi: Vec<(String, usize)> = parts
        .members
        .iter()
        .filter(|(_, list)| list.len() >= 2)
        .flat_map(|(d, list)| (1..list.len()).map(move |i| (d.clone(), i)))
        .collect();
    assert!(
        !facts.is_empty() && !with_parent.is_empty() && !with_children.is_empty() && !multi.is_empty(),
        "warehouse too small to mutate"
    );

    for k in 0..per_kind {
        let (class, i, dim) = &facts[(k * 7) % facts.len()];
        let mut p = parts.clone();
        p.facts.get_mut(class).expect("class")[*i].dim_refs.insert(dim.clone(), format!("ghost{k}"));
        out.push(Mutation {
            description: format!("fact {i} of {class} points {dim} at a missing member"),
            expected: DiagnosticCode::DanglingFactRef,
            parts: p,
        });

        let (dim, i) = &with_parent[(k * 5) % with_parent.len()];
        let mut p = parts.clone();
        let m = &mut p.members.get_mut(dim).expect("dim")[*i];
        m.roll_up[0] = format!("ghost{k}");
        out.push(Mutation {
            description: format!("member {} of {dim} rolls up to a missing member", m.member_id),
            expected: DiagnosticCode::DanglingRollup,
            parts: p,
        });

        let (dim, i) = &with_children[(k * 3) % with_children.len()];
        let mut p = parts.clone();
        let m = &mut p.members.get_mut(dim).expect("dim")[*i];
        m.drill_down.push(format!("ghost{k}"));
        out.push(Mutation {
            description: format!("member {} of {dim} drills down to a missing member", m.member_id),
            expected: DiagnosticCode::DanglingDrilldown,
            parts: p,
        });

        let (dim, i) = &with_children[(k * 3 + 1) % with_children.len()];
        let mut p = parts.clone();
        let m = &mut p.members.get_mut(dim).expect("dim")[*i];
        let dropped = m.drill_down.remove(0);
        out.push(Mutation {
            description: format!("member {} of {dim} no longer lists child {dropped}", m.member_id),
            expected: DiagnosticCode::AsymmetricHierarchy,
            parts: p,
        });

        let (dim, i) = &multi[(k * 11) % multi.len()];
        let mut p = parts.clone();
        let list = p.members.get_mut(dim).expect("dim");
        let twin = list[i - 1].member_id.clone();
        list[*i].member_id = twin.clone();
        out.push(Mutation {
            description: format!("two members of {dim} share id {twin}"),
            expected: DiagnosticCode::DuplicateMemberId,
            parts: p,
        });
    }
    out
}
