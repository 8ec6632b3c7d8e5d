//! Brute-force reference evaluator.
//!
//! Nested loops over the raw fact records and member lists with linear id
//! search. Deliberately shares nothing with the indexed engine beyond the
//! public data types, so agreement between the two is meaningful.

use std::cmp::Ordering;

use crate::model::WarehouseModel;
use crate::store::{DimensionMember, WarehouseStore};
use crate::value::{Number, Value, ValueType};

use super::ast::{AggregateFunction, AnalyticQuery, Comparator, Predicate};
use super::result::{Cell, Column, ColumnKind, ResultTable};
use super::QueryError;

fn find<'a>(members: &'a [DimensionMember], id: &str) -> Option<&'a DimensionMember> {
    members.iter().find(|m| m.member_id == id)
}

/// Ids of the members reached from `start` by climbing `steps` Roll-up links.
fn climb(members: &[DimensionMember], start: &str, steps: usize) -> Vec<String> {
    let mut current = vec![start.to_string()];
    for _ in 0..steps {
        let mut next = Vec::new();
        for id in &current {
            if let Some(m) = find(members, id) {
                for p in &m.roll_up {
                    if !next.contains(p) {
                        next.push(p.clone());
                    }
                }
            }
        }
        current = next;
    }
    current
}

fn holds(member: &DimensionMember, attribute: &str, cmp: Comparator, literal: &Value) -> bool {
    let actual = match member.attributes.get(attribute) {
        Some(v) => v,
        None => return false,
    };
    let ord = match (actual, literal) {
        (Value::Str(a), Value::Str(b)) => a.cmp(b),
        (Value::Int(a), Value::Int(b)) => a.cmp(b),
        (Value::Dec(a), Value::Dec(b)) => match a.partial_cmp(b) {
            Some(o) => o,
            None => return false,
        },
        (Value::Date(a), Value::Date(b)) => a.cmp(b),
        _ => return false,
    };
    match cmp {
        Comparator::Eq => ord == Ordering::Equal,
        Comparator::Ne => ord != Ordering::Equal,
        Comparator::Lt => ord == Ordering::Less,
        Comparator::Le => ord != Ordering::Greater,
        Comparator::Gt => ord == Ordering::Greater,
        Comparator::Ge => ord != Ordering::Less,
    }
}

fn bad(msg: String) -> QueryError {
    QueryError::Validation(msg)
}

struct Check<'q> {
    predicate: &'q Predicate,
    level: usize,
    literal: Value,
}

fn check_predicate<'q>(model: &WarehouseModel, fact_class: &str, p: &'q Predicate) -> Result<Check<'q>, QueryError> {
    let class = model.fact_class(fact_class).expect("checked by caller");
    if !class.dimension_refs.iter().any(|d| d == &p.dimension) {
        return Err(bad(format!("dimension {} not referenced", p.dimension)));
    }
    let dim = model.dimension(&p.dimension).ok_or_else(|| bad(format!("no dimension {}", p.dimension)))?;
    let level = dim
        .levels
        .iter()
        .position(|l| l.id == p.level)
        .ok_or_else(|| bad(format!("no level {}", p.level)))?;
    let attr = dim.levels[level]
        .attributes
        .iter()
        .find(|a| a.id == p.attribute)
        .ok_or_else(|| bad(format!("no attribute {}", p.attribute)))?;
    let ordering = !matches!(p.comparator, Comparator::Eq | Comparator::Ne);
    if ordering && attr.value_type == ValueType::String {
        return Err(bad(format!("ordering comparison on string {}", p.attribute)));
    }
    let literal = attr
        .value_type
        .parse_value(&p.literal.text)
        .map_err(|e| bad(e.to_string()))?;
    Ok(Check {
        predicate: p,
        level,
        literal,
    })
}

/// Whether `base` is selected by `c`, via its ancestors at the predicate level.
fn selected(members: &[DimensionMember], base: &str, c: &Check<'_>) -> Result<bool, QueryError> {
    let p = c.predicate;
    let mut any = false;
    let mut all = true;
    for a in climb(members, base, c.level) {
        let ok = find(members, &a).is_some_and(|m| holds(m, &p.attribute, p.comparator, &c.literal));
        any |= ok;
        all &= ok;
    }
    if any && !all {
        return Err(QueryError::NonStrictHierarchy {
            dimension: p.dimension.clone(),
            member: base.to_string(),
        });
    }
    Ok(any)
}

pub fn oracle_evaluate(store: &WarehouseStore, q: &AnalyticQuery) -> Result<ResultTable, QueryError> {
    let model = store.model();
    let class = model
        .fact_class(&q.fact_class)
        .ok_or_else(|| bad(format!("no fact class {}", q.fact_class)))?;
    let checks = q
        .predicates
        .iter()
        .map(|p| check_predicate(model, &class.id, p))
        .collect::<Result<Vec<_>, _>>()?;

    let mut keys = Vec::new();
    for g in &q.group_by {
        if !class.dimension_refs.iter().any(|d| d == &g.dimension) {
            return Err(bad(format!("dimension {} not referenced", g.dimension)));
        }
        let dim = model.dimension(&g.dimension).ok_or_else(|| bad(format!("no dimension {}", g.dimension)))?;
        let level = dim
            .levels
            .iter()
            .position(|l| l.id == g.level)
            .ok_or_else(|| bad(format!("no level {}", g.level)))?;
        keys.push((dim, level));
    }
    if q.aggregates.is_empty() {
        return Err(bad("no aggregates".into()));
    }
    let mut measure_types = Vec::new();
    for a in &q.aggregates {
        match &a.measure {
            None if a.function == AggregateFunction::Count => measure_types.push(None),
            None => return Err(bad(format!("{}(*)", a.function))),
            Some(m) => {
                let def = class
                    .measures
                    .iter()
                    .find(|d| &d.id == m)
                    .ok_or_else(|| bad(format!("no measure {m}")))?;
                if def.value_type != ValueType::Integer && def.value_type != ValueType::Decimal {
                    return Err(bad(format!("measure {m} not numeric")));
                }
                measure_types.push(Some(def.value_type));
            }
        }
    }

    // a base member whose ancestors disagree on a predicate is an error even
    // when no fact points at it
    for c in &checks {
        let members = store.members(&c.predicate.dimension);
        for m in members.iter().filter(|m| m.level == model.dimension(&c.predicate.dimension).unwrap().levels[0].id) {
            selected(members, &m.member_id, c)?;
        }
    }

    // group key -> fact indices, in insertion order
    let facts = store.facts(&class.id);
    let mut buckets: Vec<(Vec<String>, Vec<usize>)> = Vec::new();
    'facts: for (i, fact) in facts.iter().enumerate() {
        for c in &checks {
            let p = c.predicate;
            let members = store.members(&p.dimension);
            let base = &fact.dim_refs[&p.dimension];
            if !selected(members, base, c)? {
                continue 'facts;
            }
        }
        let mut key = Vec::new();
        for (dim, level) in &keys {
            let base = &fact.dim_refs[&dim.id];
            let ancestors = climb(store.members(&dim.id), base, *level);
            if ancestors.len() != 1 {
                return Err(QueryError::NonStrictHierarchy {
                    dimension: dim.id.clone(),
                    member: base.clone(),
                });
            }
            key.push(ancestors[0].clone());
        }
        match buckets.iter_mut().find(|(k, _)| *k == key) {
            Some((_, list)) => list.push(i),
            None => buckets.push((key, vec![i])),
        }
    }
    buckets.sort_by(|a, b| a.0.cmp(&b.0));

    let mut columns = Vec::new();
    for (dim, level) in &keys {
        let l = &dim.levels[*level];
        columns.push(Column {
            name: format!("{}.{}", dim.id, l.id),
            kind: ColumnKind::GroupKey {
                dimension: dim.id.clone(),
                level: l.id.clone(),
            },
        });
        for a in &l.attributes {
            columns.push(Column {
                name: format!("{}.{}.{}", dim.id, l.id, a.id),
                kind: ColumnKind::GroupAttribute {
                    dimension: dim.id.clone(),
                    level: l.id.clone(),
                    attribute: a.id.clone(),
                },
            });
        }
    }
    for a in &q.aggregates {
        columns.push(Column {
            name: a.to_string(),
            kind: ColumnKind::Aggregate {
                function: a.function,
                measure: a.measure.clone(),
            },
        });
    }

    if buckets.is_empty() && keys.is_empty() {
        let rows = if q.aggregates.iter().all(|a| a.function == AggregateFunction::Count) {
            vec![vec![Cell::Int(0); q.aggregates.len()]]
        } else {
            vec![]
        };
        return Ok(ResultTable { columns, rows });
    }

    let mut rows = Vec::new();
    for (key, indices) in &buckets {
        let mut row = Vec::new();
        for ((dim, level), id) in keys.iter().zip(key) {
            row.push(Cell::Text(id.clone()));
            let member = find(store.members(&dim.id), id).expect("climbed to an existing member");
            for a in &dim.levels[*level].attributes {
                row.push(member.attributes.get(&a.id).map_or(Cell::Null, |v| Cell::Text(v.to_string())));
            }
        }
        for (a, ty) in q.aggregates.iter().zip(&measure_types) {
            let Some(m) = &a.measure else {
                row.push(Cell::Int(indices.len() as i64));
                continue;
            };
            let values: Vec<Number> = indices.iter().filter_map(|&i| facts[i].measures.get(m).copied()).collect();
            row.push(aggregate(a.function, *ty == Some(ValueType::Integer), &values)?);
        }
        rows.push(row);
    }
    Ok(ResultTable { columns, rows })
}

fn aggregate(f: AggregateFunction, integer: bool, values: &[Number]) -> Result<Cell, QueryError> {
    if f == AggregateFunction::Count {
        return Ok(Cell::Int(values.len() as i64));
    }
    if values.is_empty() {
        return Ok(Cell::Null);
    }
    let ints = || values.iter().map(|v| if let Number::Int(i) = v { *i } else { unreachable!() });
    let floats = || values.iter().map(|v| v.as_f64());
    Ok(match (f, integer) {
        (AggregateFunction::Sum, true) => {
            let total: i128 = ints().map(i128::from).sum();
            Cell::Int(i64::try_from(total).map_err(|_| QueryError::Overflow)?)
        }
        (AggregateFunction::Sum, false) => Cell::Dec(floats().sum()),
        (AggregateFunction::Avg, true) => {
            let total: i128 = ints().map(i128::from).sum();
            if i64::try_from(total).is_err() {
                return Err(QueryError::Overflow);
            }
            Cell::Dec(total as f64 / values.len() as f64)
        }
        (AggregateFunction::Avg, false) => Cell::Dec(floats().sum::<f64>() / values.len() as f64),
        (AggregateFunction::Min, true) => Cell::Int(ints().min().unwrap()),
        (AggregateFunction::Max, true) => Cell::Int(ints().max().unwrap()),
        (AggregateFunction::Min, false) => Cell::Dec(floats().fold(f64::INFINITY, f64::min)),
        (AggregateFunction::Max, false) => Cell::Dec(floats().fold(f64::NEG_INFINITY, f64::max)),
        (AggregateFunction::Count, _) => unreachable!(),
    })
}
