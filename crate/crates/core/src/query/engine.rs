//! Indexed star-join evaluation.
//!
//! Each predicate is resolved once against the dimension indices into a
//! bitmap over that dimension's members (coarse-level matches are pushed down
//! to base members along Drill-Down links), bitmaps of the same dimension are
//! intersected, and the fact table is then scanned once: a fact survives when
//! every constrained dimension's bitmap holds its reference, and is bucketed
//! by the Roll-up ancestors of its references at the grouping levels.

use std::collections::{BTreeSet, HashMap};

use crate::model::{FactClassDef, WarehouseModel};
use crate::store::{DimensionIndex, DimensionMember, HierarchyMode, WarehouseStore};
use crate::value::{Number, Value, ValueType};

use super::ast::{AggregateFunction, AnalyticQuery, Comparator, Predicate};
use super::result::{Cell, Column, ColumnKind, ResultTable};
use super::QueryError;

/// A predicate checked against the model, with its literal typed.
#[derive(Debug, Clone)]
pub(crate) struct BoundPredicate {
    pub dimension: String,
    pub level: usize,
    pub attribute: String,
    pub comparator: Comparator,
    pub value: Value,
}

impl BoundPredicate {
    pub fn matches(&self, member: &DimensionMember) -> bool {
        let Some(actual) = member.attributes.get(&self.attribute) else {
            return false;
        };
        let Some(ord) = actual.compare(&self.value) else {
            return false;
        };
        match self.comparator {
            Comparator::Eq => ord.is_eq(),
            Comparator::Ne => ord.is_ne(),
            Comparator::Lt => ord.is_lt(),
            Comparator::Le => ord.is_le(),
            Comparator::Gt => ord.is_gt(),
            Comparator::Ge => ord.is_ge(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BoundAggregate {
    pub function: AggregateFunction,
    /// Position in the class's measures and the measure's type.
    pub measure: Option<(usize, ValueType)>,
}

#[derive(Debug, Clone)]
pub(crate) struct BoundQuery<'m> {
    pub class: &'m FactClassDef,
    pub predicates: Vec<BoundPredicate>,
    /// (dimension id, level index)
    pub group_by: Vec<(String, usize)>,
    pub aggregates: Vec<BoundAggregate>,
}

fn invalid(msg: impl Into<String>) -> QueryError {
    QueryError::Validation(msg.into())
}

pub(crate) fn bind_predicate(model: &WarehouseModel, class: Option<&FactClassDef>, p: &Predicate) -> Result<BoundPredicate, QueryError> {
    let dim = model
        .dimension(&p.dimension)
        .ok_or_else(|| invalid(format!("unknown dimension {:?}", p.dimension)))?;
    if let Some(class) = class {
        if !class.references(&dim.id) {
            return Err(invalid(format!("fact class {:?} does not reference dimension {:?}", class.id, dim.id)));
        }
    }
    let level = dim
        .level_index(&p.level)
        .ok_or_else(|| invalid(format!("dimension {:?} has no level {:?}", dim.id, p.level)))?;
    let attr = dim.levels[level]
        .attribute(&p.attribute)
        .ok_or_else(|| invalid(format!("level {}.{} has no attribute {:?}", dim.id, p.level, p.attribute)))?;
    if p.comparator.is_ordering() && !attr.value_type.is_ordered() {
        return Err(invalid(format!(
            "operator {} cannot compare {} attribute {}",
            p.comparator.symbol(),
            attr.value_type,
            p.attribute
        )));
    }
    let value = attr
        .value_type
        .parse_value(&p.literal.text)
        .map_err(|e| invalid(format!("literal for {}.{}.{}: {e}", p.dimension, p.level, p.attribute)))?;
    Ok(BoundPredicate {
        dimension: dim.id.clone(),
        level,
        attribute: attr.id.clone(),
        comparator: p.comparator,
        value,
    })
}

pub(crate) fn bind<'m>(model: &'m WarehouseModel, q: &AnalyticQuery) -> Result<BoundQuery<'m>, QueryError> {
    let class = model
        .fact_class(&q.fact_class)
        .ok_or_else(|| invalid(format!("unknown fact class {:?}", q.fact_class)))?;
    let predicates = q
        .predicates
        .iter()
        .map(|p| bind_predicate(model, Some(class), p))
        .collect::<Result<_, _>>()?;
    let mut group_by = Vec::with_capacity(q.group_by.len());
    for g in &q.group_by {
        let dim = model
            .dimension(&g.dimension)
            .filter(|d| class.references(&d.id))
            .ok_or_else(|| invalid(format!("fact class {:?} has no dimension {:?}", class.id, g.dimension)))?;
        let level = dim
            .level_index(&g.level)
            .ok_or_else(|| invalid(format!("dimension {:?} has no level {:?}", dim.id, g.level)))?;
        group_by.push((dim.id.clone(), level));
    }
    if q.aggregates.is_empty() {
        return Err(invalid("query selects no aggregate"));
    }
    let mut aggregates = Vec::with_capacity(q.aggregates.len());
    for a in &q.aggregates {
        let measure = match &a.measure {
            None if a.function == AggregateFunction::Count => None,
            None => return Err(invalid(format!("{}(*) is not defined", a.function))),
            Some(m) => {
                let pos = class
                    .measures
                    .iter()
                    .position(|d| &d.id == m)
                    .ok_or_else(|| invalid(format!("fact class {:?} has no measure {m:?}", class.id)))?;
                let ty = class.measures[pos].value_type;
                if !ty.is_numeric() {
                    return Err(invalid(format!("measure {m:?} is not numeric")));
                }
                Some((pos, ty))
            }
        };
        aggregates.push(BoundAggregate {
            function: a.function,
            measure,
        });
    }
    Ok(BoundQuery {
        class,
        predicates,
        group_by,
        aggregates,
    })
}

/// Sorted, deduplicated ancestors of `member` at `level` along Roll-up links.
pub(crate) fn ancestors_at(dim: &DimensionIndex, member: u32, level: usize) -> Vec<u32> {
    let mut frontier = vec![member];
    let mut at = dim.level_of[member as usize];
    while at < level {
        let mut next: Vec<u32> = frontier
            .iter()
            .flat_map(|m| dim.parents[*m as usize].iter().copied())
            .collect();
        next.sort_unstable();
        next.dedup();
        frontier = next;
        at += 1;
    }
    frontier
}

/// Marks base members whose ancestor at `level` satisfies `accept`.
/// `seeds` are the accepted members at `level`; their Drill-Down closure is
/// marked. In lenient stores a base member reached this way whose other
/// ancestors at `level` are rejected is ambiguous.
fn push_down(
    dim: &DimensionIndex,
    level: usize,
    seeds: impl IntoIterator<Item = u32>,
    mode: HierarchyMode,
    accept: &dyn Fn(u32) -> bool,
) -> Result<Vec<bool>, QueryError> {
    let mut mask = vec![false; dim.members.len()];
    let mut frontier: Vec<u32> = seeds.into_iter().collect();
    for _ in 0..level {
        let mut next: Vec<u32> = frontier
            .iter()
            .flat_map(|m| dim.children[*m as usize].iter().copied())
            .collect();
        next.sort_unstable();
        next.dedup();
        frontier = next;
    }
    for m in frontier {
        if level > 0 && mode == HierarchyMode::Lenient && !ancestors_at(dim, m, level).into_iter().all(accept) {
            return Err(QueryError::NonStrictHierarchy {
                dimension: dim.def.id.clone(),
                member: dim.members[m as usize].member_id.clone(),
            });
        }
        mask[m as usize] = true;
    }
    Ok(mask)
}

pub(crate) fn predicate_mask(store: &WarehouseStore, p: &BoundPredicate) -> Result<Vec<bool>, QueryError> {
    let dim = store
        .dimension(&p.dimension)
        .ok_or_else(|| invalid(format!("unknown dimension {:?}", p.dimension)))?;
    let seeds: Vec<u32> = if p.comparator == Comparator::Eq {
        dim.lookup_handles(p.level, &p.attribute, &p.value).to_vec()
    } else {
        dim.by_level[p.level]
            .iter()
            .copied()
            .filter(|&m| p.matches(&dim.members[m as usize]))
            .collect()
    };
    push_down(dim, p.level, seeds, store.mode(), &|m| p.matches(&dim.members[m as usize]))
}

/// Base members of `dimension` whose ancestor at `level` is one of `ids`.
pub(crate) fn member_set_mask(
    store: &WarehouseStore,
    dimension: &str,
    level: usize,
    ids: &BTreeSet<String>,
) -> Result<Vec<bool>, QueryError> {
    let dim = store
        .dimension(dimension)
        .ok_or_else(|| invalid(format!("unknown dimension {dimension:?}")))?;
    let seeds: Vec<u32> = ids
        .iter()
        .filter_map(|id| dim.by_id.get(id).copied())
        .filter(|&m| dim.level_of[m as usize] == level)
        .collect();
    let accepted: BTreeSet<u32> = seeds.iter().copied().collect();
    push_down(dim, level, seeds, store.mode(), &|m| accepted.contains(&m))
}

/// Running state of one aggregate within one group.
#[derive(Debug, Clone, Default)]
pub(crate) struct Acc {
    /// Non-null contributions.
    pub n: u64,
    pub int_sum: i128,
    pub dec_sum: f64,
    pub min: Option<Number>,
    pub max: Option<Number>,
}

impl Acc {
    fn add(&mut self, v: Number) {
        self.n += 1;
        match v {
            Number::Int(i) => self.int_sum += i as i128,
            Number::Dec(d) => self.dec_sum += d,
        }
        let lt = |a: Number, b: Number| match (a, b) {
            (Number::Int(x), Number::Int(y)) => x < y,
            _ => a.as_f64() < b.as_f64(),
        };
        if self.min.is_none_or(|m| lt(v, m)) {
            self.min = Some(v);
        }
        if self.max.is_none_or(|m| lt(m, v)) {
            self.max = Some(v);
        }
    }

    pub fn sum(&self, ty: ValueType) -> Result<Number, QueryError> {
        Ok(match ty {
            ValueType::Integer => Number::Int(i64::try_from(self.int_sum).map_err(|_| QueryError::Overflow)?),
            _ => Number::Dec(self.dec_sum),
        })
    }

    pub fn finish(&self, agg: &BoundAggregate, rows: u64) -> Result<Cell, QueryError> {
        let Some((_, ty)) = agg.measure else {
            return Ok(Cell::Int(rows as i64));
        };
        if agg.function == AggregateFunction::Count {
            return Ok(Cell::Int(self.n as i64));
        }
        if self.n == 0 {
            return Ok(Cell::Null);
        }
        let cell = |n: Number| match n {
            Number::Int(i) => Cell::Int(i),
            Number::Dec(d) => Cell::Dec(d),
        };
        Ok(match agg.function {
            AggregateFunction::Sum => cell(self.sum(ty)?),
            AggregateFunction::Avg => Cell::Dec(self.sum(ty)?.as_f64() / self.n as f64),
            AggregateFunction::Min => cell(self.min.expect("n > 0")),
            AggregateFunction::Max => cell(self.max.expect("n > 0")),
            AggregateFunction::Count => unreachable!(),
        })
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Group {
    /// Member handles, aligned with the query's group keys.
    pub key: Vec<u32>,
    pub rows: u64,
    pub accs: Vec<Acc>,
}

/// Selects, groups and accumulates. `extra` masks restrict dimensions
/// further (cube slice/dice filters). Groups come back ordered by the member
/// ids of their keys.
pub(crate) fn run(
    store: &WarehouseStore,
    q: &BoundQuery<'_>,
    extra: Vec<(String, Vec<bool>)>,
) -> Result<Vec<Group>, QueryError> {
    let class = q.class;
    let table = &store.facts[&class.id];
    let position = |dim: &str| class.dimension_refs.iter().position(|d| d == dim).expect("bound dimension");

    // one intersected mask per constrained dimension
    let mut masks: HashMap<usize, Vec<bool>> = HashMap::new();
    let mut merge = |pos: usize, mask: Vec<bool>| match masks.get_mut(&pos) {
        Some(existing) => existing.iter_mut().zip(mask).for_each(|(a, b)| *a &= b),
        None => {
            masks.insert(pos, mask);
        }
    };
    for p in &q.predicates {
        merge(position(&p.dimension), predicate_mask(store, p)?);
    }
    for (dim, mask) in extra {
        merge(position(&dim), mask);
    }
    let masks: Vec<(&[u32], Vec<bool>)> = masks
        .into_iter()
        .map(|(pos, mask)| (table.refs[pos].as_slice(), mask))
        .collect();

    // ancestor handle per base member for each grouping level; None = ambiguous
    let resolvers: Vec<(usize, &DimensionIndex, Vec<Option<u32>>)> = q
        .group_by
        .iter()
        .map(|(dim_id, level)| {
            let dim = &store.dimensions[dim_id];
            let ancestors = (0..dim.members.len() as u32)
                .map(|m| {
                    if dim.level_of[m as usize] != 0 {
                        return None;
                    }
                    match ancestors_at(dim, m, *level).as_slice() {
                        [single] => Some(*single),
                        _ => None,
                    }
                })
                .collect();
            (position(dim_id), dim, ancestors)
        })
        .collect();

    let mut index: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut groups: Vec<Group> = Vec::new();
    let mut key = Vec::with_capacity(resolvers.len());
    'facts: for fact in 0..table.records.len() {
        for (refs, mask) in &masks {
            if !mask[refs[fact] as usize] {
                continue 'facts;
            }
        }
        key.clear();
        for (pos, dim, ancestors) in &resolvers {
            let base = table.refs[*pos][fact];
            match ancestors[base as usize] {
                Some(a) => key.push(a),
                None => {
                    return Err(QueryError::NonStrictHierarchy {
                        dimension: dim.def.id.clone(),
                        member: dim.members[base as usize].member_id.clone(),
                    })
                }
            }
        }
        let slot = match index.get(&key) {
            Some(&slot) => slot,
            None => {
                index.insert(key.clone(), groups.len());
                groups.push(Group {
                    key: key.clone(),
                    rows: 0,
                    accs: vec![Acc::default(); q.aggregates.len()],
                });
                groups.len() - 1
            }
        };
        let group = &mut groups[slot];
        group.rows += 1;
        for (acc, agg) in group.accs.iter_mut().zip(&q.aggregates) {
            if let Some((m, _)) = agg.measure {
                if let Some(v) = table.measures[m][fact] {
                    acc.add(v);
                }
            }
        }
    }

    let ids = |g: &Group| -> Vec<&str> {
        g.key
            .iter()
            .zip(&resolvers)
            .map(|(h, (_, dim, _))| dim.members[*h as usize].member_id.as_str())
            .collect()
    };
    groups.sort_by(|a, b| ids(a).cmp(&ids(b)));
    Ok(groups)
}

pub(crate) fn columns(model: &WarehouseModel, q: &BoundQuery<'_>) -> Vec<Column> {
    let mut columns = Vec::new();
    for (dim_id, level) in &q.group_by {
        let dim = model.dimension(dim_id).expect("bound dimension");
        let level_def = &dim.levels[*level];
        columns.push(Column {
            name: format!("{}.{}", dim.id, level_def.id),
            kind: ColumnKind::GroupKey {
                dimension: dim.id.clone(),
                level: level_def.id.clone(),
            },
        });
        for attr in &level_def.attributes {
            columns.push(Column {
                name: format!("{}.{}.{}", dim.id, level_def.id, attr.id),
                kind: ColumnKind::GroupAttribute {
                    dimension: dim.id.clone(),
                    level: level_def.id.clone(),
                    attribute: attr.id.clone(),
                },
            });
        }
    }
    for agg in &q.aggregates {
        let measure = agg.measure.map(|(m, _)| q.class.measures[m].id.clone());
        columns.push(Column {
            name: format!("{}({})", agg.function, measure.as_deref().unwrap_or("*")),
            kind: ColumnKind::Aggregate {
                function: agg.function,
                measure,
            },
        });
    }
    columns
}

/// Resolves one predicate to the base-level members it selects.
pub fn resolve_selection(store: &WarehouseStore, p: &Predicate) -> Result<BTreeSet<String>, QueryError> {
    let bound = bind_predicate(store.model(), None, p)?;
    let dim = &store.dimensions[&bound.dimension];
    let mask = predicate_mask(store, &bound)?;
    Ok(mask
        .iter()
        .enumerate()
        .filter(|(_, on)| **on)
        .map(|(i, _)| dim.members[i].member_id.clone())
        .collect())
}

pub fn evaluate(store: &WarehouseStore, q: &AnalyticQuery) -> Result<ResultTable, QueryError> {
    let bound = bind(store.model(), q)?;
    let groups = run(store, &bound, Vec::new())?;
    let columns = columns(store.model(), &bound);

    if groups.is_empty() && bound.group_by.is_empty() {
        let only_counts = bound.aggregates.iter().all(|a| a.function == AggregateFunction::Count);
        let rows = if only_counts {
            vec![bound.aggregates.iter().map(|_| Cell::Int(0)).collect()]
        } else {
            Vec::new()
        };
        return Ok(ResultTable { columns, rows });
    }

    let mut rows = Vec::with_capacity(groups.len());
    for g in &groups {
        let mut row = Vec::with_capacity(columns.len());
        for (handle, (dim_id, level)) in g.key.iter().zip(&bound.group_by) {
            let dim = &store.dimensions[dim_id];
            let member = &dim.members[*handle as usize];
            row.push(Cell::Text(member.member_id.clone()));
            for attr in &dim.def.levels[*level].attributes {
                row.push(match member.attributes.get(&attr.id) {
                    Some(v) => Cell::Text(v.to_string()),
                    None => Cell::Null,
                });
            }
        }
        for (acc, agg) in g.accs.iter().zip(&bound.aggregates) {
            row.push(acc.finish(agg, g.rows)?);
        }
        rows.push(row);
    }
    Ok(ResultTable { columns, rows })
}
