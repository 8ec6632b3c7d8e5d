//! Sparse data cubes and the roll-up, drill-down, slice and dice operators.
//!
//! A cube is a grouped aggregate reshaped into a coordinate map: one axis
//! per grouped dimension, one cell per coordinate tuple that received at
//! least one contribution. Operators return new cubes; the ones that change
//! granularity consult the store. Slice and dice record the members they
//! keep as filters so that later rebuilds from the store stay restricted.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::query::engine::{self, Acc, Group};
use crate::query::{AggregateFunction, AggregateSpec, AnalyticQuery, GroupKey, Predicate, QueryError};
use crate::store::WarehouseStore;
use crate::value::Number;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CubeError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("invalid cube specification: {0}")]
    InvalidSpec(String),
    #[error("dimension {0} has no axis in the cube")]
    UnknownAxis(String),
    #[error("member {member} is not on the {dimension} axis")]
    UnknownAxisMember { dimension: String, member: String },
    #[error("axis {dimension} is already at its coarsest level")]
    AlreadyCoarsest { dimension: String },
    #[error("axis {dimension} is already at its finest level")]
    AlreadyFinest { dimension: String },
    #[error("cannot render a pivot of {0} axes; slice or dice first")]
    TooManyAxes(usize),
}

impl CubeError {
    /// Stable machine-readable name.
    pub fn code(&self) -> &'static str {
        match self {
            CubeError::Query(QueryError::Syntax(_)) => "SYNTAX_ERROR",
            CubeError::Query(QueryError::Validation(_)) | CubeError::InvalidSpec(_) => "VALIDATION_ERROR",
            CubeError::Query(QueryError::NonStrictHierarchy { .. }) => "NON_STRICT_HIERARCHY",
            CubeError::Query(QueryError::Overflow) => "OVERFLOW",
            CubeError::UnknownAxis(_) => "UNKNOWN_AXIS",
            CubeError::UnknownAxisMember { .. } => "UNKNOWN_AXIS_MEMBER",
            CubeError::AlreadyCoarsest { .. } => "ALREADY_COARSEST",
            CubeError::AlreadyFinest { .. } => "ALREADY_FINEST",
            CubeError::TooManyAxes(_) => "TOO_MANY_AXES",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub dimension: String,
    pub level: String,
}

/// Restricts a dimension to the members at `level` listed here (and, for
/// finer levels, their descendants).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberFilter {
    pub dimension: String,
    pub level: String,
    pub members: BTreeSet<String>,
}

/// Everything needed to (re)build a cube from the store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeSpec {
    pub fact_class: String,
    pub axes: Vec<AxisSpec>,
    /// `None` or `"*"` only with `count`.
    #[serde(default)]
    pub measure: Option<String>,
    pub aggregate: AggregateFunction,
    #[serde(default)]
    pub predicates: Vec<Predicate>,
    #[serde(default)]
    pub filters: Vec<MemberFilter>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CubeAxis {
    pub dimension: String,
    pub level: String,
    /// Ascending member ids occurring in at least one cell.
    pub members: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CubeCell {
    pub value: Number,
    /// Contributing facts: non-null measure values, or all facts for `count(*)`.
    pub count: u64,
    /// Sum of the contributions, kept so `avg` can be re-aggregated.
    pub sum: Number,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cube {
    pub fact_class: String,
    pub measure: Option<String>,
    pub aggregate: AggregateFunction,
    pub predicates: Vec<Predicate>,
    pub filters: Vec<MemberFilter>,
    pub axes: Vec<CubeAxis>,
    /// Coordinates are member ids aligned with `axes`.
    pub cells: BTreeMap<Vec<String>, CubeCell>,
}

fn spec_error(msg: impl Into<String>) -> CubeError {
    CubeError::InvalidSpec(msg.into())
}

fn to_number(cell: crate::query::Cell) -> Number {
    match cell {
        crate::query::Cell::Int(i) => Number::Int(i),
        crate::query::Cell::Dec(d) => Number::Dec(d),
        other => unreachable!("aggregate over contributions is numeric, got {other:?}"),
    }
}

pub fn build_cube(store: &WarehouseStore, spec: &CubeSpec) -> Result<Cube, CubeError> {
    if spec.axes.is_empty() {
        return Err(spec_error("a cube needs at least one axis"));
    }
    let mut seen = BTreeSet::new();
    for axis in &spec.axes {
        if !seen.insert(axis.dimension.as_str()) {
            return Err(spec_error(format!("dimension {} appears on two axes", axis.dimension)));
        }
    }
    build(store, spec)
}

/// Builds without the non-empty-axes requirement; sliced cubes may have none.
fn build(store: &WarehouseStore, spec: &CubeSpec) -> Result<Cube, CubeError> {
    let measure = spec.measure.clone().filter(|m| m != "*");
    let query = AnalyticQuery {
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
            measure: measure.clone(),
        }],
    };
    let model = store.model();
    let bound = engine::bind(model, &query)?;
    let agg = &bound.aggregates[0];

    let mut extra = Vec::new();
    for f in &spec.filters {
        let dim = model
            .dimension(&f.dimension)
            .filter(|d| bound.class.references(&d.id))
            .ok_or_else(|| spec_error(format!("filter on unknown dimension {}", f.dimension)))?;
        let level = dim
            .level_index(&f.level)
            .ok_or_else(|| spec_error(format!("filter on unknown level {}.{}", f.dimension, f.level)))?;
        extra.push((dim.id.clone(), engine::member_set_mask(store, &dim.id, level, &f.members)?));
    }
    let groups: Vec<Group> = engine::run(store, &bound, extra)?;

    let mut cells = BTreeMap::new();
    for g in groups {
        let acc: &Acc = &g.accs[0];
        let count = if agg.measure.is_none() { g.rows } else { acc.n };
        if count == 0 {
            continue;
        }
        let value = to_number(acc.finish(agg, g.rows).map_err(CubeError::Query)?);
        let sum = match agg.measure {
            Some((_, ty)) => acc.sum(ty)?,
            None => Number::Int(count as i64),
        };
        let coords = g
            .key
            .iter()
            .zip(&bound.group_by)
            .map(|(h, (dim, _))| store.dimensions[dim].members[*h as usize].member_id.clone())
            .collect();
        cells.insert(coords, CubeCell { value, count, sum });
    }
    let mut cube = Cube {
        fact_class: bound.class.id.clone(),
        measure,
        aggregate: spec.aggregate,
        predicates: spec.predicates.clone(),
        filters: spec.filters.clone(),
        axes: spec
            .axes
            .iter()
            .map(|a| CubeAxis {
                dimension: a.dimension.clone(),
                level: a.level.clone(),
                members: Vec::new(),
            })
            .collect(),
        cells,
    };
    cube.refresh_axes();
    Ok(cube)
}

fn add(a: Number, b: Number) -> Result<Number, CubeError> {
    Ok(match (a, b) {
        (Number::Int(x), Number::Int(y)) => Number::Int(x.checked_add(y).ok_or(QueryError::Overflow)?),
        (x, y) => Number::Dec(x.as_f64() + y.as_f64()),
    })
}

fn less(a: Number, b: Number) -> bool {
    match (a, b) {
        (Number::Int(x), Number::Int(y)) => x < y,
        (x, y) => x.as_f64() < y.as_f64(),
    }
}

impl Cube {
    pub fn spec(&self) -> CubeSpec {
        CubeSpec {
            fact_class: self.fact_class.clone(),
            axes: self
                .axes
                .iter()
                .map(|a| AxisSpec {
                    dimension: a.dimension.clone(),
                    level: a.level.clone(),
                })
                .collect(),
            measure: self.measure.clone(),
            aggregate: self.aggregate,
            predicates: self.predicates.clone(),
            filters: self.filters.clone(),
        }
    }

    pub fn axis_index(&self, dimension: &str) -> Option<usize> {
        self.axes.iter().position(|a| a.dimension == dimension)
    }

    pub fn cell(&self, coords: &[&str]) -> Option<&CubeCell> {
        let key: Vec<String> = coords.iter().map(|s| s.to_string()).collect();
        self.cells.get(&key)
    }

    /// Sum of all cell values.
    pub fn total(&self) -> f64 {
        self.cells.values().map(|c| c.value.as_f64()).sum()
    }

    /// Column name of the aggregate, e.g. `sum(Region_length)`.
    pub fn aggregate_label(&self) -> String {
        format!("{}({})", self.aggregate, self.measure.as_deref().unwrap_or("*"))
    }

    fn refresh_axes(&mut self) {
        for (i, axis) in self.axes.iter_mut().enumerate() {
            let members: BTreeSet<&String> = self.cells.keys().map(|k| &k[i]).collect();
            axis.members = members.into_iter().cloned().collect();
        }
    }

    fn axis(&self, dimension: &str) -> Result<usize, CubeError> {
        self.axis_index(dimension)
            .ok_or_else(|| CubeError::UnknownAxis(dimension.to_string()))
    }

    fn combine(&self, into: &mut CubeCell, from: CubeCell) -> Result<(), CubeError> {
        into.count += from.count;
        into.sum = add(into.sum, from.sum)?;
        into.value = match self.aggregate {
            AggregateFunction::Sum | AggregateFunction::Count => add(into.value, from.value)?,
            AggregateFunction::Avg => Number::Dec(into.sum.as_f64() / into.count as f64),
            AggregateFunction::Min if less(from.value, into.value) => from.value,
            AggregateFunction::Max if less(into.value, from.value) => from.value,
            AggregateFunction::Min | AggregateFunction::Max => into.value,
        };
        Ok(())
    }

    /// Re-aggregates the `dimension` axis at its next coarser level.
    pub fn roll_up(&self, dimension: &str, store: &WarehouseStore) -> Result<Cube, CubeError> {
        let i = self.axis(dimension)?;
        let def = store
            .dimension(dimension)
            .ok_or_else(|| CubeError::UnknownAxis(dimension.to_string()))?
            .definition();
        let level = def
            .level_index(&self.axes[i].level)
            .ok_or_else(|| spec_error(format!("unknown level {}", self.axes[i].level)))?;
        if level + 1 >= def.levels.len() {
            return Err(CubeError::AlreadyCoarsest {
                dimension: dimension.to_string(),
            });
        }
        let mut parent_of = BTreeMap::new();
        for member in &self.axes[i].members {
            let m = store
                .member(dimension, member)
                .ok_or_else(|| spec_error(format!("member {member} not in store")))?;
            match m.roll_up.as_slice() {
                [p] => {
                    parent_of.insert(member.clone(), p.clone());
                }
                _ => {
                    return Err(QueryError::NonStrictHierarchy {
                        dimension: dimension.to_string(),
                        member: member.clone(),
                    }
                    .into())
                }
            }
        }
        let mut cells: BTreeMap<Vec<String>, CubeCell> = BTreeMap::new();
        for (coords, cell) in &self.cells {
            let mut key = coords.clone();
            key[i] = parent_of[&coords[i]].clone();
            match cells.get_mut(&key) {
                Some(existing) => self.combine(existing, *cell)?,
                None => {
                    cells.insert(key, *cell);
                }
            }
        }
        let mut cube = self.clone();
        cube.axes[i].level = def.levels[level + 1].id.clone();
        cube.cells = cells;
        cube.refresh_axes();
        Ok(cube)
    }

    /// Rebuilds the cube from the store with `dimension` at its next finer level.
    pub fn drill_down(&self, dimension: &str, store: &WarehouseStore) -> Result<Cube, CubeError> {
        let i = self.axis(dimension)?;
        let def = store
            .dimension(dimension)
            .ok_or_else(|| CubeError::UnknownAxis(dimension.to_string()))?
            .definition();
        let level = def
            .level_index(&self.axes[i].level)
            .ok_or_else(|| spec_error(format!("unknown level {}", self.axes[i].level)))?;
        if level == 0 {
            return Err(CubeError::AlreadyFinest {
                dimension: dimension.to_string(),
            });
        }
        let mut spec = self.spec();
        spec.axes[i].level = def.levels[level - 1].id.clone();
        build(store, &spec)
    }

    /// Fixes `dimension` to `member` and removes its axis.
    pub fn slice(&self, dimension: &str, member: &str) -> Result<Cube, CubeError> {
        let i = self.axis(dimension)?;
        if !self.axes[i].members.iter().any(|m| m == member) {
            return Err(CubeError::UnknownAxisMember {
                dimension: dimension.to_string(),
                member: member.to_string(),
            });
        }
        let mut cube = self.clone();
        let axis = cube.axes.remove(i);
        cube.filters.push(MemberFilter {
            dimension: axis.dimension,
            level: axis.level,
            members: BTreeSet::from([member.to_string()]),
        });
        cube.cells = self
            .cells
            .iter()
            .filter(|(k, _)| k[i] == member)
            .map(|(k, c)| {
                let mut k = k.clone();
                k.remove(i);
                (k, *c)
            })
            .collect();
        cube.refresh_axes();
        Ok(cube)
    }

    /// Keeps only cells whose coordinates lie in the given member sets.
    pub fn dice(&self, keep: &BTreeMap<String, BTreeSet<String>>) -> Result<Cube, CubeError> {
        let mut cube = self.clone();
        let mut kept = Vec::new();
        for (dimension, members) in keep {
            let i = self.axis(dimension)?;
            if let Some(m) = members.iter().find(|m| !self.axes[i].members.contains(m)) {
                return Err(CubeError::UnknownAxisMember {
                    dimension: dimension.clone(),
                    member: m.clone(),
                });
            }
            cube.filters.push(MemberFilter {
                dimension: dimension.clone(),
                level: self.axes[i].level.clone(),
                members: members.clone(),
            });
            kept.push((i, members));
        }
        cube.cells.retain(|k, _| kept.iter().all(|(i, members)| members.contains(&k[*i])));
        cube.refresh_axes();
        Ok(cube)
    }

    /// Two-dimensional text rendering: first axis down, second across.
    pub fn render_pivot(&self) -> Result<String, CubeError> {
        let label = |a: &CubeAxis| format!("{}.{}", a.dimension, a.level);
        let fmt_cell = |k: &[String]| self.cells.get(k).map(|c| c.value.to_string()).unwrap_or_default();
        let grid: Vec<Vec<String>> = match self.axes.as_slice() {
            [] => vec![vec![self.aggregate_label()], vec![fmt_cell(&[])]],
            [rows] => {
                let mut g = vec![vec![label(rows), self.aggregate_label()]];
                for m in &rows.members {
                    g.push(vec![m.clone(), fmt_cell(std::slice::from_ref(m))]);
                }
                g
            }
            [rows, cols] => {
                let mut header = vec![format!("{} \\ {}", label(rows), label(cols))];
                header.extend(cols.members.iter().cloned());
                let mut g = vec![header];
                for r in &rows.members {
                    let mut line = vec![r.clone()];
                    for c in &cols.members {
                        line.push(fmt_cell(&[r.clone(), c.clone()]));
                    }
                    g.push(line);
                }
                g
            }
            more => return Err(CubeError::TooManyAxes(more.len())),
        };
        let columns = grid[0].len();
        let widths: Vec<usize> = (0..columns)
            .map(|c| grid.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &grid {
            let parts: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(s, w)| format!("{s:<w$}", w = *w))
                .collect();
            out.push_str(parts.join("  ").trim_end());
            out.push('\n');
        }
        Ok(out)
    }
}

#[derive(Serialize)]
struct CellOut<'a> {
    coordinates: &'a [String],
    #[serde(flatten)]
    cell: &'a CubeCell,
}

#[derive(Serialize)]
struct CubeOut<'a> {
    fact_class: &'a str,
    measure: Option<&'a str>,
    aggregate: AggregateFunction,
    predicates: &'a [Predicate],
    filters: &'a [MemberFilter],
    axes: &'a [CubeAxis],
    cells: Vec<CellOut<'a>>,
}

/// Axes plus a sparse cell list in coordinate order.
impl Serialize for Cube {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        CubeOut {
            fact_class: &self.fact_class,
            measure: self.measure.as_deref(),
            aggregate: self.aggregate,
            predicates: &self.predicates,
            filters: &self.filters,
            axes: &self.axes,
            cells: self
                .cells
                .iter()
                .map(|(coordinates, cell)| CellOut { coordinates, cell })
                .collect(),
        }
        .serialize(s)
    }
}

impl fmt::Display for Cube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.render_pivot() {
            Ok(text) => f.write_str(&text),
            Err(_) => {
                for (k, c) in &self.cells {
                    writeln!(f, "({}) {}", k.join(", "), c.value)?;
                }
                Ok(())
            }
        }
    }
}
