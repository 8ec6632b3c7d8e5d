use std::fmt;

use serde::{Serialize, Serializer};

use super::ast::AggregateFunction;
use crate::value::approx_eq_f64;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    /// Member id of the group's ancestor at a level.
    GroupKey { dimension: String, level: String },
    /// A descriptive attribute of that member.
    GroupAttribute {
        dimension: String,
        level: String,
        attribute: String,
    },
    Aggregate {
        function: AggregateFunction,
        measure: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Column {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Null,
    Int(i64),
    Dec(f64),
    Text(String),
}

impl Cell {
    fn approx_eq(&self, other: &Cell, rel_tol: f64) -> bool {
        match (self, other) {
            (Cell::Dec(a), Cell::Dec(b)) => approx_eq_f64(*a, *b, rel_tol),
            (a, b) => a == b,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Dec(d) => Some(*d),
            _ => None,
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Null => Ok(()),
            Cell::Int(i) => write!(f, "{i}"),
            Cell::Dec(d) => write!(f, "{d}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl Serialize for Cell {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Cell::Null => s.serialize_none(),
            Cell::Int(i) => s.serialize_i64(*i),
            Cell::Dec(d) => s.serialize_f64(*d),
            Cell::Text(t) => s.serialize_str(t),
        }
    }
}

/// Grouped aggregate result: group-key columns (member id, then the level's
/// attributes) followed by one column per aggregate. Rows are ordered by
/// group-key member ids.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultTable {
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
}

impl ResultTable {
    /// Describes the first difference, treating decimal cells as equal
    /// within `rel_tol`; `None` when the tables agree.
    pub fn diff(&self, other: &ResultTable, rel_tol: f64) -> Option<String> {
        if self.columns != other.columns {
            return Some(format!("columns differ: {:?} vs {:?}", self.columns, other.columns));
        }
        if self.rows.len() != other.rows.len() {
            return Some(format!("row counts differ: {} vs {}", self.rows.len(), other.rows.len()));
        }
        for (i, (a, b)) in self.rows.iter().zip(&other.rows).enumerate() {
            if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| !x.approx_eq(y, rel_tol)) {
                return Some(format!("row {i} differs: {a:?} vs {b:?}"));
            }
        }
        None
    }

    pub fn approx_eq(&self, other: &ResultTable, rel_tol: f64) -> bool {
        self.diff(other, rel_tol).is_none()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Fixed-width table with a header and a separator line.
    pub fn to_text_table(&self) -> String {
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(ToString::to_string).collect())
            .collect();
        let mut widths: Vec<usize> = self.columns.iter().map(|c| c.name.chars().count()).collect();
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, items: &mut dyn Iterator<Item = &str>| {
            let parts: Vec<String> = items
                .zip(&widths)
                .map(|(s, w)| format!("{s:<w$}", w = *w))
                .collect();
            out.push_str(parts.join("  ").trim_end());
            out.push('\n');
        };
        line(&mut out, &mut self.columns.iter().map(|c| c.name.as_str()));
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        line(&mut out, &mut rule.iter().map(String::as_str));
        for row in &cells {
            line(&mut out, &mut row.iter().map(String::as_str));
        }
        out
    }
}
