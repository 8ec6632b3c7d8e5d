//! Star-join analytic queries.
//!
//! ```text
//! FROM <fact-class>
//! [WHERE <dim>.<level>.<attr> <op> <literal> {AND ...}]
//! [GROUP BY <dim>.<level> {, ...}]
//! SELECT <agg>(<measure> | *) {, ...}
//! ```

mod ast;
pub(crate) mod engine;
mod oracle;
mod parser;
mod result;

pub use ast::{AggregateFunction, AggregateSpec, AnalyticQuery, Comparator, GroupKey, Literal, Predicate};
pub use engine::{evaluate, resolve_selection};
pub use oracle::oracle_evaluate;
pub use parser::{parse_predicate, parse_query, SyntaxError};
pub use result::{Cell, Column, ColumnKind, ResultTable};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QueryError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("validation error: {0}")]
    Validation(String),
    /// A member needed for selection or grouping has more than one ancestor
    /// at the requested level.
    #[error("non-strict hierarchy in dimension {dimension}: member {member} has ambiguous ancestors")]
    NonStrictHierarchy { dimension: String, member: String },
    #[error("integer aggregate overflows 64 bits")]
    Overflow,
}

/// Parses and evaluates in one step.
pub fn run_query(store: &crate::store::WarehouseStore, text: &str) -> Result<ResultTable, QueryError> {
    evaluate(store, &parse_query(text)?)
}
