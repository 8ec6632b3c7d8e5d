//! XML data warehouse engine.
//!
//! A warehouse is a set of XML documents: one metadata document describing
//! the multidimensional schema, one document per fact class holding the
//! facts, and one document per dimension holding its members level by
//! level. Facts point at dimension members, and members point at each other
//! across hierarchy levels, through identifier-valued attributes.
//!
//! On top of that document model the crate provides an ETL path from flat
//! source records, a star-join query evaluator with a brute-force oracle,
//! and sparse OLAP cubes with roll-up, drill-down, slice and dice.

pub mod cube;
pub mod diagnostic;
pub mod etl;
pub mod graph;
pub mod model;
pub mod query;
pub mod store;
pub mod synth;
pub mod value;
mod xml;

pub use cube::{build_cube, Cube, CubeError, CubeSpec};
pub use diagnostic::{Diagnostic, DiagnosticCode};
pub use etl::{generate_warehouse, EtlError, MappingConfig, SourceRecordSet};
pub use graph::{is_virtual_key_reference, parse_xml_graph, NodeId, NodeKind, XmlGraph};
pub use model::{
    parse_model, serialize_model, validate_model, AttributeDef, DimensionDef, FactClassDef, LevelDef, ModelError,
    WarehouseModel,
};
pub use store::{
    check_integrity, load_parts, load_warehouse, load_warehouse_with, DimensionMember, DocumentError, FactRecord,
    HierarchyMode, LoadError, StoreParts, WarehouseStore,
};
pub use query::{
    evaluate, oracle_evaluate, parse_query, resolve_selection, run_query, AnalyticQuery, QueryError, ResultTable,
};
pub use value::{Number, Value, ValueType};
pub use xml::XmlError;
