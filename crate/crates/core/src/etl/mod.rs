//! Turning flat source records into warehouse documents.
//!
//! Source schemas are outlined as attribute trees and merged against a goal
//! outline by pruning and grafting. Records (delimited text or flat XML) are
//! mapped onto a fact class by a [`MappingConfig`], which also synthesizes
//! the coarser hierarchy levels.

mod generate;
mod mapping;
mod records;
mod tree;

pub use generate::{generate_parts, generate_warehouse};
pub use mapping::{BucketRange, Bucketing, DimensionMapping, FieldSource, MappingConfig};
pub use records::SourceRecordSet;
pub use tree::{
    build_attribute_tree, merge_attribute_trees, normalize_name, AttributeTree, MergeOutcome, TreeNode, TreeNodeKind,
};

use crate::value::ValueParseError;
use crate::xml::XmlError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EtlError {
    #[error(transparent)]
    MalformedXml(#[from] XmlError),
    #[error("invalid source records: {0}")]
    Records(String),
    #[error("mapping error: {0}")]
    Mapping(String),
    #[error("type error in row {row}, field {field}: {source}")]
    Type {
        row: usize,
        field: String,
        source: ValueParseError,
    },
}
