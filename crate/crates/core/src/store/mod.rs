//! In-process document store: parsed fact and dimension documents plus the
//! indices the query engine needs.

mod documents;
mod integrity;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::diagnostic::{self, Diagnostic};
use crate::model::{parse_model, serialize_model, DimensionDef, ModelError, WarehouseModel};
use crate::value::{Number, Value, ValueKey};

pub use documents::{
    parse_dimension_document, parse_fact_document, serialize_dimension_document, serialize_fact_document,
    DimensionMember, DocumentError, FactRecord,
};
pub use integrity::check_integrity;

/// File name of the metadata document inside a warehouse directory.
pub const MODEL_FILE: &str = "dw-model.xml";

/// How many Roll-up parents a non-top member may have.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HierarchyMode {
    /// Exactly one parent per non-top member.
    #[default]
    Strict,
    /// One or more parents; re-aggregation through multi-parent members
    /// is refused at query time.
    Lenient,
}

/// Parsed warehouse contents before indexing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StoreParts {
    pub model: WarehouseModel,
    /// Fact class id -> facts in document order.
    pub facts: BTreeMap<String, Vec<FactRecord>>,
    /// Dimension id -> members in document order.
    pub members: BTreeMap<String, Vec<DimensionMember>>,
}

impl StoreParts {
    /// Every document of the warehouse keyed by its declared path, plus the
    /// metadata document under [`MODEL_FILE`].
    pub fn to_documents(&self) -> BTreeMap<String, Vec<u8>> {
        let mut docs = BTreeMap::new();
        docs.insert(MODEL_FILE.to_owned(), serialize_model(&self.model));
        for dim in &self.model.dimensions {
            let members = self.members.get(&dim.id).map(Vec::as_slice).unwrap_or(&[]);
            docs.insert(dim.document_path.clone(), serialize_dimension_document(dim, members));
        }
        for class in &self.model.fact_classes {
            let facts = self.facts.get(&class.id).map(Vec::as_slice).unwrap_or(&[]);
            docs.insert(class.document_path.clone(), serialize_fact_document(class, facts));
        }
        docs
    }

    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        write_documents(dir, &self.to_documents())
    }
}

pub fn write_documents(dir: &Path, docs: &BTreeMap<String, Vec<u8>>) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for (path, bytes) in docs {
        let target = dir.join(path);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(target, bytes)?;
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Model { path: PathBuf, source: ModelError },
    #[error("{}: {source}", path.display())]
    Document { path: PathBuf, source: DocumentError },
    #[error("integrity check failed: {}", diagnostic::join(.0))]
    Integrity(Vec<Diagnostic>),
}

impl LoadError {
    /// Malformed XML or unreadable files, as opposed to content that parsed
    /// but violates the schema or the integrity rules.
    pub fn is_io_or_syntax(&self) -> bool {
        matches!(
            self,
            LoadError::FileNotFound(_)
                | LoadError::Io { .. }
                | LoadError::Model {
                    source: ModelError::MalformedXml(_),
                    ..
                }
                | LoadError::Document {
                    source: DocumentError::MalformedXml(_),
                    ..
                }
        )
    }
}

fn read(path: &Path) -> Result<Vec<u8>, LoadError> {
    fs::read(path).map_err(|source| {
        if source.kind() == io::ErrorKind::NotFound {
            LoadError::FileNotFound(path.to_owned())
        } else {
            LoadError::Io {
                path: path.to_owned(),
                source,
            }
        }
    })
}

/// Reads and parses every document reachable from the model file, without
/// integrity checking. Document paths resolve against the model's directory.
pub fn load_parts(model_path: &Path) -> Result<StoreParts, LoadError> {
    let model = parse_model(&read(model_path)?).map_err(|source| LoadError::Model {
        path: model_path.to_owned(),
        source,
    })?;
    let base = model_path.parent().unwrap_or(Path::new("."));
    let mut parts = StoreParts {
        model: model.clone(),
        ..StoreParts::default()
    };
    for dim in &model.dimensions {
        let path = base.join(&dim.document_path);
        let members = parse_dimension_document(&read(&path)?, dim)
            .map_err(|source| LoadError::Document { path, source })?;
        parts.members.insert(dim.id.clone(), members);
    }
    for class in &model.fact_classes {
        let path = base.join(&class.document_path);
        let facts =
            parse_fact_document(&read(&path)?, class).map_err(|source| LoadError::Document { path, source })?;
        parts.facts.insert(class.id.clone(), facts);
    }
    Ok(parts)
}

pub fn load_warehouse(model_path: &Path) -> Result<WarehouseStore, LoadError> {
    load_warehouse_with(model_path, HierarchyMode::Strict)
}

pub fn load_warehouse_with(model_path: &Path, mode: HierarchyMode) -> Result<WarehouseStore, LoadError> {
    WarehouseStore::from_parts(load_parts(model_path)?, mode)
}

/// One dimension's members with id, level, hierarchy and attribute indices.
/// Member handles are positions in `members`.
#[derive(Debug)]
pub struct DimensionIndex {
    pub(crate) def: DimensionDef,
    pub(crate) members: Vec<DimensionMember>,
    pub(crate) by_id: HashMap<String, u32>,
    pub(crate) level_of: Vec<usize>,
    pub(crate) parents: Vec<Vec<u32>>,
    pub(crate) children: Vec<Vec<u32>>,
    pub(crate) by_level: Vec<Vec<u32>>,
    attr_index: HashMap<(usize, String), HashMap<ValueKey, Vec<u32>>>,
}

impl DimensionIndex {
    fn build(def: DimensionDef, members: Vec<DimensionMember>) -> Self {
        let by_id: HashMap<String, u32> = members
            .iter()
            .enumerate()
            .map(|(i, m)| (m.member_id.clone(), i as u32))
            .collect();
        let level_of: Vec<usize> = members
            .iter()
            .map(|m| def.level_index(&m.level).expect("integrity-checked level"))
            .collect();
        let resolve = |ids: &[String]| ids.iter().filter_map(|id| by_id.get(id).copied()).collect::<Vec<_>>();
        let parents = members.iter().map(|m| resolve(&m.roll_up)).collect();
        let children = members.iter().map(|m| resolve(&m.drill_down)).collect();
        let mut by_level = vec![Vec::new(); def.levels.len()];
        let mut attr_index: HashMap<(usize, String), HashMap<ValueKey, Vec<u32>>> = HashMap::new();
        for (i, m) in members.iter().enumerate() {
            let level = level_of[i];
            by_level[level].push(i as u32);
            for (attr, value) in &m.attributes {
                attr_index
                    .entry((level, attr.clone()))
                    .or_default()
                    .entry(value.key())
                    .or_default()
                    .push(i as u32);
            }
        }
        Self {
            def,
            members,
            by_id,
            level_of,
            parents,
            children,
            by_level,
            attr_index,
        }
    }

    pub fn definition(&self) -> &DimensionDef {
        &self.def
    }

    pub fn members(&self) -> &[DimensionMember] {
        &self.members
    }

    pub fn member(&self, id: &str) -> Option<&DimensionMember> {
        self.by_id.get(id).map(|&i| &self.members[i as usize])
    }

    pub fn members_at_level(&self, level: usize) -> impl Iterator<Item = &DimensionMember> {
        self.by_level
            .get(level)
            .into_iter()
            .flatten()
            .map(|&i| &self.members[i as usize])
    }

    /// Members at `level` whose `attribute` equals `value`.
    pub fn lookup(&self, level: usize, attribute: &str, value: &Value) -> impl Iterator<Item = &DimensionMember> {
        self.lookup_handles(level, attribute, value)
            .iter()
            .map(|&i| &self.members[i as usize])
    }

    pub(crate) fn lookup_handles(&self, level: usize, attribute: &str, value: &Value) -> &[u32] {
        self.attr_index
            .get(&(level, attribute.to_owned()))
            .and_then(|by_value| by_value.get(&value.key()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// Columnar copy of one fact class: member handles per referenced dimension
/// and values per measure, both indexed by fact position.
#[derive(Debug)]
pub(crate) struct FactTable {
    pub(crate) records: Vec<FactRecord>,
    /// Aligned with the class's `dimension_refs`.
    pub(crate) refs: Vec<Vec<u32>>,
    /// Aligned with the class's `measures`.
    pub(crate) measures: Vec<Vec<Option<Number>>>,
}

/// A loaded, integrity-checked warehouse. Immutable after construction.
#[derive(Debug)]
pub struct WarehouseStore {
    model: WarehouseModel,
    mode: HierarchyMode,
    pub(crate) dimensions: BTreeMap<String, DimensionIndex>,
    pub(crate) facts: BTreeMap<String, FactTable>,
}

impl WarehouseStore {
    /// Checks integrity and builds indices. Fails with the full report when
    /// any diagnostic is raised.
    pub fn from_parts(parts: StoreParts, mode: HierarchyMode) -> Result<Self, LoadError> {
        let report = check_integrity(&parts, mode);
        if !report.is_empty() {
            return Err(LoadError::Integrity(report));
        }
        let StoreParts {
            model,
            mut facts,
            mut members,
        } = parts;
        let dimensions: BTreeMap<String, DimensionIndex> = model
            .dimensions
            .iter()
            .map(|def| {
                let list = members.remove(&def.id).unwrap_or_default();
                (def.id.clone(), DimensionIndex::build(def.clone(), list))
            })
            .collect();
        let mut tables = BTreeMap::new();
        for class in &model.fact_classes {
            let records = facts.remove(&class.id).unwrap_or_default();
            let refs = class
                .dimension_refs
                .iter()
                .map(|d| {
                    let index = &dimensions[d];
                    records.iter().map(|r| index.by_id[&r.dim_refs[d]]).collect()
                })
                .collect();
            let measures = class
                .measures
                .iter()
                .map(|m| records.iter().map(|r| r.measure(&m.id)).collect())
                .collect();
            tables.insert(
                class.id.clone(),
                FactTable {
                    records,
                    refs,
                    measures,
                },
            );
        }
        Ok(Self {
            model,
            mode,
            dimensions,
            facts: tables,
        })
    }

    pub fn model(&self) -> &WarehouseModel {
        &self.model
    }

    pub fn mode(&self) -> HierarchyMode {
        self.mode
    }

    /// Facts of a class in document order; empty for unknown classes.
    pub fn facts(&self, fact_class: &str) -> &[FactRecord] {
        self.facts.get(fact_class).map(|t| t.records.as_slice()).unwrap_or(&[])
    }

    pub fn dimension(&self, id: &str) -> Option<&DimensionIndex> {
        self.dimensions.get(id)
    }

    /// Members of a dimension in document order; empty for unknown ids.
    pub fn members(&self, dimension: &str) -> &[DimensionMember] {
        self.dimensions.get(dimension).map(|d| d.members.as_slice()).unwrap_or(&[])
    }

    pub fn member(&self, dimension: &str, id: &str) -> Option<&DimensionMember> {
        self.dimensions.get(dimension)?.member(id)
    }

    pub fn fact_count(&self) -> usize {
        self.facts.values().map(|t| t.records.len()).sum()
    }

    pub fn member_count(&self) -> usize {
        self.dimensions.values().map(|d| d.members.len()).sum()
    }

    /// Reassembles the parsed documents this store was built from.
    pub fn to_parts(&self) -> StoreParts {
        StoreParts {
            model: self.model.clone(),
            facts: self
                .facts
                .iter()
                .map(|(k, t)| (k.clone(), t.records.clone()))
                .collect(),
            members: self
                .dimensions
                .iter()
                .map(|(k, d)| (k.clone(), d.members.clone()))
                .collect(),
        }
    }
}
