//! The warehouse metadata document (`dw-model.xml`).
//!
//! ```xml
//! <DW-model>
//!   <dimension id="Patient" path="dimension_Patient.xml">
//!     <Level id="Patient"><attribute id="Patient_age" type="integer"/></Level>
//!     <Level id="AgeGroup"><attribute id="range" type="string"/></Level>
//!   </dimension>
//!   <FactDoc id="Suspicious_region" path="facts.xml">
//!     <measure id="Number_of_regions" type="integer"/>
//!     <dimension-ref dim-id="Patient"/>
//!   </FactDoc>
//! </DW-model>
//! ```
//!
//! Levels are listed finest first; document order is hierarchy order.

use std::collections::HashSet;

use serde::Serialize;
use thiserror::Error;

use crate::diagnostic::{self, Diagnostic, DiagnosticCode};
use crate::value::ValueType;
use crate::xml::{write_attr, Event, EventReader, XmlError, XML_DECL};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AttributeDef {
    pub id: String,
    #[serde(rename = "type")]
    pub value_type: ValueType,
}

impl AttributeDef {
    pub fn new(id: impl Into<String>, value_type: ValueType) -> Self {
        Self {
            id: id.into(),
            value_type,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LevelDef {
    pub id: String,
    pub attributes: Vec<AttributeDef>,
}

impl LevelDef {
    pub fn attribute(&self, id: &str) -> Option<&AttributeDef> {
        self.attributes.iter().find(|a| a.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DimensionDef {
    pub id: String,
    /// Finest level first.
    pub levels: Vec<LevelDef>,
    #[serde(rename = "path")]
    pub document_path: String,
}

impl DimensionDef {
    pub fn level_index(&self, id: &str) -> Option<usize> {
        self.levels.iter().position(|l| l.id == id)
    }

    pub fn level(&self, id: &str) -> Option<&LevelDef> {
        self.levels.iter().find(|l| l.id == id)
    }

    pub fn base_level(&self) -> &LevelDef {
        &self.levels[0]
    }

    pub fn top_index(&self) -> usize {
        self.levels.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FactClassDef {
    pub id: String,
    pub measures: Vec<AttributeDef>,
    pub dimension_refs: Vec<String>,
    #[serde(rename = "path")]
    pub document_path: String,
}

impl FactClassDef {
    pub fn measure(&self, id: &str) -> Option<&AttributeDef> {
        self.measures.iter().find(|m| m.id == id)
    }

    pub fn references(&self, dimension: &str) -> bool {
        self.dimension_refs.iter().any(|d| d == dimension)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct WarehouseModel {
    pub dimensions: Vec<DimensionDef>,
    pub fact_classes: Vec<FactClassDef>,
}

impl WarehouseModel {
    pub fn dimension(&self, id: &str) -> Option<&DimensionDef> {
        self.dimensions.iter().find(|d| d.id == id)
    }

    pub fn fact_class(&self, id: &str) -> Option<&FactClassDef> {
        self.fact_classes.iter().find(|f| f.id == id)
    }

    /// Equality that ignores the order of dimensions and fact classes but
    /// respects level, attribute, measure and reference order.
    pub fn logically_eq(&self, other: &WarehouseModel) -> bool {
        fn sorted<T: Clone>(items: &[T], key: impl Fn(&T) -> &str) -> Vec<T> {
            let mut v = items.to_vec();
            v.sort_by(|a, b| key(a).cmp(key(b)));
            v
        }
        sorted(&self.dimensions, |d| &d.id) == sorted(&other.dimensions, |d| &d.id)
            && sorted(&self.fact_classes, |f| &f.id) == sorted(&other.fact_classes, |f| &f.id)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    MalformedXml(#[from] XmlError),
    #[error("schema violation: {message}")]
    SchemaViolation {
        message: String,
        diagnostics: Vec<Diagnostic>,
    },
}

fn violation(message: impl Into<String>) -> ModelError {
    ModelError::SchemaViolation {
        message: message.into(),
        diagnostics: Vec::new(),
    }
}

/// Reads the attributes of `element`, rejecting names outside `allowed`.
/// Returns values positionally aligned with `allowed`.
fn take_attrs(
    element: &str,
    attrs: Vec<(String, String)>,
    allowed: &[&str],
    position: u64,
) -> Result<Vec<Option<String>>, ModelError> {
    let mut out = vec![None; allowed.len()];
    for (key, value) in attrs {
        match allowed.iter().position(|a| *a == key) {
            Some(i) => out[i] = Some(value),
            None => {
                return Err(violation(format!(
                    "unknown attribute {key:?} on <{element}> at byte {position}"
                )))
            }
        }
    }
    Ok(out)
}

fn required(element: &str, name: &str, value: Option<String>, position: u64) -> Result<String, ModelError> {
    value.ok_or_else(|| violation(format!("<{element}> at byte {position} lacks required attribute {name:?}")))
}

fn parse_type(raw: &str, position: u64) -> Result<ValueType, ModelError> {
    raw.parse()
        .map_err(|e: String| violation(format!("{e} at byte {position}")))
}

fn reject_text(element: &str, text: &str) -> Result<(), ModelError> {
    if text.trim().is_empty() {
        Ok(())
    } else {
        Err(violation(format!("unexpected character data in <{element}>")))
    }
}

/// Collects children of the element just opened, dispatching each child
/// `Open` to `on_child`. Returns when the element closes.
fn children<F>(reader: &mut EventReader<'_>, mut on_child: F) -> Result<(), ModelError>
where
    F: FnMut(&mut EventReader<'_>, String, Vec<(String, String)>, u64) -> Result<(), ModelError>,
{
    loop {
        match reader.next_event()? {
            Some(Event::Open {
                name,
                attrs,
                position,
            }) => on_child(reader, name, attrs, position)?,
            Some(Event::Close { name, text }) => return reject_text(&name, &text),
            None => unreachable!("reader reports unbalanced documents"),
        }
    }
}

fn leaf(reader: &mut EventReader<'_>, element: &str) -> Result<(), ModelError> {
    children(reader, |_, name, _, position| {
        Err(violation(format!(
            "unexpected <{name}> inside <{element}> at byte {position}"
        )))
    })
}

pub fn parse_model(bytes: &[u8]) -> Result<WarehouseModel, ModelError> {
    let mut reader = EventReader::new(bytes)?;
    let mut model = WarehouseModel::default();
    match reader.next_event()? {
        Some(Event::Open {
            name,
            attrs,
            position,
        }) => {
            if name != "DW-model" {
                return Err(violation(format!("root element is <{name}>, expected <DW-model>")));
            }
            take_attrs(&name, attrs, &[], position)?;
        }
        _ => unreachable!("reader requires a root element"),
    }
    children(&mut reader, |reader, name, attrs, position| match name.as_str() {
        "dimension" => {
            let [id, path]: [Option<String>; 2] =
                take_attrs(&name, attrs, &["id", "path"], position)?.try_into().unwrap();
            let mut dim = DimensionDef {
                id: required(&name, "id", id, position)?,
                document_path: required(&name, "path", path, position)?,
                levels: Vec::new(),
            };
            children(reader, |reader, name, attrs, position| {
                if name != "Level" {
                    return Err(violation(format!("unexpected <{name}> inside <dimension> at byte {position}")));
                }
                let [id] = take_attrs(&name, attrs, &["id"], position)?.try_into().unwrap();
                let mut level = LevelDef {
                    id: required(&name, "id", id, position)?,
                    attributes: Vec::new(),
                };
                children(reader, |reader, name, attrs, position| {
                    if name != "attribute" {
                        return Err(violation(format!("unexpected <{name}> inside <Level> at byte {position}")));
                    }
                    let [id, ty] = take_attrs(&name, attrs, &["id", "type"], position)?.try_into().unwrap();
                    level.attributes.push(AttributeDef {
                        id: required(&name, "id", id, position)?,
                        value_type: parse_type(&required(&name, "type", ty, position)?, position)?,
                    });
                    leaf(reader, &name)
                })?;
                dim.levels.push(level);
                Ok(())
            })?;
            model.dimensions.push(dim);
            Ok(())
        }
        "FactDoc" => {
            let [id, path] = take_attrs(&name, attrs, &["id", "path"], position)?.try_into().unwrap();
            let mut fact = FactClassDef {
                id: required(&name, "id", id, position)?,
                document_path: required(&name, "path", path, position)?,
                measures: Vec::new(),
                dimension_refs: Vec::new(),
            };
            children(reader, |reader, name, attrs, position| {
                match name.as_str() {
                    "measure" => {
                        let [id, ty] = take_attrs(&name, attrs, &["id", "type"], position)?.try_into().unwrap();
                        fact.measures.push(AttributeDef {
                            id: required(&name, "id", id, position)?,
                            value_type: parse_type(&required(&name, "type", ty, position)?, position)?,
                        });
                    }
                    "dimension-ref" => {
                        let [dim] = take_attrs(&name, attrs, &["dim-id"], position)?.try_into().unwrap();
                        fact.dimension_refs.push(required(&name, "dim-id", dim, position)?);
                    }
                    _ => {
                        return Err(violation(format!(
                            "unexpected <{name}> inside <FactDoc> at byte {position}"
                        )))
                    }
                }
                leaf(reader, &name)
            })?;
            model.fact_classes.push(fact);
            Ok(())
        }
        _ => Err(violation(format!("unexpected <{name}> inside <DW-model> at byte {position}"))),
    })?;
    // drain to EOF so trailing garbage is reported
    while reader.next_event()?.is_some() {}

    let diagnostics = validate_model(&model);
    if diagnostics.is_empty() {
        Ok(model)
    } else {
        Err(ModelError::SchemaViolation {
            message: diagnostic::join(&diagnostics),
            diagnostics,
        })
    }
}

pub fn serialize_model(model: &WarehouseModel) -> Vec<u8> {
    let mut out = String::from(XML_DECL);
    out.push_str("<DW-model>\n");
    for dim in &model.dimensions {
        out.push_str("  <dimension");
        write_attr(&mut out, "id", &dim.id);
        write_attr(&mut out, "path", &dim.document_path);
        out.push_str(">\n");
        for level in &dim.levels {
            out.push_str("    <Level");
            write_attr(&mut out, "id", &level.id);
            out.push_str(">\n");
            for attr in &level.attributes {
                out.push_str("      <attribute");
                write_attr(&mut out, "id", &attr.id);
                write_attr(&mut out, "type", attr.value_type.as_str());
                out.push_str("/>\n");
            }
            out.push_str("    </Level>\n");
        }
        out.push_str("  </dimension>\n");
    }
    for fact in &model.fact_classes {
        out.push_str("  <FactDoc");
        write_attr(&mut out, "id", &fact.id);
        write_attr(&mut out, "path", &fact.document_path);
        out.push_str(">\n");
        for m in &fact.measures {
            out.push_str("    <measure");
            write_attr(&mut out, "id", &m.id);
            write_attr(&mut out, "type", m.value_type.as_str());
            out.push_str("/>\n");
        }
        for d in &fact.dimension_refs {
            out.push_str("    <dimension-ref");
            write_attr(&mut out, "dim-id", d);
            out.push_str("/>\n");
        }
        out.push_str("  </FactDoc>\n");
    }
    out.push_str("</DW-model>\n");
    out.into_bytes()
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && !id.chars().any(char::is_whitespace)
}

pub fn validate_model(model: &WarehouseModel) -> Vec<Diagnostic> {
    use DiagnosticCode::*;
    let mut out = Vec::new();
    let check_id = |out: &mut Vec<Diagnostic>, path: &str, id: &str| {
        if !valid_id(id) {
            out.push(Diagnostic::new(
                InvalidId,
                path,
                format!("id {id:?} is empty or contains whitespace"),
            ));
        }
    };

    if model.dimensions.is_empty() {
        out.push(Diagnostic::new(EmptyModel, "DW-model", "model declares no dimensions"));
    }

    let mut dim_ids = HashSet::new();
    for dim in &model.dimensions {
        let path = format!("dimension[{}]", dim.id);
        check_id(&mut out, &path, &dim.id);
        if !dim_ids.insert(dim.id.as_str()) {
            out.push(Diagnostic::new(DuplicateDimensionId, &path, "dimension id declared twice"));
        }
        if dim.document_path.trim().is_empty() {
            out.push(Diagnostic::new(EmptyPath, &path, "dimension has no document path"));
        }
        if dim.levels.is_empty() {
            out.push(Diagnostic::new(NoLevels, &path, "dimension declares no levels"));
        }
        let mut level_ids = HashSet::new();
        for level in &dim.levels {
            let lpath = format!("{path}/Level[{}]", level.id);
            check_id(&mut out, &lpath, &level.id);
            if !level_ids.insert(level.id.as_str()) {
                out.push(Diagnostic::new(DuplicateLevelId, &lpath, "level id declared twice in dimension"));
            }
            if level.attributes.is_empty() {
                out.push(Diagnostic::new(NoAttributes, &lpath, "level declares no attributes"));
            }
            let mut attr_ids = HashSet::new();
            for attr in &level.attributes {
                let apath = format!("{lpath}/attribute[{}]", attr.id);
                check_id(&mut out, &apath, &attr.id);
                if !attr_ids.insert(attr.id.as_str()) {
                    out.push(Diagnostic::new(DuplicateAttributeId, &apath, "attribute id declared twice in level"));
                }
            }
        }
    }

    let mut fact_ids = HashSet::new();
    for fact in &model.fact_classes {
        let path = format!("FactDoc[{}]", fact.id);
        check_id(&mut out, &path, &fact.id);
        if !fact_ids.insert(fact.id.as_str()) {
            out.push(Diagnostic::new(DuplicateFactClassId, &path, "fact class id declared twice"));
        }
        if fact.document_path.trim().is_empty() {
            out.push(Diagnostic::new(EmptyPath, &path, "fact class has no document path"));
        }
        if fact.measures.is_empty() {
            out.push(Diagnostic::new(NoMeasures, &path, "fact class declares no measures"));
        }
        let mut measure_ids = HashSet::new();
        for m in &fact.measures {
            let mpath = format!("{path}/measure[{}]", m.id);
            check_id(&mut out, &mpath, &m.id);
            if !measure_ids.insert(m.id.as_str()) {
                out.push(Diagnostic::new(DuplicateMeasureId, &mpath, "measure id declared twice"));
            }
            if !m.value_type.is_numeric() {
                out.push(Diagnostic::new(
                    NonNumericMeasure,
                    &mpath,
                    format!("measure type {} is not integer or decimal", m.value_type),
                ));
            }
        }
        if fact.dimension_refs.is_empty() {
            out.push(Diagnostic::new(NoDimensionRefs, &path, "fact class references no dimension"));
        }
        let mut refs = HashSet::new();
        for d in &fact.dimension_refs {
            let rpath = format!("{path}/dimension-ref[{d}]");
            if !refs.insert(d.as_str()) {
                out.push(Diagnostic::new(DuplicateDimensionRef, &rpath, "dimension referenced twice"));
            }
            if !dim_ids.contains(d.as_str()) {
                out.push(Diagnostic::new(
                    DanglingDimensionRef,
                    &rpath,
                    format!("dimension {d:?} is not declared"),
                ));
            }
        }
    }
    out
}
