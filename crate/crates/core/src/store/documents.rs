//! Fact (`facts_f.xml`) and dimension (`dimension_d.xml`) documents.

use std::collections::{BTreeMap, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::model::{DimensionDef, FactClassDef};
use crate::value::{Number, Value, ValueParseError};
use crate::xml::{write_attr, Event, EventReader, XmlError, XML_DECL};

/// One fact: measure values plus one base-level member reference per
/// declared dimension. A measure absent from `measures` is null.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactRecord {
    pub id: Option<String>,
    pub fact_class: String,
    pub measures: BTreeMap<String, Number>,
    pub dim_refs: BTreeMap<String, String>,
}

impl FactRecord {
    pub fn measure(&self, id: &str) -> Option<Number> {
        self.measures.get(id).copied()
    }

    /// `id` when present, else the 1-based position within its document.
    pub fn label(&self, position: usize) -> String {
        self.id.clone().unwrap_or_else(|| format!("#{}", position + 1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionMember {
    pub dimension: String,
    pub level: String,
    pub member_id: String,
    pub attributes: BTreeMap<String, Value>,
    /// Parents at the next coarser level.
    pub roll_up: Vec<String>,
    /// Children at the next finer level.
    pub drill_down: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DocumentError {
    #[error(transparent)]
    MalformedXml(#[from] XmlError),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("unknown measure {measure:?} in fact {fact}")]
    UnknownMeasureId { fact: String, measure: String },
    #[error("unknown dimension {dimension:?} in fact {fact}")]
    UnknownDimensionId { fact: String, dimension: String },
    #[error("measure {measure:?} appears twice in fact {fact}")]
    DuplicateMeasureInFact { fact: String, measure: String },
    #[error("dimension {dimension:?} referenced twice in fact {fact}")]
    DuplicateDimensionInFact { fact: String, dimension: String },
    #[error("fact {fact} lacks a reference for dimension {dimension:?}")]
    MissingDimensionRef { fact: String, dimension: String },
    #[error("unknown level {level:?} in dimension {dimension:?}")]
    UnknownLevelId { dimension: String, level: String },
    #[error("member id {member:?} appears twice in dimension {dimension:?}")]
    DuplicateMemberId { dimension: String, member: String },
    #[error("unknown attribute {attribute:?} on member {member:?} (level {level:?})")]
    UnknownAttributeId {
        member: String,
        level: String,
        attribute: String,
    },
    #[error("type error at {context}: {source}")]
    TypeError {
        context: String,
        source: ValueParseError,
    },
}

fn violation(msg: impl Into<String>) -> DocumentError {
    DocumentError::SchemaViolation(msg.into())
}

fn take_attrs(
    element: &str,
    attrs: Vec<(String, String)>,
    allowed: &[&str],
    position: u64,
) -> Result<Vec<Option<String>>, DocumentError> {
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

fn required(element: &str, name: &str, value: Option<String>, position: u64) -> Result<String, DocumentError> {
    value.ok_or_else(|| violation(format!("<{element}> at byte {position} lacks attribute {name:?}")))
}

fn expect_close(reader: &mut EventReader<'_>, element: &str) -> Result<(), DocumentError> {
    match reader.next_event()? {
        Some(Event::Close { text, .. }) if text.trim().is_empty() => Ok(()),
        Some(Event::Close { .. }) => Err(violation(format!("unexpected character data in <{element}>"))),
        Some(Event::Open { name, position, .. }) => Err(violation(format!(
            "unexpected <{name}> inside <{element}> at byte {position}"
        ))),
        None => unreachable!("reader reports unbalanced documents"),
    }
}

fn open_root(reader: &mut EventReader<'_>, expected: &str, allowed: &[&str]) -> Result<Vec<Option<String>>, DocumentError> {
    match reader.next_event()? {
        Some(Event::Open {
            name,
            attrs,
            position,
        }) => {
            if name != expected {
                return Err(violation(format!("root element is <{name}>, expected <{expected}>")));
            }
            take_attrs(&name, attrs, allowed, position)
        }
        _ => unreachable!("reader requires a root element"),
    }
}

fn finish(reader: &mut EventReader<'_>) -> Result<(), DocumentError> {
    while reader.next_event()?.is_some() {}
    Ok(())
}

pub fn parse_fact_document(bytes: &[u8], fact_class: &FactClassDef) -> Result<Vec<FactRecord>, DocumentError> {
    let mut reader = EventReader::new(bytes)?;
    let [root_id] = open_root(&mut reader, "FactDoc", &["id"])?.try_into().unwrap();
    if let Some(id) = root_id {
        if id != fact_class.id {
            return Err(violation(format!(
                "document holds fact class {id:?}, expected {:?}",
                fact_class.id
            )));
        }
    }
    let mut facts = Vec::new();
    loop {
        let (attrs, position) = match reader.next_event()? {
            Some(Event::Open {
                name,
                attrs,
                position,
            }) if name == "fact" => (attrs, position),
            Some(Event::Open { name, position, .. }) => {
                return Err(violation(format!("unexpected <{name}> inside <FactDoc> at byte {position}")))
            }
            Some(Event::Close { text, .. }) => {
                if !text.trim().is_empty() {
                    return Err(violation("unexpected character data in <FactDoc>"));
                }
                break;
            }
            None => unreachable!(),
        };
        let [id] = take_attrs("fact", attrs, &["id"], position)?.try_into().unwrap();
        let label = id.clone().unwrap_or_else(|| format!("#{}", facts.len() + 1));
        let mut record = FactRecord {
            id,
            fact_class: fact_class.id.clone(),
            measures: BTreeMap::new(),
            dim_refs: BTreeMap::new(),
        };
        loop {
            match reader.next_event()? {
                Some(Event::Open {
                    name,
                    attrs,
                    position,
                }) => match name.as_str() {
                    "measure" => {
                        let [mes, value] = take_attrs(&name, attrs, &["mes-id", "value"], position)?
                            .try_into()
                            .unwrap();
                        let mes = required(&name, "mes-id", mes, position)?;
                        let value = required(&name, "value", value, position)?;
                        let def = fact_class.measure(&mes).ok_or_else(|| DocumentError::UnknownMeasureId {
                            fact: label.clone(),
                            measure: mes.clone(),
                        })?;
                        let number = def
                            .value_type
                            .parse_number(&value)
                            .map_err(|source| DocumentError::TypeError {
                                context: format!("fact {label} measure {mes}"),
                                source,
                            })?;
                        if record.measures.insert(mes.clone(), number).is_some() {
                            return Err(DocumentError::DuplicateMeasureInFact {
                                fact: label,
                                measure: mes,
                            });
                        }
                        expect_close(&mut reader, &name)?;
                    }
                    "dimension" => {
                        let [dim, member] = take_attrs(&name, attrs, &["dim-id", "value-id"], position)?
                            .try_into()
                            .unwrap();
                        let dim = required(&name, "dim-id", dim, position)?;
                        let member = required(&name, "value-id", member, position)?;
                        if !fact_class.references(&dim) {
                            return Err(DocumentError::UnknownDimensionId {
                                fact: label,
                                dimension: dim,
                            });
                        }
                        if record.dim_refs.insert(dim.clone(), member).is_some() {
                            return Err(DocumentError::DuplicateDimensionInFact {
                                fact: label,
                                dimension: dim,
                            });
                        }
                        expect_close(&mut reader, &name)?;
                    }
                    _ => {
                        return Err(violation(format!(
                            "unexpected <{name}> inside <fact> at byte {position}"
                        )))
                    }
                },
                Some(Event::Close { text, .. }) => {
                    if !text.trim().is_empty() {
                        return Err(violation("unexpected character data in <fact>"));
                    }
                    break;
                }
                None => unreachable!(),
            }
        }
        if let Some(missing) = fact_class
            .dimension_refs
            .iter()
            .find(|d| !record.dim_refs.contains_key(*d))
        {
            return Err(DocumentError::MissingDimensionRef {
                fact: label,
                dimension: missing.clone(),
            });
        }
        facts.push(record);
    }
    finish(&mut reader)?;
    Ok(facts)
}

fn split_refs(raw: Option<String>) -> Vec<String> {
    raw.map(|s| s.split_whitespace().map(str::to_owned).collect())
        .unwrap_or_default()
}

pub fn parse_dimension_document(bytes: &[u8], dim: &DimensionDef) -> Result<Vec<DimensionMember>, DocumentError> {
    let mut reader = EventReader::new(bytes)?;
    let [dim_id] = open_root(&mut reader, "dimension", &["dim-id"])?.try_into().unwrap();
    if let Some(id) = dim_id {
        if id != dim.id {
            return Err(violation(format!("document holds dimension {id:?}, expected {:?}", dim.id)));
        }
    }
    let mut members = Vec::new();
    let mut seen_ids = HashSet::new();
    let mut seen_levels = HashSet::new();
    loop {
        let (attrs, position) = match reader.next_event()? {
            Some(Event::Open {
                name,
                attrs,
                position,
            }) if name == "Level" => (attrs, position),
            Some(Event::Open { name, position, .. }) => {
                return Err(violation(format!("unexpected <{name}> inside <dimension> at byte {position}")))
            }
            Some(Event::Close { text, .. }) => {
                if !text.trim().is_empty() {
                    return Err(violation("unexpected character data in <dimension>"));
                }
                break;
            }
            None => unreachable!(),
        };
        let [level_id] = take_attrs("Level", attrs, &["id"], position)?.try_into().unwrap();
        let level_id = required("Level", "id", level_id, position)?;
        let level = dim.level(&level_id).ok_or_else(|| DocumentError::UnknownLevelId {
            dimension: dim.id.clone(),
            level: level_id.clone(),
        })?;
        if !seen_levels.insert(level_id.clone()) {
            return Err(violation(format!("level {level_id:?} listed twice")));
        }
        loop {
            let (attrs, position) = match reader.next_event()? {
                Some(Event::Open {
                    name,
                    attrs,
                    position,
                }) if name == "instance" => (attrs, position),
                Some(Event::Open { name, position, .. }) => {
                    return Err(violation(format!("unexpected <{name}> inside <Level> at byte {position}")))
                }
                Some(Event::Close { text, .. }) => {
                    if !text.trim().is_empty() {
                        return Err(violation("unexpected character data in <Level>"));
                    }
                    break;
                }
                None => unreachable!(),
            };
            let [id, roll_up, drill_down] = take_attrs("instance", attrs, &["id", "Roll-up", "Drill-Down"], position)?
                .try_into()
                .unwrap();
            let member_id = required("instance", "id", id, position)?;
            if !seen_ids.insert(member_id.clone()) {
                return Err(DocumentError::DuplicateMemberId {
                    dimension: dim.id.clone(),
                    member: member_id,
                });
            }
            let mut member = DimensionMember {
                dimension: dim.id.clone(),
                level: level_id.clone(),
                member_id,
                attributes: BTreeMap::new(),
                roll_up: split_refs(roll_up),
                drill_down: split_refs(drill_down),
            };
            loop {
                match reader.next_event()? {
                    Some(Event::Open {
                        name,
                        attrs,
                        position,
                    }) if name == "attribute" => {
                        let [id, value] = take_attrs(&name, attrs, &["id", "value"], position)?
                            .try_into()
                            .unwrap();
                        let id = required(&name, "id", id, position)?;
                        let raw = required(&name, "value", value, position)?;
                        let def = level.attribute(&id).ok_or_else(|| DocumentError::UnknownAttributeId {
                            member: member.member_id.clone(),
                            level: level_id.clone(),
                            attribute: id.clone(),
                        })?;
                        let value = def.value_type.parse_value(&raw).map_err(|source| DocumentError::TypeError {
                            context: format!("member {} attribute {id}", member.member_id),
                            source,
                        })?;
                        if member.attributes.insert(id.clone(), value).is_some() {
                            return Err(violation(format!(
                                "attribute {id:?} given twice on member {:?}",
                                member.member_id
                            )));
                        }
                        expect_close(&mut reader, &name)?;
                    }
                    Some(Event::Open { name, position, .. }) => {
                        return Err(violation(format!(
                            "unexpected <{name}> inside <instance> at byte {position}"
                        )))
                    }
                    Some(Event::Close { text, .. }) => {
                        if !text.trim().is_empty() {
                            return Err(violation("unexpected character data in <instance>"));
                        }
                        break;
                    }
                    None => unreachable!(),
                }
            }
            members.push(member);
        }
    }
    finish(&mut reader)?;
    Ok(members)
}

/// Writes facts in the fact class's declared measure and dimension order.
pub fn serialize_fact_document(fact_class: &FactClassDef, facts: &[FactRecord]) -> Vec<u8> {
    let mut out = String::with_capacity(64 + facts.len() * 256);
    out.push_str(XML_DECL);
    out.push_str("<FactDoc");
    write_attr(&mut out, "id", &fact_class.id);
    if facts.is_empty() {
        out.push_str("/>\n");
        return out.into_bytes();
    }
    out.push_str(">\n");
    for fact in facts {
        out.push_str("  <fact");
        if let Some(id) = &fact.id {
            write_attr(&mut out, "id", id);
        }
        out.push_str(">\n");
        for m in &fact_class.measures {
            if let Some(v) = fact.measures.get(&m.id) {
                out.push_str("    <measure");
                write_attr(&mut out, "mes-id", &m.id);
                write_attr(&mut out, "value", &v.to_string());
                out.push_str("/>\n");
            }
        }
        for d in &fact_class.dimension_refs {
            if let Some(member) = fact.dim_refs.get(d) {
                out.push_str("    <dimension");
                write_attr(&mut out, "dim-id", d);
                write_attr(&mut out, "value-id", member);
                out.push_str("/>\n");
            }
        }
        out.push_str("  </fact>\n");
    }
    out.push_str("</FactDoc>\n");
    out.into_bytes()
}

/// Writes members grouped by level (finest first), preserving their
/// relative order within each level.
pub fn serialize_dimension_document(dim: &DimensionDef, members: &[DimensionMember]) -> Vec<u8> {
    let mut out = String::with_capacity(64 + members.len() * 192);
    out.push_str(XML_DECL);
    out.push_str("<dimension");
    write_attr(&mut out, "dim-id", &dim.id);
    out.push_str(">\n");
    for level in &dim.levels {
        out.push_str("  <Level");
        write_attr(&mut out, "id", &level.id);
        out.push_str(">\n");
        for m in members.iter().filter(|m| m.level == level.id) {
            out.push_str("    <instance");
            write_attr(&mut out, "id", &m.member_id);
            write_attr(&mut out, "Roll-up", &m.roll_up.join(" "));
            write_attr(&mut out, "Drill-Down", &m.drill_down.join(" "));
            out.push_str(">\n");
            for a in &level.attributes {
                if let Some(v) = m.attributes.get(&a.id) {
                    out.push_str("      <attribute");
                    write_attr(&mut out, "id", &a.id);
                    write_attr(&mut out, "value", &v.to_string());
                    out.push_str("/>\n");
                }
            }
            out.push_str("    </instance>\n");
        }
        out.push_str("  </Level>\n");
    }
    out.push_str("</dimension>\n");
    out.into_bytes()
}
