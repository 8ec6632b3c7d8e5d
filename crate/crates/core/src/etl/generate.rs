use std::collections::{BTreeMap, HashMap};

use crate::model::{DimensionDef, WarehouseModel};
use crate::store::{DimensionMember, FactRecord, StoreParts};
use crate::value::{Value, ValueType};

use super::mapping::{FieldSource, MappingConfig};
use super::records::SourceRecordSet;
use super::EtlError;

pub(crate) fn bucket_value(raw: &str) -> Result<i64, crate::value::ValueParseError> {
    match ValueType::Integer.parse_value(raw)? {
        Value::Int(i) => Ok(i),
        _ => unreachable!("integer parse yields an integer"),
    }
}

/// Per-dimension member synthesis state.
struct Members<'a> {
    def: &'a DimensionDef,
    /// (level, identity key) → index into `members`
    by_key: HashMap<(usize, Vec<String>), usize>,
    members: Vec<DimensionMember>,
    /// parent index per member
    parent: Vec<Option<usize>>,
}

impl<'a> Members<'a> {
    fn intern(&mut self, level: usize, key: Vec<String>, attributes: BTreeMap<String, Value>) -> (usize, bool) {
        if let Some(&i) = self.by_key.get(&(level, key.clone())) {
            return (i, false);
        }
        let i = self.members.len();
        self.by_key.insert((level, key), i);
        self.members.push(DimensionMember {
            dimension: self.def.id.clone(),
            level: self.def.levels[level].id.clone(),
            member_id: String::new(),
            attributes,
            roll_up: Vec::new(),
            drill_down: Vec::new(),
        });
        self.parent.push(None);
        (i, true)
    }

    /// Assigns `m` + zero-padded ordinals and fills hierarchy links.
    fn finish(mut self) -> Vec<DimensionMember> {
        let width = self.members.len().to_string().len().max(6);
        for (i, m) in self.members.iter_mut().enumerate() {
            m.member_id = format!("m{:0width$}", i + 1);
        }
        for i in 0..self.members.len() {
            if let Some(p) = self.parent[i] {
                let (child, parent) = (self.members[i].member_id.clone(), self.members[p].member_id.clone());
                self.members[i].roll_up.push(parent);
                self.members[p].drill_down.push(child);
            }
        }
        for m in &mut self.members {
            m.drill_down.sort();
        }
        self.members
    }
}

/// Builds the warehouse content for `records` under `mapping`.
///
/// Base members are identified by the tuple of their identity attributes;
/// a coarser member by its level's mapped values together with those of all
/// levels above it, so every member has exactly one parent. Members are
/// numbered per dimension in order of first appearance (a row's base member
/// before its ancestors), and the first row introducing a base member fixes
/// its attributes and ancestors. Empty cells are absent attribute values or
/// null measures.
pub fn generate_parts(
    records: &SourceRecordSet,
    mapping: &MappingConfig,
    model: &WarehouseModel,
) -> Result<StoreParts, EtlError> {
    mapping.validate(model, records)?;
    let class = model.fact_class(&mapping.fact_class).expect("validated");
    let mut fact_map: BTreeMap<String, Vec<FactRecord>> =
        model.fact_classes.iter().map(|fc| (fc.id.clone(), Vec::new())).collect();
    let mut member_lists: BTreeMap<String, Vec<DimensionMember>> =
        model.dimensions.iter().map(|d| (d.id.clone(), Vec::new())).collect();
    if records.rows.is_empty() {
        return Ok(StoreParts {
            model: model.clone(),
            facts: fact_map,
            members: member_lists,
        });
    }
    let column = |field: &str| records.field_index(field).expect("validated");

    let mut dims: Vec<(Members, Vec<String>)> = class
        .dimension_refs
        .iter()
        .map(|d| {
            let def = model.dimension(d).expect("validated");
            let members = Members {
                def,
                by_key: HashMap::new(),
                members: Vec::new(),
                parent: Vec::new(),
            };
            (members, mapping.identity(def))
        })
        .collect();
    let mut base_of_row: Vec<Vec<usize>> = Vec::with_capacity(records.rows.len());

    for (r, row) in records.rows.iter().enumerate() {
        let type_err = |field: &str, source| EtlError::Type {
            row: r + 1,
            field: field.to_string(),
            source,
        };
        let mut refs = Vec::with_capacity(dims.len());
        for (members, identity) in dims.iter_mut() {
            let def = members.def;
            let levels = &mapping.dimensions[&def.id].levels;
            // typed attribute values per level, in declared attribute order
            let mut values: Vec<BTreeMap<String, Value>> = Vec::with_capacity(def.levels.len());
            let mut keys: Vec<Vec<String>> = Vec::with_capacity(def.levels.len());
            for level in &def.levels {
                let mut attrs = BTreeMap::new();
                let mut key = Vec::new();
                for attr in &level.attributes {
                    let Some(source) = levels[&level.id].get(&attr.id) else {
                        continue;
                    };
                    let raw = row[column(source.field())].trim();
                    let text = match source {
                        _ if raw.is_empty() => None,
                        FieldSource::Field(_) => Some(raw.to_string()),
                        FieldSource::Bucket(b) => {
                            let v = bucket_value(raw).map_err(|e| type_err(&b.bucket, e))?;
                            let label = b.label_for(v).ok_or_else(|| {
                                EtlError::Mapping(format!("value {v} in row {} is outside every bucket", r + 1))
                            })?;
                            Some(label.to_string())
                        }
                    };
                    match text {
                        Some(t) => {
                            let v = attr.value_type.parse_value(&t).map_err(|e| type_err(source.field(), e))?;
                            key.push(v.to_string());
                            attrs.insert(attr.id.clone(), v);
                        }
                        None => key.push(String::new()),
                    }
                }
                values.push(attrs);
                keys.push(key);
            }

            let base_key: Vec<String> = identity
                .iter()
                .map(|id| values[0].get(id).map(|v| v.to_string()).unwrap_or_default())
                .collect();
            let (base, new) = members.intern(0, base_key, values[0].clone());
            if new {
                let mut child = base;
                for level in 1..def.levels.len() {
                    let key: Vec<String> = keys[level..].iter().flatten().cloned().collect();
                    let (m, _) = members.intern(level, key, values[level].clone());
                    members.parent[child] = Some(m);
                    child = m;
                }
            }
            refs.push(base);
        }
        base_of_row.push(refs);
    }

    let measure_cols: Vec<(String, ValueType, usize)> = class
        .measures
        .iter()
        .filter_map(|m| mapping.measures.get(&m.id).map(|f| (m.id.clone(), m.value_type, column(f))))
        .collect();
    let id_col = mapping.fact_id_field.as_deref().map(column);

    let mut ids_by_dim: Vec<Vec<String>> = Vec::new();
    for (members, _) in dims {
        let id = members.def.id.clone();
        let list = members.finish();
        ids_by_dim.push(list.iter().map(|m| m.member_id.clone()).collect());
        member_lists.insert(id, list);
    }

    let mut facts = Vec::with_capacity(records.rows.len());
    for (r, row) in records.rows.iter().enumerate() {
        let mut measures = BTreeMap::new();
        for (id, ty, col) in &measure_cols {
            let raw = row[*col].trim();
            if raw.is_empty() {
                continue;
            }
            let n = ty.parse_number(raw).map_err(|source| EtlError::Type {
                row: r + 1,
                field: mapping.measures[id].clone(),
                source,
            })?;
            measures.insert(id.clone(), n);
        }
        let dim_refs = class
            .dimension_refs
            .iter()
            .zip(&base_of_row[r])
            .zip(&ids_by_dim)
            .map(|((d, &h), ids)| (d.clone(), ids[h].clone()))
            .collect();
        let id = match id_col {
            Some(c) if !row[c].trim().is_empty() => row[c].trim().to_string(),
            _ => format!("f{}", r + 1),
        };
        facts.push(FactRecord {
            id: Some(id),
            fact_class: class.id.clone(),
            measures,
            dim_refs,
        });
    }

    fact_map.insert(class.id.clone(), facts);
    Ok(StoreParts {
        model: model.clone(),
        facts: fact_map,
        members: member_lists,
    })
}

/// Serialized documents (file name → bytes), model document included.
pub fn generate_warehouse(
    records: &SourceRecordSet,
    mapping: &MappingConfig,
    model: &WarehouseModel,
) -> Result<BTreeMap<String, Vec<u8>>, EtlError> {
    Ok(generate_parts(records, mapping, model)?.to_documents())
}
