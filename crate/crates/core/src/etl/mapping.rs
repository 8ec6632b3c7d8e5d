use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::{DimensionDef, WarehouseModel};

use super::generate::bucket_value;
use super::records::SourceRecordSet;
use super::EtlError;

/// Declarative description of how source fields populate a fact class.
///
/// ```toml
/// fact_class = "Suspicious_region"
/// fact_id_field = "case"            # optional
///
/// [measures]
/// Number_of_regions = "regions"
///
/// [dimensions.Patient]
/// identity = ["Patient_id"]         # base-level attributes; default: all mapped
///
/// [dimensions.Patient.levels.Patient]
/// Patient_id = "patient"
/// Patient_age = "age"
///
/// [dimensions.Patient.levels.AgeGroup]
/// range = { bucket = "age", ranges = [
///   { max = 49, label = "0-49" },
///   { min = 50, max = 59, label = "50-59" },
///   { min = 60, label = "60+" },
/// ] }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingConfig {
    pub fact_class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fact_id_field: Option<String>,
    #[serde(default)]
    pub measures: BTreeMap<String, String>,
    #[serde(default)]
    pub dimensions: BTreeMap<String, DimensionMapping>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionMapping {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub identity: Vec<String>,
    /// level id → attribute id → source
    #[serde(default)]
    pub levels: BTreeMap<String, BTreeMap<String, FieldSource>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSource {
    Field(String),
    Bucket(Bucketing),
}

impl FieldSource {
    pub fn field(&self) -> &str {
        match self {
            FieldSource::Field(f) => f,
            FieldSource::Bucket(b) => &b.bucket,
        }
    }
}

/// Maps an integer field onto labels through contiguous closed ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bucketing {
    pub bucket: String,
    pub ranges: Vec<BucketRange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BucketRange {
    /// Omitted only on the first range (unbounded below).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<i64>,
    /// Omitted only on the last range (unbounded above).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<i64>,
    pub label: String,
}

impl Bucketing {
    pub fn label_for(&self, v: i64) -> Option<&str> {
        self.ranges
            .iter()
            .find(|r| r.min.is_none_or(|m| v >= m) && r.max.is_none_or(|m| v <= m))
            .map(|r| r.label.as_str())
    }

    fn check(&self) -> Result<(), String> {
        if self.ranges.is_empty() {
            return Err("bucketing has no ranges".into());
        }
        let n = self.ranges.len();
        for (i, r) in self.ranges.iter().enumerate() {
            if r.min.is_none() && i != 0 {
                return Err(format!("range {:?} lacks a lower bound", r.label));
            }
            if r.max.is_none() && i != n - 1 {
                return Err(format!("range {:?} lacks an upper bound", r.label));
            }
            if let (Some(lo), Some(hi)) = (r.min, r.max) {
                if lo > hi {
                    return Err(format!("range {:?} is empty", r.label));
                }
            }
            if i > 0 {
                let prev = self.ranges[i - 1].max.expect("checked above");
                if r.min != prev.checked_add(1) {
                    return Err(format!("range {:?} does not start right after {prev}", r.label));
                }
            }
        }
        Ok(())
    }
}

impl MappingConfig {
    pub fn from_toml(text: &str) -> Result<Self, EtlError> {
        toml::from_str(text).map_err(|e| EtlError::Mapping(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("mapping serializes")
    }

    /// Identity attributes of a mapped dimension's base level.
    pub(crate) fn identity(&self, dim: &DimensionDef) -> Vec<String> {
        let m = &self.dimensions[&dim.id];
        if !m.identity.is_empty() {
            return m.identity.clone();
        }
        let base = dim.base_level();
        let mapped = m.levels.get(&base.id);
        base.attributes
            .iter()
            .filter(|a| mapped.is_some_and(|l| l.contains_key(&a.id)))
            .map(|a| a.id.clone())
            .collect()
    }

    /// Checks targets against the model and fields against the records.
    /// Field names are not checked against a record set with neither header
    /// nor rows.
    pub fn validate(&self, model: &WarehouseModel, records: &SourceRecordSet) -> Result<(), EtlError> {
        let err = |msg: String| Err(EtlError::Mapping(msg));
        let Some(class) = model.fact_class(&self.fact_class) else {
            return err(format!("unknown fact class {:?}", self.fact_class));
        };
        let check_fields = !(records.header.is_empty() && records.rows.is_empty());
        let field = |name: &str, role: String| -> Result<(), EtlError> {
            if check_fields && records.field_index(name).is_none() {
                return Err(EtlError::Mapping(format!("unknown field {name:?} mapped to {role}")));
            }
            Ok(())
        };
        if let Some(f) = &self.fact_id_field {
            field(f, "the fact id".into())?;
        }
        for (measure, f) in &self.measures {
            if class.measure(measure).is_none() {
                return err(format!("fact class {} has no measure {measure:?}", class.id));
            }
            field(f, format!("measure {measure}"))?;
        }
        for dim_id in &class.dimension_refs {
            if !self.dimensions.contains_key(dim_id) {
                return err(format!("dimension {dim_id} of fact class {} is not mapped", class.id));
            }
        }
        for (dim_id, m) in &self.dimensions {
            if !class.references(dim_id) {
                return err(format!("fact class {} does not reference dimension {dim_id:?}", class.id));
            }
            let dim = model.dimension(dim_id).expect("referenced dimensions exist");
            for (level_id, attrs) in &m.levels {
                let Some(level) = dim.level(level_id) else {
                    return err(format!("dimension {dim_id} has no level {level_id:?}"));
                };
                for (attr_id, source) in attrs {
                    let Some(attr) = level.attribute(attr_id) else {
                        return err(format!("level {dim_id}.{level_id} has no attribute {attr_id:?}"));
                    };
                    let target = format!("{dim_id}.{level_id}.{attr_id}");
                    field(source.field(), target.clone())?;
                    if let FieldSource::Bucket(b) = source {
                        b.check().map_err(|e| EtlError::Mapping(format!("{target}: {e}")))?;
                        for r in &b.ranges {
                            attr.value_type.parse_value(&r.label).map_err(|e| {
                                EtlError::Mapping(format!("{target}: label {:?}: {e}", r.label))
                            })?;
                        }
                        self.check_coverage(b, &target, records)?;
                    }
                }
            }
            for level in &dim.levels {
                if !m.levels.get(&level.id).is_some_and(|l| !l.is_empty()) {
                    return err(format!("level {dim_id}.{} has no mapped attribute", level.id));
                }
            }
            let base = m.levels.get(&dim.base_level().id);
            let mut seen = BTreeSet::new();
            for id in &m.identity {
                if !seen.insert(id) {
                    return err(format!("identity attribute {id:?} of {dim_id} is listed twice"));
                }
                if !base.is_some_and(|l| l.contains_key(id)) {
                    return err(format!("identity attribute {id:?} of {dim_id} is not a mapped base attribute"));
                }
            }
        }
        Ok(())
    }

    fn check_coverage(&self, b: &Bucketing, target: &str, records: &SourceRecordSet) -> Result<(), EtlError> {
        let Some(i) = records.field_index(&b.bucket) else {
            return Ok(());
        };
        for (row, r) in records.rows.iter().enumerate() {
            let raw = r[i].trim();
            if raw.is_empty() {
                continue;
            }
            let v = bucket_value(raw).map_err(|source| EtlError::Type {
                row: row + 1,
                field: b.bucket.clone(),
                source,
            })?;
            if b.label_for(v).is_none() {
                return Err(EtlError::Mapping(format!(
                    "{target}: value {v} in row {} is outside every bucket",
                    row + 1
                )));
            }
        }
        Ok(())
    }
}
