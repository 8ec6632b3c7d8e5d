use std::fmt;

use serde::Serialize;

/// Stable machine-readable code for a schema or integrity violation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DiagnosticCode {
    // metadata document
    EmptyModel,
    InvalidId,
    DuplicateDimensionId,
    DuplicateFactClassId,
    NoLevels,
    DuplicateLevelId,
    NoAttributes,
    DuplicateAttributeId,
    EmptyPath,
    NoMeasures,
    DuplicateMeasureId,
    NonNumericMeasure,
    NoDimensionRefs,
    DuplicateDimensionRef,
    DanglingDimensionRef,
    // warehouse contents
    DuplicateMemberId,
    UnknownLevel,
    DanglingFactRef,
    DanglingRollup,
    DanglingDrilldown,
    AsymmetricHierarchy,
    NonstrictRollup,
    MissingRollup,
    EmptyDrilldown,
}

impl DiagnosticCode {
    pub fn as_str(self) -> &'static str {
        use DiagnosticCode::*;
        match self {
            EmptyModel => "EMPTY_MODEL",
            InvalidId => "INVALID_ID",
            DuplicateDimensionId => "DUPLICATE_DIMENSION_ID",
            DuplicateFactClassId => "DUPLICATE_FACT_CLASS_ID",
            NoLevels => "NO_LEVELS",
            DuplicateLevelId => "DUPLICATE_LEVEL_ID",
            NoAttributes => "NO_ATTRIBUTES",
            DuplicateAttributeId => "DUPLICATE_ATTRIBUTE_ID",
            EmptyPath => "EMPTY_PATH",
            NoMeasures => "NO_MEASURES",
            DuplicateMeasureId => "DUPLICATE_MEASURE_ID",
            NonNumericMeasure => "NON_NUMERIC_MEASURE",
            NoDimensionRefs => "NO_DIMENSION_REFS",
            DuplicateDimensionRef => "DUPLICATE_DIMENSION_REF",
            DanglingDimensionRef => "DANGLING_DIMENSION_REF",
            DuplicateMemberId => "DUPLICATE_MEMBER_ID",
            UnknownLevel => "UNKNOWN_LEVEL",
            DanglingFactRef => "DANGLING_FACT_REF",
            DanglingRollup => "DANGLING_ROLLUP",
            DanglingDrilldown => "DANGLING_DRILLDOWN",
            AsymmetricHierarchy => "ASYMMETRIC_HIERARCHY",
            NonstrictRollup => "NONSTRICT_ROLLUP",
            MissingRollup => "MISSING_ROLLUP",
            EmptyDrilldown => "EMPTY_DRILLDOWN",
        }
    }
}

impl fmt::Display for DiagnosticCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One violation: a code, the slash-separated path of the offending item,
/// and a human-readable explanation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub code: DiagnosticCode,
    pub path: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(code: DiagnosticCode, path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            code,
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", self.code, self.path, self.message)
    }
}

pub(crate) fn join(diagnostics: &[Diagnostic]) -> String {
    diagnostics
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
