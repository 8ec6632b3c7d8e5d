use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use xwacoda_core::etl::{generate_parts, EtlError, MappingConfig, SourceRecordSet};
use xwacoda_core::model::{parse_model, validate_model, ModelError};
use xwacoda_core::query::{QueryError, ResultTable};
use xwacoda_core::store::{check_integrity, load_parts, HierarchyMode, LoadError, WarehouseStore};
use xwacoda_core::{build_cube, run_query, CubeSpec};

use crate::{inline_or_file, model_path};

/// Exit status plus captured standard output and standard error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub status: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Self {
            status: 0,
            stdout,
            stderr: String::new(),
        }
    }

    fn fail(status: i32, stderr: impl Into<String>) -> Self {
        let mut stderr = stderr.into();
        if !stderr.ends_with('\n') {
            stderr.push('\n');
        }
        Self {
            status,
            stdout: String::new(),
            stderr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum OutputFormat {
    /// Aligned columns under a header and a rule.
    #[default]
    TextTable,
    /// Comma-separated values with a header line.
    Delimited,
}

pub fn render_table(table: &ResultTable, format: OutputFormat) -> String {
    match format {
        OutputFormat::TextTable => table.to_text_table(),
        OutputFormat::Delimited => {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
            w.write_record(table.columns.iter().map(|c| c.name.as_str())).expect("in-memory write");
            for row in &table.rows {
                w.write_record(row.iter().map(ToString::to_string)).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
        }
    }
}

/// Loads a warehouse, mapping failures onto exit statuses: 2 for unreadable
/// files and malformed XML, 1 for schema and integrity violations.
fn load(warehouse: &Path) -> Result<WarehouseStore, Outcome> {
    let path = model_path(warehouse);
    let parts = load_parts(&path).map_err(|e| load_failure(&e))?;
    WarehouseStore::from_parts(parts, HierarchyMode::Strict).map_err(|e| load_failure(&e))
}

fn load_failure(e: &LoadError) -> Outcome {
    match e {
        LoadError::Integrity(diagnostics) => {
            Outcome::fail(1, diagnostics.iter().map(|d| format!("{d}\n")).collect::<String>())
        }
        e if e.is_io_or_syntax() => Outcome::fail(2, format!("error: {e}")),
        e => Outcome::fail(1, format!("error: {e}")),
    }
}

/// `validate <dir>`: exit 0 with a summary, 1 with one diagnostic per line,
/// 2 on I/O or malformed XML.
pub fn validate(warehouse: &Path) -> Outcome {
    let path = model_path(warehouse);
    let parts = match load_parts(&path) {
        Ok(parts) => parts,
        Err(e) => return load_failure(&e),
    };
    let report = check_integrity(&parts, HierarchyMode::Strict);
    if !report.is_empty() {
        return Outcome::fail(1, report.iter().map(|d| format!("{d}\n")).collect::<String>());
    }
    let facts: usize = parts.facts.values().map(Vec::len).sum();
    let members: usize = parts.members.values().map(Vec::len).sum();
    Outcome::ok(format!(
        "OK: {facts} facts, {members} members, {} dimensions\n",
        parts.model.dimensions.len()
    ))
}

fn read_sources(sources: &[PathBuf]) -> Result<SourceRecordSet, Outcome> {
    let mut sets = Vec::with_capacity(sources.len());
    for path in sources {
        let bytes = std::fs::read(path).map_err(|e| Outcome::fail(2, format!("error: cannot read {}: {e}", path.display())))?;
        let is_xml = path.extension().is_some_and(|x| x.eq_ignore_ascii_case("xml"));
        let set = if is_xml {
            SourceRecordSet::from_xml(&bytes)
        } else {
            SourceRecordSet::from_csv(bytes.as_slice())
        };
        sets.push(set.map_err(|e| {
            let status = if matches!(e, EtlError::MalformedXml(_)) { 2 } else { 1 };
            Outcome::fail(status, format!("error: {}: {e}", path.display()))
        })?);
    }
    Ok(SourceRecordSet::concat(sets))
}

/// `ingest`: turns source records into warehouse documents under `out`.
pub fn ingest(sources: &[PathBuf], mapping: &Path, model: &Path, out: &Path) -> Outcome {
    let read = |p: &Path| std::fs::read(p).map_err(|e| Outcome::fail(2, format!("error: cannot read {}: {e}", p.display())));
    let run = || -> Result<Outcome, Outcome> {
        let model_bytes = read(model)?;
        let model = parse_model(&model_bytes).map_err(|e| {
            let status = if matches!(e, ModelError::MalformedXml(_)) { 2 } else { 1 };
            Outcome::fail(status, format!("error: {}: {e}", model.display()))
        })?;
        let report = validate_model(&model);
        if !report.is_empty() {
            return Err(Outcome::fail(1, report.iter().map(|d| format!("{d}\n")).collect::<String>()));
        }
        let mapping_text = String::from_utf8(read(mapping)?)
            .map_err(|e| Outcome::fail(2, format!("error: {}: {e}", mapping.display())))?;
        let mapping = MappingConfig::from_toml(&mapping_text).map_err(|e| Outcome::fail(1, format!("error: {e}")))?;
        let records = read_sources(sources)?;
        let parts = generate_parts(&records, &mapping, &model).map_err(|e| Outcome::fail(1, format!("error: {e}")))?;
        let report = check_integrity(&parts, HierarchyMode::Strict);
        if !report.is_empty() {
            return Err(Outcome::fail(1, report.iter().map(|d| format!("{d}\n")).collect::<String>()));
        }
        parts
            .write_to(out)
            .map_err(|e| Outcome::fail(2, format!("error: cannot write {}: {e}", out.display())))?;
        let facts: usize = parts.facts.values().map(Vec::len).sum();
        let members: usize = parts.members.values().map(Vec::len).sum();
        Ok(Outcome::ok(format!("wrote {facts} facts, {members} members to {}\n", out.display())))
    };
    run().unwrap_or_else(|e| e)
}

fn query_failure(e: &QueryError) -> Outcome {
    Outcome::fail(1, format!("error: {e}"))
}

/// `query <dir> --query <text|@file>`.
pub fn query(warehouse: &Path, query: &str, format: OutputFormat) -> Outcome {
    let text = match inline_or_file(query) {
        Ok(t) => t,
        Err(e) => return Outcome::fail(2, format!("error: cannot read {}: {e}", &query[1..])),
    };
    let store = match load(warehouse) {
        Ok(s) => s,
        Err(o) => return Outcome { status: 2, ..o },
    };
    match run_query(&store, &text) {
        Ok(table) => Outcome::ok(render_table(&table, format)),
        Err(e) => query_failure(&e),
    }
}

/// Cube operators applied after the build, in field order.
#[derive(Debug, Clone, Default)]
pub struct CubeOps {
    pub roll_up: Vec<String>,
    pub drill_down: Vec<String>,
    /// dimension → members kept
    pub dice: BTreeMap<String, BTreeSet<String>>,
    /// (dimension, member)
    pub slice: Vec<(String, String)>,
    /// Serialized cube instead of the pivot rendering.
    pub json: bool,
}

/// `cube <dir> --spec <json|@file>`.
pub fn cube(warehouse: &Path, spec: &str, ops: &CubeOps) -> Outcome {
    let text = match inline_or_file(spec) {
        Ok(t) => t,
        Err(e) => return Outcome::fail(2, format!("error: cannot read {}: {e}", &spec[1..])),
    };
    let spec: CubeSpec = match serde_json::from_str(&text) {
        Ok(s) => s,
        Err(e) => return Outcome::fail(1, format!("error: invalid cube specification: {e}")),
    };
    let store = match load(warehouse) {
        Ok(s) => s,
        Err(o) => return Outcome { status: 2, ..o },
    };
    let run = || {
        let mut c = build_cube(&store, &spec)?;
        for d in &ops.roll_up {
            c = c.roll_up(d, &store)?;
        }
        for d in &ops.drill_down {
            c = c.drill_down(d, &store)?;
        }
        if !ops.dice.is_empty() {
            c = c.dice(&ops.dice)?;
        }
        for (d, m) in &ops.slice {
            c = c.slice(d, m)?;
        }
        if ops.json {
            let mut s = serde_json::to_string_pretty(&c).expect("cube serializes");
            s.push('\n');
            Ok(s)
        } else {
            c.render_pivot()
        }
    };
    match run() {
        Ok(s) => Outcome::ok(s),
        Err(e) => {
            let e: xwacoda_core::CubeError = e;
            Outcome::fail(1, format!("error: {} ({})", e, e.code()))
        }
    }
}
