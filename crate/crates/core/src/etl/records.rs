use std::io::Read;

use crate::graph::{parse_xml_graph, NodeId, XmlGraph};

use super::EtlError;

/// Flat source records; every value is still a string.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SourceRecordSet {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl SourceRecordSet {
    pub fn new(header: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self, EtlError> {
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != header.len()) {
            return Err(EtlError::Records(format!(
                "row {} has {} fields, header has {}",
                i + 1,
                row.len(),
                header.len()
            )));
        }
        Ok(Self { header, rows })
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Comma-separated values with a header line. An empty input is an
    /// empty record set.
    pub fn from_csv<R: Read>(input: R) -> Result<Self, EtlError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = reader
            .headers()
            .map_err(|e| EtlError::Records(e.to_string()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| EtlError::Records(e.to_string()))?;
            rows.push(record.iter().map(str::to_string).collect());
        }
        Self::new(header, rows)
    }

    /// One record per child element of the root. A record's fields are its
    /// attributes and its descendants' attributes and text, named by their
    /// dotted path below the record (`patient.age`). The header lists field
    /// names in first-appearance order; missing fields are empty.
    pub fn from_xml(bytes: &[u8]) -> Result<Self, EtlError> {
        let g = parse_xml_graph(bytes)?;
        let mut header: Vec<String> = Vec::new();
        let mut records = Vec::new();
        for record in g.elements(g.root()) {
            let mut fields = Vec::new();
            collect_fields(&g, record, "", &mut fields);
            for (name, _) in &fields {
                if !header.contains(name) {
                    header.push(name.clone());
                }
            }
            records.push(fields);
        }
        let rows = records
            .into_iter()
            .map(|fields| {
                header
                    .iter()
                    .map(|h| {
                        fields
                            .iter()
                            .find(|(n, _)| n == h)
                            .map(|(_, v)| v.clone())
                            .unwrap_or_default()
                    })
                    .collect()
            })
            .collect();
        Self::new(header, rows)
    }

    /// Concatenates record sets over the union of their headers.
    pub fn concat(sets: Vec<SourceRecordSet>) -> SourceRecordSet {
        let mut header: Vec<String> = Vec::new();
        for s in &sets {
            for h in &s.header {
                if !header.contains(h) {
                    header.push(h.clone());
                }
            }
        }
        let mut rows = Vec::new();
        for s in sets {
            let positions: Vec<Option<usize>> = header.iter().map(|h| s.field_index(h)).collect();
            for row in s.rows {
                rows.push(
                    positions
                        .iter()
                        .map(|p| p.map(|i| row[i].clone()).unwrap_or_default())
                        .collect(),
                );
            }
        }
        SourceRecordSet { header, rows }
    }
}

fn collect_fields(g: &XmlGraph, e: NodeId, prefix: &str, out: &mut Vec<(String, String)>) {
    let name = |label: &str| {
        if prefix.is_empty() {
            label.to_string()
        } else {
            format!("{prefix}.{label}")
        }
    };
    for a in g.attributes(e) {
        push_field(out, name(g.label(a)), g.value(a).unwrap_or_default());
    }
    for c in g.elements(e) {
        let path = name(g.label(c));
        if g.children(c).is_empty() {
            push_field(out, path, g.value(c).unwrap_or_default());
        } else {
            collect_fields(g, c, &path, out);
        }
    }
}

/// The first occurrence of a repeated field wins.
fn push_field(out: &mut Vec<(String, String)>, name: String, value: &str) {
    if !out.iter().any(|(n, _)| *n == name) {
        out.push((name, value.to_string()));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_csv() {
        let set = SourceRecordSet::from_csv("a,b\n1,x\n2,\n".as_bytes()).unwrap();
        assert_eq!(set.header, vec!["a", "b"]);
        assert_eq!(set.rows, vec![vec!["1", "x"], vec!["2", ""]]);
    }

    #[test]
    fn empty_csv_is_empty_set() {
        let set = SourceRecordSet::from_csv("".as_bytes()).unwrap();
        assert!(set.header.is_empty() && set.rows.is_empty());
    }

    #[test]
    fn ragged_csv_is_rejected() {
        assert!(SourceRecordSet::from_csv("a,b\n1\n".as_bytes()).is_err());
    }

    #[test]
    fn reads_flat_xml_records() {
        let xml = r#"<cases>
            <case id="c1"><patient age="58"/><density>3</density></case>
            <case id="c2"><scanner>howtek</scanner></case>
        </cases>"#;
        let set = SourceRecordSet::from_xml(xml.as_bytes()).unwrap();
        assert_eq!(set.header, vec!["id", "patient.age", "density", "scanner"]);
        assert_eq!(set.rows[0], vec!["c1", "58", "3", ""]);
        assert_eq!(set.rows[1], vec!["c2", "", "", "howtek"]);
    }

    #[test]
    fn concat_unions_headers() {
        let a = SourceRecordSet::new(vec!["x".into()], vec![vec!["1".into()]]).unwrap();
        let b = SourceRecordSet::new(vec!["y".into(), "x".into()], vec![vec!["2".into(), "3".into()]]).unwrap();
        let c = SourceRecordSet::concat(vec![a, b]);
        assert_eq!(c.header, vec!["x", "y"]);
        assert_eq!(c.rows, vec![vec!["1", ""], vec!["3", "2"]]);
    }
}
