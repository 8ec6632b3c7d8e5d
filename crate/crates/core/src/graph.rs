//! Warehouse documents as labeled ordered trees.
//!
//! An [`XmlGraph`] is a finite ordered tree whose nodes are either elements
//! or attributes. Every node carries a label drawn from the element or
//! attribute name sets, and a partial value function maps nodes to their
//! content: attributes always have a value, elements have one when they
//! contain non-whitespace character data.
//!
//! Cross-document links are *virtual key references*: element `e`
//! references element `e'` when attribute children `a` of `e` and `a'` of
//! `e'` carry equal values under different labels.

use thiserror::Error;

use crate::xml::{Event, EventReader, XmlError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Element,
    Attribute,
}

#[derive(Debug, Clone)]
struct Node {
    kind: NodeKind,
    label: String,
    value: Option<String>,
    parent: Option<NodeId>,
    children: Vec<NodeId>,
}

#[derive(Debug, Clone)]
pub struct XmlGraph {
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("node {0:?} is not an attribute child of its stated parent")]
    NotAttributeNode(NodeId),
    #[error("node {0:?} does not belong to this graph")]
    UnknownNode(NodeId),
}

impl XmlGraph {
    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.0 < self.nodes.len()
    }

    pub fn label(&self, id: NodeId) -> &str {
        &self.node(id).label
    }

    pub fn value(&self, id: NodeId) -> Option<&str> {
        self.node(id).value.as_deref()
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        self.node(id).kind
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.node(id).parent
    }

    /// Attribute children first (in document order), then element children.
    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.node(id).children
    }

    pub fn attributes(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.children(id)
            .iter()
            .copied()
            .filter(|c| self.kind(*c) == NodeKind::Attribute)
    }

    pub fn elements(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.children(id)
            .iter()
            .copied()
            .filter(|c| self.kind(*c) == NodeKind::Element)
    }

    pub fn attribute(&self, id: NodeId, name: &str) -> Option<NodeId> {
        self.attributes(id).find(|a| self.label(*a) == name)
    }

    pub fn attribute_value(&self, id: NodeId, name: &str) -> Option<&str> {
        self.attribute(id, name).and_then(|a| self.value(a))
    }

    fn push(&mut self, kind: NodeKind, label: String, value: Option<String>, parent: Option<NodeId>) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            kind,
            label,
            value,
            parent,
            children: Vec::new(),
        });
        if let Some(p) = parent {
            self.nodes[p.0].children.push(id);
        }
        id
    }
}

pub fn parse_xml_graph(bytes: &[u8]) -> Result<XmlGraph, XmlError> {
    let mut reader = EventReader::new(bytes)?;
    let mut graph = XmlGraph { nodes: Vec::new() };
    let mut stack: Vec<NodeId> = Vec::new();
    while let Some(event) = reader.next_event()? {
        match event {
            Event::Open { name, attrs, .. } => {
                let parent = stack.last().copied();
                let element = graph.push(NodeKind::Element, name, None, parent);
                for (key, value) in attrs {
                    graph.push(NodeKind::Attribute, key, Some(value), Some(element));
                }
                stack.push(element);
            }
            Event::Close { text, .. } => {
                let element = stack.pop().expect("reader balances elements");
                let trimmed = text.trim();
                if !trimmed.is_empty() {
                    graph.nodes[element.0].value = Some(trimmed.to_owned());
                }
            }
        }
    }
    Ok(graph)
}

/// Whether `e` references `e_prime` through attribute children `a` and
/// `a_prime`: the values agree and the labels differ.
pub fn is_virtual_key_reference(
    graph: &XmlGraph,
    e: NodeId,
    e_prime: NodeId,
    a: NodeId,
    a_prime: NodeId,
) -> Result<bool, GraphError> {
    for id in [e, e_prime, a, a_prime] {
        if !graph.contains(id) {
            return Err(GraphError::UnknownNode(id));
        }
    }
    for (attr, owner) in [(a, e), (a_prime, e_prime)] {
        if graph.kind(attr) != NodeKind::Attribute || graph.parent(attr) != Some(owner) {
            return Err(GraphError::NotAttributeNode(attr));
        }
    }
    Ok(graph.value(a) == graph.value(a_prime) && graph.label(a) != graph.label(a_prime))
}

/// Attribute label pairs that the warehouse documents use as references:
/// fact `value-id` and hierarchy `Roll-up` / `Drill-Down` entries point at
/// `instance/@id`.
pub const REFERENCE_LABEL_PAIRS: [(&str, &str); 3] =
    [("value-id", "id"), ("Roll-up", "id"), ("Drill-Down", "id")];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_structure_labels_and_values() {
        let g = parse_xml_graph(br#"<a x="1"><b/></a>"#).unwrap();
        let root = g.root();
        assert_eq!(g.label(root), "a");
        assert_eq!(g.children(root).len(), 2);
        let x = g.attribute(root, "x").unwrap();
        assert_eq!(g.kind(x), NodeKind::Attribute);
        assert_eq!(g.value(x), Some("1"));
        let b: Vec<_> = g.elements(root).collect();
        assert_eq!(b.len(), 1);
        assert_eq!(g.label(b[0]), "b");
        assert_eq!(g.value(b[0]), None);
        assert_eq!(g.parent(b[0]), Some(root));
    }

    #[test]
    fn element_text_becomes_value() {
        let g = parse_xml_graph(b"<a> hello <b>x</b> </a>").unwrap();
        assert_eq!(g.value(g.root()), Some("hello"));
    }

    #[test]
    fn empty_input_is_malformed() {
        assert!(parse_xml_graph(b"").is_err());
    }

    fn fixture() -> (XmlGraph, NodeId, NodeId) {
        let g = parse_xml_graph(
            br#"<w><dimension dim-id="Patient" value-id="p1"/><instance id="p1"/><instance id="p2"/></w>"#,
        )
        .unwrap();
        let kids: Vec<_> = g.elements(g.root()).collect();
        (g, kids[0], kids[1])
    }

    #[test]
    fn value_id_matches_instance_id() {
        let (g, fact_ref, instance) = fixture();
        let a = g.attribute(fact_ref, "value-id").unwrap();
        let a2 = g.attribute(instance, "id").unwrap();
        assert!(is_virtual_key_reference(&g, fact_ref, instance, a, a2).unwrap());
    }

    #[test]
    fn equal_labels_are_not_a_reference() {
        let g = parse_xml_graph(br#"<w><instance id="p1"/><instance id="p1"/></w>"#).unwrap();
        let kids: Vec<_> = g.elements(g.root()).collect();
        let a = g.attribute(kids[0], "id").unwrap();
        let a2 = g.attribute(kids[1], "id").unwrap();
        assert!(!is_virtual_key_reference(&g, kids[0], kids[1], a, a2).unwrap());
    }

    #[test]
    fn differing_values_are_not_a_reference() {
        let (g, fact_ref, _) = fixture();
        let p2 = g.elements(g.root()).nth(2).unwrap();
        let a = g.attribute(fact_ref, "value-id").unwrap();
        let a2 = g.attribute(p2, "id").unwrap();
        assert!(!is_virtual_key_reference(&g, fact_ref, p2, a, a2).unwrap());
    }

    #[test]
    fn rejects_nodes_that_are_not_attribute_children() {
        let (g, fact_ref, instance) = fixture();
        let a = g.attribute(fact_ref, "value-id").unwrap();
        let a2 = g.attribute(instance, "id").unwrap();
        // swapped owners
        assert_eq!(
            is_virtual_key_reference(&g, instance, fact_ref, a, a2),
            Err(GraphError::NotAttributeNode(a))
        );
        // element passed as attribute
        assert_eq!(
            is_virtual_key_reference(&g, g.root(), instance, fact_ref, a2),
            Err(GraphError::NotAttributeNode(fact_ref))
        );
    }
}
