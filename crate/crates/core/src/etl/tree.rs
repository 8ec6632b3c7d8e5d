use std::fmt;

use crate::graph::{NodeId, XmlGraph};
use crate::value::ValueType;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeNodeKind {
    Root,
    Entity,
    Attribute,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub name: String,
    pub kind: TreeNodeKind,
    pub value_type: Option<ValueType>,
    pub children: Vec<usize>,
}

/// Outline of a source or goal schema. Node 0 is the root; attribute nodes
/// are leaves.
#[derive(Debug, Clone)]
pub struct AttributeTree {
    nodes: Vec<TreeNode>,
}

/// Lowercase, with `-` and spaces folded to `_`.
pub fn normalize_name(name: &str) -> String {
    name.chars()
        .map(|c| match c {
            '-' | ' ' => '_',
            c => c.to_ascii_lowercase(),
        })
        .collect()
}

impl AttributeTree {
    pub fn new(root: impl Into<String>) -> Self {
        Self {
            nodes: vec![TreeNode {
                name: root.into(),
                kind: TreeNodeKind::Root,
                value_type: None,
                children: Vec::new(),
            }],
        }
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn node(&self, i: usize) -> &TreeNode {
        &self.nodes[i]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() == 1
    }

    /// Appends a child; a same-named sibling of the same kind is reused.
    pub fn add(&mut self, parent: usize, name: &str, kind: TreeNodeKind, value_type: Option<ValueType>) -> usize {
        assert!(
            self.nodes[parent].kind != TreeNodeKind::Attribute,
            "attribute nodes are leaves"
        );
        if let Some(&existing) = self.nodes[parent]
            .children
            .iter()
            .find(|&&c| self.nodes[c].name == name && self.nodes[c].kind == kind)
        {
            if self.nodes[existing].value_type.is_none() {
                self.nodes[existing].value_type = value_type;
            }
            return existing;
        }
        self.nodes.push(TreeNode {
            name: name.to_string(),
            kind,
            value_type,
            children: Vec::new(),
        });
        let id = self.nodes.len() - 1;
        self.nodes[parent].children.push(id);
        id
    }

    /// Nodes in preorder.
    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![0];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.nodes[n].children.iter().rev());
        }
        out
    }

    /// Names of the leaves below the root, in preorder.
    pub fn leaf_names(&self) -> Vec<&str> {
        self.preorder()
            .into_iter()
            .filter(|&n| n != 0 && self.nodes[n].children.is_empty())
            .map(|n| self.nodes[n].name.as_str())
            .collect()
    }

    /// Canonical one-line rendering of the subtree at `n`; equal trees
    /// render identically.
    pub fn outline(&self, n: usize) -> String {
        let node = &self.nodes[n];
        let mut out = node.name.clone();
        match node.kind {
            TreeNodeKind::Attribute => {
                out.push('@');
                if let Some(t) = node.value_type {
                    out.push(':');
                    out.push_str(t.as_str());
                }
            }
            _ if node.children.is_empty() => {}
            _ => {
                let parts: Vec<String> = node.children.iter().map(|&c| self.outline(c)).collect();
                out.push('{');
                out.push_str(&parts.join(", "));
                out.push('}');
            }
        }
        out
    }

    fn copy_subtree(&mut self, parent: usize, from: &AttributeTree, n: usize) {
        let node = from.node(n);
        let id = self.add(parent, &node.name, node.kind, node.value_type);
        for &c in &node.children {
            self.copy_subtree(id, from, c);
        }
    }
}

impl PartialEq for AttributeTree {
    fn eq(&self, other: &Self) -> bool {
        self.nodes[0].name == other.nodes[0].name && self.outline(0) == other.outline(0)
    }
}

impl fmt::Display for AttributeTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.outline(0))
    }
}

fn type_hint(value: Option<&str>) -> Option<ValueType> {
    value.and_then(|v| v.trim().parse().ok())
}

/// Transcribes element nesting: elements become entity nodes, attributes and
/// text-only elements become attribute nodes. A value spelling a type name
/// (`integer`, `decimal`, `date`, `string`) is taken as the leaf's type.
/// Repeated sibling elements are merged.
pub fn build_attribute_tree(g: &XmlGraph) -> AttributeTree {
    fn walk(g: &XmlGraph, e: NodeId, tree: &mut AttributeTree, at: usize) {
        for a in g.attributes(e) {
            tree.add(at, g.label(a), TreeNodeKind::Attribute, type_hint(g.value(a)));
        }
        for c in g.elements(e) {
            let structured = g.attributes(c).next().is_some() || g.elements(c).next().is_some();
            if structured || g.value(c).is_none() {
                let id = tree.add(at, g.label(c), TreeNodeKind::Entity, None);
                walk(g, c, tree, id);
            } else {
                tree.add(at, g.label(c), TreeNodeKind::Attribute, type_hint(g.value(c)));
            }
        }
    }
    let root = g.root();
    let mut tree = AttributeTree::new(g.label(root));
    walk(g, root, &mut tree, 0);
    tree
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutcome {
    pub tree: AttributeTree,
    /// Names of goal leaves no source node matched.
    pub uncovered: Vec<String>,
}

/// Source nodes of `kind` whose normalized name matches, sources in order
/// and each in preorder.
fn candidates<'s>(sources: &'s [AttributeTree], name: &str, kind: TreeNodeKind) -> Vec<(&'s AttributeTree, usize)> {
    let key = normalize_name(name);
    let mut out = Vec::new();
    for s in sources {
        for n in s.preorder() {
            if n != 0 && s.node(n).kind == kind && normalize_name(&s.node(n).name) == key {
                out.push((s, n));
            }
        }
    }
    out
}

/// Prunes and grafts the sources onto the goal.
///
/// The result has exactly the goal's nodes. A goal entity leaf whose name
/// matches a source entity is expanded with that entity's subtree; a goal
/// attribute leaf takes its type from matching source attributes. When
/// several source entities match, a non-empty one whose subtree has the least
/// canonical outline is used (ties go to the earlier source), which keeps merging
/// idempotent.
pub fn merge_attribute_trees(goal: &AttributeTree, sources: &[AttributeTree]) -> MergeOutcome {
    let mut tree = AttributeTree::new(goal.node(0).name.clone());
    let mut uncovered = Vec::new();

    fn copy_goal(
        goal: &AttributeTree,
        n: usize,
        tree: &mut AttributeTree,
        at: usize,
        uncovered: &mut Vec<String>,
        sources: &[AttributeTree],
    ) {
        for &c in &goal.node(n).children {
            let node = goal.node(c);
            match node.kind {
                TreeNodeKind::Attribute => {
                    let found = candidates(sources, &node.name, TreeNodeKind::Attribute);
                    if found.is_empty() {
                        uncovered.push(node.name.clone());
                    }
                    let value_type = node.value_type.or_else(|| {
                        found
                            .iter()
                            .filter_map(|(s, m)| s.node(*m).value_type)
                            .min_by_key(|t| t.as_str())
                    });
                    tree.add(at, &node.name, TreeNodeKind::Attribute, value_type);
                }
                _ => {
                    let id = tree.add(at, &node.name, node.kind, None);
                    if node.children.is_empty() {
                        let found = candidates(sources, &node.name, TreeNodeKind::Entity);
                        let body = |s: &AttributeTree, m: usize| (s.node(m).children.is_empty(), s.outline(m)[s.node(m).name.len()..].to_string());
                        match found.iter().min_by_key(|(s, m)| body(s, *m)) {
                            Some((s, m)) => {
                                for &sc in &s.node(*m).children {
                                    tree.copy_subtree(id, s, sc);
                                }
                            }
                            None => uncovered.push(node.name.clone()),
                        }
                    } else {
                        copy_goal(goal, c, tree, id, uncovered, sources);
                    }
                }
            }
        }
    }

    copy_goal(goal, 0, &mut tree, 0, &mut uncovered, sources);
    MergeOutcome { tree, uncovered }
}
