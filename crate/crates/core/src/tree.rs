//! Label tree assembled from a community hierarchy.
//!
//! Layers are numbered from 1 at the root down to the leaf layer. Leaves take
//! ids `0..N` in category order; community nodes follow level by level from
//! the finest partition to the coarsest, and a synthetic root (when the
//! coarsest partition still has several communities) comes last.

use std::collections::VecDeque;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::community::PartitionHierarchy;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: usize,
    pub level: usize,
    pub labels: Vec<usize>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    #[serde(default)]
    pub name: String,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "TreeFile", try_from = "TreeFile")]
pub struct LabelTree {
    n_categories: usize,
    nodes: Vec<TreeNode>,
    layers: Vec<Vec<usize>>,
}

#[derive(Clone, Serialize, Deserialize)]
struct TreeFile {
    n_categories: usize,
    nodes: Vec<TreeNode>,
}

impl From<LabelTree> for TreeFile {
    fn from(t: LabelTree) -> Self {
        Self {
            n_categories: t.n_categories,
            nodes: t.nodes,
        }
    }
}

impl TryFrom<TreeFile> for LabelTree {
    type Error = Error;

    fn try_from(file: TreeFile) -> Result<Self> {
        let tree = Self::from_nodes(file.n_categories, file.nodes);
        let violations = validate_tree(&tree);
        if let Some(first) = violations.first() {
            return Err(Error::Invariant(format!(
                "invalid tree ({} violations, first: {first})",
                violations.len()
            )));
        }
        Ok(tree)
    }
}

/// One broken structural rule, with the offending node ids where applicable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeViolation {
    Empty,
    IdMismatch { position: usize, id: usize },
    NoRoot,
    MultipleRoots(Vec<usize>),
    DanglingParent { node: usize, parent: usize },
    DanglingChild { node: usize, child: usize },
    ParentChildMismatch { parent: usize, child: usize },
    LevelJump { parent: usize, child: usize },
    EmptyLabels { node: usize },
    LeafLabelCount { node: usize, count: usize },
    LabelUnionMismatch { node: usize },
    LeafCoverage { category: usize, leaves: usize },
    Unreachable { node: usize },
    RootIsLeaf { node: usize },
}

impl fmt::Display for TreeViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use TreeViolation::*;
        match self {
            Empty => write!(f, "tree has no nodes"),
            IdMismatch { position, id } => write!(f, "node at position {position} has id {id}"),
            NoRoot => write!(f, "no root"),
            MultipleRoots(ids) => write!(f, "multiple roots: {ids:?}"),
            DanglingParent { node, parent } => {
                write!(f, "node {node} references missing parent {parent}")
            }
            DanglingChild { node, child } => {
                write!(f, "node {node} references missing child {child}")
            }
            ParentChildMismatch { parent, child } => {
                write!(f, "edge {parent} -> {child} not mirrored by parent pointer")
            }
            LevelJump { parent, child } => {
                write!(f, "child {child} is not exactly one layer below parent {parent}")
            }
            EmptyLabels { node } => write!(f, "node {node} has an empty label set"),
            LeafLabelCount { node, count } => {
                write!(f, "leaf {node} has {count} labels, expected 1")
            }
            LabelUnionMismatch { node } => {
                write!(f, "node {node} label set differs from the union of its children")
            }
            LeafCoverage { category, leaves } => {
                write!(f, "category {category} has {leaves} leaves, expected 1")
            }
            Unreachable { node } => write!(f, "node {node} is not reachable from the root"),
            RootIsLeaf { node } => write!(f, "root {node} has no children"),
        }
    }
}

impl LabelTree {
    /// Assembles a tree from raw nodes and derives the layer lists.
    /// Does not validate; see [`validate_tree`].
    pub fn from_nodes(n_categories: usize, nodes: Vec<TreeNode>) -> Self {
        let depth = nodes.iter().map(|n| n.level).max().unwrap_or(0);
        let mut layers = vec![Vec::new(); depth];
        for n in &nodes {
            if n.level >= 1 {
                layers[n.level - 1].push(n.id);
            }
        }
        Self {
            n_categories,
            nodes,
            layers,
        }
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node ids per layer, root layer first.
    pub fn layers(&self) -> &[Vec<usize>] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn root(&self) -> Option<usize> {
        self.nodes.iter().find(|n| n.parent.is_none()).map(|n| n.id)
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.nodes
            .iter()
            .flat_map(|n| n.children.iter().map(move |&c| (n.id, c)))
    }

    /// Leaf node id for each category.
    pub fn leaf_of_category(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.n_categories];
        for n in self.nodes.iter().filter(|n| n.is_leaf()) {
            if let [c] = n.labels[..] {
                if c < self.n_categories {
                    out[c] = Some(n.id);
                }
            }
        }
        out
    }

    /// Internal nodes in breadth-first order from the root, children visited
    /// in ascending id order.
    pub fn internal_nodes_bfs(&self) -> Vec<usize> {
        let mut order = Vec::new();
        let Some(root) = self.root() else {
            return order;
        };
        let mut queue = VecDeque::from([root]);
        while let Some(id) = queue.pop_front() {
            let node = &self.nodes[id];
            if node.is_leaf() {
                continue;
            }
            order.push(id);
            let mut kids = node.children.clone();
            kids.sort_unstable();
            queue.extend(kids);
        }
        order
    }

    /// Node ids from the root down to `node` (inclusive).
    pub fn path_from_root(&self, node: usize) -> Vec<usize> {
        let mut path = vec![node];
        let mut cur = node;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
            if path.len() > self.nodes.len() {
                break;
            }
        }
        path.reverse();
        path
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    /// Reads the JSON tree format and rejects structurally invalid trees.
    pub fn read<R: Read>(input: R) -> Result<Self> {
        let file: TreeFile = serde_json::from_reader(input)?;
        Self::try_from(file)
    }
}

/// Builds the label tree from a fine-to-coarse community hierarchy.
pub fn build_vclt<T: Scalar>(
    hierarchy: &PartitionHierarchy<T>,
    category_names: &[String],
) -> Result<LabelTree> {
    hierarchy.validate()?;
    let n = hierarchy.n_categories;
    if !category_names.is_empty() && category_names.len() != n {
        return Err(Error::Shape {
            expected: n,
            got: category_names.len(),
        });
    }
    let k = hierarchy.depth();
    let coarsest = hierarchy.label_sets[k - 1].len();
    let synthetic_root = coarsest > 1;
    let leaf_level = k + 1 + usize::from(synthetic_root);

    let mut nodes: Vec<TreeNode> = (0..n)
        .map(|c| TreeNode {
            id: c,
            level: leaf_level,
            labels: vec![c],
            parent: None,
            children: Vec::new(),
            name: category_names
                .get(c)
                .cloned()
                .unwrap_or_else(|| c.to_string()),
        })
        .collect();

    // level_ids[i][c] = node id of community c at hierarchy level i
    let mut level_ids: Vec<Vec<usize>> = Vec::with_capacity(k);
    for (i, sets) in hierarchy.label_sets.iter().enumerate() {
        let level = leaf_level - (i + 1);
        let mut ids = Vec::with_capacity(sets.len());
        for set in sets {
            let id = nodes.len();
            let mut labels = set.clone();
            labels.sort_unstable();
            nodes.push(TreeNode {
                id,
                level,
                labels,
                parent: None,
                children: Vec::new(),
                name: if level == 1 {
                    "root".to_string()
                } else {
                    format!("level{level}")
                },
            });
            ids.push(id);
        }
        level_ids.push(ids);
    }

    let owner_at = |i: usize| -> Vec<usize> {
        let mut owner = vec![0; n];
        for (c, set) in hierarchy.label_sets[i].iter().enumerate() {
            for &cat in set {
                owner[cat] = c;
            }
        }
        owner
    };

    let link = |nodes: &mut Vec<TreeNode>, parent: usize, child: usize| {
        nodes[child].parent = Some(parent);
        nodes[parent].children.push(child);
    };

    let owner = owner_at(0);
    for cat in 0..n {
        link(&mut nodes, level_ids[0][owner[cat]], cat);
    }
    for i in 1..k {
        let owner = owner_at(i);
        for (c, set) in hierarchy.label_sets[i - 1].iter().enumerate() {
            link(&mut nodes, level_ids[i][owner[set[0]]], level_ids[i - 1][c]);
        }
    }
    if synthetic_root {
        let id = nodes.len();
        nodes.push(TreeNode {
            id,
            level: 1,
            labels: (0..n).collect(),
            parent: None,
            children: Vec::new(),
            name: "root".to_string(),
        });
        for &child in &level_ids[k - 1] {
            link(&mut nodes, id, child);
        }
    }

    let tree = LabelTree::from_nodes(n, nodes);
    let violations = validate_tree(&tree);
    if let Some(v) = violations.first() {
        return Err(Error::Invariant(format!("built tree is malformed: {v}")));
    }
    Ok(tree)
}

/// Lists every structural violation; empty iff the tree is well formed.
pub fn validate_tree(tree: &LabelTree) -> Vec<TreeViolation> {
    use TreeViolation::*;
    let nodes = tree.nodes();
    let count = nodes.len();
    let mut out = Vec::new();
    if count == 0 {
        out.push(Empty);
        return out;
    }
    for (pos, n) in nodes.iter().enumerate() {
        if n.id != pos {
            out.push(IdMismatch { position: pos, id: n.id });
        }
    }
    if !out.is_empty() {
        return out;
    }

    let roots: Vec<usize> = nodes.iter().filter(|n| n.parent.is_none()).map(|n| n.id).collect();
    match roots.len() {
        0 => out.push(NoRoot),
        1 => {
            if nodes[roots[0]].is_leaf() {
                out.push(RootIsLeaf { node: roots[0] });
            }
        }
        _ => out.push(MultipleRoots(roots.clone())),
    }

    for n in nodes {
        if let Some(p) = n.parent {
            if p >= count {
                out.push(DanglingParent { node: n.id, parent: p });
            } else if !nodes[p].children.contains(&n.id) {
                out.push(ParentChildMismatch { parent: p, child: n.id });
            }
        }
        for &c in &n.children {
            if c >= count {
                out.push(DanglingChild { node: n.id, child: c });
                continue;
            }
            if nodes[c].parent != Some(n.id) {
                out.push(ParentChildMismatch { parent: n.id, child: c });
            }
            if nodes[c].level != n.level + 1 {
                out.push(LevelJump { parent: n.id, child: c });
            }
        }
        if n.labels.is_empty() {
            out.push(EmptyLabels { node: n.id });
        } else if n.is_leaf() {
            if n.labels.len() != 1 {
                out.push(LeafLabelCount { node: n.id, count: n.labels.len() });
            }
        } else {
            let mut union: Vec<usize> = n
                .children
                .iter()
                .filter(|&&c| c < count)
                .flat_map(|&c| nodes[c].labels.iter().copied())
                .collect();
            union.sort_unstable();
            let mut own = n.labels.clone();
            own.sort_unstable();
            if union != own {
                out.push(LabelUnionMismatch { node: n.id });
            }
        }
    }

    let mut leaf_count = vec![0usize; tree.n_categories()];
    for n in nodes.iter().filter(|n| n.is_leaf()) {
        for &c in &n.labels {
            if c < leaf_count.len() {
                leaf_count[c] += 1;
            }
        }
    }
    for (category, &leaves) in leaf_count.iter().enumerate() {
        if leaves != 1 {
            out.push(LeafCoverage { category, leaves });
        }
    }

    if let [root] = roots[..] {
        let mut seen = vec![false; count];
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(id) = queue.pop_front() {
            for &c in &nodes[id].children {
                if c < count && !seen[c] {
                    seen[c] = true;
                    queue.push_back(c);
                }
            }
        }
        for (id, s) in seen.iter().enumerate() {
            if !s {
                out.push(Unreachable { node: id });
            }
        }
    }
    out
}
