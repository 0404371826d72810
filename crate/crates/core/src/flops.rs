//! Multiply-add accounting for dense classifier heads versus a label tree.
//!
//! One multiply-add counts as [`OPS_PER_MULTADD`] operations. A tree answers a
//! query with at most `N` node classifiers of dimension `d`, where `N` is the
//! largest sum of sibling-group sizes met along a root-to-leaf path.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tree::LabelTree;

pub const OPS_PER_MULTADD: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FcLayerSpec {
    pub in_dim: u64,
    pub out_dim: u64,
    pub with_bias: bool,
}

impl FcLayerSpec {
    pub fn new(in_dim: u64, out_dim: u64) -> Self {
        Self {
            in_dim,
            out_dim,
            with_bias: false,
        }
    }
}

pub fn fc_multadds(layers: &[FcLayerSpec]) -> Result<u64> {
    if layers.is_empty() {
        return Err(Error::Parameter("FC stack is empty".into()));
    }
    layers.iter().try_fold(0u64, |acc, l| {
        if l.in_dim == 0 || l.out_dim == 0 {
            return Err(Error::Parameter(format!(
                "layer dims must be >= 1, got {}x{}",
                l.in_dim, l.out_dim
            )));
        }
        let bias = if l.with_bias { l.out_dim } else { 0 };
        OPS_PER_MULTADD
            .checked_mul(l.in_dim)
            .and_then(|v| v.checked_mul(l.out_dim))
            .and_then(|v| v.checked_add(bias))
            .and_then(|v| v.checked_add(acc))
            .ok_or_else(|| Error::Numeric("operation count overflows u64".into()))
    })
}

/// Worst-case number of node classifiers evaluated on one root-to-leaf path.
pub fn worst_path_classifiers(tree: &LabelTree) -> u64 {
    fn walk(tree: &LabelTree, id: usize, depth: usize) -> u64 {
        let node = tree.node(id);
        // guard against cyclic input; a valid tree is never deeper than its size
        if node.children.is_empty() || depth > tree.len() {
            return 0;
        }
        let below = node
            .children
            .iter()
            .map(|&c| walk(tree, c, depth + 1))
            .max()
            .unwrap_or(0);
        node.children.len() as u64 + below
    }
    tree.root().map_or(0, |r| walk(tree, r, 0))
}

pub fn tree_multadds_for(n_classifiers: u64, feature_dim: u64) -> u64 {
    OPS_PER_MULTADD * n_classifiers * feature_dim
}

pub fn tree_multadds(tree: &LabelTree, feature_dim: u64) -> u64 {
    tree_multadds_for(worst_path_classifiers(tree), feature_dim)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlopReport {
    pub fc_ops: u64,
    pub tree_ops: u64,
    pub speedup: f64,
    /// Operations per multiply-add.
    pub convention: u64,
}

impl FlopReport {
    pub fn from_counts(fc_ops: u64, tree_ops: u64) -> Result<Self> {
        if tree_ops == 0 {
            return Err(Error::Numeric("tree performs zero operations".into()));
        }
        Ok(Self {
            fc_ops,
            tree_ops,
            speedup: fc_ops as f64 / tree_ops as f64,
            convention: OPS_PER_MULTADD,
        })
    }

    /// Speedup rounded to the nearest integer factor.
    pub fn rounded_speedup(&self) -> u64 {
        self.speedup.round() as u64
    }
}

pub fn speedup_report(fc: &[FcLayerSpec], tree: &LabelTree, feature_dim: u64) -> Result<FlopReport> {
    FlopReport::from_counts(fc_multadds(fc)?, tree_multadds(tree, feature_dim))
}

/// A dense head compared against a tree with a known worst-path classifier count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeadComparison {
    pub dataset: String,
    pub fc_layers: Vec<FcLayerSpec>,
    pub n_classifiers: u64,
    pub feature_dim: u64,
}

impl HeadComparison {
    pub fn report(&self) -> Result<FlopReport> {
        FlopReport::from_counts(
            fc_multadds(&self.fc_layers)?,
            tree_multadds_for(self.n_classifiers, self.feature_dim),
        )
    }
}

/// AlexNet FC7+FC8 heads against the trees used for CIFAR-100 and ImageNet.
pub fn reference_comparisons() -> Vec<HeadComparison> {
    let fc = |classes| vec![FcLayerSpec::new(4096, 4096), FcLayerSpec::new(4096, classes)];
    vec![
        HeadComparison {
            dataset: "CIFAR-100".into(),
            fc_layers: fc(100),
            n_classifiers: 18,
            feature_dim: 4096,
        },
        HeadComparison {
            dataset: "ImageNet".into(),
            fc_layers: fc(1000),
            n_classifiers: 65,
            feature_dim: 4096,
        },
    ]
}
