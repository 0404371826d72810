//! Confusion-graph label trees.
//!
//! Builds a weighted confusion graph from classifier scores, derives a label
//! hierarchy with Louvain community detection, trains multi-kernel SVM
//! scorers for every sibling group, and runs top-down tree inference.
//! Numeric code is generic over [`Scalar`] (`f32` / `f64`); the `*64` aliases
//! below are what the command-line tool uses.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod community;
pub mod confusion_graph;
pub mod dataset;
pub mod error;
pub mod flops;
pub mod kernel;
pub mod quality;
pub mod scalar;
pub mod svm;
pub mod synth;
pub mod trainer;
pub mod tree;

pub use classifier::{evaluate_report, mean_accuracy, EvaluationReport, NearestCentroid, Prediction};
pub use community::{louvain_hierarchy, Partition, PartitionHierarchy};
pub use confusion_graph::{build_confusion_graph, ConfusionGraph, ScoreRecord};
pub use dataset::Dataset;
pub use error::{Error, ErrorKind, Result};
pub use kernel::{KernelCombination, KernelSpec, KernelTemplate};
pub use scalar::Scalar;
pub use trainer::{train_tree, NodeClassifier, TrainingConfig, TreeModel};
pub use tree::{build_vclt, LabelTree, TreeNode};

pub type ConfusionGraph64 = ConfusionGraph<f64>;
pub type PartitionHierarchy64 = PartitionHierarchy<f64>;
pub type Dataset64 = Dataset<f64>;
pub type TrainingConfig64 = TrainingConfig<f64>;
pub type TreeModel64 = TreeModel<f64>;
