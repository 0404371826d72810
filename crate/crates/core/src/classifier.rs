//! Top-down inference, accuracy reporting and the on-disk model format.
//!
//! Inference starts at the root, scores every child of the current node,
//! and descends into the best-scoring one until a leaf is reached. Nodes with a
//! single child are passed through without scoring.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, Standardizer};
use crate::scalar::Scalar;
pub use crate::trainer::TreeModel;
use crate::trainer::NodeClassifier;
use crate::tree::LabelTree;

pub const MODEL_FORMAT: &str = "vclt-model v1";
const SV_MAGIC: &[u8; 7] = b"VCLTSV1";

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub label: usize,
    /// Node ids from the root to the predicted leaf.
    pub path: Vec<usize>,
    /// For each step, `(child id, score)` of every scored sibling; empty for pass-throughs.
    pub scores_along_path: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> TreeModel<T> {
    pub fn predict(&self, x: &[T]) -> Result<Prediction<T>> {
        let z = self.standardizer.apply(x)?;
        self.predict_standardized(&z)
    }

    fn predict_standardized(&self, z: &[T]) -> Result<Prediction<T>> {
        let tree = &self.tree;
        let mut cur = tree
            .root()
            .ok_or_else(|| Error::Invariant("model tree has no root".into()))?;
        let mut path = vec![cur];
        let mut scores_along_path = Vec::new();
        loop {
            let node = tree.node(cur);
            if node.is_leaf() {
                break;
            }
            if node.children.len() == 1 {
                cur = node.children[0];
                scores_along_path.push(Vec::new());
                path.push(cur);
                continue;
            }
            let mut kids = node.children.clone();
            kids.sort_unstable();
            let mut step = Vec::with_capacity(kids.len());
            let mut best: Option<(usize, T)> = None;
            for &c in &kids {
                let clf = self.classifiers.get(&c).ok_or_else(|| {
                    Error::Invariant(format!("no scorer for node {c} under {}", node.id))
                })?;
                let s = clf.score(&self.support_vectors, z)?;
                if !s.is_finite() {
                    return Err(Error::Numeric(format!("non-finite score at node {c}")));
                }
                // strict comparison keeps the lowest id on ties
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((c, s));
                }
                step.push((c, s));
            }
            cur = best.map(|(c, _)| c).unwrap_or(kids[0]);
            scores_along_path.push(step);
            path.push(cur);
        }
        let leaf = tree.node(cur);
        let label = match leaf.labels[..] {
            [l] => l,
            _ => {
                return Err(Error::Invariant(format!(
                    "leaf {cur} carries {} labels",
                    leaf.labels.len()
                )))
            }
        };
        Ok(Prediction {
            label,
            path,
            scores_along_path,
        })
    }

    /// Predicts every row in parallel; output order follows input order.
    pub fn predict_batch(&self, rows: &[Vec<T>]) -> Result<Vec<Prediction<T>>> {
        rows.par_iter().map(|x| self.predict(x)).collect()
    }

    /// Writes the model description to `path` and the support vectors to a
    /// companion `.sv` file next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        let sv_path = path.with_extension("sv");
        if sv_path == path {
            return Err(Error::Parameter(format!(
                "model path {} must not use the .sv extension",
                path.display()
            )));
        }
        let sv_name = sv_path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::Parameter(format!("bad model path {}", path.display())))?
            .to_string();
        let mut sv_out = BufWriter::new(File::create(&sv_path)?);
        write_support_vectors(&self.support_vectors, self.dim(), &mut sv_out)?;
        sv_out.flush()?;
        let mut out = BufWriter::new(File::create(path)?);
        self.write_description(&sv_name, &mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: ModelFile<T> = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if file.format != MODEL_FORMAT {
            return Err(Error::format(1, format!("unsupported model format `{}`", file.format)));
        }
        let sv_path = path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&file.support_vectors);
        let (svs, dim) = read_support_vectors(BufReader::new(File::open(sv_path)?))?;
        if !svs.is_empty() && dim != file.standardizer.dim() {
            return Err(Error::Shape {
                expected: file.standardizer.dim(),
                got: dim,
            });
        }
        let model = TreeModel {
            tree: file.tree,
            classifiers: file.classifiers.into_iter().map(|c| (c.node_id, c)).collect(),
            standardizer: file.standardizer,
            kernel_bank: file.kernel_bank,
            support_vectors: svs,
            c_max: file.c_max,
        };
        model.validate()?;
        if let Some(bad) = model
            .classifiers
            .values()
            .flat_map(|c| c.sv_indices.iter())
            .find(|&&i| i >= model.support_vectors.len())
        {
            return Err(Error::Invariant(format!(
                "support vector index {bad} outside store of {}",
                model.support_vectors.len()
            )));
        }
        Ok(model)
    }

    fn write_description<W: Write>(&self, sv_name: &str, out: W) -> Result<()> {
        let file = ModelFileRef {
            format: MODEL_FORMAT,
            support_vectors: sv_name,
            c_max: self.c_max,
            standardizer: &self.standardizer,
            kernel_bank: &self.kernel_bank,
            tree: &self.tree,
            classifiers: self.classifiers.values().collect(),
        };
        serde_json::to_writer_pretty(out, &file)?;
        Ok(())
    }
}

#[derive(Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
struct ModelFileRef<'a, T> {
    format: &'a str,
    support_vectors: &'a str,
    c_max: T,
    standardizer: &'a Standardizer<T>,
    kernel_bank: &'a [KernelSpec<T>],
    tree: &'a LabelTree,
    classifiers: Vec<&'a NodeClassifier<T>>,
}

#[derive(Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
struct ModelFile<T> {
    format: String,
    support_vectors: String,
    c_max: T,
    standardizer: Standardizer<T>,
    kernel_bank: Vec<KernelSpec<T>>,
    tree: LabelTree,
    classifiers: Vec<NodeClassifier<T>>,
}

/// Binary support-vector store: magic, little-endian `u32` count and
/// dimension, then row-major 32-bit floats.
pub fn write_support_vectors<T: Scalar, W: Write>(rows: &[Vec<T>], dim: usize, mut out: W) -> Result<()> {
    let n = u32::try_from(rows.len())
        .map_err(|_| Error::Parameter("too many support vectors".into()))?;
    let d = u32::try_from(dim).map_err(|_| Error::Parameter("dimension too large".into()))?;
    out.write_all(SV_MAGIC)?;
    out.write_all(&n.to_le_bytes())?;
    out.write_all(&d.to_le_bytes())?;
    for row in rows {
        if row.len() != dim {
            return Err(Error::Shape {
                expected: dim,
                got: row.len(),
            });
        }
        for v in row {
            let f = v.to_f32().unwrap_or(f32::NAN);
            out.write_all(&f.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_support_vectors<T: Scalar, R: Read>(mut input: R) -> Result<(Vec<Vec<T>>, usize)> {
    let mut magic = [0u8; 7];
    input.read_exact(&mut magic)?;
    if &magic != SV_MAGIC {
        return Err(Error::format(1, "support-vector file has a bad magic"));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let n = u32::from_le_bytes(word) as usize;
    input.read_exact(&mut word)?;
    let dim = u32::from_le_bytes(word) as usize;
    let mut rows = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let mut row = Vec::with_capacity(dim);
        for _ in 0..dim {
            input.read_exact(&mut word)?;
            let f = f32::from_le_bytes(word);
            if !f.is_finite() {
                return Err(Error::format(1, "non-finite support-vector entry"));
            }
            row.push(T::from_f32(f).unwrap_or_else(T::nan));
        }
        rows.push(row);
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::format(1, "trailing bytes after support vectors"));
    }
    Ok((rows, dim))
}

/// Macro-averaged per-class accuracy in percent over classes `0..n_classes`.
pub fn mean_accuracy_of(truth: &[usize], predicted: &[usize], n_classes: usize) -> Result<f64> {
    let stats = class_stats(truth, predicted, n_classes)?;
    Ok(stats.iter().map(|s| s.accuracy).sum::<f64>() / n_classes as f64)
}

fn class_stats(truth: &[usize], predicted: &[usize], n_classes: usize) -> Result<Vec<ClassAccuracy>> {
    if truth.len() != predicted.len() {
        return Err(Error::Shape {
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    if truth.is_empty() || n_classes == 0 {
        return Err(Error::Evaluation("test set is empty".into()));
    }
    let mut total = vec![0usize; n_classes];
    let mut correct = vec![0usize; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= n_classes {
            return Err(Error::Evaluation(format!(
                "label {t} outside {n_classes} classes"
            )));
        }
        total[t] += 1;
        if t == p {
            correct[t] += 1;
        }
    }
    if let Some(c) = total.iter().position(|&t| t == 0) {
        return Err(Error::Evaluation(format!("class {c} has no test samples")));
    }
    Ok((0..n_classes)
        .map(|c| ClassAccuracy {
            class: c,
            total: total[c],
            correct: correct[c],
            accuracy: 100.0 * correct[c] as f64 / total[c] as f64,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAccuracy {
    pub class: usize,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Share of samples whose path node at `layer` contains the true label.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerRouting {
    pub layer: usize,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub n_samples: usize,
    pub n_classes: usize,
    /// Macro average of per-class accuracy, percent.
    pub mean_accuracy: f64,
    /// Fraction of all samples predicted correctly, percent.
    pub pooled_accuracy: f64,
    pub per_class: Vec<ClassAccuracy>,
    /// Layers 2.. of the tree; the first entry is the decision taken at the root.
    pub routing: Vec<LayerRouting>,
    /// `confusion[true][predicted]` counts.
    pub confusion: Vec<Vec<usize>>,
}

impl EvaluationReport {
    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

fn labelled(test: &Dataset<impl Scalar>) -> Result<()> {
    if test.is_empty() {
        return Err(Error::Evaluation("test set is empty".into()));
    }
    if test.labels.len() != test.len() {
        return Err(Error::Evaluation("test set has no labels".into()));
    }
    Ok(())
}

pub fn mean_accuracy<T: Scalar>(model: &TreeModel<T>, test: &Dataset<T>) -> Result<f64> {
    labelled(test)?;
    let preds: Vec<usize> = model
        .predict_batch(&test.features)?
        .into_iter()
        .map(|p| p.label)
        .collect();
    mean_accuracy_of(&test.labels, &preds, model.tree.n_categories())
}

pub fn evaluate_report<T: Scalar>(model: &TreeModel<T>, test: &Dataset<T>) -> Result<EvaluationReport> {
    labelled(test)?;
    let preds = model.predict_batch(&test.features)?;
    report_from_predictions(&model.tree, &test.labels, &preds)
}

/// Builds the evaluation report from already computed predictions.
pub fn report_from_predictions<T>(
    tree: &LabelTree,
    truth: &[usize],
    preds: &[Prediction<T>],
) -> Result<EvaluationReport> {
    let n_classes = tree.n_categories();
    let labels: Vec<usize> = preds.iter().map(|p| p.label).collect();
    let per_class = class_stats(truth, &labels, n_classes)?;
    let mean_accuracy = per_class.iter().map(|s| s.accuracy).sum::<f64>() / n_classes as f64;
    let n = truth.len();
    let hits = per_class.iter().map(|s| s.correct).sum::<usize>();

    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&t, &p) in truth.iter().zip(&labels) {
        if p < n_classes {
            confusion[t][p] += 1;
        }
    }

    let depth = tree.depth();
    let mut routed = vec![0usize; depth.saturating_sub(1)];
    for (&t, pred) in truth.iter().zip(preds) {
        for (slot, layer) in (2..=depth).enumerate() {
            // a path shorter than the tree stays at its leaf
            let node = pred
                .path
                .iter()
                .find(|&&id| tree.node(id).level == layer)
                .or(pred.path.last())
                .copied()
                .unwrap_or(0);
            if tree.node(node).labels.contains(&t) {
                routed[slot] += 1;
            }
        }
    }
    let routing = routed
        .into_iter()
        .enumerate()
        .map(|(i, correct)| LayerRouting {
            layer: i + 2,
            correct,
            total: n,
            accuracy: 100.0 * correct as f64 / n as f64,
        })
        .collect();

    Ok(EvaluationReport {
        n_samples: n,
        n_classes,
        mean_accuracy,
        pooled_accuracy: 100.0 * hits as f64 / n as f64,
        per_class,
        routing,
        confusion,
    })
}

/// Flat baseline: predicts the class whose training mean is nearest in
/// Euclidean distance, ties to the lower class index.
#[derive(Debug, Clone, PartialEq)]
pub struct NearestCentroid<T> {
    pub centroids: Vec<Vec<T>>,
}

impl<T: Scalar> NearestCentroid<T> {
    pub fn fit(train: &Dataset<T>, n_classes: usize) -> Result<Self> {
        labelled(train)?;
        let dim = train.dim();
        let mut sums = vec![vec![T::zero(); dim]; n_classes];
        let mut counts = vec![0usize; n_classes];
        for (row, &l) in train.features.iter().zip(&train.labels) {
            if l >= n_classes {
                return Err(Error::Coverage(format!("label {l} outside {n_classes} classes")));
            }
            counts[l] += 1;
            for (s, &v) in sums[l].iter_mut().zip(row) {
                *s = *s + v;
            }
        }
        if let Some(c) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Coverage(format!("class {c} has no training samples")));
        }
        let centroids = sums
            .into_iter()
            .zip(counts)
            .map(|(s, c)| {
                let k = T::from_usize_lossy(c);
                s.into_iter().map(|v| v / k).collect()
            })
            .collect();
        Ok(Self { centroids })
    }

    pub fn predict(&self, x: &[T]) -> usize {
        let mut best = 0;
        let mut best_d = T::infinity();
        for (c, mu) in self.centroids.iter().enumerate() {
            let d = mu
                .iter()
                .zip(x)
                .fold(T::zero(), |a, (&m, &v)| a + (m - v) * (m - v));
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        best
    }

    pub fn mean_accuracy(&self, test: &Dataset<T>) -> Result<f64> {
        labelled(test)?;
        let preds: Vec<usize> = test.features.iter().map(|x| self.predict(x)).collect();
        mean_accuracy_of(&test.labels, &preds, self.centroids.len())
    }
}
