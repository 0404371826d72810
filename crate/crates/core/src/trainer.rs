//! Top-down training of multi-kernel SVM scorers for every sibling group.
//!
//! A sibling group (the children of one internal node) is trained one-vs-rest
//! with kernel weights shared by all scorers of the group:
//!
//! 1. solve each binary soft-margin dual for the current weights `d`;
//! 2. move `d` to the norm-proportional fixed point
//!    `d_m ∝ d_m * sqrt(sum_r beta_r' K_m beta_r)` with `beta = alpha * y`;
//! 3. repeat, then re-solve once with the final weights.
//!
//! When the parent node has its own scorer, a refinement pass runs projected
//! sub-gradient epochs on the primal with an extra hinge penalty
//! `rho * max(0, parent(x) - own(x))` over each child's own samples. An epoch
//! is kept only if it does not increase the number of samples whose own-child
//! score falls below the parent score.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{gram_matrix, Gram, Kernel, KernelCombination, KernelSpec, KernelTemplate, Standardizer};
use crate::scalar::Scalar;
use crate::svm::solve_svm_dual;
use crate::tree::LabelTree;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig<T> {
    /// Hinge-loss penalty.
    pub c: T,
    /// Scale of the kernel-norm regularizer; the effective penalty is `c / lambda`.
    pub lambda: T,
    /// Weight of the inter-level hinge penalty; 0 disables refinement.
    pub rho: T,
    pub mkl_iters: usize,
    pub refine_epochs: usize,
    /// KKT tolerance of the dual solver.
    pub tol: T,
    /// Refinement step at epoch `t` is `step / t`.
    pub step: T,
}

impl<T: Scalar> Default for TrainingConfig<T> {
    fn default() -> Self {
        Self {
            c: T::one(),
            lambda: T::one(),
            rho: T::lit(0.1),
            mkl_iters: 5,
            refine_epochs: 20,
            tol: T::lit(1e-6),
            step: T::lit(0.01),
        }
    }
}

impl<T: Scalar> TrainingConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: T, name: &str| {
            if v > T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} must be > 0, got {v}")))
            }
        };
        positive(self.c, "C")?;
        positive(self.lambda, "lambda")?;
        positive(self.tol, "tol")?;
        positive(self.step, "step")?;
        if !(self.rho >= T::zero()) || !self.rho.is_finite() {
            return Err(Error::Parameter(format!("rho must be >= 0, got {}", self.rho)));
        }
        Ok(())
    }

    pub fn effective_c(&self) -> T {
        self.c / self.lambda
    }
}

/// Scorer `f(x) = sum_i dual_coefs[i] * K(sv_i, x) + bias` for one child node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct NodeClassifier<T> {
    pub node_id: usize,
    pub level: usize,
    /// Row indices into the feature store the scorer is evaluated against.
    pub sv_indices: Vec<usize>,
    pub dual_coefs: Vec<T>,
    pub bias: T,
    pub kernel: KernelCombination<T>,
}

impl<T: Scalar> NodeClassifier<T> {
    /// Scores `x` against the rows of `store`.
    pub fn score(&self, store: &[Vec<T>], x: &[T]) -> Result<T> {
        let mut acc = self.bias;
        for (&i, &coef) in self.sv_indices.iter().zip(&self.dual_coefs) {
            let sv = store.get(i).ok_or_else(|| {
                Error::Invariant(format!(
                    "node {} references support vector {i} outside store of {}",
                    self.node_id,
                    store.len()
                ))
            })?;
            acc = acc + coef * self.kernel.eval(sv, x)?;
        }
        Ok(acc)
    }

    pub fn validate(&self, c_max: T) -> Result<()> {
        self.kernel.validate()?;
        if self.sv_indices.len() != self.dual_coefs.len() {
            return Err(Error::Invariant(format!(
                "node {}: {} support vectors with {} coefficients",
                self.node_id,
                self.sv_indices.len(),
                self.dual_coefs.len()
            )));
        }
        let bound = c_max + T::lit(1e-9);
        if let Some(c) = self
            .dual_coefs
            .iter()
            .find(|c| !c.is_finite() || c.abs() > bound)
        {
            return Err(Error::Invariant(format!(
                "node {}: dual coefficient {c} outside [-{c_max}, {c_max}]",
                self.node_id
            )));
        }
        if !self.bias.is_finite() {
            return Err(Error::Invariant(format!("node {}: non-finite bias", self.node_id)));
        }
        Ok(())
    }
}

/// Training rows of one sibling group and each row's child index.
#[derive(Debug, Clone, PartialEq)]
pub struct SiblingGroupSamples<T> {
    pub features: Vec<Vec<T>>,
    pub targets: Vec<usize>,
    pub n_children: usize,
}

impl<T: Scalar> SiblingGroupSamples<T> {
    pub fn new(features: Vec<Vec<T>>, targets: Vec<usize>, n_children: usize) -> Result<Self> {
        if features.len() != targets.len() {
            return Err(Error::Shape {
                expected: features.len(),
                got: targets.len(),
            });
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= n_children) {
            return Err(Error::Coverage(format!(
                "target {t} outside {n_children} children"
            )));
        }
        Ok(Self {
            features,
            targets,
            n_children,
        })
    }
}

/// Scorer state for one child inside a group, in group-local sample indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupScorer<T> {
    /// Signed coefficients over all group samples (zeros for non-support rows).
    pub coefs: Vec<T>,
    pub bias: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupTraining<T> {
    pub kernel: KernelCombination<T>,
    pub scorers: Vec<GroupScorer<T>>,
    /// Per-scorer `alpha` of the last dual solve (before refinement).
    pub alphas: Vec<Vec<T>>,
    /// Per-scorer dual objective of the last solve.
    pub dual_objectives: Vec<T>,
    /// Summed dual objective of every phase-(a) solve, one entry per round.
    pub dual_history: Vec<T>,
    /// Kernel weights used by each round, ending with the final weights.
    pub weight_history: Vec<Vec<T>>,
    pub violations_before: usize,
    pub violations_after: usize,
}

impl<T: Scalar> GroupTraining<T> {
    /// Scores of every group sample under scorer `r`, given the group Gram.
    pub fn scores(&self, gram: &Gram<T>, r: usize) -> Vec<T> {
        scorer_outputs(gram, &self.scorers[r])
    }
}

fn scorer_outputs<T: Scalar>(gram: &Gram<T>, s: &GroupScorer<T>) -> Vec<T> {
    let n = gram.size();
    let active: Vec<(usize, T)> = s
        .coefs
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != T::zero())
        .map(|(i, &c)| (i, c))
        .collect();
    (0..n)
        .map(|t| {
            let row = gram.row(t);
            active.iter().fold(s.bias, |acc, &(i, c)| acc + c * row[i])
        })
        .collect()
}

fn count_violations<T: Scalar>(own: &[T], parent: &[T], mask: &[bool]) -> usize {
    own.iter()
        .zip(parent)
        .zip(mask)
        .filter(|((o, p), m)| **m && **o < **p)
        .count()
}

/// Gram matrices of every bank kernel over the group rows.
pub fn base_grams<T: Scalar>(bank: &[KernelSpec<T>], rows: &[Vec<T>]) -> Result<Vec<Gram<T>>> {
    bank.iter().map(|k| gram_matrix(k, rows)).collect()
}

/// Trains one-vs-rest scorers for a sibling group.
///
/// `parent_scores[i]` is the parent node's own score on sample `i`; pass
/// `None` at the root or when the parent has no scorer.
pub fn train_sibling_group<T: Scalar>(
    samples: &SiblingGroupSamples<T>,
    bank: &[KernelSpec<T>],
    parent_scores: Option<&[T]>,
    cfg: &TrainingConfig<T>,
) -> Result<GroupTraining<T>> {
    cfg.validate()?;
    let n = samples.features.len();
    let r_count = samples.n_children;
    if r_count < 2 {
        return Err(Error::Parameter(format!(
            "sibling group needs at least 2 children, got {r_count}"
        )));
    }
    let mut per_child = vec![0usize; r_count];
    for &t in &samples.targets {
        per_child[t] += 1;
    }
    if let Some(empty) = per_child.iter().position(|&c| c == 0) {
        return Err(Error::Coverage(format!("child {empty} has no training samples")));
    }
    if samples
        .features
        .iter()
        .any(|r| r.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::Parameter("non-finite feature value".into()));
    }
    if let Some(p) = parent_scores {
        if p.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: p.len(),
            });
        }
    }

    let grams = base_grams(bank, &samples.features)?;
    let c_eff = cfg.effective_c();
    let labels: Vec<Vec<T>> = (0..r_count)
        .map(|r| {
            samples
                .targets
                .iter()
                .map(|&t| if t == r { T::one() } else { -T::one() })
                .collect()
        })
        .collect();

    let mut kernel = KernelCombination::uniform(bank.to_vec())?;
    let mut dual_history = Vec::with_capacity(cfg.mkl_iters + 1);
    let mut weight_history = vec![kernel.weights.clone()];
    let mut round = 0;
    let (gram, solutions) = loop {
        let gram = Gram::weighted_sum(&grams, &kernel.weights);
        let solutions = labels
            .par_iter()
            .map(|y| solve_svm_dual(&gram, y, c_eff, cfg.tol))
            .collect::<Result<Vec<_>>>()?;
        dual_history.push(solutions.iter().map(|s| s.dual_objective).sum());
        if round == cfg.mkl_iters {
            break (gram, solutions);
        }
        round += 1;

        let betas: Vec<Vec<T>> = solutions
            .iter()
            .zip(&labels)
            .map(|(s, y)| s.signed_coefs(y))
            .collect();
        let norms: Vec<T> = grams
            .iter()
            .zip(&kernel.weights)
            .map(|(g, &d)| {
                let q: T = betas.iter().map(|b| quad_form(g, b)).sum();
                d * q.max(T::zero()).sqrt()
            })
            .collect();
        let total: T = norms.iter().copied().sum();
        if total > T::zero() && total.is_finite() {
            let mut weights: Vec<T> = norms.iter().map(|&v| v / total).collect();
            // absorb rounding so the simplex sum is exact to machine precision
            let s: T = weights.iter().copied().sum();
            for w in &mut weights {
                *w = *w / s;
            }
            kernel = KernelCombination::new(bank.to_vec(), weights)?;
        }
        weight_history.push(kernel.weights.clone());
    };

    let alphas: Vec<Vec<T>> = solutions.iter().map(|s| s.alpha.clone()).collect();
    let dual_objectives = solutions.iter().map(|s| s.dual_objective).collect();
    let mut scorers: Vec<GroupScorer<T>> = solutions
        .iter()
        .zip(&labels)
        .map(|(s, y)| GroupScorer {
            coefs: s.signed_coefs(y),
            bias: s.bias,
        })
        .collect();

    let mut violations_before = 0;
    let mut violations_after = 0;
    if let Some(parent) = parent_scores {
        let refine = cfg.rho > T::zero() && cfg.refine_epochs > 0;
        for (r, scorer) in scorers.iter_mut().enumerate() {
            let mask: Vec<bool> = samples.targets.iter().map(|&t| t == r).collect();
            let before = count_violations(&scorer_outputs(&gram, scorer), parent, &mask);
            violations_before += before;
            let after = if refine {
                refine_scorer(&gram, &labels[r], parent, &mask, scorer, cfg)
            } else {
                before
            };
            violations_after += after;
        }
    }

    Ok(GroupTraining {
        kernel,
        scorers,
        alphas,
        dual_objectives,
        dual_history,
        weight_history,
        violations_before,
        violations_after,
    })
}

fn quad_form<T: Scalar>(gram: &Gram<T>, b: &[T]) -> T {
    let mut acc = T::zero();
    for (i, &bi) in b.iter().enumerate() {
        if bi == T::zero() {
            continue;
        }
        let row = gram.row(i);
        let inner = b.iter().zip(row).fold(T::zero(), |a, (&bj, &k)| a + bj * k);
        acc = acc + bi * inner;
    }
    acc
}

/// Projected sub-gradient refinement of one scorer. Returns the final
/// violation count, which never exceeds the starting count.
fn refine_scorer<T: Scalar>(
    gram: &Gram<T>,
    y: &[T],
    parent: &[T],
    mask: &[bool],
    scorer: &mut GroupScorer<T>,
    cfg: &TrainingConfig<T>,
) -> usize {
    let n = y.len();
    let c_eff = cfg.effective_c();
    // steps are taken in coefficient space; dividing by the largest kernel
    // diagonal keeps the change in scores comparable across kernel scales
    let kappa = (0..n)
        .map(|i| gram.get(i, i))
        .fold(T::zero(), T::max)
        .max(T::lit(1e-12));
    let mut outputs = scorer_outputs(gram, scorer);
    let mut violations = count_violations(&outputs, parent, mask);
    let mut objective = augmented_objective(gram, y, parent, mask, scorer, &outputs, cfg);

    for epoch in 1..=cfg.refine_epochs {
        let eta = cfg.step / (T::from_usize_lossy(epoch) * kappa);
        let mut grad = scorer.coefs.clone();
        let mut grad_b = T::zero();
        for i in 0..n {
            if y[i] * outputs[i] < T::one() {
                grad[i] = grad[i] - c_eff * y[i];
                grad_b = grad_b - c_eff * y[i];
            }
            if mask[i] && outputs[i] < parent[i] {
                grad[i] = grad[i] - cfg.rho;
                grad_b = grad_b - cfg.rho;
            }
        }
        let candidate = GroupScorer {
            coefs: scorer
                .coefs
                .iter()
                .zip(&grad)
                .zip(y)
                .map(|((&b, &g), &yi)| {
                    // project alpha = beta * y onto [0, C]
                    let alpha = ((b - eta * g) * yi).max(T::zero()).min(c_eff);
                    alpha * yi
                })
                .collect(),
            bias: scorer.bias - eta * grad_b / T::from_usize_lossy(n),
        };
        let cand_out = scorer_outputs(gram, &candidate);
        let cand_viol = count_violations(&cand_out, parent, mask);
        let cand_obj = augmented_objective(gram, y, parent, mask, &candidate, &cand_out, cfg);
        if cand_viol <= violations && cand_obj <= objective {
            *scorer = candidate;
            outputs = cand_out;
            violations = cand_viol;
            objective = cand_obj;
        }
    }
    violations
}

/// `1/2 ||f||^2 + C * hinge + rho * inter-level hinge` for one scorer.
fn augmented_objective<T: Scalar>(
    gram: &Gram<T>,
    y: &[T],
    parent: &[T],
    mask: &[bool],
    scorer: &GroupScorer<T>,
    outputs: &[T],
    cfg: &TrainingConfig<T>,
) -> T {
    let mut loss = T::zero();
    let mut penalty = T::zero();
    for i in 0..y.len() {
        loss = loss + (T::one() - y[i] * outputs[i]).max(T::zero());
        if mask[i] {
            penalty = penalty + (parent[i] - outputs[i]).max(T::zero());
        }
    }
    T::lit(0.5) * quad_form(gram, &scorer.coefs) + cfg.effective_c() * loss + cfg.rho * penalty
}

/// A trained tree: structure, scorers, preprocessing and the support-vector store.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel<T> {
    pub tree: LabelTree,
    pub classifiers: BTreeMap<usize, NodeClassifier<T>>,
    pub standardizer: Standardizer<T>,
    pub kernel_bank: Vec<KernelSpec<T>>,
    /// Standardized training rows referenced by `sv_indices`, stored at single precision.
    pub support_vectors: Vec<Vec<T>>,
    /// Upper bound on `|dual_coefs|` used during training.
    pub c_max: T,
}

impl<T: Scalar> TreeModel<T> {
    /// Checks every multi-child group has a scorer per child and all scorers are sane.
    pub fn validate(&self) -> Result<()> {
        for node in self.tree.nodes() {
            if node.children.len() >= 2 {
                for &c in &node.children {
                    if !self.classifiers.contains_key(&c) {
                        return Err(Error::Invariant(format!(
                            "node {c} under {} has no scorer",
                            node.id
                        )));
                    }
                }
            }
        }
        for clf in self.classifiers.values() {
            clf.validate(self.c_max)?;
        }
        if self.standardizer.scale.iter().any(|s| !(*s > T::zero())) {
            return Err(Error::Invariant("standardization scale must be > 0".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.standardizer.dim()
    }
}

/// Diagnostics per trained sibling group, keyed by parent node id.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport<T> {
    pub groups: BTreeMap<usize, GroupTraining<T>>,
    /// Parent ids of single-child groups.
    pub pass_through: Vec<usize>,
    /// Sample indices (into the training set) per trained group.
    pub group_samples: BTreeMap<usize, Vec<usize>>,
}

impl<T: Scalar> TrainReport<T> {
    pub fn violations_before(&self) -> usize {
        self.groups.values().map(|g| g.violations_before).sum()
    }

    pub fn violations_after(&self) -> usize {
        self.groups.values().map(|g| g.violations_after).sum()
    }
}

/// Parent id, member sample indices and training outcome of one group.
type TrainedGroup<T> = (usize, Vec<usize>, GroupTraining<T>);

/// Trains every sibling group, parents strictly before children.
///
/// Groups at the same depth are independent and train in parallel; results are
/// merged by node id so the outcome does not depend on scheduling.
pub fn train_tree<T: Scalar>(
    tree: &LabelTree,
    data: &Dataset<T>,
    bank: &[KernelTemplate],
    cfg: &TrainingConfig<T>,
) -> Result<(TreeModel<T>, TrainReport<T>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Parameter("training set is empty".into()));
    }
    if data.labels.len() != data.len() {
        return Err(Error::Parameter("training set must be labelled".into()));
    }
    if let Some(&bad) = data.labels.iter().find(|&&l| l >= tree.n_categories()) {
        return Err(Error::Coverage(format!(
            "label {bad} outside the tree's {} categories",
            tree.n_categories()
        )));
    }
    if bank.is_empty() {
        return Err(Error::Parameter("kernel bank is empty".into()));
    }

    let standardizer = Standardizer::fit(&data.features)?;
    let rows: Vec<Vec<T>> = data
        .features
        .iter()
        .map(|r| standardizer.apply(r))
        .collect::<Result<_>>()?;
    let specs: Vec<KernelSpec<T>> = bank
        .iter()
        .map(|t| t.resolve(&rows))
        .collect::<Result<_>>()?;

    // child index of every category under each internal node
    let mut by_depth: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for id in tree.internal_nodes_bfs() {
        by_depth.entry(tree.node(id).level).or_default().push(id);
    }

    let mut classifiers: BTreeMap<usize, NodeClassifier<T>> = BTreeMap::new();
    let mut report = TrainReport {
        groups: BTreeMap::new(),
        pass_through: Vec::new(),
        group_samples: BTreeMap::new(),
    };

    for (_, parents) in by_depth {
        let results = parents
            .par_iter()
            .map(|&p| -> Result<Option<TrainedGroup<T>>> {
                let node = tree.node(p);
                if node.children.len() < 2 {
                    return Ok(None);
                }
                let mut children = node.children.clone();
                children.sort_unstable();
                let mut child_of = vec![usize::MAX; tree.n_categories()];
                for (r, &c) in children.iter().enumerate() {
                    for &cat in &tree.node(c).labels {
                        child_of[cat] = r;
                    }
                }
                let idx: Vec<usize> = (0..data.len())
                    .filter(|&i| child_of[data.labels[i]] != usize::MAX)
                    .collect();
                let features: Vec<Vec<T>> = idx.iter().map(|&i| rows[i].clone()).collect();
                let targets: Vec<usize> = idx.iter().map(|&i| child_of[data.labels[i]]).collect();
                let samples = SiblingGroupSamples::new(features, targets, children.len())
                    .map_err(|e| node_err(p, e))?;

                let parent_scores = match classifiers.get(&p) {
                    Some(clf) if cfg.rho > T::zero() => Some(
                        samples
                            .features
                            .iter()
                            .map(|x| clf.score(&rows, x))
                            .collect::<Result<Vec<T>>>()?,
                    ),
                    _ => None,
                };
                let trained =
                    train_sibling_group(&samples, &specs, parent_scores.as_deref(), cfg)
                        .map_err(|e| node_err(p, e))?;
                Ok(Some((p, idx, trained)))
            })
            .collect::<Result<Vec<_>>>()?;

        for (p, res) in parents.iter().zip(results) {
            let Some((p2, idx, trained)) = res else {
                report.pass_through.push(*p);
                continue;
            };
            debug_assert_eq!(*p, p2);
            let mut children = tree.node(p2).children.clone();
            children.sort_unstable();
            for (r, &child) in children.iter().enumerate() {
                let scorer = &trained.scorers[r];
                let (sv_indices, dual_coefs): (Vec<usize>, Vec<T>) = scorer
                    .coefs
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| **c != T::zero())
                    .map(|(local, &c)| (idx[local], c))
                    .unzip();
                classifiers.insert(
                    child,
                    NodeClassifier {
                        node_id: child,
                        level: tree.node(child).level,
                        sv_indices,
                        dual_coefs,
                        bias: scorer.bias,
                        kernel: trained.kernel.clone(),
                    },
                );
            }
            report.group_samples.insert(p2, idx);
            report.groups.insert(p2, trained);
        }
    }

    // compact: keep only referenced rows, stored at single precision
    let mut used: Vec<usize> = classifiers
        .values()
        .flat_map(|c| c.sv_indices.iter().copied())
        .collect();
    used.sort_unstable();
    used.dedup();
    let mut remap = vec![usize::MAX; rows.len()];
    for (new, &old) in used.iter().enumerate() {
        remap[old] = new;
    }
    let support_vectors: Vec<Vec<T>> = used.iter().map(|&i| to_single(&rows[i])).collect();
    for clf in classifiers.values_mut() {
        for i in &mut clf.sv_indices {
            *i = remap[*i];
        }
    }

    let model = TreeModel {
        tree: tree.clone(),
        classifiers,
        standardizer,
        kernel_bank: specs,
        support_vectors,
        c_max: cfg.effective_c(),
    };
    model.validate()?;
    Ok((model, report))
}

fn node_err(node: usize, e: Error) -> Error {
    Error::Node {
        node,
        source: Box::new(e),
    }
}

fn to_single<T: Scalar>(row: &[T]) -> Vec<T> {
    row.iter()
        .map(|v| T::from_f32(v.to_f32().unwrap_or(f32::NAN)).unwrap_or_else(T::nan))
        .collect()
}
