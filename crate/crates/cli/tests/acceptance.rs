//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Every numeric check compares the library against an oracle written here
//! from scratch (dense accumulation, exhaustive partition search, projected
//! gradient QP), never against the library itself.

#![allow(clippy::needless_range_loop)]

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vclt_core::flops::reference_comparisons;
use vclt_core::kernel::{KernelSpec, KernelTemplate};
use vclt_core::quality::{path_product_score, three_category_scores, CategoryDistances, Linkage};
use vclt_core::synth::{generate_blobs, generate_score_log, BlobSpec, ConfusionPair};
use vclt_core::trainer::{train_sibling_group, SiblingGroupSamples};
use vclt_core::tree::TreeNode;
use vclt_core::*;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn run(name: &str, budget: Duration, check: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let verdict = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Verdict::new(false, format!("panicked: {msg}"))
    });
    let elapsed = start.elapsed();
    let in_time = elapsed <= budget;
    let pass = verdict.pass && in_time;
    println!(
        "{} {name}: {} [{:.2}s of {:.0}s{}]",
        if pass { "PASS" } else { "FAIL" },
        verdict.detail,
        elapsed.as_secs_f64(),
        budget.as_secs_f64(),
        if in_time { "" } else { ", over budget" }
    );
    pass
}

fn main() {
    let results = [
        run("flop accounting", Duration::from_secs(1), flop_accounting),
        run("three-category tree ranking", Duration::from_secs(1), three_category_ranking),
        run("confusion graph oracle", Duration::from_secs(5), confusion_graph_oracle),
        run("community detection oracle", Duration::from_secs(30), community_detection_oracle),
        run("paired-groups shape recovery", Duration::from_secs(5), shape_recovery),
        run("svm solver oracle", Duration::from_secs(60), svm_solver_oracle),
        run_blob_criteria(),
        run("determinism", Duration::from_secs(300), determinism),
    ];
    let failed = results.iter().filter(|p| !**p).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- flops

fn flop_accounting() -> Verdict {
    let reports: BTreeMap<String, _> = reference_comparisons()
        .into_iter()
        .map(|c| (c.dataset.clone(), (c.report().unwrap(), c)))
        .collect();
    let (cifar, cifar_cfg) = &reports["CIFAR-100"];
    let (imnet, imnet_cfg) = &reports["ImageNet"];

    // independent arithmetic: 2 ops per multiply-add, no bias terms
    let fc = |layers: &[(u64, u64)]| layers.iter().map(|(i, o)| 2 * i * o).sum::<u64>();
    let cifar_fc = fc(&[(4096, 4096), (4096, 100)]);
    let imnet_fc = fc(&[(4096, 4096), (4096, 1000)]);
    let mut notes = Vec::new();
    let mut ok = true;
    let mut expect = |what: &str, got: u64, want: u64| {
        if got != want {
            ok = false;
            notes.push(format!("{what} {got} != {want}"));
        }
    };
    expect("cifar fc (oracle)", cifar.fc_ops, cifar_fc);
    expect("imagenet fc (oracle)", imnet.fc_ops, imnet_fc);
    expect("cifar fc", cifar.fc_ops, 34_385_920);
    expect("cifar tree", cifar.tree_ops, 147_456);
    expect("cifar tree (oracle)", cifar.tree_ops, 2 * cifar_cfg.n_classifiers * cifar_cfg.feature_dim);
    expect("cifar speedup", cifar.rounded_speedup(), 233);
    expect("imagenet fc", imnet.fc_ops, 41_746_432);
    expect("imagenet tree (oracle)", imnet.tree_ops, 2 * imnet_cfg.n_classifiers * imnet_cfg.feature_dim);
    expect("imagenet speedup", imnet.rounded_speedup(), 78);
    let summary = format!(
        "cifar {} / {} = {:.1}x, imagenet {} / {} = {:.1}x",
        cifar.fc_ops, cifar.tree_ops, cifar.speedup, imnet.fc_ops, imnet.tree_ops, imnet.speedup
    );
    if notes.is_empty() {
        Verdict::new(ok, summary)
    } else {
        Verdict::new(ok, format!("{summary}; {}", notes.join("; ")))
    }
}

// ---------------------------------------------------------------- quality proxy

fn tree_node(id: usize, level: usize, labels: Vec<usize>, parent: Option<usize>, children: Vec<usize>) -> TreeNode {
    TreeNode {
        id,
        level,
        labels,
        parent,
        children,
        name: String::new(),
    }
}

/// `((x, y), z)` over A = 0, B = 1, C = 2.
fn nested(x: usize, y: usize, z: usize) -> LabelTree {
    let mut pair = vec![x, y];
    pair.sort_unstable();
    let parent = |c: usize| Some(if c == z { 4 } else { 3 });
    LabelTree::from_nodes(
        3,
        vec![
            tree_node(0, 3, vec![0], parent(0), vec![]),
            tree_node(1, 3, vec![1], parent(1), vec![]),
            tree_node(2, 3, vec![2], parent(2), vec![]),
            tree_node(3, 2, pair, Some(4), vec![x, y]),
            tree_node(4, 1, vec![0, 1, 2], None, vec![3, z]),
        ],
    )
}

fn flat3() -> LabelTree {
    LabelTree::from_nodes(
        3,
        vec![
            tree_node(0, 2, vec![0], Some(3), vec![]),
            tree_node(1, 2, vec![1], Some(3), vec![]),
            tree_node(2, 2, vec![2], Some(3), vec![]),
            tree_node(3, 1, vec![0, 1, 2], None, vec![0, 1, 2]),
        ],
    )
}

fn three_category_ranking() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA11CE);
    let (t1, t2, t4) = (nested(0, 1, 2), nested(0, 2, 1), flat3());
    let mut violations = 0;
    let mut mismatches = 0;
    for _ in 0..1000 {
        let ab: f64 = rng.random_range(0.01..3.0);
        let ac = ab.max(1.0) + rng.random_range(1e-3..5.0);
        let bc = ac + rng.random_range(1e-3..5.0);
        let k: f64 = rng.random_range(0.1..10.0);
        // closed forms for the three shapes, written out directly
        let o1 = k * (2.0 * ac * ab + ac);
        let o2 = k * (2.0 * ac * ab + ab);
        let o4 = k * (2.0 * ab + ac);
        let s = three_category_scores(ab, ac, bc, k).unwrap();
        let d = CategoryDistances::three(ab, ac, bc).unwrap();
        let by_tree: Vec<f64> = [&t1, &t2, &t4]
            .iter()
            .map(|t| path_product_score(t, &d, k, Linkage::Single).unwrap().total)
            .collect();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(1.0);
        if !(close(s.t1, o1) && close(s.t2, o2) && close(s.t4, o4))
            || !(close(by_tree[0], o1) && close(by_tree[1], o2) && close(by_tree[2], o4))
        {
            mismatches += 1;
        }
        if !(s.t1 > s.t2 && s.t1 > s.t4 && by_tree[0] > by_tree[1] && by_tree[0] > by_tree[2]) {
            violations += 1;
        }
    }
    let mut worst_boundary = 0.0f64;
    for _ in 0..100 {
        let ab: f64 = rng.random_range(0.01..1.0);
        let bc: f64 = rng.random_range(1.001..6.0);
        let k: f64 = rng.random_range(0.1..10.0);
        let s = three_category_scores(ab, 1.0, bc, k).unwrap();
        worst_boundary = worst_boundary.max((s.t1 - s.t4).abs());
    }
    Verdict::new(
        violations == 0 && mismatches == 0 && worst_boundary <= 1e-12,
        format!(
            "1000 draws: {violations} ordering violations, {mismatches} formula mismatches; \
             boundary |T1-T4| max {worst_boundary:.1e}"
        ),
    )
}

// ---------------------------------------------------------------- confusion graph

/// Dense re-derivation of the graph: sort, keep top tau, shift negatives,
/// normalize (uniform when nothing is left), add off-label shares.
fn dense_confusion(records: &[ScoreRecord<f64>], n: usize, tau: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; n]; n];
    for r in records {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| r.scores[b].total_cmp(&r.scores[a]).then(a.cmp(&b)));
        let top = &idx[..tau];
        let lo = top.iter().map(|&c| r.scores[c]).fold(f64::INFINITY, f64::min).min(0.0);
        let vals: Vec<f64> = top.iter().map(|&c| r.scores[c] - lo).collect();
        let sum: f64 = vals.iter().sum();
        for (&c, &v) in top.iter().zip(&vals) {
            if c == r.true_label {
                continue;
            }
            let share = if sum > 0.0 { v / sum } else { 1.0 / tau as f64 };
            let (a, b) = (c.min(r.true_label), c.max(r.true_label));
            m[a][b] += share;
        }
    }
    m
}

fn confusion_graph_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FF);
    let mut worst = 0.0f64;
    let mut extra_edges = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..=20);
        let tau = rng.random_range(1..=n);
        let n_rec = rng.random_range(0..=500);
        let records: Vec<ScoreRecord<f64>> = (0..n_rec)
            .map(|i| {
                let kind = rng.random_range(0..4);
                let scores = (0..n)
                    .map(|_| match kind {
                        // coarse values force ties
                        0 => rng.random_range(0..4) as f64 * 0.25,
                        1 => rng.random_range(-1.0..1.0),
                        2 => 0.0,
                        _ => rng.random::<f64>(),
                    })
                    .collect();
                ScoreRecord::new(format!("r{i}"), rng.random_range(0..n), scores)
            })
            .collect();
        let g = build_confusion_graph(&records, n, tau).unwrap();
        let dense = dense_confusion(&records, n, tau);
        for u in 0..n {
            for v in u + 1..n {
                worst = worst.max((g.weight(u, v) - dense[u][v]).abs());
            }
        }
        extra_edges += g.edges().filter(|((u, v), _)| *u >= *v || *v >= n).count();
    }
    Verdict::new(
        worst <= 1e-12 && extra_edges == 0,
        format!("100 logs, max edge error {worst:.1e}, {extra_edges} malformed edges"),
    )
}

// ---------------------------------------------------------------- community detection

fn dense_adjacency(g: &ConfusionGraph<f64>) -> Vec<Vec<f64>> {
    let n = g.n_categories();
    let mut a = vec![vec![0.0; n]; n];
    for ((u, v), w) in g.edges() {
        a[u][v] += w;
        a[v][u] += w;
    }
    a
}

/// `(1/2m) Σ_ij (A_ij - k_i k_j / 2m) [c_i = c_j]`.
fn oracle_modularity(a: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = a.len();
    let k: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                q += a[i][j] - k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

/// Best modularity over every set partition, enumerated as restricted growth strings.
fn oracle_best_modularity(a: &[Vec<f64>]) -> f64 {
    fn rec(a: &[Vec<f64>], labels: &mut Vec<usize>, next: usize, best: &mut f64) {
        if labels.len() == a.len() {
            *best = best.max(oracle_modularity(a, labels));
            return;
        }
        for c in 0..=next {
            labels.push(c);
            rec(a, labels, next.max(c + 1), best);
            labels.pop();
        }
    }
    let mut best = f64::NEG_INFINITY;
    rec(a, &mut Vec::new(), 0, &mut best);
    best
}

fn level_one_labels(h: &PartitionHierarchy<f64>) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..h.n_categories).collect();
    if let Some(sets) = h.label_sets.first() {
        for (c, set) in sets.iter().enumerate() {
            for &v in set {
                labels[v] = c;
            }
        }
    }
    labels
}

fn community_detection_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x10B);
    let mut worst_ratio = f64::INFINITY;
    let mut below = 0;
    let mut non_monotone = 0;
    let mut check_levels = |h: &PartitionHierarchy<f64>| {
        if h.levels.windows(2).any(|w| w[1].modularity < w[0].modularity) {
            non_monotone += 1;
        }
    };

    let mut random_graphs = 0;
    while random_graphs < 50 {
        let n = rng.random_range(2..=8);
        let density: f64 = rng.random_range(0.2..0.9);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random_bool(density) {
                    edges.push((u, v, rng.random_range(0.05..3.0)));
                }
            }
        }
        if edges.is_empty() {
            continue;
        }
        random_graphs += 1;
        let g = ConfusionGraph::from_edges(n, edges).unwrap();
        let a = dense_adjacency(&g);
        let h = louvain_hierarchy(&g).unwrap();
        check_levels(&h);
        let q = oracle_modularity(&a, &level_one_labels(&h));
        let best = oracle_best_modularity(&a);
        if q < 0.95 * best - 1e-12 {
            below += 1;
        }
        if best > 0.0 {
            worst_ratio = worst_ratio.min(q / best);
        }
    }

    // two cliques joined by one bridge edge
    let mut bridge_misses = 0;
    let mut bridge_runs = 0;
    for left in 2..=4 {
        for right in 2..=4 {
            for bridge in [0.1, 0.5, 1.0] {
                let n = left + right;
                let mut edges = Vec::new();
                for (lo, hi) in [(0, left), (left, n)] {
                    for u in lo..hi {
                        for v in u + 1..hi {
                            edges.push((u, v, 1.0));
                        }
                    }
                }
                edges.push((left - 1, left, bridge));
                let g = ConfusionGraph::from_edges(n, edges).unwrap();
                let a = dense_adjacency(&g);
                let h = louvain_hierarchy(&g).unwrap();
                check_levels(&h);
                let q = oracle_modularity(&a, &level_one_labels(&h));
                let best = oracle_best_modularity(&a);
                bridge_runs += 1;
                if (q - best).abs() > 1e-12 {
                    bridge_misses += 1;
                }
            }
        }
    }
    Verdict::new(
        below == 0 && bridge_misses == 0 && non_monotone == 0,
        format!(
            "50 random graphs: {below} below 0.95x optimum (worst ratio {worst_ratio:.4}); \
             clique-bridge {}/{bridge_runs} exact; {non_monotone} non-monotone hierarchies",
            bridge_runs - bridge_misses
        ),
    )
}

// ---------------------------------------------------------------- shape recovery

fn shape_recovery() -> Verdict {
    let pairs = [(0, 8), (1, 9), (3, 5), (4, 7), (2, 6)];
    let groups: [&[usize]; 2] = [&[0, 1, 8, 9], &[2, 3, 4, 5, 6, 7]];
    let mut planted = BTreeMap::new();
    for g in groups {
        for (x, &i) in g.iter().enumerate() {
            for &j in &g[x + 1..] {
                planted.insert((i.min(j), i.max(j)), 0.1);
            }
        }
    }
    for &(a, b) in &pairs {
        planted.insert((a, b), 0.4);
    }
    let planted: Vec<ConfusionPair> = planted
        .into_iter()
        .map(|((a, b), strength)| ConfusionPair { a, b, strength })
        .collect();
    let labels: Vec<usize> = (0..2000).map(|i| i % 10).collect();
    let feats = vec![vec![0.0f64]; labels.len()];
    let log = generate_score_log(&feats, &labels, 10, 0.05, &planted, 1).unwrap();
    let g = build_confusion_graph(&log, 10, 5).unwrap();
    let h = louvain_hierarchy(&g).unwrap();
    let tree = build_vclt(&h, &[]).unwrap();

    let widths: Vec<usize> = tree.layers().iter().map(Vec::len).collect();
    let layer_sets = |layer: usize| -> Vec<Vec<usize>> {
        let mut sets: Vec<Vec<usize>> = tree.layers()[layer].iter().map(|&id| tree.node(id).labels.clone()).collect();
        sets.sort();
        sets
    };
    let mut want_pairs: Vec<Vec<usize>> = pairs.iter().map(|&(a, b)| vec![a, b]).collect();
    want_pairs.sort();
    let want_groups: Vec<Vec<usize>> = groups.iter().map(|g| g.to_vec()).collect();
    let ok = widths == [1, 2, 5, 10]
        && tree.len() == 18
        && layer_sets(2) == want_pairs
        && layer_sets(1) == want_groups;
    Verdict::new(ok, format!("layer widths {widths:?}, {} nodes", tree.len()))
}

// ---------------------------------------------------------------- svm oracle

fn oracle_kernel(spec: &KernelSpec<f64>, x: &[f64], y: &[f64]) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    match *spec {
        KernelSpec::Linear => dot,
        KernelSpec::Polynomial { degree, coef0 } => (dot + coef0).powi(degree as i32),
        KernelSpec::Gaussian { gamma } => {
            let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            (-gamma * d2).exp()
        }
    }
}

/// Euclidean projection onto `{0 <= a <= c, y'a = 0}` by bisection on the multiplier.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |mu: f64| -> Vec<f64> { v.iter().zip(y).map(|(vi, yi)| (vi - mu * yi).clamp(0.0, c)).collect() };
    let balance = |a: &[f64]| -> f64 { a.iter().zip(y).map(|(ai, yi)| ai * yi).sum() };
    let span = v.iter().map(|x| x.abs()).fold(0.0, f64::max) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if balance(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    at(0.5 * (lo + hi))
}

/// Maximum of `Σa - ½ a'Qa` over the SVM feasible set, by accelerated projected gradient.
fn oracle_dual_max(k: &[Vec<f64>], y: &[f64], c: f64) -> f64 {
    let n = y.len();
    let q: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| y[i] * y[j] * k[i][j]).collect()).collect();
    let lipschitz = q.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max).max(1e-12);
    let objective = |a: &[f64]| -> f64 {
        let quad: f64 = (0..n).map(|i| a[i] * (0..n).map(|j| q[i][j] * a[j]).sum::<f64>()).sum();
        a.iter().sum::<f64>() - 0.5 * quad
    };
    let mut x = vec![0.0; n];
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut f_prev = objective(&x);
    for _ in 0..20_000 {
        let grad: Vec<f64> = (0..n).map(|i| 1.0 - (0..n).map(|j| q[i][j] * z[j]).sum::<f64>()).collect();
        let step: Vec<f64> = (0..n).map(|i| z[i] + grad[i] / lipschitz).collect();
        let x_next = project(&step, y, c);
        let f = objective(&x_next);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if f < f_prev {
            // restart momentum when it overshoots
            z = x.clone();
            t = 1.0;
            continue;
        }
        z = (0..n).map(|i| x_next[i] + (t - 1.0) / t_next * (x_next[i] - x[i])).collect();
        let moved: f64 = x_next.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
        x = x_next;
        t = t_next;
        f_prev = f;
        if moved < 1e-13 {
            break;
        }
    }
    f_prev
}

fn svm_solver_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5F);
    let bank = vec![
        KernelSpec::Linear,
        KernelSpec::Polynomial { degree: 2, coef0: 1.0 },
        KernelSpec::Gaussian { gamma: 0.5 },
    ];
    let cfg = TrainingConfig64::default();
    let c = cfg.effective_c();
    let (mut worst_gap, mut box_breaks, mut simplex_breaks, mut solves) = (0.0f64, 0, 0, 0);
    for _ in 0..25 {
        let children = rng.random_range(2..=3);
        let n = rng.random_range(2 * children..=20);
        let dim = rng.random_range(2..=4);
        let targets: Vec<usize> = (0..n).map(|i| if i < children { i } else { rng.random_range(0..children) }).collect();
        let features: Vec<Vec<f64>> = targets
            .iter()
            .map(|&t| (0..dim).map(|d| rng.random_range(-1.0..1.0) + if d == t % dim { 1.0 } else { 0.0 }).collect())
            .collect();
        let samples = SiblingGroupSamples::new(features.clone(), targets.clone(), children).unwrap();
        let out = train_sibling_group(&samples, &bank, None, &cfg).unwrap();

        for w in &out.weight_history {
            if w.iter().any(|&v| v < 0.0) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                simplex_breaks += 1;
            }
        }
        let w = &out.kernel.weights;
        let k: Vec<Vec<f64>> = features
            .iter()
            .map(|x| {
                features
                    .iter()
                    .map(|z| bank.iter().zip(w).map(|(s, wm)| wm * oracle_kernel(s, x, z)).sum())
                    .collect()
            })
            .collect();
        for r in 0..children {
            let y: Vec<f64> = targets.iter().map(|&t| if t == r { 1.0 } else { -1.0 }).collect();
            let best = oracle_dual_max(&k, &y, c);
            worst_gap = worst_gap.max((out.dual_objectives[r] - best).abs());
            box_breaks += out.alphas[r].iter().filter(|&&a| !(0.0..=c).contains(&a)).count();
            solves += 1;
        }
    }
    Verdict::new(
        worst_gap <= 1e-4 && box_breaks == 0 && simplex_breaks == 0,
        format!(
            "{solves} duals, max objective gap {worst_gap:.2e}; {box_breaks} box violations; \
             {simplex_breaks} off-simplex weight vectors"
        ),
    )
}

// ---------------------------------------------------------------- blob pipeline

struct BlobRun {
    seed: u64,
    violations_before: usize,
    violations_after: usize,
    tree_ma: f64,
    nc_ma: f64,
    root_routing: f64,
    end_to_end: f64,
}

fn blob_run(seed: u64) -> BlobRun {
    let spec = BlobSpec {
        n_classes: 16,
        n_superclusters: 4,
        samples_per_class: 125,
        dim: 8,
        intra_spread: 1.0,
        inter_spread: 10.0,
        seed,
    };
    let (train, test) = generate_blobs::<f64>(&spec).unwrap();
    assert_eq!(train.len(), 16 * 100);
    let mut pairs = Vec::new();
    for a in 0..16 {
        for b in a + 1..16 {
            if spec.supercluster_of(a) == spec.supercluster_of(b) {
                pairs.push(ConfusionPair { a, b, strength: 0.2 });
            }
        }
    }
    let log = generate_score_log(&train.features, &train.labels, 16, 0.1, &pairs, seed).unwrap();
    let graph = build_confusion_graph(&log, 16, 4).unwrap();
    let tree = build_vclt(&louvain_hierarchy(&graph).unwrap(), &[]).unwrap();
    let (model, report) = train_tree(&tree, &train, &KernelTemplate::default_bank(), &TrainingConfig::default()).unwrap();
    let eval = evaluate_report(&model, &test).unwrap();
    let nc = NearestCentroid::fit(&train, 16).unwrap();
    BlobRun {
        seed,
        violations_before: report.violations_before(),
        violations_after: report.violations_after(),
        tree_ma: eval.mean_accuracy,
        nc_ma: nc.mean_accuracy(&test).unwrap(),
        root_routing: eval.routing[0].accuracy,
        end_to_end: eval.pooled_accuracy,
    }
}

fn run_blob_criteria() -> bool {
    let start = Instant::now();
    let runs: Vec<BlobRun> = (0..10).map(blob_run).collect();
    let shared = start.elapsed();

    let constraint = run("inter-level constraint violations", Duration::from_secs(120).saturating_add(shared), || {
        let worse: Vec<u64> = runs.iter().filter(|r| r.violations_after > r.violations_before).map(|r| r.seed).collect();
        let counts: Vec<String> = runs.iter().map(|r| format!("{}->{}", r.violations_before, r.violations_after)).collect();
        Verdict::new(
            worse.is_empty(),
            format!("before->after per seed [{}]; seeds that got worse {worse:?}", counts.join(" ")),
        )
    });
    let floor = run("end-to-end quality floor", Duration::from_secs(300).saturating_add(shared), || {
        let wins = runs.iter().filter(|r| r.tree_ma >= r.nc_ma).count();
        let bad_routing: Vec<u64> = runs.iter().filter(|r| r.root_routing < r.end_to_end).map(|r| r.seed).collect();
        let table: Vec<String> = runs.iter().map(|r| format!("{}:{:.2}/{:.2}", r.seed, r.tree_ma, r.nc_ma)).collect();
        Verdict::new(
            wins >= 9 && bad_routing.is_empty(),
            format!(
                "tree >= centroid on {wins}/10 seeds (seed:tree/centroid MA {}); root routing below end-to-end on {bad_routing:?}",
                table.join(" ")
            ),
        )
    });
    println!("     (blob pipeline shared by the two lines above: {:.2}s for 10 seeds)", shared.as_secs_f64());
    constraint && floor
}

// ---------------------------------------------------------------- determinism

fn vclt(dir: &Path, args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_vclt"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn vclt");
    assert!(
        out.status.success(),
        "vclt {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

/// Runs every subcommand in `dir` and returns each output file and stdout stream.
fn full_pipeline(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut streams = BTreeMap::new();
    let mut step = |name: &str, args: &[&str]| {
        streams.insert(format!("stdout:{name}"), vclt(dir, args));
    };
    step("synth", &["--seed", "7", "synth", "--out-dir", ".", "--classes", "8", "--superclusters", "2", "--samples-per-class", "30"]);
    step("build-graph", &["build-graph", "--scores", "scores.csv", "--tau", "3", "--out", "graph.txt"]);
    step("build-graph-2", &["build-graph", "--scores", "scores.csv", "--tau", "2", "--out", "graph2.txt"]);
    step("detect", &["detect", "--graph", "graph.txt", "--out", "hierarchy.txt"]);
    step("detect-2", &["detect", "--graph", "graph2.txt", "--out", "hierarchy2.txt"]);
    step("build-tree", &["build-tree", "--hierarchy", "hierarchy.txt", "--graph", "graph.txt", "--out", "tree.json"]);
    step("build-tree-2", &["build-tree", "--hierarchy", "hierarchy2.txt", "--out", "tree2.json"]);
    step("train", &["train", "--tree", "tree.json", "--train", "train.csv", "--out", "model.json", "--mkl-iters", "2", "--refine-epochs", "5"]);
    step("predict", &["predict", "--model", "model.json", "--input", "test.csv", "--out", "pred.csv"]);
    step("predict-stdout", &["predict", "--model", "model.json", "--input", "test.csv"]);
    step("evaluate", &["evaluate", "--model", "model.json", "--test", "test.csv", "--out", "report.json"]);
    step("flops", &["flops", "--fc", "4096x4096,4096x100", "--tree", "tree.json"]);
    let mut dist = String::new();
    for i in 0..8i32 {
        let row: Vec<String> = (0..8i32).map(|j| if i == j { "0".into() } else { format!("{}", 1 + (i - j).abs()) }).collect();
        dist.push_str(&row.join(","));
        dist.push('\n');
    }
    std::fs::write(dir.join("dist.csv"), dist).unwrap();
    step("compare-trees", &["compare-trees", "--distances", "dist.csv", "--tree", "tree.json", "--tree", "tree2.json"]);

    for entry in std::fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        let name = entry.file_name().to_string_lossy().into_owned();
        streams.insert(format!("file:{name}"), std::fs::read(entry.path()).unwrap());
    }
    streams
}

fn determinism() -> Verdict {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = full_pipeline(a.path());
    let second = full_pipeline(b.path());
    let differing: Vec<&String> = first
        .iter()
        .filter(|(k, v)| second.get(*k) != Some(*v))
        .map(|(k, _)| k)
        .chain(second.keys().filter(|k| !first.contains_key(*k)))
        .collect();
    let files = first.keys().filter(|k| k.starts_with("file:")).count();
    Verdict::new(
        differing.is_empty(),
        format!("{files} files and {} stdout streams compared; differing {differing:?}", first.len() - files),
    )
}
