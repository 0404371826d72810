//! Randomized invariants across the pipeline.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vclt_core::classifier::mean_accuracy_of;
use vclt_core::community::{brute_force_best_partition, modularity};
use vclt_core::flops::{tree_multadds, worst_path_classifiers};
use vclt_core::kernel::{gram_matrix, KernelCombination, KernelSpec};
use vclt_core::quality::three_category_scores;
use vclt_core::svm::solve_svm_dual;
use vclt_core::tree::validate_tree;
use vclt_core::*;

fn graph_strategy(max_n: usize) -> impl Strategy<Value = ConfusionGraph<f64>> {
    (2..=max_n).prop_flat_map(|n| {
        let pairs = n * (n - 1) / 2;
        prop::collection::vec(prop_oneof![Just(0.0), 0.01f64..5.0], pairs).prop_map(move |w| {
            let mut edges = Vec::new();
            let mut k = 0;
            for u in 0..n {
                for v in u + 1..n {
                    if w[k] > 0.0 {
                        edges.push((u, v, w[k]));
                    }
                    k += 1;
                }
            }
            ConfusionGraph::from_edges(n, edges).unwrap()
        })
    })
}

/// Random fine-to-coarse hierarchy: each level groups the previous
/// communities at random, and the last level may still hold several.
fn random_hierarchy(n: usize, rng: &mut ChaCha8Rng) -> PartitionHierarchy<f64> {
    let mut current: Vec<Vec<usize>> = (0..n).map(|c| vec![c]).collect();
    let mut sets = Vec::new();
    loop {
        let groups = rng.random_range(1..current.len().max(2));
        let mut next: Vec<Vec<usize>> = vec![Vec::new(); groups];
        for (i, set) in current.iter().enumerate() {
            // every group receives at least one community
            let g = if i < groups { i } else { rng.random_range(0..groups) };
            next[g].extend(set);
        }
        for s in &mut next {
            s.sort_unstable();
        }
        next.sort();
        sets.push(next.clone());
        current = next;
        if current.len() == 1 || rng.random_bool(0.3) {
            break;
        }
    }
    let qs = vec![0.0; sets.len()];
    PartitionHierarchy::from_label_sets(n, sets, qs).unwrap()
}

/// Explicit list of every root-to-leaf path.
fn all_paths(tree: &LabelTree) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut stack = vec![vec![tree.root().unwrap()]];
    while let Some(path) = stack.pop() {
        let last = *path.last().unwrap();
        let node = tree.node(last);
        if node.children.is_empty() {
            out.push(path);
        } else {
            for &c in &node.children {
                let mut p = path.clone();
                p.push(c);
                stack.push(p);
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graph_mass_matches_off_label_shares(
        n in 2usize..8,
        tau_frac in 0.0f64..1.0,
        raw in prop::collection::vec((0usize..100, prop::collection::vec(-2.0f64..3.0, 8)), 0..40),
    ) {
        let tau = 1 + ((n - 1) as f64 * tau_frac) as usize;
        let records: Vec<ScoreRecord<f64>> = raw
            .iter()
            .enumerate()
            .map(|(i, (t, s))| ScoreRecord::new(i.to_string(), t % n, s[..n].to_vec()))
            .collect();
        let g = build_confusion_graph(&records, n, tau).unwrap();
        let mut expected = 0.0;
        for r in &records {
            let shares = r.top_shares(tau);
            prop_assert_eq!(shares.len(), tau);
            prop_assert!((shares.iter().map(|s| s.1).sum::<f64>() - 1.0).abs() < 1e-12);
            expected += shares.iter().filter(|(c, _)| *c != r.true_label).map(|s| s.1).sum::<f64>();
        }
        prop_assert!((g.total_weight() - expected).abs() < 1e-9);
        for ((u, v), w) in g.edges() {
            prop_assert!(u < v && w >= 0.0 && w.is_finite());
        }
        let mut buf = Vec::new();
        g.write(&mut buf).unwrap();
        prop_assert_eq!(ConfusionGraph::<f64>::read(&buf[..]).unwrap(), g);
    }

    #[test]
    fn louvain_hierarchy_is_valid_and_monotone(g in graph_strategy(9)) {
        prop_assume!(g.total_weight() > 0.0);
        let h = louvain_hierarchy(&g).unwrap();
        h.validate().unwrap();
        for pair in h.levels.windows(2) {
            prop_assert!(pair[1].modularity >= pair[0].modularity - 1e-12);
            prop_assert!(pair[1].len() < pair[0].len());
        }
        let best = brute_force_best_partition(&g).unwrap();
        let first = &h.levels[0];
        let mut labels = vec![0; g.n_categories()];
        for (c, set) in h.label_sets[0].iter().enumerate() {
            for &v in set {
                labels[v] = c;
            }
        }
        let q = modularity(&g, &Partition::from_assignment(&labels)).unwrap();
        prop_assert!((q - first.modularity).abs() < 1e-9);
        prop_assert!(q <= best.modularity + 1e-9);
    }

    #[test]
    fn vclt_is_well_formed_and_flops_match_path_enumeration(n in 1usize..40, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_hierarchy(n, &mut rng);
        let tree = build_vclt(&h, &[]).unwrap();
        prop_assert!(validate_tree(&tree).is_empty(), "{:?}", validate_tree(&tree));
        prop_assert!(tree.leaf_of_category().iter().all(Option::is_some));
        let brute = all_paths(&tree)
            .iter()
            .map(|p| p[..p.len() - 1].iter().map(|&id| tree.node(id).children.len() as u64).sum::<u64>())
            .max()
            .unwrap();
        prop_assert_eq!(worst_path_classifiers(&tree), brute);
        prop_assert_eq!(tree_multadds(&tree, 64), 2 * brute * 64);
    }

    #[test]
    fn smo_respects_box_and_balance(
        rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 2..25),
        signs in prop::collection::vec(any::<bool>(), 25),
        c in 0.05f64..10.0,
    ) {
        let n = rows.len();
        let mut y: Vec<f64> = signs[..n].iter().map(|&s| if s { 1.0 } else { -1.0 }).collect();
        y[0] = 1.0;
        y[1] = -1.0;
        let g = gram_matrix(&KernelSpec::Gaussian { gamma: 0.5 }, &rows).unwrap();
        let s = solve_svm_dual(&g, &y, c, 1e-8).unwrap();
        prop_assert!(s.alpha.iter().all(|&a| (0.0..=c).contains(&a)));
        let balance: f64 = s.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
        prop_assert!(balance.abs() < 1e-9 * c.max(1.0) * n as f64);
    }

    #[test]
    fn combination_weights_must_lie_on_simplex(w in prop::collection::vec(-0.5f64..1.5, 3)) {
        let specs = vec![KernelSpec::Linear, KernelSpec::Linear, KernelSpec::Linear];
        let ok = w.iter().all(|&v| v >= 0.0) && (w.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        prop_assert_eq!(KernelCombination::new(specs, w).is_ok(), ok);
    }

    #[test]
    fn best_shape_ignores_the_common_factor(
        ab in 0.01f64..10.0, ac in 0.01f64..10.0, bc in 0.01f64..10.0, k in 0.01f64..100.0,
    ) {
        let one = three_category_scores(ab, ac, bc, 1.0).unwrap();
        let scaled = three_category_scores(ab, ac, bc, k).unwrap();
        prop_assert_eq!(one.best(), scaled.best());
    }
}

#[test]
fn uniform_guessing_scores_one_over_n() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let truth: Vec<usize> = (0..10_000).map(|i| i % 4).collect();
    let guess: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..4)).collect();
    let ma = mean_accuracy_of(&truth, &guess, 4).unwrap();
    assert!((ma - 25.0).abs() <= 2.0, "{ma}");
}
