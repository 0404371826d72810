//! Hierarchical modularity maximization (Louvain local moves + aggregation).
//!
//! Each emitted level is the partition reached after the local-move phase on
//! the current (possibly aggregated) graph. Levels run fine to coarse and the
//! all-singleton starting point is never emitted.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::confusion_graph::ConfusionGraph;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Minimum modularity gain of a full sweep (and of a new level) to keep going.
pub const SWEEP_EPSILON: f64 = 1e-9;
const MOVE_EPSILON: f64 = 1e-12;
const MAX_SWEEPS: usize = 10_000;
const BRUTE_FORCE_LIMIT: usize = 10;

/// A partition of one level's vertices into communities.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition<T> {
    pub community_of: Vec<usize>,
    pub communities: Vec<Vec<usize>>,
    pub modularity: T,
}

impl<T: Scalar> Partition<T> {
    /// Builds a partition from a vertex → label map, renumbering labels by
    /// first appearance. `modularity` is left at zero.
    pub fn from_assignment(labels: &[usize]) -> Self {
        let mut remap = BTreeMap::new();
        let mut community_of = Vec::with_capacity(labels.len());
        let mut communities: Vec<Vec<usize>> = Vec::new();
        for (v, &l) in labels.iter().enumerate() {
            let next = remap.len();
            let c = *remap.entry(l).or_insert(next);
            if c == communities.len() {
                communities.push(Vec::new());
            }
            communities[c].push(v);
            community_of.push(c);
        }
        Self {
            community_of,
            communities,
            modularity: T::zero(),
        }
    }

    pub fn len(&self) -> usize {
        self.communities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.communities.is_empty()
    }
}

/// Fine-to-coarse sequence of partitions. `label_sets[i][c]` lists the original
/// categories inside community `c` of level `i` (0-based here; level 1 is index 0).
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionHierarchy<T> {
    pub n_categories: usize,
    pub levels: Vec<Partition<T>>,
    pub label_sets: Vec<Vec<Vec<usize>>>,
}

impl<T: Scalar> PartitionHierarchy<T> {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Checks coverage at every level and strict coarsening between levels.
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::Invariant("hierarchy has no levels".into()));
        }
        if self.levels.len() != self.label_sets.len() {
            return Err(Error::Invariant(
                "levels and label_sets differ in length".into(),
            ));
        }
        for (i, sets) in self.label_sets.iter().enumerate() {
            let owner = cover_map(sets, self.n_categories).map_err(|e| {
                Error::Coverage(format!("level {}: {e}", i + 1))
            })?;
            if i > 0 {
                let prev_sets = &self.label_sets[i - 1];
                for (c, set) in prev_sets.iter().enumerate() {
                    let target = owner[set[0]];
                    if set.iter().any(|&cat| owner[cat] != target) {
                        return Err(Error::Invariant(format!(
                            "level {} community {c} is split at level {}",
                            i,
                            i + 1
                        )));
                    }
                }
                if sets.len() > prev_sets.len() {
                    return Err(Error::Invariant(format!(
                        "level {} has more communities than level {}",
                        i + 1,
                        i
                    )));
                }
            }
        }
        Ok(())
    }

    /// Writes the `level <i> Q=<q>` / `community <id>: <cats>` listing.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# vclt-hierarchy v1 N={}", self.n_categories)?;
        for (i, (level, sets)) in self.levels.iter().zip(&self.label_sets).enumerate() {
            writeln!(out, "level {} Q={}", i + 1, level.modularity)?;
            for (c, set) in sets.iter().enumerate() {
                let cats: Vec<String> = set.iter().map(|c| c.to_string()).collect();
                writeln!(out, "community {c}: {}", cats.join(" "))?;
            }
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut n_categories = None;
        let mut qs: Vec<T> = Vec::new();
        let mut label_sets: Vec<Vec<Vec<usize>>> = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let lineno = idx + 1;
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            if let Some(rest) = t.strip_prefix("# vclt-hierarchy v1") {
                let n = rest
                    .trim()
                    .strip_prefix("N=")
                    .and_then(|v| v.parse::<usize>().ok())
                    .ok_or_else(|| Error::format(lineno, "header lacks N=<n>"))?;
                n_categories = Some(n);
            } else if t.starts_with('#') {
                continue;
            } else if let Some(rest) = t.strip_prefix("level ") {
                let (num, q) = rest
                    .split_once(" Q=")
                    .ok_or_else(|| Error::format(lineno, "expected `level <i> Q=<q>`"))?;
                let num: usize = num
                    .trim()
                    .parse()
                    .map_err(|_| Error::format(lineno, format!("bad level `{num}`")))?;
                if num != qs.len() + 1 {
                    return Err(Error::format(lineno, format!("level {num} out of order")));
                }
                let q: T = q
                    .trim()
                    .parse()
                    .map_err(|_| Error::format(lineno, format!("bad modularity `{q}`")))?;
                qs.push(q);
                label_sets.push(Vec::new());
            } else if let Some(rest) = t.strip_prefix("community ") {
                let sets = label_sets
                    .last_mut()
                    .ok_or_else(|| Error::format(lineno, "community before any level"))?;
                let (id, cats) = rest
                    .split_once(':')
                    .ok_or_else(|| Error::format(lineno, "expected `community <id>: ...`"))?;
                let id: usize = id
                    .trim()
                    .parse()
                    .map_err(|_| Error::format(lineno, format!("bad community id `{id}`")))?;
                if id != sets.len() {
                    return Err(Error::format(lineno, format!("community {id} out of order")));
                }
                let cats = cats
                    .split_whitespace()
                    .map(|c| {
                        c.parse::<usize>()
                            .map_err(|_| Error::format(lineno, format!("bad category `{c}`")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                if cats.is_empty() {
                    return Err(Error::format(lineno, "empty community"));
                }
                sets.push(cats);
            } else {
                return Err(Error::format(lineno, format!("unrecognized line `{t}`")));
            }
        }
        let n_categories =
            n_categories.ok_or_else(|| Error::format(1, "missing hierarchy header"))?;
        Self::from_label_sets(n_categories, label_sets, qs)
    }

    /// Rebuilds per-level partitions from label sets alone.
    pub fn from_label_sets(
        n_categories: usize,
        label_sets: Vec<Vec<Vec<usize>>>,
        modularities: Vec<T>,
    ) -> Result<Self> {
        let mut levels = Vec::with_capacity(label_sets.len());
        for (i, sets) in label_sets.iter().enumerate() {
            let owner = cover_map(sets, n_categories)
                .map_err(|e| Error::Coverage(format!("level {}: {e}", i + 1)))?;
            let community_of = if i == 0 {
                owner
            } else {
                label_sets[i - 1].iter().map(|set| owner[set[0]]).collect()
            };
            levels.push(Partition {
                community_of,
                communities: Vec::new(),
                modularity: modularities.get(i).copied().unwrap_or_else(T::zero),
            });
        }
        for level in &mut levels {
            let mut communities = vec![Vec::new(); level.community_of.iter().max().map_or(0, |m| m + 1)];
            for (v, &c) in level.community_of.iter().enumerate() {
                communities[c].push(v);
            }
            level.communities = communities;
        }
        let h = Self {
            n_categories,
            levels,
            label_sets,
        };
        h.validate()?;
        Ok(h)
    }
}

fn cover_map(sets: &[Vec<usize>], n: usize) -> std::result::Result<Vec<usize>, String> {
    let mut owner = vec![usize::MAX; n];
    for (c, set) in sets.iter().enumerate() {
        if set.is_empty() {
            return Err(format!("community {c} is empty"));
        }
        for &cat in set {
            if cat >= n {
                return Err(format!("category {cat} out of range"));
            }
            if owner[cat] != usize::MAX {
                return Err(format!("category {cat} appears twice"));
            }
            owner[cat] = c;
        }
    }
    if let Some(missing) = owner.iter().position(|&o| o == usize::MAX) {
        return Err(format!("category {missing} not covered"));
    }
    Ok(owner)
}

/// Symmetric weighted graph that may carry self-loops. `self_loop[i]` is the
/// diagonal adjacency entry `A_ii`.
#[derive(Debug, Clone)]
struct WorkGraph<T> {
    adj: Vec<Vec<(usize, T)>>,
    self_loop: Vec<T>,
    degree: Vec<T>,
    two_m: T,
}

impl<T: Scalar> WorkGraph<T> {
    fn from_confusion(g: &ConfusionGraph<T>) -> Self {
        let n = g.n_categories();
        let mut adj = vec![Vec::new(); n];
        for ((u, v), w) in g.edges() {
            if w > T::zero() {
                adj[u].push((v, w));
                adj[v].push((u, w));
            }
        }
        Self::assemble(adj, vec![T::zero(); n])
    }

    fn assemble(mut adj: Vec<Vec<(usize, T)>>, self_loop: Vec<T>) -> Self {
        for row in &mut adj {
            row.sort_by_key(|&(j, _)| j);
        }
        let degree: Vec<T> = adj
            .iter()
            .zip(&self_loop)
            .map(|(row, &s)| s + row.iter().map(|&(_, w)| w).sum::<T>())
            .collect();
        let two_m = degree.iter().copied().sum();
        Self {
            adj,
            self_loop,
            degree,
            two_m,
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    fn modularity(&self, community_of: &[usize]) -> T {
        let k = community_of.iter().max().map_or(0, |m| m + 1);
        let mut inner = vec![T::zero(); k];
        let mut tot = vec![T::zero(); k];
        for i in 0..self.len() {
            let ci = community_of[i];
            tot[ci] = tot[ci] + self.degree[i];
            inner[ci] = inner[ci] + self.self_loop[i];
            for &(j, w) in &self.adj[i] {
                if community_of[j] == ci {
                    inner[ci] = inner[ci] + w;
                }
            }
        }
        let two_m = self.two_m;
        inner
            .into_iter()
            .zip(tot)
            .map(|(a, t)| a / two_m - (t / two_m) * (t / two_m))
            .sum()
    }

    /// Repeated ascending-order sweeps of single-vertex moves.
    fn local_moves(&self) -> Vec<usize> {
        let n = self.len();
        let mut comm: Vec<usize> = (0..n).collect();
        let mut tot = self.degree.clone();
        let two_m = self.two_m;
        let mut q = self.modularity(&comm);
        let mut link = vec![T::zero(); n];
        let mut touched: Vec<usize> = Vec::new();
        let move_eps = T::lit(MOVE_EPSILON);

        for _ in 0..MAX_SWEEPS {
            let mut moved = false;
            for i in 0..n {
                let own = comm[i];
                let ki = self.degree[i];
                for &(j, w) in &self.adj[i] {
                    let c = comm[j];
                    if link[c] == T::zero() && !touched.contains(&c) {
                        touched.push(c);
                    }
                    link[c] = link[c] + w;
                }
                tot[own] = tot[own] - ki;
                // gain of (re)inserting i into community c, scaled by 1/m
                let gain = |link_c: T, tot_c: T| -> T {
                    (link_c - tot_c * ki / two_m) * T::lit(2.0) / two_m
                };
                let stay = gain(link[own], tot[own]);
                let mut best = own;
                let mut best_gain = stay;
                touched.sort_unstable();
                for &c in &touched {
                    if c == own {
                        continue;
                    }
                    let g = gain(link[c], tot[c]);
                    if g > best_gain + move_eps || (best != own && g == best_gain && c < best) {
                        best = c;
                        best_gain = g;
                    }
                }
                tot[best] = tot[best] + ki;
                if best != own {
                    comm[i] = best;
                    moved = true;
                }
                for &c in &touched {
                    link[c] = T::zero();
                }
                touched.clear();
            }
            let new_q = self.modularity(&comm);
            let gain = new_q - q;
            q = new_q;
            if !moved || gain < T::lit(SWEEP_EPSILON) {
                break;
            }
        }
        comm
    }

    fn aggregate(&self, community_of: &[usize], k: usize) -> Self {
        let mut self_loop = vec![T::zero(); k];
        let mut maps: Vec<BTreeMap<usize, T>> = vec![BTreeMap::new(); k];
        for i in 0..self.len() {
            let ci = community_of[i];
            self_loop[ci] = self_loop[ci] + self.self_loop[i];
            for &(j, w) in &self.adj[i] {
                let cj = community_of[j];
                if cj == ci {
                    self_loop[ci] = self_loop[ci] + w;
                } else {
                    let slot = maps[ci].entry(cj).or_insert_with(T::zero);
                    *slot = *slot + w;
                }
            }
        }
        let adj = maps.into_iter().map(|m| m.into_iter().collect()).collect();
        Self::assemble(adj, self_loop)
    }
}

/// Weighted modularity of `partition` on `graph` (resolution 1).
pub fn modularity<T: Scalar>(graph: &ConfusionGraph<T>, partition: &Partition<T>) -> Result<T> {
    if partition.community_of.len() != graph.n_categories() {
        return Err(Error::Shape {
            expected: graph.n_categories(),
            got: partition.community_of.len(),
        });
    }
    let wg = WorkGraph::from_confusion(graph);
    if !(wg.two_m > T::zero()) {
        return Err(Error::Numeric(
            "modularity undefined: graph has zero total edge weight".into(),
        ));
    }
    Ok(wg.modularity(&partition.community_of))
}

/// Runs Louvain until no level merges anything or modularity stops improving.
pub fn louvain_hierarchy<T: Scalar>(graph: &ConfusionGraph<T>) -> Result<PartitionHierarchy<T>> {
    let n = graph.n_categories();
    if n == 0 {
        return Err(Error::Parameter("graph has no vertices".into()));
    }
    let mut work = WorkGraph::from_confusion(graph);
    if !(work.two_m > T::zero()) {
        return Err(Error::Parameter(
            "graph has no positive-weight edge".into(),
        ));
    }

    // members[v] = original categories inside current vertex v
    let mut members: Vec<Vec<usize>> = (0..n).map(|c| vec![c]).collect();
    let mut q_prev = work.modularity(&(0..n).collect::<Vec<_>>());
    let mut levels = Vec::new();
    let mut label_sets = Vec::new();

    loop {
        let raw = work.local_moves();
        let mut part = Partition::<T>::from_assignment(&raw);
        if part.len() == work.len() {
            break;
        }
        let q = work.modularity(&part.community_of);
        if !levels.is_empty() && q - q_prev < T::lit(SWEEP_EPSILON) {
            break;
        }
        part.modularity = q;

        let sets: Vec<Vec<usize>> = part
            .communities
            .iter()
            .map(|vs| {
                let mut cats: Vec<usize> =
                    vs.iter().flat_map(|&v| members[v].iter().copied()).collect();
                cats.sort_unstable();
                cats
            })
            .collect();

        work = work.aggregate(&part.community_of, part.len());
        members = sets.clone();
        q_prev = q;
        let done = part.len() == 1;
        levels.push(part);
        label_sets.push(sets);
        if done {
            break;
        }
    }

    Ok(PartitionHierarchy {
        n_categories: n,
        levels,
        label_sets,
    })
}

/// Exhaustive search over all set partitions (restricted growth strings).
/// Ties go to fewer communities, then the lexicographically smaller labeling.
pub fn brute_force_best_partition<T: Scalar>(graph: &ConfusionGraph<T>) -> Result<Partition<T>> {
    let n = graph.n_categories();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::Parameter(format!(
            "brute force limited to {BRUTE_FORCE_LIMIT} vertices, got {n}"
        )));
    }
    let work = WorkGraph::from_confusion(graph);
    if n == 0 || !(work.two_m > T::zero()) {
        return Err(Error::Parameter(
            "graph has no positive-weight edge".into(),
        ));
    }
    let tie = T::lit(1e-12);
    let mut rgs = vec![0usize; n];
    let mut best: Option<(T, usize, Vec<usize>)> = None;
    loop {
        let k = rgs.iter().max().map_or(0, |m| m + 1);
        let q = work.modularity(&rgs);
        let better = match &best {
            None => true,
            Some((bq, bk, _)) => q > *bq + tie || ((q - *bq).abs() <= tie && k < *bk),
        };
        if better {
            best = Some((q, k, rgs.clone()));
        }
        if !next_rgs(&mut rgs) {
            break;
        }
    }
    let (q, _, labels) = best.expect("at least one partition");
    let mut part = Partition::from_assignment(&labels);
    part.modularity = q;
    Ok(part)
}

/// Advances a restricted growth string in lexicographic order.
fn next_rgs(rgs: &mut [usize]) -> bool {
    let n = rgs.len();
    for i in (1..n).rev() {
        let max_prefix = rgs[..i].iter().copied().max().unwrap_or(0);
        if rgs[i] <= max_prefix {
            rgs[i] += 1;
            for r in rgs.iter_mut().skip(i + 1) {
                *r = 0;
            }
            return true;
        }
    }
    false
}
