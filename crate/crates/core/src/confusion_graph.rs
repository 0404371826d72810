//! Weighted confusion graph built from per-sample classifier scores.
//!
//! For every record the `tau` highest-scoring categories are kept, their
//! scores renormalized to sum to one, and each normalized share assigned to a
//! category other than the true label is added to the undirected edge
//! `{true_label, predicted}`. Mass landing on the true label is dropped.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const GRAPH_MAGIC: &str = "# vclt-graph v1";
const RECORD_CHUNK: usize = 1024;

/// One row of a score log: the true category and a score per category.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord<T> {
    pub sample_id: String,
    pub true_label: usize,
    pub scores: Vec<T>,
}

impl<T: Scalar> ScoreRecord<T> {
    pub fn new(sample_id: impl Into<String>, true_label: usize, scores: Vec<T>) -> Self {
        Self {
            sample_id: sample_id.into(),
            true_label,
            scores,
        }
    }

    fn validate(&self, n_categories: usize, line: usize) -> Result<()> {
        if self.scores.len() != n_categories {
            return Err(Error::format(
                line,
                format!(
                    "record {} has {} scores, expected {}",
                    self.sample_id,
                    self.scores.len(),
                    n_categories
                ),
            ));
        }
        if self.true_label >= n_categories {
            return Err(Error::format(
                line,
                format!(
                    "record {} has true label {} outside [0, {})",
                    self.sample_id, self.true_label, n_categories
                ),
            ));
        }
        if let Some(pos) = self.scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::format(
                line,
                format!("record {} has non-finite score at {}", self.sample_id, pos),
            ));
        }
        Ok(())
    }

    /// Normalized top-`tau` shares as `(category, share)` pairs, highest score first.
    ///
    /// Ties at equal score go to the lower category index. Negative scores are
    /// shifted by the slice minimum; an all-zero slice gets uniform shares.
    pub fn top_shares(&self, tau: usize) -> Vec<(usize, T)> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| {
            self.scores[b]
                .partial_cmp(&self.scores[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        order.truncate(tau);

        let min = order
            .iter()
            .map(|&c| self.scores[c])
            .fold(T::infinity(), T::min);
        let shift = if min < T::zero() { min } else { T::zero() };
        let shifted: Vec<T> = order.iter().map(|&c| self.scores[c] - shift).collect();
        let total: T = shifted.iter().copied().sum();

        if total > T::zero() {
            order
                .into_iter()
                .zip(shifted)
                .map(|(c, s)| (c, s / total))
                .collect()
        } else {
            let uniform = T::one() / T::from_usize_lossy(order.len());
            order.into_iter().map(|c| (c, uniform)).collect()
        }
    }
}

/// Undirected weighted graph over categories. Edge keys are `(u, v)` with `u < v`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionGraph<T> {
    n_categories: usize,
    tau: usize,
    category_names: Vec<String>,
    edges: BTreeMap<(usize, usize), T>,
}

impl<T: Scalar> ConfusionGraph<T> {
    /// An edgeless graph with index-valued category names.
    pub fn empty(n_categories: usize, tau: usize) -> Self {
        Self {
            n_categories,
            tau,
            category_names: (0..n_categories).map(|i| i.to_string()).collect(),
            edges: BTreeMap::new(),
        }
    }

    /// Builds a graph from explicit edges, rejecting self-loops and bad weights.
    /// Repeated pairs are summed.
    pub fn from_edges(
        n_categories: usize,
        edges: impl IntoIterator<Item = (usize, usize, T)>,
    ) -> Result<Self> {
        let mut g = Self::empty(n_categories, 1);
        for (u, v, w) in edges {
            g.add_weight(u, v, w)?;
        }
        Ok(g)
    }

    pub fn add_weight(&mut self, u: usize, v: usize, w: T) -> Result<()> {
        if u == v {
            return Err(Error::Invariant(format!("self-loop on category {u}")));
        }
        if u >= self.n_categories || v >= self.n_categories {
            return Err(Error::Invariant(format!(
                "edge ({u}, {v}) outside {} categories",
                self.n_categories
            )));
        }
        if !(w >= T::zero()) || !w.is_finite() {
            return Err(Error::Invariant(format!("edge ({u}, {v}) has weight {w}")));
        }
        let key = (u.min(v), u.max(v));
        let slot = self.edges.entry(key).or_insert_with(T::zero);
        *slot = *slot + w;
        Ok(())
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_categories {
            return Err(Error::Shape {
                expected: self.n_categories,
                got: names.len(),
            });
        }
        self.category_names = names;
        Ok(self)
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn category_names(&self) -> &[String] {
        &self.category_names
    }

    pub fn edges(&self) -> impl Iterator<Item = ((usize, usize), T)> + '_ {
        self.edges.iter().map(|(&k, &w)| (k, w))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn weight(&self, u: usize, v: usize) -> T {
        self.edges
            .get(&(u.min(v), u.max(v)))
            .copied()
            .unwrap_or_else(T::zero)
    }

    pub fn total_weight(&self) -> T {
        self.edges.values().copied().sum()
    }

    /// Heaviest edge; ties resolve to the smallest key.
    pub fn max_edge(&self) -> Option<((usize, usize), T)> {
        self.edges().fold(None, |best, (k, w)| match best {
            Some((_, bw)) if bw >= w => best,
            _ => Some((k, w)),
        })
    }

    /// Writes the text edge-list format.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{GRAPH_MAGIC} N={} tau={}", self.n_categories, self.tau)?;
        for (i, name) in self.category_names.iter().enumerate() {
            if name.contains('\n') || name.contains('\r') {
                return Err(Error::Parameter(format!(
                    "category name {i} contains a line break"
                )));
            }
            writeln!(out, "# name {i} {name}")?;
        }
        for (&(u, v), w) in &self.edges {
            writeln!(out, "{u} {v} {w}")?;
        }
        Ok(())
    }

    /// Parses the text edge-list format written by [`ConfusionGraph::write`].
    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::format(1, "missing graph header"))?;
        let header = header?;
        let rest = header
            .strip_prefix(GRAPH_MAGIC)
            .ok_or_else(|| Error::format(1, format!("bad graph header `{header}`")))?;
        let mut n = None;
        let mut tau = None;
        for field in rest.split_whitespace() {
            if let Some(v) = field.strip_prefix("N=") {
                n = v.parse::<usize>().ok();
            } else if let Some(v) = field.strip_prefix("tau=") {
                tau = v.parse::<usize>().ok();
            } else {
                return Err(Error::format(1, format!("unknown header field `{field}`")));
            }
        }
        let n = n.ok_or_else(|| Error::format(1, "header lacks N=<n>"))?;
        let tau = tau.ok_or_else(|| Error::format(1, "header lacks tau=<t>"))?;
        let mut graph = Self::empty(n, tau);

        for (idx, line) in lines {
            let lineno = idx + 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(comment) = trimmed.strip_prefix('#') {
                let comment = comment.trim_start();
                if let Some(rest) = comment.strip_prefix("name ") {
                    let (idx_str, name) = rest.split_once(' ').unwrap_or((rest, ""));
                    let cat: usize = idx_str.parse().map_err(|_| {
                        Error::format(lineno, format!("bad category index `{idx_str}`"))
                    })?;
                    if cat >= n {
                        return Err(Error::format(
                            lineno,
                            format!("unknown category index {cat}"),
                        ));
                    }
                    graph.category_names[cat] = name.to_string();
                }
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::format(lineno, format!("malformed edge line `{trimmed}`")));
            }
            let u: usize = fields[0]
                .parse()
                .map_err(|_| Error::format(lineno, format!("bad vertex `{}`", fields[0])))?;
            let v: usize = fields[1]
                .parse()
                .map_err(|_| Error::format(lineno, format!("bad vertex `{}`", fields[1])))?;
            let w: T = fields[2]
                .parse()
                .map_err(|_| Error::format(lineno, format!("bad weight `{}`", fields[2])))?;
            if u >= n || v >= n {
                return Err(Error::format(
                    lineno,
                    format!("unknown category index in edge ({u}, {v})"),
                ));
            }
            if u == v {
                return Err(Error::format(lineno, format!("self-loop on {u}")));
            }
            if !(w >= T::zero()) || !w.is_finite() {
                return Err(Error::format(lineno, format!("invalid weight {w}")));
            }
            let key = (u.min(v), u.max(v));
            if graph.edges.insert(key, w).is_some() {
                return Err(Error::format(lineno, format!("duplicate edge ({u}, {v})")));
            }
        }
        Ok(graph)
    }
}

fn accumulate_chunk<T: Scalar>(
    records: &[ScoreRecord<T>],
    tau: usize,
) -> BTreeMap<(usize, usize), T> {
    let mut edges = BTreeMap::new();
    for rec in records {
        for (cat, share) in rec.top_shares(tau) {
            if cat == rec.true_label {
                continue;
            }
            let key = (cat.min(rec.true_label), cat.max(rec.true_label));
            let slot = edges.entry(key).or_insert_with(T::zero);
            *slot = *slot + share;
        }
    }
    edges
}

/// Accumulates normalized top-`tau` confusion mass into a graph.
///
/// Records are processed in fixed-size chunks in parallel and merged in chunk
/// order, so the result does not depend on thread scheduling.
pub fn build_confusion_graph<T: Scalar>(
    records: &[ScoreRecord<T>],
    n_categories: usize,
    tau: usize,
) -> Result<ConfusionGraph<T>> {
    if tau == 0 || tau > n_categories {
        return Err(Error::Parameter(format!(
            "tau = {tau} must lie in [1, {n_categories}]"
        )));
    }
    for (i, rec) in records.iter().enumerate() {
        // line numbers as they appear in a score-log CSV (header is line 1)
        rec.validate(n_categories, i + 2)?;
    }

    let partials: Vec<BTreeMap<(usize, usize), T>> = records
        .par_chunks(RECORD_CHUNK)
        .map(|chunk| accumulate_chunk(chunk, tau))
        .collect();

    let mut graph = ConfusionGraph::empty(n_categories, tau);
    for part in partials {
        for (key, w) in part {
            let slot = graph.edges.entry(key).or_insert_with(T::zero);
            *slot = *slot + w;
        }
    }
    Ok(graph)
}

/// Reads a score-log CSV (`sample_id,true_label,score_0,...`). Returns the
/// records and the category count implied by the header.
pub fn read_score_log<T: Scalar, R: std::io::Read>(
    input: R,
) -> Result<(Vec<ScoreRecord<T>>, usize)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "sample_id" || &headers[1] != "true_label" {
        return Err(Error::format(
            1,
            "expected header sample_id,true_label,score_0,...",
        ));
    }
    for (i, h) in headers.iter().skip(2).enumerate() {
        if h != format!("score_{i}") {
            return Err(Error::format(1, format!("unexpected column `{h}`")));
        }
    }
    let n = headers.len() - 2;
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::format(line, e.to_string()))?;
        let true_label: usize = row[1]
            .trim()
            .parse()
            .map_err(|_| Error::format(line, format!("bad true_label `{}`", &row[1])))?;
        let scores = row
            .iter()
            .skip(2)
            .map(|s| {
                s.trim()
                    .parse::<T>()
                    .map_err(|_| Error::format(line, format!("bad score `{s}`")))
            })
            .collect::<Result<Vec<T>>>()?;
        let rec = ScoreRecord::new(&row[0], true_label, scores);
        rec.validate(n, line)?;
        records.push(rec);
    }
    Ok((records, n))
}

pub fn write_score_log<T: Scalar, W: Write>(
    records: &[ScoreRecord<T>],
    n_categories: usize,
    out: W,
) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["sample_id".to_string(), "true_label".to_string()];
    header.extend((0..n_categories).map(|i| format!("score_{i}")));
    writer.write_record(&header)?;
    for (i, rec) in records.iter().enumerate() {
        rec.validate(n_categories, i + 2)?;
        let mut row = vec![rec.sample_id.clone(), rec.true_label.to_string()];
        row.extend(rec.scores.iter().map(|s| s.to_string()));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}
