//! Tree-shape quality proxies built from pairwise category separations.
//!
//! The chance of routing a sample correctly at a node is modelled as
//! proportional to the separation between its child group and the nearest
//! sibling group, and the chance of a correct final label as the product of
//! those factors along the sample's path. The functions are generic over any
//! ordered numeric type, so exact rationals can be used.

use num_traits::Num;

use crate::error::{Error, Result};
use crate::tree::LabelTree;

/// Symmetric matrix of pairwise category separations.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryDistances<T> {
    dist: Vec<Vec<T>>,
}

impl<T: Num + PartialOrd + Copy> CategoryDistances<T> {
    pub fn new(dist: Vec<Vec<T>>) -> Result<Self> {
        let n = dist.len();
        for (i, row) in dist.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Shape {
                    expected: n,
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if i == j && v != T::zero() {
                    return Err(Error::Parameter(format!("dist[{i}][{i}] must be 0")));
                }
                if i != j && !(v > T::zero()) {
                    return Err(Error::Parameter(format!("dist[{i}][{j}] must be > 0")));
                }
                if v != dist[j][i] {
                    return Err(Error::Parameter(format!("dist is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { dist })
    }

    /// Three categories A, B, C.
    pub fn three(d_ab: T, d_ac: T, d_bc: T) -> Result<Self> {
        let z = T::zero();
        Self::new(vec![vec![z, d_ab, d_ac], vec![d_ab, z, d_bc], vec![d_ac, d_bc, z]])
    }

    pub fn n(&self) -> usize {
        self.dist.len()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.dist[i][j]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityScore<T> {
    pub per_category: Vec<T>,
    pub total: T,
    pub k: T,
}

/// Totals for the three distinct 3-category shapes: `((A,B),C)`,
/// `((A,C),B)` (equivalently `((B,C),A)`), and the flat tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeCategoryScores<T> {
    pub t1: T,
    pub t2: T,
    pub t4: T,
}

impl<T: Num + PartialOrd + Copy> ThreeCategoryScores<T> {
    /// Index (1, 2 or 4) of the best shape; earlier shapes win ties.
    pub fn best(&self) -> u8 {
        let mut best = (1, self.t1);
        for cand in [(2, self.t2), (4, self.t4)] {
            if cand.1 > best.1 {
                best = cand;
            }
        }
        best.0
    }
}

pub fn three_category_scores<T: Num + PartialOrd + Copy>(
    d_ab: T,
    d_ac: T,
    d_bc: T,
    k: T,
) -> Result<ThreeCategoryScores<T>> {
    for (name, v) in [("d_AB", d_ab), ("d_AC", d_ac), ("d_BC", d_bc), ("k", k)] {
        if !(v > T::zero()) {
            return Err(Error::Parameter(format!("{name} must be > 0")));
        }
    }
    let two = T::one() + T::one();
    Ok(ThreeCategoryScores {
        t1: k * (two * d_ac * d_ab + d_ac),
        t2: k * (two * d_ac * d_ab + d_ab),
        t4: k * (two * d_ab + d_ac),
    })
}

/// How the separation between two category groups is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Linkage {
    /// Closest pair across the groups.
    #[default]
    Single,
    /// Mean over all cross pairs.
    Average,
}

fn linkage<T: Num + PartialOrd + Copy>(d: &CategoryDistances<T>, a: &[usize], b: &[usize], how: Linkage) -> T {
    match how {
        Linkage::Single => {
            let mut best: Option<T> = None;
            for &i in a {
                for &j in b {
                    let v = d.get(i, j);
                    if best.is_none_or(|m| v < m) {
                        best = Some(v);
                    }
                }
            }
            best.unwrap_or_else(T::zero)
        }
        Linkage::Average => {
            let mut sum = T::zero();
            let mut count = T::zero();
            for &i in a {
                for &j in b {
                    sum = sum + d.get(i, j);
                    count = count + T::one();
                }
            }
            if count == T::zero() {
                T::zero()
            } else {
                sum / count
            }
        }
    }
}

/// Per-category product of node separations along the root-to-leaf path.
/// Single-child nodes contribute a factor of 1.
pub fn path_product_score<T: Num + PartialOrd + Copy>(
    tree: &LabelTree,
    dist: &CategoryDistances<T>,
    k: T,
    how: Linkage,
) -> Result<QualityScore<T>> {
    if dist.n() != tree.n_categories() {
        return Err(Error::Shape {
            expected: tree.n_categories(),
            got: dist.n(),
        });
    }
    if !(k > T::zero()) {
        return Err(Error::Parameter("k must be > 0".into()));
    }
    let leaves = tree.leaf_of_category();
    let mut per_category = Vec::with_capacity(tree.n_categories());
    for (cat, leaf) in leaves.iter().enumerate() {
        let leaf = leaf.ok_or_else(|| Error::Coverage(format!("category {cat} has no leaf")))?;
        let path = tree.path_from_root(leaf);
        let mut p = k;
        for pair in path.windows(2) {
            let parent = tree.node(pair[0]);
            if parent.children.len() < 2 {
                continue;
            }
            let own = &tree.node(pair[1]).labels;
            let mut nearest: Option<T> = None;
            for &s in parent.children.iter().filter(|&&s| s != pair[1]) {
                let v = linkage(dist, own, &tree.node(s).labels, how);
                if nearest.is_none_or(|m| v < m) {
                    nearest = Some(v);
                }
            }
            p = p * nearest.unwrap_or_else(T::one);
        }
        per_category.push(p);
    }
    let total = per_category.iter().fold(T::zero(), |a, &v| a + v);
    Ok(QualityScore {
        per_category,
        total,
        k,
    })
}
