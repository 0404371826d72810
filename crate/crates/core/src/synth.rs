//! Gaussian blobs with planted super-clusters, and score logs with planted confusion.
//!
//! Every random draw comes from a ChaCha stream keyed by the seed and the
//! index of the object being generated, so output does not depend on
//! generation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::confusion_graph::ScoreRecord;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Stream domains keep independent draws from ever sharing a stream.
const SUPER_DOMAIN: u64 = 0x5350_4552;
const CLASS_DOMAIN: u64 = 0x434c_4153;
const SAMPLE_DOMAIN: u64 = 0x5341_4d50;
const SCORE_DOMAIN: u64 = 0x5343_4f52;

fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain.rotate_left(32));
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub n_classes: usize,
    pub n_superclusters: usize,
    pub samples_per_class: usize,
    pub dim: usize,
    /// Standard deviation of samples around their class center.
    pub intra_spread: f64,
    /// Standard deviation of super-cluster centers around the origin; class
    /// centers scatter around their super-cluster with a quarter of this.
    pub inter_spread: f64,
    pub seed: u64,
}

impl BlobSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || self.n_superclusters == 0 || self.dim == 0 {
            return Err(Error::Parameter("classes, super-clusters and dim must be >= 1".into()));
        }
        if self.n_superclusters > self.n_classes {
            return Err(Error::Parameter(format!(
                "{} super-clusters exceed {} classes",
                self.n_superclusters, self.n_classes
            )));
        }
        if self.samples_per_class < 2 {
            return Err(Error::Parameter("need >= 2 samples per class for a train/test split".into()));
        }
        // zero intra spread is allowed: it collapses every class onto its center
        if !(self.intra_spread >= 0.0 && self.intra_spread.is_finite()) {
            return Err(Error::Parameter("intra_spread must be >= 0".into()));
        }
        if !(self.inter_spread > 0.0 && self.inter_spread.is_finite()) {
            return Err(Error::Parameter("inter_spread must be > 0".into()));
        }
        Ok(())
    }

    /// Classes are assigned to super-clusters in contiguous blocks.
    pub fn supercluster_of(&self, class: usize) -> usize {
        class * self.n_superclusters / self.n_classes
    }

    pub fn train_per_class(&self) -> usize {
        (self.samples_per_class * 4 / 5).clamp(1, self.samples_per_class - 1)
    }
}

/// Class centers of a spec, indexed by class.
pub fn class_centers(spec: &BlobSpec) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let normal = |sd: f64| Normal::new(0.0, sd).map_err(|e| Error::Parameter(e.to_string()));
    let sup_dist = normal(spec.inter_spread)?;
    let off_dist = normal(spec.inter_spread / 4.0)?;
    let supers: Vec<Vec<f64>> = (0..spec.n_superclusters)
        .map(|s| {
            let mut rng = stream(spec.seed, SUPER_DOMAIN, s as u64);
            (0..spec.dim).map(|_| sup_dist.sample(&mut rng)).collect()
        })
        .collect();
    Ok((0..spec.n_classes)
        .map(|c| {
            let mut rng = stream(spec.seed, CLASS_DOMAIN, c as u64);
            supers[spec.supercluster_of(c)]
                .iter()
                .map(|&m| m + off_dist.sample(&mut rng))
                .collect()
        })
        .collect())
}

/// Returns `(train, test)`; each class contributes its first 80% of samples
/// to the training split.
pub fn generate_blobs<T: Scalar>(spec: &BlobSpec) -> Result<(Dataset<T>, Dataset<T>)> {
    let centers = class_centers(spec)?;
    let n_train = spec.train_per_class();
    let mut train = (Vec::new(), Vec::new(), Vec::new());
    let mut test = (Vec::new(), Vec::new(), Vec::new());
    for (c, center) in centers.iter().enumerate() {
        for k in 0..spec.samples_per_class {
            let index = (c * spec.samples_per_class + k) as u64;
            let mut rng = stream(spec.seed, SAMPLE_DOMAIN, index);
            let row: Vec<T> = center
                .iter()
                .map(|&m| {
                    let z: f64 = rng.sample(rand_distr::StandardNormal);
                    T::lit(m + spec.intra_spread * z)
                })
                .collect();
            let split = if k < n_train { &mut train } else { &mut test };
            split.0.push(format!("c{c}_s{k}"));
            split.1.push(row);
            split.2.push(c);
        }
    }
    Ok((
        Dataset::with_ids(train.0, train.1, train.2)?,
        Dataset::with_ids(test.0, test.1, test.2)?,
    ))
}

/// A pair of categories whose samples leak `strength` of score mass to each other.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfusionPair {
    pub a: usize,
    pub b: usize,
    pub strength: f64,
}

/// Score vectors peaked at the true label, with each planted partner receiving
/// `strength` (relative to the true label's 1) and every entry receiving
/// uniform `[0, noise)` jitter, normalized to sum to 1.
pub fn generate_score_log<T: Scalar>(
    features: &[Vec<T>],
    labels: &[usize],
    n_classes: usize,
    noise: f64,
    pairs: &[ConfusionPair],
    seed: u64,
) -> Result<Vec<ScoreRecord<T>>> {
    if features.len() != labels.len() {
        return Err(Error::Shape {
            expected: features.len(),
            got: labels.len(),
        });
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Parameter(format!("noise must be >= 0, got {noise}")));
    }
    for p in pairs {
        if !(p.strength > 0.0 && p.strength < 1.0) {
            return Err(Error::Parameter(format!(
                "confusion strength must lie in (0, 1), got {}",
                p.strength
            )));
        }
        if p.a >= n_classes || p.b >= n_classes || p.a == p.b {
            return Err(Error::Parameter(format!("bad confusion pair ({}, {})", p.a, p.b)));
        }
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::Parameter(format!("label {l} outside {n_classes} classes")));
    }

    let mut leak = vec![Vec::new(); n_classes];
    for p in pairs {
        leak[p.a].push((p.b, p.strength));
        leak[p.b].push((p.a, p.strength));
    }
    Ok(labels
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let mut s = vec![0.0f64; n_classes];
            s[t] = 1.0;
            for &(p, w) in &leak[t] {
                s[p] += w;
            }
            if noise > 0.0 {
                let mut rng = stream(seed, SCORE_DOMAIN, i as u64);
                for v in &mut s {
                    *v += noise * rng.random::<f64>();
                }
            }
            let total: f64 = s.iter().sum();
            ScoreRecord::new(i.to_string(), t, s.into_iter().map(|v| T::lit(v / total)).collect())
        })
        .collect())
}
