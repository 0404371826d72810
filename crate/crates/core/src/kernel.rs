//! Base kernels, their convex combinations, Gram matrices and feature standardization.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Tolerance on `sum(weights) == 1` for a kernel combination.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec<T> {
    Linear,
    Polynomial { degree: u32, coef0: T },
    Gaussian { gamma: T },
}

pub trait Kernel<T: Scalar>: Sync {
    /// Evaluates without checking dimensions.
    fn eval_unchecked(&self, x: &[T], y: &[T]) -> T;

    fn eval(&self, x: &[T], y: &[T]) -> Result<T> {
        if x.len() != y.len() {
            return Err(Error::Shape {
                expected: x.len(),
                got: y.len(),
            });
        }
        Ok(self.eval_unchecked(x, y))
    }
}

fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).fold(T::zero(), |acc, (&a, &b)| acc + a * b)
}

fn sq_dist<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).fold(T::zero(), |acc, (&a, &b)| {
        let d = a - b;
        acc + d * d
    })
}

impl<T: Scalar> KernelSpec<T> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Polynomial { degree, coef0 } => {
                if degree == 0 {
                    Err(Error::Parameter("polynomial degree must be >= 1".into()))
                } else if !coef0.is_finite() {
                    Err(Error::Parameter("polynomial coef0 must be finite".into()))
                } else {
                    Ok(())
                }
            }
            KernelSpec::Gaussian { gamma } => {
                if gamma > T::zero() && gamma.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Parameter(format!("gaussian gamma must be > 0, got {gamma}")))
                }
            }
        }
    }
}

impl<T: Scalar> Kernel<T> for KernelSpec<T> {
    fn eval_unchecked(&self, x: &[T], y: &[T]) -> T {
        match *self {
            KernelSpec::Linear => dot(x, y),
            KernelSpec::Polynomial { degree, coef0 } => {
                let base = dot(x, y) + coef0;
                (0..degree).fold(T::one(), |acc, _| acc * base)
            }
            KernelSpec::Gaussian { gamma } => (-gamma * sq_dist(x, y)).exp(),
        }
    }
}

/// Convenience wrapper around [`Kernel::eval`] for a single spec.
pub fn eval_kernel<T: Scalar>(spec: &KernelSpec<T>, x: &[T], y: &[T]) -> Result<T> {
    spec.validate()?;
    spec.eval(x, y)
}

/// `sum_m weights[m] * K_m(x, y)` with weights on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelCombination<T> {
    pub specs: Vec<KernelSpec<T>>,
    pub weights: Vec<T>,
}

impl<T: Scalar> KernelCombination<T> {
    pub fn new(specs: Vec<KernelSpec<T>>, weights: Vec<T>) -> Result<Self> {
        let comb = Self { specs, weights };
        comb.validate()?;
        Ok(comb)
    }

    /// Equal weights `1/M` over the given kernels.
    pub fn uniform(specs: Vec<KernelSpec<T>>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Parameter("kernel bank is empty".into()));
        }
        let w = T::one() / T::from_usize_lossy(specs.len());
        let weights = vec![w; specs.len()];
        Self::new(specs, weights)
    }

    pub fn validate(&self) -> Result<()> {
        if self.specs.is_empty() || self.specs.len() != self.weights.len() {
            return Err(Error::Invariant(format!(
                "{} kernels with {} weights",
                self.specs.len(),
                self.weights.len()
            )));
        }
        for spec in &self.specs {
            spec.validate()?;
        }
        if let Some(w) = self.weights.iter().find(|w| !(**w >= T::zero()) || !w.is_finite()) {
            return Err(Error::Invariant(format!("negative kernel weight {w}")));
        }
        let total: T = self.weights.iter().copied().sum();
        if (total - T::one()).abs() > T::lit(SIMPLEX_TOL) {
            return Err(Error::Invariant(format!("kernel weights sum to {total}")));
        }
        Ok(())
    }
}

impl<T: Scalar> Kernel<T> for KernelCombination<T> {
    fn eval_unchecked(&self, x: &[T], y: &[T]) -> T {
        self.specs
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (k, &w)| acc + w * k.eval_unchecked(x, y))
    }
}

pub fn combined_kernel<T: Scalar>(comb: &KernelCombination<T>, x: &[T], y: &[T]) -> Result<T> {
    comb.validate()?;
    comb.eval(x, y)
}

/// Dense symmetric `n x n` matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gram<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> Gram<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// `sum_m weights[m] * grams[m]`.
    pub fn weighted_sum(grams: &[Gram<T>], weights: &[T]) -> Self {
        let n = grams.first().map_or(0, |g| g.n);
        let mut out = Self::zeros(n);
        for (g, &w) in grams.iter().zip(weights) {
            if w == T::zero() {
                continue;
            }
            for (o, &v) in out.data.iter_mut().zip(&g.data) {
                *o = *o + w * v;
            }
        }
        out
    }
}

/// Gram matrix of `kernel` over `rows`, filled row-parallel.
pub fn gram_matrix<T: Scalar, K: Kernel<T>>(kernel: &K, rows: &[Vec<T>]) -> Result<Gram<T>> {
    let n = rows.len();
    if let Some(first) = rows.first() {
        if let Some(bad) = rows.iter().find(|r| r.len() != first.len()) {
            return Err(Error::Shape {
                expected: first.len(),
                got: bad.len(),
            });
        }
    }
    let mut data = vec![T::zero(); n * n];
    data.par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(i, out)| {
            for (j, slot) in out.iter_mut().enumerate().take(i + 1) {
                *slot = kernel.eval_unchecked(&rows[i], &rows[j]);
            }
        });
    for i in 0..n {
        for j in (i + 1)..n {
            data[i * n + j] = data[j * n + i];
        }
    }
    Ok(Gram { n, data })
}

/// Gaussian bandwidth: the explicit value or the training-set heuristic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaSetting {
    Auto,
    Fixed(f64),
}

/// A kernel as written in configuration: `linear`, `poly:<degree>:<coef0>`,
/// `rbf:auto` or `rbf:<gamma>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelTemplate {
    Linear,
    Polynomial { degree: u32, coef0: f64 },
    Gaussian(GammaSetting),
}

impl KernelTemplate {
    /// linear; poly(2, 1); rbf(auto).
    pub fn default_bank() -> Vec<KernelTemplate> {
        vec![
            KernelTemplate::Linear,
            KernelTemplate::Polynomial {
                degree: 2,
                coef0: 1.0,
            },
            KernelTemplate::Gaussian(GammaSetting::Auto),
        ]
    }

    /// Fixes any data-dependent hyperparameter against (standardized) training rows.
    pub fn resolve<T: Scalar>(&self, rows: &[Vec<T>]) -> Result<KernelSpec<T>> {
        let spec = match *self {
            KernelTemplate::Linear => KernelSpec::Linear,
            KernelTemplate::Polynomial { degree, coef0 } => KernelSpec::Polynomial {
                degree,
                coef0: T::lit(coef0),
            },
            KernelTemplate::Gaussian(GammaSetting::Fixed(g)) => KernelSpec::Gaussian { gamma: T::lit(g) },
            KernelTemplate::Gaussian(GammaSetting::Auto) => KernelSpec::Gaussian {
                gamma: auto_gamma(rows),
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl FromStr for KernelTemplate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = || Error::Parameter(format!("unrecognized kernel `{s}`"));
        match parts.as_slice() {
            ["linear"] => Ok(KernelTemplate::Linear),
            ["poly", degree, coef0] => {
                let degree: u32 = degree.parse().map_err(|_| bad())?;
                let coef0: f64 = coef0.parse().map_err(|_| bad())?;
                if degree == 0 {
                    return Err(bad());
                }
                Ok(KernelTemplate::Polynomial { degree, coef0 })
            }
            ["rbf", "auto"] => Ok(KernelTemplate::Gaussian(GammaSetting::Auto)),
            ["rbf", gamma] => {
                let g: f64 = gamma.parse().map_err(|_| bad())?;
                if !(g > 0.0) || !g.is_finite() {
                    return Err(bad());
                }
                Ok(KernelTemplate::Gaussian(GammaSetting::Fixed(g)))
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for KernelTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelTemplate::Linear => write!(f, "linear"),
            KernelTemplate::Polynomial { degree, coef0 } => write!(f, "poly:{degree}:{coef0}"),
            KernelTemplate::Gaussian(GammaSetting::Auto) => write!(f, "rbf:auto"),
            KernelTemplate::Gaussian(GammaSetting::Fixed(g)) => write!(f, "rbf:{g}"),
        }
    }
}

/// `1 / (dim * mean per-dimension variance)`; falls back to `1 / dim` for
/// constant data.
pub fn auto_gamma<T: Scalar>(rows: &[Vec<T>]) -> T {
    let dim = rows.first().map_or(1, |r| r.len()).max(1);
    if rows.is_empty() {
        return T::one() / T::from_usize_lossy(dim);
    }
    let n = T::from_usize_lossy(rows.len());
    let mut total_var = T::zero();
    for d in 0..dim {
        let mean = rows.iter().map(|r| r[d]).sum::<T>() / n;
        let var = rows.iter().map(|r| (r[d] - mean) * (r[d] - mean)).sum::<T>() / n;
        total_var = total_var + var;
    }
    let mean_var = total_var / T::from_usize_lossy(dim);
    if mean_var > T::zero() {
        T::one() / (T::from_usize_lossy(dim) * mean_var)
    } else {
        T::one() / T::from_usize_lossy(dim)
    }
}

/// Per-dimension z-scoring with training-set statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer<T> {
    pub mean: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Scalar> Standardizer<T> {
    /// Population mean and standard deviation; constant dimensions get scale 1.
    pub fn fit(rows: &[Vec<T>]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Parameter("cannot standardize an empty feature set".into()))?;
        let dim = first.len();
        let n = T::from_usize_lossy(rows.len());
        let mut mean = vec![T::zero(); dim];
        for r in rows {
            if r.len() != dim {
                return Err(Error::Shape {
                    expected: dim,
                    got: r.len(),
                });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parameter("non-finite feature value".into()));
            }
            for (m, &v) in mean.iter_mut().zip(r) {
                *m = *m + v;
            }
        }
        for m in &mut mean {
            *m = *m / n;
        }
        let mut scale = vec![T::zero(); dim];
        for r in rows {
            for ((s, &v), &m) in scale.iter_mut().zip(r).zip(&mean) {
                *s = *s + (v - m) * (v - m);
            }
        }
        for s in &mut scale {
            let sd = (*s / n).sqrt();
            *s = if sd > T::zero() { sd } else { T::one() };
        }
        Ok(Self { mean, scale })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![T::zero(); dim],
            scale: vec![T::one(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(x
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((&v, &m), &s)| (v - m) / s)
            .collect())
    }
}
