//! Soft-margin SVM dual solved by sequential minimal optimization.
//!
//! Solves `max sum(a) - 1/2 a' Q a` with `Q_ij = y_i y_j K_ij`,
//! `0 <= a_i <= C` and `y' a = 0`, over a precomputed Gram matrix. Working
//! pairs are the maximal violating pair, scanned in index order so ties go to
//! the lower index.

use crate::error::{Error, Result};
use crate::kernel::Gram;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct SvmSolution<T> {
    pub alpha: Vec<T>,
    pub bias: T,
    /// `sum(a) - 1/2 a' Q a` at the returned point.
    pub dual_objective: T,
    pub iterations: usize,
}

impl<T: Scalar> SvmSolution<T> {
    /// Signed coefficients `a_i * y_i`.
    pub fn signed_coefs(&self, y: &[T]) -> Vec<T> {
        self.alpha.iter().zip(y).map(|(&a, &yi)| a * yi).collect()
    }
}

/// Dual objective `sum(a) - 1/2 a' Q a` for arbitrary `alpha`.
pub fn dual_objective<T: Scalar>(gram: &Gram<T>, y: &[T], alpha: &[T]) -> T {
    let n = alpha.len();
    let mut quad = T::zero();
    for i in 0..n {
        if alpha[i] == T::zero() {
            continue;
        }
        let row = gram.row(i);
        let mut acc = T::zero();
        for j in 0..n {
            acc = acc + alpha[j] * y[j] * row[j];
        }
        quad = quad + alpha[i] * y[i] * acc;
    }
    alpha.iter().copied().sum::<T>() - T::lit(0.5) * quad
}

/// Binary soft-margin SVM dual with labels in `{-1, +1}`.
pub fn solve_svm_dual<T: Scalar>(gram: &Gram<T>, y: &[T], c: T, tol: T) -> Result<SvmSolution<T>> {
    let n = y.len();
    if gram.size() != n {
        return Err(Error::Shape {
            expected: n,
            got: gram.size(),
        });
    }
    if !(c > T::zero()) || !(tol > T::zero()) {
        return Err(Error::Parameter(format!("need C > 0 and tol > 0, got C={c}, tol={tol}")));
    }
    if y.iter().any(|&v| v != T::one() && v != -T::one()) {
        return Err(Error::Parameter("labels must be -1 or +1".into()));
    }

    let tiny = T::lit(1e-12);
    let mut alpha = vec![T::zero(); n];
    let mut grad = vec![-T::one(); n];
    let max_iter = (100 * n * n).max(100_000);
    let mut iterations = 0;

    let upper = |a: T, yi: T| (yi > T::zero() && a < c) || (yi < T::zero() && a > T::zero());
    let lower = |a: T, yi: T| (yi < T::zero() && a < c) || (yi > T::zero() && a > T::zero());

    loop {
        let mut i = usize::MAX;
        let mut g_max = T::neg_infinity();
        let mut j = usize::MAX;
        let mut g_min = T::infinity();
        for t in 0..n {
            let v = -y[t] * grad[t];
            if upper(alpha[t], y[t]) && v > g_max {
                g_max = v;
                i = t;
            }
            if lower(alpha[t], y[t]) && v < g_min {
                g_min = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || g_max - g_min < tol {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::Numeric(format!(
                "SMO did not converge in {max_iter} iterations (gap {})",
                g_max - g_min
            )));
        }
        iterations += 1;

        let (ki, kj) = (gram.row(i), gram.row(j));
        let mut eta = ki[i] + kj[j] - T::lit(2.0) * ki[j];
        if eta <= tiny {
            eta = tiny;
        }
        let mut step = (g_max - g_min) / eta;
        let cap_i = if y[i] > T::zero() { c - alpha[i] } else { alpha[i] };
        let cap_j = if y[j] > T::zero() { alpha[j] } else { c - alpha[j] };
        step = step.min(cap_i).min(cap_j);

        let old_i = alpha[i];
        let old_j = alpha[j];
        alpha[i] = (old_i + y[i] * step).max(T::zero()).min(c);
        alpha[j] = (old_j - y[j] * step).max(T::zero()).min(c);
        // snap to bounds so the working-set tests stay exact
        for t in [i, j] {
            if alpha[t] < tiny * c {
                alpha[t] = T::zero();
            } else if alpha[t] > c - tiny * c {
                alpha[t] = c;
            }
        }
        let di = (alpha[i] - old_i) * y[i];
        let dj = (alpha[j] - old_j) * y[j];
        for t in 0..n {
            grad[t] = grad[t] + y[t] * (ki[t] * di + kj[t] * dj);
        }
    }

    let bias = -threshold(&alpha, &grad, y, c);
    let dual = dual_objective(gram, y, &alpha);
    Ok(SvmSolution {
        alpha,
        bias,
        dual_objective: dual,
        iterations,
    })
}

/// Decision threshold `rho` (bias is `-rho`): mean of `y_i G_i` over free
/// variables, or the midpoint of the feasible interval when none are free.
fn threshold<T: Scalar>(alpha: &[T], grad: &[T], y: &[T], c: T) -> T {
    let mut ub = T::infinity();
    let mut lb = T::neg_infinity();
    let mut sum = T::zero();
    let mut free = 0usize;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < T::zero() {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= T::zero() {
            if y[t] > T::zero() {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum = sum + yg;
        }
    }
    if free > 0 {
        sum / T::from_usize_lossy(free)
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / T::lit(2.0)
    } else if ub.is_finite() {
        ub
    } else if lb.is_finite() {
        lb
    } else {
        T::zero()
    }
}
