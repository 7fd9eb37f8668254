//! ε-insensitive support vector regression with an RBF kernel, trained by
//! Sequential Minimal Optimization.
//!
//! The dual is solved in the doubled form used by LIBSVM: variables `α_s`, `s < 2n`,
//! with `y_s = +1` for the first copy of each row and `-1` for the second, box
//! `0 ≤ α_s ≤ C`, equality `Σ y_s α_s = 0` and minimized objective `½αᵀQα + pᵀα`.
//! Each step picks the maximal-violating pair and solves the two-variable
//! subproblem in closed form. The regression coefficients are
//! `β_i = α_i − α_{i+n}`, and the model is `f(x) = Σ β_i K(x_i, x) + b`.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{squared_distance, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrConfig<T> {
    /// Box bound on every dual coefficient.
    pub c: T,
    pub gamma: T,
    /// Half-width of the insensitive tube.
    pub epsilon: T,
    /// Stopping bound on the maximal KKT violation.
    pub tolerance: T,
    /// Cap on pair updates.
    pub max_iterations: usize,
}

impl<T: Real> Default for SvrConfig<T> {
    fn default() -> Self {
        SvrConfig {
            c: T::one(),
            gamma: T::of(0.01),
            epsilon: T::of(0.001),
            tolerance: T::of(0.001),
            max_iterations: 1_000_000,
        }
    }
}

impl<T: Real> SvrConfig<T> {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c", self.c),
            ("gamma", self.gamma),
            ("epsilon", self.epsilon),
            ("tolerance", self.tolerance),
        ] {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::InvalidParams(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParams(
                "max_iterations must be positive".into(),
            ));
        }
        Ok(())
    }
}

pub fn rbf_kernel<T: Real>(x: &[T], y: &[T], gamma: T) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    Ok((-gamma * squared_distance(x, y)).exp())
}

/// Per-column standardization to zero mean and unit (population) variance.
/// Zero-variance columns are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer<T> {
    pub input_dim: usize,
    pub kept: Vec<usize>,
    pub means: Vec<T>,
    pub scales: Vec<T>,
}

impl<T: Real> Standardizer<T> {
    pub fn fit(rows: &[Vec<T>], names: &[String]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
        }
        let n = T::of_count(rows.len());
        let mut kept = Vec::new();
        let mut means = Vec::new();
        let mut scales = Vec::new();
        for col in 0..dim {
            let mean = rows.iter().map(|r| r[col]).sum::<T>() / n;
            let var = rows
                .iter()
                .map(|r| {
                    let d = r[col] - mean;
                    d * d
                })
                .sum::<T>()
                / n;
            if var > T::zero() {
                kept.push(col);
                means.push(mean);
                scales.push(var.sqrt());
            } else {
                let name = names.get(col).map_or("?", String::as_str);
                log::warn!("dropping zero-variance feature column {col} ({name})");
            }
        }
        Ok(Standardizer {
            input_dim: dim,
            kept,
            means,
            scales,
        })
    }

    pub fn transform(&self, row: &[T]) -> Result<Vec<T>> {
        if row.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: row.len(),
            });
        }
        Ok(self
            .kept
            .iter()
            .zip(self.means.iter().zip(&self.scales))
            .map(|(&c, (&m, &s))| (row[c] - m) / s)
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainStatus {
    Converged,
    /// `max_iterations` reached; the model holds the best iterate so far.
    IterationLimit,
    /// All labels fit inside one ε-tube; the model is the constant mean.
    DegenerateLabels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary<T> {
    pub status: TrainStatus,
    pub iterations: usize,
    /// Final `max violation` gap of the working-set criterion.
    pub gap: T,
    /// Dual objective `−½βᵀKβ − εΣ|β| + Σ y β` at the returned solution.
    pub dual_objective: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel<T> {
    pub config: SvrConfig<T>,
    pub feature_names: Vec<String>,
    pub standardizer: Standardizer<T>,
    /// Training-row positions of the support vectors.
    pub support_indices: Vec<usize>,
    /// Standardized support vectors.
    pub support_vectors: Vec<Vec<T>>,
    pub dual_coefficients: Vec<T>,
    pub bias: T,
    pub summary: TrainSummary<T>,
}

pub const MODEL_FORMAT: &str = "prodrel-svr";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile<T> {
    format: String,
    version: u32,
    model: SvrModel<T>,
}

impl<T: Real> SvrModel<T> {
    /// Unclamped `Σ β_i K(sv_i, x) + b`.
    pub fn predict_raw(&self, row: &[T]) -> Result<T> {
        let x = self.standardizer.transform(row)?;
        let mut sum = self.bias;
        for (sv, &beta) in self.support_vectors.iter().zip(&self.dual_coefficients) {
            sum += beta * (-self.config.gamma * squared_distance(sv, &x)).exp();
        }
        Ok(sum)
    }

    /// Prediction clamped to the relevance range [1, 3].
    pub fn predict(&self, row: &[T]) -> Result<T> {
        Ok(clamp_relevance(self.predict_raw(row)?))
    }

    pub fn predict_many(&self, rows: &[Vec<T>]) -> Result<Vec<T>> {
        rows.iter().map(|r| self.predict(r)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile<T> = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!(
                "expected {MODEL_FORMAT} v{MODEL_VERSION}, found {} v{}",
                file.format, file.version
            )));
        }
        Ok(file.model)
    }
}

pub fn clamp_relevance<T: Real>(x: T) -> T {
    x.max(T::one()).min(T::of(3.0))
}

/// Gram-matrix rows, either fully materialized or computed on demand with an LRU cache.
struct KernelRows<'a, T> {
    x: &'a [Vec<T>],
    gamma: T,
    full: Option<Vec<Arc<Vec<T>>>>,
    cache: HashMap<usize, Arc<Vec<T>>>,
    order: VecDeque<usize>,
    capacity: usize,
}

/// Rows up to which the whole Gram matrix is precomputed.
const FULL_GRAM_LIMIT: usize = 4000;
/// Memory budget for the on-demand row cache.
const ROW_CACHE_BYTES: usize = 512 << 20;

impl<'a, T: Real> KernelRows<'a, T> {
    fn new(x: &'a [Vec<T>], gamma: T) -> Self {
        let n = x.len();
        let mut rows = KernelRows {
            x,
            gamma,
            full: None,
            cache: HashMap::new(),
            order: VecDeque::new(),
            capacity: (ROW_CACHE_BYTES / (n.max(1) * std::mem::size_of::<T>())).max(2),
        };
        if n <= FULL_GRAM_LIMIT {
            rows.full = Some((0..n).map(|i| Arc::new(rows.compute(i))).collect());
        }
        rows
    }

    fn compute(&self, i: usize) -> Vec<T> {
        let xi = &self.x[i];
        self.x
            .iter()
            .map(|xj| (-self.gamma * squared_distance(xi, xj)).exp())
            .collect()
    }

    fn row(&mut self, i: usize) -> Arc<Vec<T>> {
        if let Some(full) = &self.full {
            return full[i].clone();
        }
        if let Some(r) = self.cache.get(&i) {
            let r = r.clone();
            if let Some(pos) = self.order.iter().position(|&k| k == i) {
                self.order.remove(pos);
            }
            self.order.push_back(i);
            return r;
        }
        if self.cache.len() >= self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.cache.remove(&old);
            }
        }
        let r = Arc::new(self.compute(i));
        self.cache.insert(i, r.clone());
        self.order.push_back(i);
        r
    }
}

/// Trains on raw feature rows; standardization is fitted here and stored in the model.
pub fn smo_train<T: Real>(
    features: &[Vec<T>],
    labels: &[T],
    feature_names: &[String],
    config: &SvrConfig<T>,
) -> Result<SvrModel<T>> {
    config.validate()?;
    let n = features.len();
    if labels.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: labels.len(),
        });
    }
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let standardizer = Standardizer::fit(features, feature_names)?;
    let x: Vec<Vec<T>> = features
        .iter()
        .map(|r| standardizer.transform(r))
        .collect::<Result<_>>()?;

    let mut model = SvrModel {
        config: *config,
        feature_names: feature_names.to_vec(),
        standardizer,
        support_indices: Vec::new(),
        support_vectors: Vec::new(),
        dual_coefficients: Vec::new(),
        bias: T::zero(),
        summary: TrainSummary {
            status: TrainStatus::Converged,
            iterations: 0,
            gap: T::zero(),
            dual_objective: T::zero(),
        },
    };

    let (lo, hi) = labels
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &y| {
            (lo.min(y), hi.max(y))
        });
    if hi - lo <= config.epsilon + config.epsilon {
        model.bias = labels.iter().copied().sum::<T>() / T::of_count(n);
        model.summary.status = TrainStatus::DegenerateLabels;
        return Ok(model);
    }

    let solution = solve(&x, labels, config);
    for (i, &beta) in solution.beta.iter().enumerate() {
        if beta != T::zero() {
            model.support_indices.push(i);
            model.support_vectors.push(x[i].clone());
            model.dual_coefficients.push(beta);
        }
    }
    model.bias = solution.bias;
    model.summary = solution.summary;
    if model.summary.status == TrainStatus::IterationLimit {
        log::warn!(
            "SMO stopped after {} iterations with gap {}",
            model.summary.iterations,
            model.summary.gap
        );
    }
    Ok(model)
}

struct Solution<T> {
    beta: Vec<T>,
    bias: T,
    summary: TrainSummary<T>,
}

fn solve<T: Real>(x: &[Vec<T>], z: &[T], config: &SvrConfig<T>) -> Solution<T> {
    let n = x.len();
    let l = 2 * n;
    let c = config.c;
    let eps = config.epsilon;
    let tau = T::of(1e-12);
    let sign = |s: usize| if s < n { T::one() } else { -T::one() };
    let p: Vec<T> = (0..l)
        .map(|s| if s < n { eps - z[s] } else { eps + z[s - n] })
        .collect();
    let mut alpha = vec![T::zero(); l];
    let mut grad = p.clone();
    let mut kernel = KernelRows::new(x, config.gamma);
    let track_objective = cfg!(debug_assertions) && n <= 2000;
    let objective = |alpha: &[T], grad: &[T]| -> T {
        alpha
            .iter()
            .zip(grad.iter().zip(&p))
            .map(|(&a, (&g, &pp))| a * (g + pp))
            .sum::<T>()
            * T::of(0.5)
    };
    let mut last_objective = T::zero();

    let mut iterations = 0;
    let mut status = TrainStatus::Converged;
    let gap = loop {
        // Maximal violating pair.
        let mut g_max = T::neg_infinity();
        let mut g_min = T::infinity();
        let mut i_sel = usize::MAX;
        let mut j_sel = usize::MAX;
        for s in 0..l {
            let ys = sign(s);
            let v = -ys * grad[s];
            let up = if s < n {
                alpha[s] < c
            } else {
                alpha[s] > T::zero()
            };
            let low = if s < n {
                alpha[s] > T::zero()
            } else {
                alpha[s] < c
            };
            if up && v > g_max {
                g_max = v;
                i_sel = s;
            }
            if low && v < g_min {
                g_min = v;
                j_sel = s;
            }
        }
        let gap = g_max - g_min;
        if i_sel == usize::MAX || j_sel == usize::MAX || gap < config.tolerance {
            break gap.max(T::zero());
        }
        if iterations >= config.max_iterations {
            status = TrainStatus::IterationLimit;
            break gap;
        }
        iterations += 1;

        let (i, j) = (i_sel, j_sel);
        let (yi, yj) = (sign(i), sign(j));
        let ki = kernel.row(i % n);
        let kj = kernel.row(j % n);
        let kij = ki[j % n];
        let qij = yi * yj * kij;
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if yi != yj {
            let mut quad = ki[i % n] + kj[j % n] + qij + qij;
            if quad <= T::zero() {
                quad = tau;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > T::zero() {
                if alpha[j] < T::zero() {
                    alpha[j] = T::zero();
                    alpha[i] = diff;
                }
            } else if alpha[i] < T::zero() {
                alpha[i] = T::zero();
                alpha[j] = -diff;
            }
            if diff > T::zero() {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = ki[i % n] + kj[j % n] - qij - qij;
            if quad <= T::zero() {
                quad = tau;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < T::zero() {
                alpha[j] = T::zero();
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < T::zero() {
                alpha[i] = T::zero();
                alpha[j] = sum;
            }
        }

        let di = (alpha[i] - old_i) * yi;
        let dj = (alpha[j] - old_j) * yj;
        for s in 0..l {
            let k = s % n;
            grad[s] += sign(s) * (ki[k] * di + kj[k] * dj);
        }

        if track_objective {
            let now = objective(&alpha, &grad);
            debug_assert!(
                iterations == 1
                    || now <= last_objective + T::of(1e-9) * (T::one() + last_objective.abs()),
                "SMO objective increased: {last_objective} -> {now}"
            );
            last_objective = now;
        }
    };

    // Offset from free variables, or the midpoint of the feasible interval.
    let mut upper = T::infinity();
    let mut lower = T::neg_infinity();
    let mut free_sum = T::zero();
    let mut free = 0usize;
    for s in 0..l {
        let ys = sign(s);
        let yg = ys * grad[s];
        let at_upper = alpha[s] >= c;
        let at_lower = alpha[s] <= T::zero();
        if at_upper {
            if ys < T::zero() {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else if at_lower {
            if ys > T::zero() {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 {
        free_sum / T::of_count(free)
    } else {
        (upper + lower) * T::of(0.5)
    };

    let mut beta: Vec<T> = (0..n).map(|i| alpha[i] - alpha[i + n]).collect();
    // (Kβ)_i = G_i − p_i for the first copy.
    let mut k_beta: Vec<T> = (0..n).map(|i| grad[i] - p[i]).collect();
    let mut bias = -rho;
    let mut dual = dual_objective(&beta, &k_beta, z, eps);
    if status == TrainStatus::Converged {
        if let Some(polished) = polish(&beta, &k_beta, z, config, &mut kernel) {
            let polished_dual = dual_objective(&polished.beta, &polished.k_beta, z, eps);
            if polished_dual >= dual {
                beta = polished.beta;
                k_beta = polished.k_beta;
                bias = polished.bias;
                dual = polished_dual;
            }
        }
    }
    debug_assert_eq!(k_beta.len(), n);
    Solution {
        beta,
        bias,
        summary: TrainSummary {
            status,
            iterations,
            gap,
            dual_objective: dual,
        },
    }
}

fn dual_objective<T: Real>(beta: &[T], k_beta: &[T], z: &[T], eps: T) -> T {
    beta.iter()
        .zip(k_beta.iter().zip(z))
        .map(|(&b, (&kb, &y))| -T::of(0.5) * b * kb - eps * b.abs() + y * b)
        .sum()
}

/// Free coefficients above which the exact refinement is skipped.
const POLISH_LIMIT: usize = 1000;

struct Polished<T> {
    beta: Vec<T>,
    k_beta: Vec<T>,
    bias: T,
}

/// Solves the KKT equations exactly on the active set found by SMO: every free
/// coefficient sits on the edge of the tube, `Σβ = 0`, bounded ones stay fixed.
/// Returns `None` unless the result is feasible and satisfies every KKT condition
/// within `tolerance`.
fn polish<T: Real>(
    beta: &[T],
    k_beta: &[T],
    z: &[T],
    config: &SvrConfig<T>,
    kernel: &mut KernelRows<'_, T>,
) -> Option<Polished<T>> {
    let n = beta.len();
    let c = config.c;
    let eps = config.epsilon;
    let free: Vec<usize> = (0..n)
        .filter(|&i| beta[i] != T::zero() && beta[i].abs() < c)
        .collect();
    if free.is_empty() || free.len() > POLISH_LIMIT {
        return None;
    }
    let m = free.len();
    let rows: Vec<Arc<Vec<T>>> = free.iter().map(|&i| kernel.row(i)).collect();
    let mut a = vec![vec![T::zero(); m + 1]; m + 1];
    let mut rhs = vec![T::zero(); m + 1];
    for (r, &i) in free.iter().enumerate() {
        // contribution of the free coefficients to (Kβ)_i
        let mut free_part = T::zero();
        for (cc, &j) in free.iter().enumerate() {
            a[r][cc] = rows[r][j];
            free_part += rows[r][j] * beta[j];
        }
        a[r][m] = T::one();
        rhs[r] = z[i] - eps * beta[i].signum() - (k_beta[i] - free_part);
    }
    for cc in 0..m {
        a[m][cc] = T::one();
    }
    let fixed_sum: T = (0..n).filter(|i| !free.contains(i)).map(|i| beta[i]).sum();
    rhs[m] = -fixed_sum;
    let solution = solve_dense(a, rhs)?;

    let mut new_beta = beta.to_vec();
    let mut new_k_beta = k_beta.to_vec();
    for (r, &i) in free.iter().enumerate() {
        let v = solution[r];
        if v * beta[i].signum() < T::zero() || v.abs() > c {
            return None;
        }
        let delta = v - beta[i];
        new_beta[i] = v;
        for (kb, &kij) in new_k_beta.iter_mut().zip(rows[r].iter()) {
            *kb += kij * delta;
        }
    }
    let bias = solution[m];
    let tol = config.tolerance;
    for i in 0..n {
        let r = z[i] - new_k_beta[i] - bias;
        let b = new_beta[i];
        let ok = if b == T::zero() {
            r.abs() <= eps + tol
        } else if b >= c {
            r >= eps - tol
        } else if b <= -c {
            r <= -eps + tol
        } else {
            (r - eps * b.signum()).abs() <= tol
        };
        if !ok {
            return None;
        }
    }
    Some(Polished {
        beta: new_beta,
        k_beta: new_k_beta,
        bias,
    })
}

/// Gaussian elimination with partial pivoting; `None` for a numerically singular system.
fn solve_dense<T: Real>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Option<Vec<T>> {
    let m = b.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(T::zero(), |acc, v| acc.max(v.abs()));
    let singular = scale * T::epsilon() * T::of_count(m);
    for col in 0..m {
        let pivot = (col..m).max_by(|&p, &q| {
            a[p][col]
                .abs()
                .partial_cmp(&a[q][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[pivot][col].abs() <= singular {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..m {
            let f = a[r][col] / a[col][col];
            if f != T::zero() {
                for cc in col..m {
                    let v = a[col][cc];
                    a[r][cc] -= f * v;
                }
                let v = b[col];
                b[r] -= f * v;
            }
        }
    }
    let mut x = vec![T::zero(); m];
    for r in (0..m).rev() {
        let s: T = (r + 1..m).map(|cc| a[r][cc] * x[cc]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}
