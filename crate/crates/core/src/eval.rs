//! Metrics, k-fold cross-validation, two-level stacking and the three-class
//! logistic head with expected-score decoding.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::svr::{smo_train, SvrConfig, SvrModel};

fn check_lengths<T>(a: &[T], b: &[T]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

pub fn rmse<T: Real>(predictions: &[T], gold: &[T]) -> Result<T> {
    check_lengths(predictions, gold)?;
    let sum: T = predictions
        .iter()
        .zip(gold)
        .map(|(&p, &g)| (p - g) * (p - g))
        .sum();
    Ok((sum / T::of_count(gold.len())).sqrt())
}

/// Sample Pearson correlation. `ConstantSequence` when either side has zero variance.
pub fn pearson<T: Real>(predictions: &[T], gold: &[T]) -> Result<T> {
    check_lengths(predictions, gold)?;
    if gold.len() < 2 {
        return Err(Error::ConstantSequence);
    }
    let n = T::of_count(gold.len());
    let mp = predictions.iter().copied().sum::<T>() / n;
    let mg = gold.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&p, &g) in predictions.iter().zip(gold) {
        let (dp, dg) = (p - mp, g - mg);
        sxy += dp * dg;
        sxx += dp * dp;
        syy += dg * dg;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(Error::ConstantSequence);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt()))
        .max(-T::one())
        .min(T::one()))
}

/// RMSE and Pearson of one set of predictions. An undefined correlation is
/// reported as 0 with `pearson_defined = false`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub rmse: f64,
    pub pearson: f64,
    pub pearson_defined: bool,
}

impl Metrics {
    pub fn compute<T: Real>(predictions: &[T], gold: &[T]) -> Result<Self> {
        let rmse = rmse(predictions, gold)?.to_f64_lossy();
        let (pearson, pearson_defined) = match pearson(predictions, gold) {
            Ok(r) => (r.to_f64_lossy(), true),
            Err(Error::ConstantSequence) => (0.0, false),
            Err(e) => return Err(e),
        };
        Ok(Metrics {
            n: gold.len(),
            rmse,
            pearson,
            pearson_defined,
        })
    }
}

/// Shuffles `0..n` with `seed` and cuts it into `k` contiguous folds whose sizes
/// differ by at most one.
pub fn kfold_partition(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || n < k {
        return Err(Error::TooFewInstances { n, k });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut fold = order[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    Ok(folds)
}

/// Rows outside fold `f`, ascending.
pub fn training_rows(folds: &[Vec<usize>], f: usize) -> Vec<usize> {
    let mut rows: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|&(g, _)| g != f)
        .flat_map(|(_, fold)| fold.iter().copied())
        .collect();
    rows.sort_unstable();
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_name: String,
    pub seed: u64,
    pub k: usize,
    pub n: usize,
    pub rmse: f64,
    pub pearson: f64,
    pub pearson_defined: bool,
    pub per_fold: Vec<Metrics>,
    /// Settings that produced the report, recorded verbatim.
    #[serde(default)]
    pub settings: serde_json::Value,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Pooled out-of-fold predictions with their fold assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome<T> {
    pub folds: Vec<Vec<usize>>,
    pub predictions: Vec<T>,
    pub fold_of: Vec<usize>,
    pub report: EvalReport,
}

impl<T: Real> CvOutcome<T> {
    /// `id,gold,predicted,model_name` rows in instance order.
    pub fn write_predictions_csv(&self, path: &Path, ids: &[u64], gold: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
        let io = |e: csv::Error| Error::io(path, e.into());
        w.write_record(["id", "gold", "predicted", "model_name"])
            .map_err(io)?;
        for ((id, g), p) in ids.iter().zip(gold).zip(&self.predictions) {
            w.write_record([
                id.to_string(),
                g.to_string(),
                p.to_string(),
                self.report.model_name.clone(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// k-fold cross-validation around an arbitrary fold procedure. `fit_predict`
/// receives the training rows and the held-out rows and returns one prediction per
/// held-out row. Folds run in parallel when `parallel` is set; results are
/// assembled in fold order either way.
pub fn cross_validate<T, F>(
    model_name: &str,
    gold: &[T],
    k: usize,
    seed: u64,
    parallel: bool,
    fit_predict: F,
) -> Result<CvOutcome<T>>
where
    T: Real,
    F: Fn(&[usize], &[usize]) -> Result<Vec<T>> + Sync,
{
    let n = gold.len();
    let folds = kfold_partition(n, k, seed)?;
    let run = |f: usize| -> Result<Vec<T>> {
        let train = training_rows(&folds, f);
        let out = fit_predict(&train, &folds[f])?;
        if out.len() != folds[f].len() {
            return Err(Error::LengthMismatch {
                left: out.len(),
                right: folds[f].len(),
            });
        }
        log::debug!("{model_name}: fold {} of {k} done", f + 1);
        Ok(out)
    };
    let per_fold: Vec<Vec<T>> = if parallel {
        (0..k).into_par_iter().map(run).collect::<Result<_>>()?
    } else {
        (0..k).map(run).collect::<Result<_>>()?
    };
    let mut predictions = vec![T::zero(); n];
    let mut fold_of = vec![usize::MAX; n];
    let mut fold_metrics = Vec::with_capacity(k);
    for (f, preds) in per_fold.iter().enumerate() {
        let mut fold_gold = Vec::with_capacity(preds.len());
        for (&row, &p) in folds[f].iter().zip(preds) {
            predictions[row] = p;
            fold_of[row] = f;
            fold_gold.push(gold[row]);
        }
        fold_metrics.push(Metrics::compute(preds, &fold_gold)?);
    }
    let pooled = Metrics::compute(&predictions, gold)?;
    Ok(CvOutcome {
        report: EvalReport {
            model_name: model_name.to_string(),
            seed,
            k,
            n,
            rmse: pooled.rmse,
            pearson: pooled.pearson,
            pearson_defined: pooled.pearson_defined,
            per_fold: fold_metrics,
            settings: serde_json::Value::Null,
        },
        folds,
        predictions,
        fold_of,
    })
}

/// Fits a regressor from inputs of type `X` (feature rows, token lists, …).
pub trait Learner<X, T>: Sync {
    type Model: Predictor<X, T>;

    fn fit(&self, inputs: &[X], labels: &[T]) -> Result<Self::Model>;
}

pub trait Predictor<X, T> {
    fn predict(&self, input: &X) -> Result<T>;
}

/// ε-SVR trained by SMO.
#[derive(Debug, Clone)]
pub struct SvrLearner<T> {
    pub config: SvrConfig<T>,
    pub feature_names: Vec<String>,
}

impl<T: Real> Learner<Vec<T>, T> for SvrLearner<T> {
    type Model = SvrModel<T>;

    fn fit(&self, features: &[Vec<T>], labels: &[T]) -> Result<SvrModel<T>> {
        let model = smo_train(features, labels, &self.feature_names, &self.config)?;
        log::debug!(
            "svr: {} rows, {} support vectors, {:?} after {} iterations",
            labels.len(),
            model.support_vectors.len(),
            model.summary.status,
            model.summary.iterations
        );
        Ok(model)
    }
}

impl<T: Real> Predictor<Vec<T>, T> for SvrModel<T> {
    fn predict(&self, row: &Vec<T>) -> Result<T> {
        SvrModel::predict(self, row)
    }
}

fn select<T: Clone>(rows: &[usize], data: &[T]) -> Vec<T> {
    rows.iter().map(|&r| data[r].clone()).collect()
}

/// k-fold CV of a learner over a fixed feature matrix.
pub fn kfold_cv<X, T, L>(
    model_name: &str,
    features: &[X],
    labels: &[T],
    k: usize,
    seed: u64,
    learner: &L,
    parallel: bool,
) -> Result<CvOutcome<T>>
where
    X: Clone + Sync,
    T: Real,
    L: Learner<X, T>,
{
    if features.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: features.len(),
            right: labels.len(),
        });
    }
    cross_validate(model_name, labels, k, seed, parallel, |train, test| {
        let model = learner.fit(&select(train, features), &select(train, labels))?;
        test.iter().map(|&r| model.predict(&features[r])).collect()
    })
}

/// Where each out-of-fold base prediction came from: the row it was made for and
/// the rows its model was trained on.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StackingAudit {
    pub records: Vec<(usize, usize)>,
    pub training_sets: Vec<Vec<usize>>,
}

impl StackingAudit {
    /// True when no recorded prediction was made by a model that saw its row.
    pub fn is_clean(&self) -> bool {
        let sets: Vec<HashSet<usize>> = self
            .training_sets
            .iter()
            .map(|s| s.iter().copied().collect())
            .collect();
        self.records.iter().all(|&(row, m)| !sets[m].contains(&row))
    }
}

/// Out-of-fold base predictions for `rows` (positions into `features`), produced by
/// an inner k-fold split of those rows. Returned in the order of `rows`.
pub fn out_of_fold_predictions<X, T, L>(
    features: &[X],
    labels: &[T],
    rows: &[usize],
    k: usize,
    seed: u64,
    learner: &L,
    audit: &mut StackingAudit,
) -> Result<Vec<T>>
where
    X: Clone,
    T: Real,
    L: Learner<X, T>,
{
    let folds = kfold_partition(rows.len(), k, seed)?;
    let mut out = vec![T::zero(); rows.len()];
    for f in 0..k {
        let train: Vec<usize> = training_rows(&folds, f).iter().map(|&i| rows[i]).collect();
        let model = learner.fit(&select(&train, features), &select(&train, labels))?;
        let id = audit.training_sets.len();
        audit.training_sets.push(train);
        for &i in &folds[f] {
            out[i] = model.predict(&features[rows[i]])?;
            audit.records.push((rows[i], id));
        }
    }
    Ok(out)
}

fn append_column<T: Real>(rows: &[Vec<T>], column: &[T]) -> Vec<Vec<T>> {
    rows.iter()
        .zip(column)
        .map(|(r, &c)| {
            let mut r = r.clone();
            r.push(c);
            r
        })
        .collect()
}

/// Base model trained on every row plus a meta model over `meta features ++ base prediction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedModel<B, M> {
    pub base: B,
    pub meta: M,
}

impl<B, M> StackedModel<B, M> {
    pub fn predict<X, T>(&self, base_input: &X, meta_row: &[T]) -> Result<T>
    where
        T: Real,
        B: Predictor<X, T>,
        M: Predictor<Vec<T>, T>,
    {
        let mut row = meta_row.to_vec();
        row.push(self.base.predict(base_input)?);
        self.meta.predict(&row)
    }
}

/// Two-level stacking. The meta model sees the base model's out-of-fold predictions
/// as an extra column. The report comes from nested CV: each outer fold rebuilds
/// inner out-of-fold predictions from its own training rows only.
#[allow(clippy::too_many_arguments)]
pub fn train_stacked<X, T, B, M>(
    model_name: &str,
    base_features: &[X],
    meta_features: &[Vec<T>],
    labels: &[T],
    k: usize,
    seed: u64,
    base: &B,
    meta: &M,
) -> Result<(
    StackedModel<B::Model, M::Model>,
    CvOutcome<T>,
    StackingAudit,
)>
where
    X: Clone + Sync,
    T: Real,
    B: Learner<X, T>,
    M: Learner<Vec<T>, T>,
{
    let n = labels.len();
    if base_features.len() != n || meta_features.len() != n {
        return Err(Error::LengthMismatch {
            left: base_features.len().min(meta_features.len()),
            right: n,
        });
    }
    let audit = std::sync::Mutex::new(StackingAudit::default());
    let outcome = cross_validate(model_name, labels, k, seed, false, |train, test| {
        let mut local = StackingAudit::default();
        let inner =
            out_of_fold_predictions(base_features, labels, train, k, seed, base, &mut local)?;
        let meta_model = meta.fit(
            &append_column(&select(train, meta_features), &inner),
            &select(train, labels),
        )?;
        let base_model = base.fit(&select(train, base_features), &select(train, labels))?;
        local.training_sets.push(train.to_vec());
        let id = local.training_sets.len() - 1;
        let mut out = Vec::with_capacity(test.len());
        for &r in test {
            let b = base_model.predict(&base_features[r])?;
            local.records.push((r, id));
            let mut row = meta_features[r].clone();
            row.push(b);
            out.push(meta_model.predict(&row)?);
        }
        let mut all = audit.lock().expect("audit lock");
        let offset = all.training_sets.len();
        all.records
            .extend(local.records.into_iter().map(|(r, m)| (r, m + offset)));
        all.training_sets.extend(local.training_sets);
        Ok(out)
    })?;
    let mut audit = audit.into_inner().expect("audit lock");

    let all: Vec<usize> = (0..n).collect();
    let oof = out_of_fold_predictions(base_features, labels, &all, k, seed, base, &mut audit)?;
    let meta_model = meta.fit(&append_column(meta_features, &oof), labels)?;
    let base_model = base.fit(base_features, labels)?;
    Ok((
        StackedModel {
            base: base_model,
            meta: meta_model,
        },
        outcome,
        audit,
    ))
}

/// `Σ p_k · k` over classes 1, 2, 3.
pub fn expected_score_decode<T: Real>(probabilities: &[T]) -> Result<T> {
    let ok = probabilities.len() == 3
        && probabilities
            .iter()
            .all(|&p| p >= T::zero() && p <= T::one())
        && (probabilities.iter().copied().sum::<T>() - T::one()).abs() <= T::of(1e-9);
    if !ok {
        return Err(Error::NotADistribution);
    }
    Ok(probabilities
        .iter()
        .enumerate()
        .map(|(i, &p)| p * T::of_count(i + 1))
        .sum())
}

/// Class index 0..3 for a relevance label: round half up to 1, 2 or 3.
pub fn bucket_label<T: Real>(relevance: T) -> usize {
    let r = (relevance + T::of(0.5)).floor().to_f64_lossy();
    (r.clamp(1.0, 3.0) as usize) - 1
}

const CLASSES: usize = 3;

fn softmax<T: Real>(logits: &[T; CLASSES]) -> [T; CLASSES] {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let e = logits.map(|z| (z - m).exp());
    let s = e.iter().copied().sum::<T>();
    e.map(|v| v / s)
}

fn logits<T: Real>(params: &[T], x: &[T]) -> [T; CLASSES] {
    let d = x.len() + 1;
    std::array::from_fn(|c| {
        let w = &params[c * d..(c + 1) * d];
        w[d - 1] + w.iter().zip(x).map(|(&a, &b)| a * b).sum::<T>()
    })
}

/// Mean cross-entropy of a multinomial logistic model and its gradient. `params`
/// holds one row per class: the weights followed by the intercept.
pub fn logistic_loss_and_grad<T: Real>(
    params: &[T],
    features: &[Vec<T>],
    classes: &[usize],
) -> (T, Vec<T>) {
    let d = features.first().map_or(0, Vec::len) + 1;
    let mut grad = vec![T::zero(); params.len()];
    let mut loss = T::zero();
    for (x, &y) in features.iter().zip(classes) {
        let z = logits(params, x);
        let m = z.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = m + z.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
        loss += lse - z[y];
        let p = softmax(&z);
        for c in 0..CLASSES {
            let r = p[c] - if c == y { T::one() } else { T::zero() };
            let g = &mut grad[c * d..(c + 1) * d];
            for (gj, &xj) in g.iter_mut().zip(x) {
                *gj += r * xj;
            }
            g[d - 1] += r;
        }
    }
    let n = T::of_count(features.len().max(1));
    grad.iter_mut().for_each(|g| *g /= n);
    (loss / n, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ClassifierFit<T> {
    Logistic {
        params: Vec<T>,
        iterations: usize,
    },
    /// Only one class in the training labels; always predicts it.
    SingleClass(usize),
}

/// Three-class logistic regression on standardized features, decoded by expected score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityClassifier<T> {
    means: Vec<T>,
    scales: Vec<T>,
    pub fit: ClassifierFit<T>,
}

impl<T: Real> SimilarityClassifier<T> {
    fn standardize(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(self.means.iter().zip(&self.scales))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect()
    }

    pub fn probabilities(&self, x: &[T]) -> Result<[T; CLASSES]> {
        if x.len() != self.means.len() {
            return Err(Error::DimensionMismatch {
                expected: self.means.len(),
                found: x.len(),
            });
        }
        Ok(match &self.fit {
            ClassifierFit::SingleClass(c) => {
                std::array::from_fn(|i| if i == *c { T::one() } else { T::zero() })
            }
            ClassifierFit::Logistic { params, .. } => {
                softmax(&logits(params, &self.standardize(x)))
            }
        })
    }

    pub fn predict_class(&self, x: &[T]) -> Result<usize> {
        let p = self.probabilities(x)?;
        Ok((0..CLASSES).fold(0, |best, c| if p[c] > p[best] { c } else { best }))
    }
}

impl<T: Real> Predictor<Vec<T>, T> for SimilarityClassifier<T> {
    fn predict(&self, row: &Vec<T>) -> Result<T> {
        expected_score_decode(&self.probabilities(row)?)
    }
}

/// Gradient-descent fit of the logistic head; stops when the loss changes by less
/// than `1e-8` or after `max_iterations` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticLearner {
    pub learning_rate: f64,
    pub max_iterations: usize,
}

impl Default for LogisticLearner {
    fn default() -> Self {
        LogisticLearner {
            learning_rate: 0.5,
            max_iterations: 200_000,
        }
    }
}

impl<T: Real> Learner<Vec<T>, T> for LogisticLearner {
    type Model = SimilarityClassifier<T>;

    fn fit(&self, features: &[Vec<T>], labels: &[T]) -> Result<SimilarityClassifier<T>> {
        train_similarity_classifier(features, labels, self)
    }
}

pub fn train_similarity_classifier<T: Real>(
    features: &[Vec<T>],
    labels: &[T],
    settings: &LogisticLearner,
) -> Result<SimilarityClassifier<T>> {
    if features.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: features.len(),
            right: labels.len(),
        });
    }
    if features.is_empty() {
        return Err(Error::EmptyInput);
    }
    let d = features[0].len();
    if let Some(bad) = features.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: bad.len(),
        });
    }
    let n = T::of_count(features.len());
    let means: Vec<T> = (0..d)
        .map(|j| features.iter().map(|r| r[j]).sum::<T>() / n)
        .collect();
    let scales: Vec<T> = (0..d)
        .map(|j| {
            let var = features
                .iter()
                .map(|r| (r[j] - means[j]).powi(2))
                .sum::<T>()
                / n;
            if var > T::zero() {
                var.sqrt()
            } else {
                T::one()
            }
        })
        .collect();
    let classes: Vec<usize> = labels.iter().map(|&y| bucket_label(y)).collect();
    let mut model = SimilarityClassifier {
        means,
        scales,
        fit: ClassifierFit::SingleClass(classes[0]),
    };
    if classes.iter().all(|&c| c == classes[0]) {
        return Ok(model);
    }
    let x: Vec<Vec<T>> = features.iter().map(|r| model.standardize(r)).collect();
    let mut params = vec![T::zero(); CLASSES * (d + 1)];
    let lr = T::of(settings.learning_rate);
    let (mut loss, mut grad) = logistic_loss_and_grad(&params, &x, &classes);
    let mut iterations = 0;
    while iterations < settings.max_iterations {
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= lr * *g;
        }
        iterations += 1;
        let (next, next_grad) = logistic_loss_and_grad(&params, &x, &classes);
        let change = (loss - next).abs();
        loss = next;
        grad = next_grad;
        if change < T::of(1e-8) {
            break;
        }
    }
    model.fit = ClassifierFit::Logistic { params, iterations };
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rmse_examples() {
        let g = [1.0, 2.0, 2.5];
        assert_eq!(rmse(&g, &g).unwrap(), 0.0);
        let p: Vec<f64> = g.iter().map(|v| v + 0.1).collect();
        assert_relative_eq!(rmse(&p, &g).unwrap(), 0.1, epsilon = 1e-12);
        assert_relative_eq!(
            rmse(&[1.0, 2.0], &[2.0, 4.0]).unwrap(),
            2.5f64.sqrt(),
            epsilon = 1e-12
        );
        assert!(matches!(rmse::<f64>(&[], &[]), Err(Error::EmptyInput)));
        assert!(matches!(
            rmse(&[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn pearson_examples() {
        let g = [1.0, 2.0, 3.0, 5.0];
        let p: Vec<f64> = g.iter().map(|v| 2.0 * v + 1.0).collect();
        assert_relative_eq!(pearson(&p, &g).unwrap(), 1.0, epsilon = 1e-12);
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        assert_relative_eq!(pearson(&neg, &g).unwrap(), -1.0, epsilon = 1e-12);
        assert_relative_eq!(
            pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap(),
            0.981_980_506_061_965_7,
            epsilon = 1e-12
        );
        assert!(matches!(
            pearson(&[1.0, 1.0], &[1.0, 2.0]),
            Err(Error::ConstantSequence)
        ));
        let m = Metrics::compute(&[2.0, 2.0], &[1.0, 3.0]).unwrap();
        assert!(!m.pearson_defined);
        assert_eq!(m.pearson, 0.0);
    }

    #[test]
    fn partition_sizes() {
        let folds = kfold_partition(10, 10, 3).unwrap();
        assert!(folds.iter().all(|f| f.len() == 1));
        let folds = kfold_partition(101, 10, 3).unwrap();
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..101).collect::<Vec<_>>());
        assert!(matches!(
            kfold_partition(3, 5, 0),
            Err(Error::TooFewInstances { n: 3, k: 5 })
        ));
        assert!(kfold_partition(10, 1, 0).is_err());
        assert_eq!(
            kfold_partition(50, 5, 9).unwrap(),
            kfold_partition(50, 5, 9).unwrap()
        );
    }

    struct Memorizer;

    struct Lookup(Vec<(Vec<f64>, f64)>);

    impl Predictor<Vec<f64>, f64> for Lookup {
        fn predict(&self, row: &Vec<f64>) -> Result<f64> {
            Ok(self.0.iter().find(|(x, _)| x == row).map_or(2.0, |p| p.1))
        }
    }

    impl Learner<Vec<f64>, f64> for Memorizer {
        type Model = Lookup;

        fn fit(&self, features: &[Vec<f64>], labels: &[f64]) -> Result<Lookup> {
            Ok(Lookup(
                features
                    .iter()
                    .cloned()
                    .zip(labels.iter().copied())
                    .collect(),
            ))
        }
    }

    #[test]
    fn memorizing_trainer_on_bijective_map() {
        // every row has a twin, so leave-one-out always finds it in training
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![(i % 10) as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| 1.0 + (i % 10) as f64 / 5.0).collect();
        let loo = kfold_cv("memo", &x, &y, 20, 1, &Memorizer, true).unwrap();
        assert_eq!(loo.report.rmse, 0.0);
        assert_eq!(loo.report.per_fold.len(), 20);
        assert!(loo.fold_of.iter().all(|&f| f < 20));
    }

    #[test]
    fn parallel_matches_sequential() {
        let x: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![i as f64, (i * i % 7) as f64])
            .collect();
        let y: Vec<f64> = (0..30).map(|i| 1.0 + (i % 3) as f64).collect();
        let learner = SvrLearner {
            config: SvrConfig::default(),
            feature_names: vec!["a".into(), "b".into()],
        };
        let a = kfold_cv("svr", &x, &y, 5, 4, &learner, false).unwrap();
        let b = kfold_cv("svr", &x, &y, 5, 4, &learner, true).unwrap();
        assert_eq!(a, b);
    }

    struct Constant;

    impl Learner<Vec<f64>, f64> for Constant {
        type Model = Lookup;

        fn fit(&self, _: &[Vec<f64>], _: &[f64]) -> Result<Lookup> {
            Ok(Lookup(Vec::new()))
        }
    }

    fn stacking_fixture() -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
        let y: Vec<f64> = (0..40).map(|i| 1.0 + ((i * 7) % 11) as f64 / 5.0).collect();
        let meta: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i % 3) as f64, (i % 2) as f64])
            .collect();
        let base: Vec<Vec<f64>> = y.iter().map(|&v| vec![v]).collect();
        (base, meta, y)
    }

    #[test]
    fn constant_base_matches_meta_alone() {
        let (base, meta, y) = stacking_fixture();
        let svr = SvrLearner {
            config: SvrConfig::default(),
            feature_names: vec!["m0".into(), "m1".into(), "base".into()],
        };
        let (_, stacked, audit) =
            train_stacked("stacked", &base, &meta, &y, 5, 2, &Constant, &svr).unwrap();
        assert!(audit.is_clean());
        let plain = SvrLearner {
            config: SvrConfig::default(),
            feature_names: vec!["m0".into(), "m1".into()],
        };
        let alone = kfold_cv("boolean", &meta, &y, 5, 2, &plain, false).unwrap();
        assert!((stacked.report.rmse - alone.report.rmse).abs() < 1e-9);
        assert!((stacked.report.pearson - alone.report.pearson).abs() < 1e-9);
    }

    /// Passes the only feature through as the prediction.
    struct Identity;

    struct First;

    impl Predictor<Vec<f64>, f64> for First {
        fn predict(&self, row: &Vec<f64>) -> Result<f64> {
            Ok(row[0])
        }
    }

    impl Learner<Vec<f64>, f64> for Identity {
        type Model = First;

        fn fit(&self, _: &[Vec<f64>], _: &[f64]) -> Result<First> {
            Ok(First)
        }
    }

    #[test]
    fn informative_base_helps() {
        let (base, meta, y) = stacking_fixture();
        let svr = SvrLearner {
            config: SvrConfig::default(),
            feature_names: vec!["m0".into(), "m1".into(), "base".into()],
        };
        let (model, stacked, audit) =
            train_stacked("stacked", &base, &meta, &y, 5, 2, &Identity, &svr).unwrap();
        assert!(audit.is_clean());
        let plain = SvrLearner {
            config: SvrConfig::default(),
            feature_names: vec!["m0".into(), "m1".into()],
        };
        let alone = kfold_cv("boolean", &meta, &y, 5, 2, &plain, false).unwrap();
        assert!(stacked.report.rmse <= alone.report.rmse);
        let p = model.predict(&base[0], &meta[0]).unwrap();
        assert!((1.0..=3.0).contains(&p));
    }

    #[test]
    fn leaky_audit_detected() {
        let audit = StackingAudit {
            records: vec![(3, 0)],
            training_sets: vec![vec![1, 2, 3]],
        };
        assert!(!audit.is_clean());
    }

    #[test]
    fn decoding() {
        assert_eq!(expected_score_decode(&[1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(expected_score_decode(&[0.0, 0.0, 1.0]).unwrap(), 3.0);
        let third = 1.0 / 3.0;
        assert_relative_eq!(
            expected_score_decode(&[third, third, third]).unwrap(),
            2.0,
            epsilon = 1e-12
        );
        assert!(expected_score_decode(&[0.5, 0.6, 0.0]).is_err());
        assert!(expected_score_decode(&[0.5, 0.5]).is_err());
    }

    #[test]
    fn buckets_round_half_up() {
        assert_eq!(bucket_label(1.0), 0);
        assert_eq!(bucket_label(1.49), 0);
        assert_eq!(bucket_label(1.5), 1);
        assert_eq!(bucket_label(2.33), 1);
        assert_eq!(bucket_label(2.5), 2);
        assert_eq!(bucket_label(3.0), 2);
    }

    #[test]
    fn separable_classes_fit_exactly() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 / 10.0]).collect();
        let y: Vec<f64> = (0..30).map(|i| 1.0 + (i / 10) as f64).collect();
        let clf = train_similarity_classifier(&x, &y, &LogisticLearner::default()).unwrap();
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(clf.predict_class(xi).unwrap(), bucket_label(yi));
            let s = clf.predict(xi).unwrap();
            assert!((1.0..=3.0).contains(&s));
        }
    }

    #[test]
    fn single_class_fallback() {
        let x = vec![vec![0.1], vec![0.7], vec![0.3]];
        let clf = train_similarity_classifier(&x, &[2.33, 2.0, 1.67], &LogisticLearner::default())
            .unwrap();
        assert_eq!(clf.fit, ClassifierFit::SingleClass(1));
        assert_eq!(clf.predict(&vec![5.0]).unwrap(), 2.0);
    }
}
