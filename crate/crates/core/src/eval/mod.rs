//! Linear-probe classification, retrieval metrics, feature algebra and the
//! pooling comparison.

mod aggregation;
mod classifier;
mod retrieval;

pub use aggregation::{compare_aggregation, AggregationRow, TrainedModel, AGGREGATION_COLUMNS};
pub use classifier::{train_linear_classifier, train_linear_classifier_with, LinearClassifier, SvmConfig};
pub use retrieval::{
    average_precision, distance, ndcg, rank_all, rank_gallery, retrieval_metrics, Metric, Prf, RankedList,
    RetrievalReport,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{contract_err, param_err, shape_err, Result};
use crate::layers::derive_seed;

/// Per-dimension standardization fitted on one subset of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Constant dimensions get scale 1 so they map to zero.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(contract_err!("cannot fit a standardizer on zero rows"));
        };
        let n = rows.len() as f64;
        let dim = first.len();
        let mut mean = vec![0.0; dim];
        for r in rows {
            if r.len() != dim {
                return Err(shape_err!("feature rows differ in length"));
            }
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; dim];
        for r in rows {
            var.iter_mut().zip(r.iter().zip(&mean)).for_each(|(s, (v, m))| *s += (v - m) * (v - m) / n);
        }
        let scale = var.iter().map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 }).collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| r.iter().zip(self.mean.iter().zip(&self.scale)).map(|(v, (m, s))| (v - m) / s).collect())
            .collect()
    }
}

/// Instance accuracy and the unweighted mean of per-class recalls.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<(f64, f64)> {
    if predictions.len() != labels.len() {
        return Err(shape_err!("{} predictions for {} labels", predictions.len(), labels.len()));
    }
    if labels.is_empty() {
        return Err(contract_err!("accuracy of an empty set is undefined"));
    }
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let recall_sum: f64 = classes
        .iter()
        .map(|&c| {
            let members = labels.iter().filter(|&&l| l == c).count();
            let hit = predictions.iter().zip(labels).filter(|&(&p, &l)| l == c && p == c).count();
            hit as f64 / members as f64
        })
        .sum();
    Ok((correct as f64 / labels.len() as f64, recall_sum / classes.len() as f64))
}

/// Standardizes on the training rows, fits the linear classifier there and
/// scores the test rows. Returns `(instance, class-averaged)` accuracy.
pub fn probe_accuracy(
    train_x: &[Vec<f64>],
    train_y: &[usize],
    test_x: &[Vec<f64>],
    test_y: &[usize],
    cfg: &SvmConfig,
) -> Result<(f64, f64)> {
    let std = Standardizer::fit(train_x)?;
    let clf = train_linear_classifier_with(&std.apply(train_x), train_y, cfg)?;
    accuracy(&clf.predict(&std.apply(test_x)), test_y)
}

/// Splits rows by a train mask and runs [`probe_accuracy`].
pub fn probe_split(features: &[Vec<f64>], labels: &[usize], is_train: &[bool], cfg: &SvmConfig) -> Result<(f64, f64)> {
    if features.len() != labels.len() || labels.len() != is_train.len() {
        return Err(shape_err!("features, labels and split flags differ in length"));
    }
    let pick = |train: bool| -> (Vec<Vec<f64>>, Vec<usize>) {
        (0..labels.len()).filter(|&i| is_train[i] == train).map(|i| (features[i].clone(), labels[i])).unzip()
    };
    let (tx, ty) = pick(true);
    let (vx, vy) = pick(false);
    probe_accuracy(&tx, &ty, &vx, &vy, cfg)
}

/// Probe accuracy of features that carry no information.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullModel {
    pub trials: usize,
    pub mean: f64,
    pub max: f64,
}

/// Runs the probe on i.i.d. Gaussian features of width `dim` with the given
/// labels and split, `trials` times. The spread of the results is the band
/// a learned feature must clear before its accuracy means anything.
pub fn null_model_accuracy(
    labels: &[usize],
    is_train: &[bool],
    dim: usize,
    trials: usize,
    seed: u64,
    cfg: &SvmConfig,
) -> Result<NullModel> {
    if trials == 0 || dim == 0 {
        return Err(param_err!("null model needs at least one trial and one dimension"));
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut accs = Vec::with_capacity(trials);
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
        let rows: Vec<Vec<f64>> =
            labels.iter().map(|_| (0..dim).map(|_| normal.sample(&mut rng)).collect()).collect();
        accs.push(probe_split(&rows, labels, is_train, cfg)?.0);
    }
    Ok(NullModel {
        trials,
        mean: accs.iter().sum::<f64>() / trials as f64,
        max: accs.iter().copied().fold(f64::MIN, f64::max),
    })
}

/// The `k` rows nearest to `F_a − F_b + F_c`, excluding `a`, `b` and `c`.
pub fn feature_algebra(rows: &[Vec<f64>], a: usize, b: usize, c: usize, k: usize, metric: Metric) -> Result<Vec<usize>> {
    for (name, i) in [("a", a), ("b", b), ("c", c)] {
        if i >= rows.len() {
            return Err(param_err!("shape index {name}={i} out of range for {} rows", rows.len()));
        }
    }
    let ids: Vec<usize> = (0..rows.len()).filter(|i| ![a, b, c].contains(i)).collect();
    if k > ids.len() {
        return Err(param_err!("k={k} exceeds the {} remaining shapes", ids.len()));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let query: Vec<f64> = rows[a].iter().zip(&rows[b]).zip(&rows[c]).map(|((x, y), z)| x - y + z).collect();
    let gallery: Vec<Vec<f64>> = ids.iter().map(|&i| rows[i].clone()).collect();
    let order = rank_gallery(&query, &gallery, metric)?;
    Ok(order.into_iter().take(k).map(|o| ids[o]).collect())
}
