//! One-vs-rest linear SVM trained by full-batch gradient descent.

use crate::error::{contract_err, param_err, shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    /// Hinge-loss weight `C`.
    pub c: f64,
    pub max_epochs: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { c: 1.0, max_epochs: 500 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    /// Distinct training labels, ascending; row `k` of `weights` scores `classes[k]`.
    pub classes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    /// Training frequency of each class, used to break exact score ties.
    pub priors: Vec<usize>,
    /// Sum over binary problems of the objective after each epoch.
    pub history: Vec<f64>,
}

struct Binary<'a> {
    x: &'a [Vec<f64>],
    y: Vec<f64>,
    c: f64,
}

impl Binary<'_> {
    fn objective(&self, w: &[f64], b: f64) -> f64 {
        let reg = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
        let hinge: f64 = self.x.iter().zip(&self.y).map(|(xi, &yi)| (1.0 - yi * (dot(w, xi) + b)).max(0.0)).sum();
        reg + self.c * hinge
    }

    fn subgradient(&self, w: &[f64], b: f64) -> (Vec<f64>, f64) {
        let mut gw = w.to_vec();
        let mut gb = 0.0;
        for (xi, &yi) in self.x.iter().zip(&self.y) {
            if yi * (dot(w, xi) + b) < 1.0 {
                gw.iter_mut().zip(xi).for_each(|(g, &v)| *g -= self.c * yi * v);
                gb -= self.c * yi;
            }
        }
        (gw, gb)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Trains with default settings (`C = 1`).
pub fn train_linear_classifier(features: &[Vec<f64>], labels: &[usize], c: f64) -> Result<LinearClassifier> {
    train_linear_classifier_with(features, labels, &SvmConfig { c, ..SvmConfig::default() })
}

/// Minimizes `½‖w‖² + C Σ max(0, 1 − y(w·x + b))` per class. Each step
/// backtracks until the objective does not increase, so the recorded
/// history is non-increasing; a problem stops once no step helps.
pub fn train_linear_classifier_with(features: &[Vec<f64>], labels: &[usize], cfg: &SvmConfig) -> Result<LinearClassifier> {
    if features.len() != labels.len() {
        return Err(shape_err!("{} feature rows for {} labels", features.len(), labels.len()));
    }
    if !(cfg.c > 0.0) {
        return Err(param_err!("C must be positive, got {}", cfg.c));
    }
    let dim = features.first().map_or(0, Vec::len);
    if features.iter().any(|r| r.len() != dim) {
        return Err(shape_err!("feature rows differ in length"));
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(contract_err!("features contain non-finite values"));
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(contract_err!("classifier needs at least two classes, got {}", classes.len()));
    }
    let priors = classes.iter().map(|c| labels.iter().filter(|&&l| l == *c).count()).collect();

    let problems: Vec<Binary> = classes
        .iter()
        .map(|&k| Binary {
            x: features,
            y: labels.iter().map(|&l| if l == k { 1.0 } else { -1.0 }).collect(),
            c: cfg.c,
        })
        .collect();
    let mut weights = vec![vec![0.0; dim]; classes.len()];
    let mut bias = vec![0.0; classes.len()];
    let mut objs: Vec<f64> = problems.iter().map(|p| p.objective(&weights[0], 0.0)).collect();
    let mut steps = vec![1.0 / (1.0 + cfg.c * features.len() as f64); classes.len()];
    let mut active = vec![true; classes.len()];
    let mut history = Vec::with_capacity(cfg.max_epochs);
    for _ in 0..cfg.max_epochs {
        for k in 0..classes.len() {
            if !active[k] {
                continue;
            }
            let p = &problems[k];
            let (gw, gb) = p.subgradient(&weights[k], bias[k]);
            let mut eta = steps[k] * 2.0;
            let mut accepted = false;
            for _ in 0..40 {
                let w: Vec<f64> = weights[k].iter().zip(&gw).map(|(a, g)| a - eta * g).collect();
                let b = bias[k] - eta * gb;
                let o = p.objective(&w, b);
                if o < objs[k] {
                    weights[k] = w;
                    bias[k] = b;
                    objs[k] = o;
                    steps[k] = eta;
                    accepted = true;
                    break;
                }
                eta *= 0.5;
            }
            active[k] = accepted;
        }
        history.push(objs.iter().sum());
        if active.iter().all(|a| !a) {
            break;
        }
    }
    Ok(LinearClassifier { classes, weights, bias, priors, history })
}

impl LinearClassifier {
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.weights.iter().zip(&self.bias).map(|(w, b)| dot(w, x) + b).collect()
    }

    pub fn predict_one(&self, x: &[f64]) -> usize {
        let s = self.scores(x);
        let mut best = 0;
        for k in 1..s.len() {
            if s[k] > s[best] || (s[k] == s[best] && self.priors[k] > self.priors[best]) {
                best = k;
            }
        }
        self.classes[best]
    }

    pub fn predict(&self, features: &[Vec<f64>]) -> Vec<usize> {
        features.iter().map(|x| self.predict_one(x)).collect()
    }
}
