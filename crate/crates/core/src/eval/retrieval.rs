//! Gallery ranking and retrieval metrics.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{contract_err, shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Cosine,
    Euclidean,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Cosine => "cosine",
            Metric::Euclidean => "euclidean",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Metric::Cosine),
            "euclidean" => Ok(Metric::Euclidean),
            _ => Err(Error::Param(format!("unknown metric {s:?} (expected cosine or euclidean)"))),
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Distance between a query and a gallery item. A zero gallery vector has
/// cosine distance 1 to everything.
pub fn distance(query: &[f64], item: &[f64], metric: Metric) -> f64 {
    match metric {
        Metric::Euclidean => query.iter().zip(item).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
        Metric::Cosine => {
            let (nq, ni) = (norm(query), norm(item));
            if ni == 0.0 || nq == 0.0 {
                return 1.0;
            }
            1.0 - query.iter().zip(item).map(|(a, b)| a * b).sum::<f64>() / (nq * ni)
        }
    }
}

/// Gallery indices by ascending distance; equal distances keep index order.
pub fn rank_gallery(query: &[f64], gallery: &[Vec<f64>], metric: Metric) -> Result<Vec<usize>> {
    if gallery.is_empty() {
        return Err(contract_err!("cannot rank an empty gallery"));
    }
    if let Some(bad) = gallery.iter().position(|g| g.len() != query.len()) {
        return Err(shape_err!("gallery item {bad} has {} dims, query has {}", gallery[bad].len(), query.len()));
    }
    if metric == Metric::Cosine && norm(query) == 0.0 {
        return Err(contract_err!("zero query vector has no cosine direction"));
    }
    let d: Vec<f64> = gallery.iter().map(|g| distance(query, g, metric)).collect();
    let mut order: Vec<usize> = (0..gallery.len()).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    Ok(order)
}

/// One query's ranking: gallery ids in rank order with relevance flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query: usize,
    pub query_label: usize,
    pub gallery: Vec<usize>,
    pub relevant: Vec<bool>,
}

/// Uses every row as a query against all other rows (leave-one-out).
pub fn rank_all(features: &[Vec<f64>], labels: &[usize], metric: Metric) -> Result<Vec<RankedList>> {
    if features.len() != labels.len() {
        return Err(shape_err!("{} feature rows for {} labels", features.len(), labels.len()));
    }
    if features.len() < 2 {
        return Err(contract_err!("retrieval needs at least two items"));
    }
    (0..features.len())
        .map(|q| {
            let ids: Vec<usize> = (0..features.len()).filter(|&i| i != q).collect();
            let gallery: Vec<Vec<f64>> = ids.iter().map(|&i| features[i].clone()).collect();
            let order = rank_gallery(&features[q], &gallery, metric)?;
            let ranked: Vec<usize> = order.iter().map(|&o| ids[o]).collect();
            Ok(RankedList {
                query: q,
                query_label: labels[q],
                relevant: ranked.iter().map(|&i| labels[i] == labels[q]).collect(),
                gallery: ranked,
            })
        })
        .collect()
}

/// Mean over relevant ranks of precision at that rank; `None` without relevant items.
pub fn average_precision(relevant: &[bool]) -> Option<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (r, &rel) in relevant.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

/// Binary-gain NDCG with `log2(rank + 1)` discount over the whole list.
pub fn ndcg(relevant: &[bool]) -> Option<f64> {
    let total = relevant.iter().filter(|&&r| r).count();
    if total == 0 {
        return None;
    }
    let disc = |r: usize| 1.0 / ((r + 2) as f64).log2();
    let dcg: f64 = relevant.iter().enumerate().filter(|(_, &r)| r).map(|(i, _)| disc(i)).sum();
    let ideal: f64 = (0..total).map(disc).sum();
    Some(dcg / ideal)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_counts(tp: usize, retrieved: usize, relevant: usize) -> Self {
        let precision = if retrieved > 0 { tp as f64 / retrieved as f64 } else { 0.0 };
        let recall = if relevant > 0 { tp as f64 / relevant as f64 } else { 0.0 };
        Self { precision, recall, f1: f1(precision, recall) }
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalReport {
    pub queries: usize,
    /// Queries dropped because nothing in their gallery was relevant.
    pub excluded: Vec<usize>,
    pub map: f64,
    pub ndcg: f64,
    /// Mean `(recall@k, precision@k)` over queries for k = 1, 2, ...
    pub pr_curve: Vec<(f64, f64)>,
    pub micro: Prf,
    pub macro_avg: Prf,
}

/// mAP, NDCG, PR curve and micro/macro P/R/F1.
///
/// P/R/F1 use a per-query cutoff equal to the number of relevant gallery
/// items. Micro sums hit counts over all queries; macro computes the same
/// per query class and averages the classes with equal weight.
pub fn retrieval_metrics(lists: &[RankedList]) -> Result<RetrievalReport> {
    let mut excluded = Vec::new();
    let mut aps = Vec::new();
    let mut ndcgs = Vec::new();
    let mut kept = Vec::new();
    for l in lists {
        if l.relevant.len() != l.gallery.len() {
            return Err(shape_err!("query {}: relevance flags do not match gallery", l.query));
        }
        match (average_precision(&l.relevant), ndcg(&l.relevant)) {
            (Some(ap), Some(n)) => {
                aps.push(ap);
                ndcgs.push(n);
                kept.push(l);
            }
            _ => excluded.push(l.query),
        }
    }
    if kept.is_empty() {
        return Err(contract_err!("no query has a relevant gallery item"));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;

    let max_len = kept.iter().map(|l| l.relevant.len()).max().unwrap_or(0);
    let mut pr_curve = Vec::with_capacity(max_len);
    for k in 1..=max_len {
        let (mut r_sum, mut p_sum, mut n) = (0.0, 0.0, 0usize);
        for l in kept.iter().filter(|l| l.relevant.len() >= k) {
            let total = l.relevant.iter().filter(|&&r| r).count();
            let hits = l.relevant[..k].iter().filter(|&&r| r).count();
            r_sum += hits as f64 / total as f64;
            p_sum += hits as f64 / k as f64;
            n += 1;
        }
        pr_curve.push((r_sum / n as f64, p_sum / n as f64));
    }

    let mut per_class: BTreeMap<usize, (usize, usize, usize)> = BTreeMap::new();
    let (mut tp, mut ret, mut rel) = (0, 0, 0);
    for l in &kept {
        let total = l.relevant.iter().filter(|&&r| r).count();
        let hits = l.relevant[..total].iter().filter(|&&r| r).count();
        tp += hits;
        ret += total;
        rel += total;
        let e = per_class.entry(l.query_label).or_default();
        e.0 += hits;
        e.1 += total;
        e.2 += total;
    }
    let classes: Vec<Prf> = per_class.values().map(|&(t, r, v)| Prf::from_counts(t, r, v)).collect();
    let macro_avg = Prf {
        precision: mean(&classes.iter().map(|c| c.precision).collect::<Vec<_>>()),
        recall: mean(&classes.iter().map(|c| c.recall).collect::<Vec<_>>()),
        f1: mean(&classes.iter().map(|c| c.f1).collect::<Vec<_>>()),
    };

    Ok(RetrievalReport {
        queries: lists.len(),
        excluded,
        map: mean(&aps),
        ndcg: mean(&ndcgs),
        pr_curve,
        micro: Prf::from_counts(tp, ret, rel),
        macro_avg,
    })
}
