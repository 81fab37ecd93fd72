use proptest::prelude::*;
use vipgan::eval::{
    average_precision, ndcg, null_model_accuracy, probe_split, rank_all, rank_gallery, retrieval_metrics,
    train_linear_classifier, Metric, SvmConfig,
};

/// AP from pairwise counts: for each relevant item at 1-based rank r, the
/// number of relevant items ranked at or above it, divided by r.
fn brute_force_ap(relevant: &[bool]) -> Option<f64> {
    let ranks: Vec<usize> = (0..relevant.len()).filter(|&i| relevant[i]).map(|i| i + 1).collect();
    if ranks.is_empty() {
        return None;
    }
    let sum: f64 = ranks.iter().map(|&r| ranks.iter().filter(|&&q| q <= r).count() as f64 / r as f64).sum();
    Some(sum / ranks.len() as f64)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn ap_matches_brute_force_for_every_pattern_up_to_six() {
    for n in 1..=6 {
        for mask in 0u32..(1 << n) {
            let rel: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
            match (average_precision(&rel), brute_force_ap(&rel)) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12, "{rel:?}: {a} vs {b}"),
                (a, b) => assert_eq!(a, b, "{rel:?}"),
            }
        }
    }
}

#[test]
fn map_matches_brute_force_over_all_gallery_orders() {
    // query label 0 at the origin; gallery items are placed at distances
    // given by each permutation so the ranking is exactly that permutation
    let gallery_labels = [0usize, 1, 0, 1, 1, 0];
    for perm in permutations(gallery_labels.len()) {
        let mut features = vec![vec![0.0]];
        let mut labels = vec![0usize];
        for (item, &label) in gallery_labels.iter().enumerate() {
            features.push(vec![1.0 + perm[item] as f64]);
            labels.push(label);
        }
        let order = rank_gallery(&features[0], &features[1..], Metric::Euclidean).unwrap();
        let rel: Vec<bool> = order.iter().map(|&i| gallery_labels[i] == 0).collect();
        let lists = rank_all(&features, &labels, Metric::Euclidean).unwrap();
        assert_eq!(lists[0].relevant, rel);
        let expected_query0 = brute_force_ap(&rel).unwrap();
        assert!((average_precision(&lists[0].relevant).unwrap() - expected_query0).abs() < 1e-12);
        let per_query: Vec<f64> = lists.iter().filter_map(|l| brute_force_ap(&l.relevant)).collect();
        let map = retrieval_metrics(&lists).unwrap().map;
        assert!((map - per_query.iter().sum::<f64>() / per_query.len() as f64).abs() < 1e-12);
    }
}

#[test]
fn worked_metric_examples() {
    let ap = average_precision(&[true, false, true]).unwrap();
    assert!((ap - 5.0 / 6.0).abs() <= f64::EPSILON, "{ap}");
    let n = ndcg(&[false, true]).unwrap();
    assert!((n - 1.0 / 3f64.log2()).abs() <= f64::EPSILON, "{n}");
}

#[test]
fn separable_data_is_classified_perfectly() {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..30 {
        let c = i % 3;
        let t = i as f64 * 0.01;
        x.push(match c {
            0 => vec![2.0 + t, 0.0],
            1 => vec![-2.0, 2.0 + t],
            _ => vec![-2.0 - t, -2.0],
        });
        y.push(c);
    }
    let clf = train_linear_classifier(&x, &y, 1.0).unwrap();
    assert_eq!(clf.predict(&x), y);
}

#[test]
fn identical_features_predict_the_majority() {
    let x = vec![vec![0.5, -0.5]; 10];
    let y: Vec<usize> = (0..10).map(|i| usize::from(i >= 7)).collect();
    let clf = train_linear_classifier(&x, &y, 1.0).unwrap();
    assert!(clf.predict(&x).iter().all(|&p| p == 0));
}

#[test]
fn objective_history_never_increases_on_random_labels() {
    let mut state = 7u64;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let x: Vec<Vec<f64>> = (0..50).map(|_| (0..4).map(|_| next() * 2.0 - 1.0).collect()).collect();
    let y: Vec<usize> = (0..50).map(|_| (next() * 3.0) as usize).collect();
    let clf = train_linear_classifier(&x, &y, 1.0).unwrap();
    assert!(clf.history.len() > 1);
    assert!(clf.history.windows(2).all(|w| w[1] <= w[0]), "{:?}", clf.history);
}

#[test]
fn null_model_sits_near_chance() {
    // six balanced classes, 16 train and 4 test shapes each
    let labels: Vec<usize> = (0..120).map(|i| i / 20).collect();
    let is_train: Vec<bool> = (0..120).map(|i| i % 20 < 16).collect();
    let null = null_model_accuracy(&labels, &is_train, 256, 20, 3, &SvmConfig::default()).unwrap();
    assert!((null.mean - 1.0 / 6.0).abs() < 0.08, "{null:?}");
    assert!(null.max < 1.0 / 6.0 + 0.25, "{null:?}");
}

#[test]
fn probe_on_informative_features_beats_null() {
    let labels: Vec<usize> = (0..60).map(|i| i / 20).collect();
    let is_train: Vec<bool> = (0..60).map(|i| i % 20 < 15).collect();
    let rows: Vec<Vec<f64>> = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| (0..3).map(|c| if c == l { 1.0 } else { 0.0 } + 0.05 * ((i * 7 + c) % 5) as f64).collect())
        .collect();
    assert_eq!(probe_split(&rows, &labels, &is_train, &SvmConfig::default()).unwrap().0, 1.0);
}

fn vectors(n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, dim), n)
}

proptest! {
    #[test]
    fn cosine_ranking_ignores_positive_scale(
        q in prop::collection::vec(0.1f64..5.0, 4),
        gallery in vectors(6, 4),
        s in 0.1f64..10.0,
        t in 0.1f64..10.0,
    ) {
        let base = rank_gallery(&q, &gallery, Metric::Cosine).unwrap();
        let q2: Vec<f64> = q.iter().map(|v| v * s).collect();
        let g2: Vec<Vec<f64>> = gallery.iter().map(|g| g.iter().map(|v| v * t).collect()).collect();
        let d1: Vec<f64> = base.iter().map(|&i| vipgan::eval::distance(&q, &gallery[i], Metric::Cosine)).collect();
        let scaled = rank_gallery(&q2, &g2, Metric::Cosine).unwrap();
        let d2: Vec<f64> = scaled.iter().map(|&i| vipgan::eval::distance(&q, &gallery[i], Metric::Cosine)).collect();
        // equal up to rounding-level ties
        for (a, b) in d1.iter().zip(&d2) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn metric_ranges(rel in prop::collection::vec(any::<bool>(), 1..12)) {
        match (average_precision(&rel), ndcg(&rel)) {
            (Some(ap), Some(n)) => {
                prop_assert!((0.0..=1.0).contains(&ap) && (0.0..=1.0 + 1e-12).contains(&n));
                let r = rel.iter().filter(|&&b| b).count();
                let front = rel[..r].iter().all(|&b| b);
                prop_assert_eq!(ap == 1.0, front);
            }
            (None, None) => prop_assert!(rel.iter().all(|&b| !b)),
            _ => prop_assert!(false, "AP and NDCG disagree on whether anything is relevant"),
        }
    }

    #[test]
    fn micro_equals_macro_when_classes_are_balanced(rows in vectors(12, 3)) {
        // four classes of three: every query has exactly two relevant items,
        // so the cutoff and denominators agree across queries
        let labels: Vec<usize> = (0..12).map(|i| i / 3).collect();
        let lists = rank_all(&rows, &labels, Metric::Euclidean).unwrap();
        let rep = retrieval_metrics(&lists).unwrap();
        prop_assert!((rep.micro.precision - rep.macro_avg.precision).abs() < 1e-12);
        prop_assert!((rep.micro.recall - rep.macro_avg.recall).abs() < 1e-12);
    }
}
