//! Confusion matrix, per-class precision/recall/F1, macro-F1 and accuracy.

use serde::{Deserialize, Serialize};

/// `counts[truth][prediction]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassMetrics>,
    pub macro_f1: f64,
    pub accuracy: f64,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize, truth: &[usize], pred: &[usize]) -> Self {
        assert_eq!(truth.len(), pred.len(), "truth and prediction lengths differ");
        let mut counts = vec![vec![0; n_classes]; n_classes];
        for (&t, &p) in truth.iter().zip(pred) {
            counts[t][p] += 1;
        }
        Self { counts }
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    pub fn from_predictions(n_classes: usize, truth: &[usize], pred: &[usize]) -> Self {
        let confusion = ConfusionMatrix::new(n_classes, truth, pred);
        let c = &confusion.counts;
        let per_class: Vec<ClassMetrics> = (0..n_classes)
            .map(|k| {
                let tp = c[k][k];
                let support: usize = c[k].iter().sum();
                let predicted: usize = c.iter().map(|r| r[k]).sum();
                let precision = ratio(tp, predicted);
                let recall = ratio(tp, support);
                let f1 = if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else {
                    0.0
                };
                ClassMetrics {
                    precision,
                    recall,
                    f1,
                    support,
                }
            })
            .collect();
        let macro_f1 = per_class.iter().map(|m| m.f1).sum::<f64>() / n_classes as f64;
        let correct: usize = (0..n_classes).map(|k| c[k][k]).sum();
        let accuracy = ratio(correct, truth.len());
        Self {
            confusion,
            per_class,
            macro_f1,
            accuracy,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 3, 3, 1];
        let m = Metrics::from_predictions(4, &y, &y);
        assert_eq!(m.macro_f1, 1.0);
        assert_eq!(m.accuracy, 1.0);
    }

    #[test]
    fn always_class_zero_on_balanced_binary() {
        let truth = [0, 0, 1, 1];
        let m = Metrics::from_predictions(2, &truth, &[0; 4]);
        assert!((m.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.per_class[1].f1, 0.0);
        assert!((m.macro_f1 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.per_class[1].precision, 0.0);
    }

    proptest! {
        #[test]
        fn counting_and_permutation(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60), shift in 1usize..4) {
            let (truth, pred): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let m = Metrics::from_predictions(4, &truth, &pred);
            for k in 0..4 {
                let support = truth.iter().filter(|&&t| t == k).count();
                prop_assert_eq!(m.confusion.counts[k].iter().sum::<usize>(), support);
                let r = m.per_class[k];
                for v in [r.precision, r.recall, r.f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
            let perm = |v: &[usize]| v.iter().map(|x| (x + shift) % 4).collect::<Vec<_>>();
            let p = Metrics::from_predictions(4, &perm(&truth), &perm(&pred));
            prop_assert!((p.macro_f1 - m.macro_f1).abs() < 1e-12);
            prop_assert_eq!(p.accuracy, m.accuracy);
        }
    }
}
