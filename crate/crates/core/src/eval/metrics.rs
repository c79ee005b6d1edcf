//! Classification metrics.

/// Precision, recall and F-measure for a binary prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

/// Which classes the reported precision and recall describe. The F-measure
/// is always support-weighted over both classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrfMode {
    /// Precision and recall of class 1.
    #[default]
    PositiveClass,
    /// Support-weighted precision and recall over both classes.
    Weighted,
}

fn f_score(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class `(precision, recall, f, support)` for labels in {0, 1}.
pub fn per_class(pred: &[u8], truth: &[u8]) -> [(f64, f64, f64, usize); 2] {
    assert_eq!(pred.len(), truth.len(), "prediction/truth length mismatch");
    let mut cm = [[0usize; 2]; 2]; // cm[truth][pred]
    for (&p, &t) in pred.iter().zip(truth) {
        cm[t as usize][p as usize] += 1;
    }
    [0, 1].map(|c| {
        let tp = cm[c][c];
        let predicted = cm[0][c] + cm[1][c];
        let support = cm[c][0] + cm[c][1];
        let p = ratio(tp, predicted);
        let r = ratio(tp, support);
        (p, r, f_score(p, r), support)
    })
}

pub fn prf_weighted(pred: &[u8], truth: &[u8]) -> Prf {
    prf_with_mode(pred, truth, PrfMode::PositiveClass)
}

pub fn prf_with_mode(pred: &[u8], truth: &[u8], mode: PrfMode) -> Prf {
    assert!(!truth.is_empty(), "empty evaluation set");
    let classes = per_class(pred, truth);
    let n = truth.len() as f64;
    let weighted = |i: usize| {
        classes
            .iter()
            .map(|c| [c.0, c.1, c.2][i] * c.3 as f64)
            .sum::<f64>()
            / n
    };
    let f = weighted(2);
    match mode {
        PrfMode::PositiveClass => Prf {
            precision: classes[1].0,
            recall: classes[1].1,
            f,
        },
        PrfMode::Weighted => Prf {
            precision: weighted(0),
            recall: weighted(1),
            f,
        },
    }
}

/// Median of a sample; mean of the two middle values for even sizes.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect() {
        let t = [1, 0, 1, 0, 1];
        let m = prf_weighted(&t, &t);
        assert_eq!((m.precision, m.recall, m.f), (1.0, 1.0, 1.0));
    }

    #[test]
    fn all_positive_on_balanced() {
        let m = prf_weighted(&[1, 1, 1, 1], &[1, 0, 1, 0]);
        assert_eq!(m.precision, 0.5);
        assert_eq!(m.recall, 1.0);
    }

    #[test]
    fn hand_enumerated_confusion_matrix() {
        // truth\pred: (1,1) (0,0) (0,1) (1,1)
        // class 1: tp=2 fp=1 fn=0 -> P=2/3 R=1 F=0.8
        // class 0: tp=1 fp=0 fn=1 -> P=1 R=1/2 F=2/3
        // support 2/2 -> weighted F = (0.8 + 2/3) / 2
        let m = prf_weighted(&[1, 0, 1, 1], &[1, 0, 0, 1]);
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.recall, 1.0);
        assert!((m.f - (0.8 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        let w = prf_with_mode(&[1, 0, 1, 1], &[1, 0, 0, 1], PrfMode::Weighted);
        assert!((w.precision - (2.0 / 3.0 + 1.0) / 2.0).abs() < 1e-15);
        assert!((w.recall - 0.75).abs() < 1e-15);
    }

    #[test]
    fn no_positive_predictions_gives_zero_not_nan() {
        let m = prf_weighted(&[0, 0], &[1, 0]);
        assert_eq!(m.precision, 0.0);
        assert!(m.f.is_finite());
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
