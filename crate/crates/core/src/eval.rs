//! Confusion matrices and per-class precision / recall / F1 reports.

use std::fmt::Write as _;

use thiserror::Error;

use crate::tone::{ToneCategory, NUM_TONES};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("truth has {truth} labels but predictions have {pred}")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("class code {0} out of range")]
    CodeOutOfRange(usize),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
}

/// Rows are true class codes, columns predicted class codes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_TONES]; NUM_TONES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_TONES).map(|i| self.counts[i][i]).sum()
    }

    /// True examples of class `c` (row sum).
    pub fn support(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    /// Predictions of class `c` (column sum).
    pub fn predicted(&self, c: usize) -> u64 {
        (0..NUM_TONES).map(|t| self.counts[t][c]).sum()
    }
}

pub fn confusion_matrix(truth: &[usize], pred: &[usize]) -> Result<ConfusionMatrix, EvalError> {
    if truth.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            truth: truth.len(),
            pred: pred.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in truth.iter().zip(pred) {
        if t >= NUM_TONES {
            return Err(EvalError::CodeOutOfRange(t));
        }
        if p >= NUM_TONES {
            return Err(EvalError::CodeOutOfRange(p));
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationReport {
    pub per_class: [ClassMetrics; NUM_TONES],
    pub accuracy: f64,
    pub total: u64,
    pub macro_avg: ClassMetrics,
    pub weighted_avg: ClassMetrics,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Unweighted and support-weighted means of per-class rows. Both carry the
/// summed support.
pub fn aggregate_rows(rows: &[ClassMetrics]) -> (ClassMetrics, ClassMetrics) {
    let n = rows.len() as f64;
    let total: u64 = rows.iter().map(|r| r.support).sum();
    let mean = |f: fn(&ClassMetrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let weighted = |f: fn(&ClassMetrics) -> f64| {
        if total == 0 {
            0.0
        } else {
            rows.iter().map(|r| f(r) * r.support as f64).sum::<f64>() / total as f64
        }
    };
    (
        ClassMetrics {
            precision: mean(|r| r.precision),
            recall: mean(|r| r.recall),
            f1: mean(|r| r.f1),
            support: total,
        },
        ClassMetrics {
            precision: weighted(|r| r.precision),
            recall: weighted(|r| r.recall),
            f1: weighted(|r| r.f1),
            support: total,
        },
    )
}

pub fn classification_report(cm: &ConfusionMatrix) -> Result<ClassificationReport, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let mut per_class = [ClassMetrics::default(); NUM_TONES];
    for (c, row) in per_class.iter_mut().enumerate() {
        let tp = cm.counts[c][c];
        let precision = ratio(tp, cm.predicted(c));
        let recall = ratio(tp, cm.support(c));
        *row = ClassMetrics {
            precision,
            recall,
            f1: f1_score(precision, recall),
            support: cm.support(c),
        };
    }
    let (macro_avg, weighted_avg) = aggregate_rows(&per_class);
    Ok(ClassificationReport {
        per_class,
        accuracy: ratio(cm.trace(), total),
        total,
        macro_avg,
        weighted_avg,
    })
}

pub const REPORT_HEADER: &str = "Labels Precision Recall f1-score Support";

/// Fixed-width text table: one row per class, then Accuracy, Macro Average
/// and Weighted Average. Rates use two decimals.
pub fn render_report(report: &ClassificationReport) -> String {
    let mut out = String::new();
    out.push_str(REPORT_HEADER);
    out.push('\n');
    let row = |out: &mut String, label: &str, m: &ClassMetrics| {
        writeln!(
            out,
            "{label:<16} {:>9.2} {:>9.2} {:>9.2} {:>9}",
            m.precision, m.recall, m.f1, m.support
        )
        .expect("write to string");
    };
    for (c, m) in ToneCategory::ALL.iter().zip(&report.per_class) {
        row(&mut out, &c.label(), m);
    }
    writeln!(out, "{:<16} {:>9} {:>9} {:>9.2} {:>9}", "Accuracy", "", "", report.accuracy, report.total)
        .expect("write to string");
    row(&mut out, "Macro Average", &report.macro_avg);
    row(&mut out, "Weighted Average", &report.weighted_avg);
    out
}

/// CSV export with header `label,precision,recall,f1,support`; the accuracy
/// row repeats the accuracy in every rate column.
pub fn report_csv(report: &ClassificationReport) -> String {
    let mut out = String::from("label,precision,recall,f1,support\n");
    for (c, m) in ToneCategory::ALL.iter().zip(&report.per_class) {
        writeln!(out, "{},{},{},{},{}", c.label(), m.precision, m.recall, m.f1, m.support).expect("write");
    }
    let a = report.accuracy;
    writeln!(out, "accuracy,{a},{a},{a},{}", report.total).expect("write");
    for (name, m) in [("macro_avg", &report.macro_avg), ("weighted_avg", &report.weighted_avg)] {
        writeln!(out, "{name},{},{},{},{}", m.precision, m.recall, m.f1, m.support).expect("write");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn confusion_examples() {
        let cm = confusion_matrix(&[0, 1, 2, 6], &[0, 1, 2, 6]).unwrap();
        for t in 0..7 {
            for p in 0..7 {
                if t != p {
                    assert_eq!(cm.counts[t][p], 0);
                }
            }
        }
        let cm = confusion_matrix(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap();
        assert_eq!(cm.counts[0][0], 1);
        assert_eq!(cm.counts[0][1], 1);
        assert_eq!(cm.counts[1][1], 2);
        assert_eq!(cm.total(), 4);
        assert_eq!(confusion_matrix(&[], &[]).unwrap().total(), 0);
        assert!(matches!(confusion_matrix(&[0], &[]), Err(EvalError::LengthMismatch { .. })));
        assert!(matches!(confusion_matrix(&[7], &[0]), Err(EvalError::CodeOutOfRange(7))));
    }

    #[test]
    fn four_sample_report() {
        let cm = confusion_matrix(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap();
        let r = classification_report(&cm).unwrap();
        let c0 = r.per_class[0];
        assert_eq!(c0.precision, 1.0);
        assert_eq!(c0.recall, 0.5);
        assert!((c0.f1 - 2.0 / 3.0).abs() < 1e-15);
        let c1 = r.per_class[1];
        assert!((c1.precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c1.recall, 1.0);
        assert!((c1.f1 - 0.8).abs() < 1e-15);
        assert_eq!(r.accuracy, 0.75);
        assert_eq!(r.per_class[4], ClassMetrics::default());
    }

    #[test]
    fn perfect_diagonal() {
        let truth: Vec<usize> = (0..7).flat_map(|c| std::iter::repeat_n(c, c + 1)).collect();
        let r = classification_report(&confusion_matrix(&truth, &truth).unwrap()).unwrap();
        for m in &r.per_class {
            assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        }
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.macro_avg.f1, 1.0);
    }

    #[test]
    fn empty_matrix_rejected() {
        assert_eq!(classification_report(&ConfusionMatrix::default()), Err(EvalError::EmptyMatrix));
    }

    #[test]
    fn rendering_layout() {
        let cm = confusion_matrix(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap();
        let text = render_report(&classification_report(&cm).unwrap());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "Labels Precision Recall f1-score Support");
        assert_eq!(lines.len(), 11);
        let labels = ["0 (Sadness)", "1 (Analytical)", "2 (Joy)", "3 (Tentative)", "4 (Confident)", "5 (Anger)", "6 (Fear)"];
        for (line, label) in lines[1..8].iter().zip(labels) {
            assert!(line.starts_with(label), "{line}");
        }
        assert!(lines[8].starts_with("Accuracy"));
        assert!(lines[9].starts_with("Macro Average"));
        assert!(lines[10].starts_with("Weighted Average"));
        assert!(lines[1].contains(" 1.00 ") && lines[1].contains(" 0.50 ") && lines[1].contains(" 0.67 "));
        // Every rate token has exactly two decimals.
        for line in &lines[1..] {
            for tok in line.split_whitespace().filter(|t| t.contains('.')) {
                assert_eq!(tok.split('.').nth(1).unwrap().len(), 2, "{tok}");
            }
        }
    }

    #[test]
    fn csv_layout() {
        let cm = confusion_matrix(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap();
        let csv = report_csv(&classification_report(&cm).unwrap());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "label,precision,recall,f1,support");
        assert_eq!(lines.len(), 11);
        assert!(lines[1].starts_with("0 (Sadness),1,0.5,"));
        assert!(lines[8].starts_with("accuracy,0.75"));
    }

    fn matrix() -> impl Strategy<Value = ConfusionMatrix> {
        prop::collection::vec(0u64..20, 49).prop_filter_map("non-empty", |v| {
            let mut cm = ConfusionMatrix::default();
            for (i, c) in v.into_iter().enumerate() {
                cm.counts[i / 7][i % 7] = c;
            }
            (cm.total() > 0).then_some(cm)
        })
    }

    proptest! {
        #[test]
        fn report_invariants(cm in matrix()) {
            let r = classification_report(&cm).unwrap();
            let supports: u64 = r.per_class.iter().map(|m| m.support).sum();
            prop_assert_eq!(supports, cm.total());
            prop_assert_eq!(r.accuracy, cm.trace() as f64 / cm.total() as f64);
            for (pick, w) in [
                (0usize, r.weighted_avg.precision),
                (1, r.weighted_avg.recall),
                (2, r.weighted_avg.f1),
            ] {
                let vals: Vec<f64> = r.per_class.iter().filter(|m| m.support > 0).map(|m| [m.precision, m.recall, m.f1][pick]).collect();
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(w >= lo - 1e-12 && w <= hi + 1e-12);
            }
            // Micro recall equals accuracy.
            let micro = r.per_class.iter().map(|m| m.recall * m.support as f64).sum::<f64>() / cm.total() as f64;
            prop_assert!((micro - r.accuracy).abs() < 1e-12);
        }

        #[test]
        fn macro_is_relabel_invariant(cm in matrix(), perm in Just((0..7).collect::<Vec<usize>>()).prop_shuffle()) {
            let mut relabeled = ConfusionMatrix::default();
            for t in 0..7 {
                for p in 0..7 {
                    relabeled.counts[perm[t]][perm[p]] = cm.counts[t][p];
                }
            }
            let a = classification_report(&cm).unwrap().macro_avg;
            let b = classification_report(&relabeled).unwrap().macro_avg;
            prop_assert!((a.precision - b.precision).abs() < 1e-12);
            prop_assert!((a.recall - b.recall).abs() < 1e-12);
            prop_assert!((a.f1 - b.f1).abs() < 1e-12);
        }
    }
}
