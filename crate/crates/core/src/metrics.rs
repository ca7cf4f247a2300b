//! Probabilistic and thresholded classification metrics.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{probs} probabilities for {labels} labels")]
    LengthMismatch { probs: usize, labels: usize },
    #[error("no samples")]
    EmptyInput,
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("AUROC needs both classes")]
    SingleClassInput,
}

fn check(probs: &[f64], labels: &[bool]) -> Result<(), MetricsError> {
    if probs.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            probs: probs.len(),
            labels: labels.len(),
        });
    }
    if probs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    match probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        Some(&p) => Err(MetricsError::InvalidProbability(p)),
        None => Ok(()),
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    ratio(2.0 * p * r, p + r)
}

/// Probability mass `(pTP, pFP, pFN)`.
fn masses(probs: &[f64], labels: &[bool]) -> (f64, f64, f64) {
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fn_ = 0.0;
    for (&p, &y) in probs.iter().zip(labels) {
        if y {
            tp += p;
            fn_ += 1.0 - p;
        } else {
            fp += p;
        }
    }
    (tp, fp, fn_)
}

pub fn p_precision(probs: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    check(probs, labels)?;
    let (tp, fp, _) = masses(probs, labels);
    Ok(ratio(tp, tp + fp))
}

pub fn p_recall(probs: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    check(probs, labels)?;
    let (tp, _, fn_) = masses(probs, labels);
    Ok(ratio(tp, tp + fn_))
}

/// Harmonic mean of [`p_precision`] and [`p_recall`].
pub fn p_f1(probs: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    Ok(harmonic(p_precision(probs, labels)?, p_recall(probs, labels)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub confusion: Confusion,
}

/// Thresholded metrics; a sample is predicted positive when `p ≥ threshold`.
pub fn binary_metrics(probs: &[f64], labels: &[bool], threshold: f64) -> Result<BinaryMetrics, MetricsError> {
    check(probs, labels)?;
    let mut c = Confusion::default();
    for (&p, &y) in probs.iter().zip(labels) {
        match (p >= threshold, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    let precision = ratio(c.tp as f64, (c.tp + c.fp) as f64);
    let recall = ratio(c.tp as f64, (c.tp + c.fn_) as f64);
    Ok(BinaryMetrics {
        precision,
        recall,
        f1: harmonic(precision, recall),
        accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
        confusion: c,
    })
}

/// Area under the ROC curve from the Mann-Whitney statistic with average
/// ranks, so tied scores count one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            probs: scores.len(),
            labels: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClassInput);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pf1: f64,
    pub p_precision: f64,
    pub p_recall: f64,
    /// `None` when the evaluated set holds a single class.
    pub auroc: Option<f64>,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
    pub n: usize,
    pub threshold: f64,
}

pub fn evaluate(probs: &[f64], labels: &[bool], threshold: f64) -> Result<EvalReport, MetricsError> {
    let bin = binary_metrics(probs, labels, threshold)?;
    let auroc = match auroc(probs, labels) {
        Ok(a) => Some(a),
        Err(MetricsError::SingleClassInput) => None,
        Err(e) => return Err(e),
    };
    Ok(EvalReport {
        pf1: p_f1(probs, labels)?,
        p_precision: p_precision(probs, labels)?,
        p_recall: p_recall(probs, labels)?,
        auroc,
        accuracy: bin.accuracy,
        precision: bin.precision,
        recall: bin.recall,
        f1: bin.f1,
        confusion: bin.confusion,
        n: probs.len(),
        threshold,
    })
}

pub const REPORT_HEADER: [&str; 15] = [
    "model",
    "pf1",
    "p_precision",
    "p_recall",
    "auroc",
    "accuracy",
    "precision",
    "recall",
    "f1",
    "tp",
    "fp",
    "tn",
    "fn",
    "n",
    "threshold",
];

/// One CSV row per named report under [`REPORT_HEADER`]. A missing AUROC is
/// an empty field.
pub fn compare_reports<W: Write>(reports: &[(String, EvalReport)], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for (name, r) in reports {
        let c = r.confusion;
        w.write_record([
            name.clone(),
            r.pf1.to_string(),
            r.p_precision.to_string(),
            r.p_recall.to_string(),
            r.auroc.map(|a| a.to_string()).unwrap_or_default(),
            r.accuracy.to_string(),
            r.precision.to_string(),
            r.recall.to_string(),
            r.f1.to_string(),
            c.tp.to_string(),
            c.fp.to_string(),
            c.tn.to_string(),
            c.fn_.to_string(),
            r.n.to_string(),
            r.threshold.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const WORKED_LABELS: [bool; 4] = [true, false, true, false];
    const WORKED_PROBS: [f64; 4] = [0.9, 0.1, 0.6, 0.4];

    #[test]
    fn perfect_predictions() {
        let l = [true, false];
        let p = [1.0, 0.0];
        assert_eq!(p_precision(&p, &l).unwrap(), 1.0);
        assert_eq!(p_recall(&p, &l).unwrap(), 1.0);
        assert_eq!(p_f1(&p, &l).unwrap(), 1.0);
    }

    #[test]
    fn worked_case() {
        // pTP = 1.5, pFP = 0.5, pFN = 0.5
        assert!((p_precision(&WORKED_PROBS, &WORKED_LABELS).unwrap() - 0.75).abs() < 1e-12);
        assert!((p_recall(&WORKED_PROBS, &WORKED_LABELS).unwrap() - 0.75).abs() < 1e-12);
        assert!((p_f1(&WORKED_PROBS, &WORKED_LABELS).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(auroc(&WORKED_PROBS, &WORKED_LABELS).unwrap(), 1.0);
    }

    #[test]
    fn zero_denominators() {
        let l = [true, false, true];
        let p = [0.0; 3];
        assert_eq!(p_precision(&p, &l).unwrap(), 0.0);
        assert_eq!(p_recall(&p, &l).unwrap(), 0.0);
        assert_eq!(p_f1(&p, &l).unwrap(), 0.0);
        assert_eq!(p_recall(&[0.7], &[false]).unwrap(), 0.0);
    }

    #[test]
    fn input_errors() {
        assert_eq!(
            p_f1(&[0.5], &[true, false]),
            Err(MetricsError::LengthMismatch { probs: 1, labels: 2 })
        );
        assert_eq!(p_f1(&[], &[]), Err(MetricsError::EmptyInput));
        assert_eq!(p_f1(&[1.5], &[true]), Err(MetricsError::InvalidProbability(1.5)));
        assert_eq!(auroc(&[0.5, 0.2], &[true, true]), Err(MetricsError::SingleClassInput));
    }

    #[test]
    fn binary_worked_case() {
        let m = binary_metrics(&[0.9, 0.4, 0.6, 0.1], &[true, true, false, false], 0.5).unwrap();
        assert_eq!(m.confusion, Confusion { tp: 1, fp: 1, tn: 1, fn_: 1 });
        assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (0.5, 0.5, 0.5, 0.5));
    }

    #[test]
    fn threshold_zero_recalls_everything() {
        let m = binary_metrics(&[0.0, 0.2, 0.0], &[true, false, true], 0.0).unwrap();
        assert_eq!(m.recall, 1.0);
    }

    #[test]
    fn threshold_is_inclusive() {
        let m = binary_metrics(&[0.5], &[true], 0.5).unwrap();
        assert_eq!(m.confusion.tp, 1);
        assert_eq!(m.accuracy, 1.0);
    }

    #[test]
    fn auroc_ties_and_separation() {
        assert_eq!(auroc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.9, 0.8, 0.2, 0.1], &[false, false, true, true]).unwrap(), 0.0);
    }

    #[test]
    fn perfect_report_and_csv() {
        let r = evaluate(&[1.0, 0.0, 1.0], &[true, false, true], 0.5).unwrap();
        assert_eq!((r.pf1, r.p_precision, r.p_recall), (1.0, 1.0, 1.0));
        assert_eq!(r.auroc, Some(1.0));
        assert_eq!((r.accuracy, r.precision, r.recall, r.f1), (1.0, 1.0, 1.0, 1.0));
        assert_eq!(r.confusion.total(), r.n);

        let mut buf = Vec::new();
        let rows = vec![("a".to_string(), r), ("b".to_string(), r), ("c".to_string(), r)];
        compare_reports(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], REPORT_HEADER.join(","));
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("a,1,1,1,1,1,1,1,1,2,0,1,0,3,0.5"));
    }

    /// Direct summation without any shared helpers.
    fn oracle(probs: &[f64], labels: &[bool]) -> (f64, f64, f64) {
        let tp: f64 = (0..probs.len()).filter(|&i| labels[i]).map(|i| probs[i]).sum();
        let fp: f64 = (0..probs.len()).filter(|&i| !labels[i]).map(|i| probs[i]).sum();
        let fnm: f64 = (0..probs.len()).filter(|&i| labels[i]).map(|i| 1.0 - probs[i]).sum();
        let pr = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let rc = if tp + fnm > 0.0 { tp / (tp + fnm) } else { 0.0 };
        let f = if pr + rc > 0.0 { 2.0 * pr * rc / (pr + rc) } else { 0.0 };
        (pr, rc, f)
    }

    fn grid_sample() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (1usize..=12).prop_flat_map(|n| {
            (
                prop::collection::vec(prop::sample::select(vec![0.0, 0.25, 0.5, 0.75, 1.0]), n),
                prop::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #[test]
        fn matches_summation_oracle((probs, labels) in grid_sample()) {
            let (pr, rc, f) = oracle(&probs, &labels);
            prop_assert!((p_precision(&probs, &labels).unwrap() - pr).abs() <= 1e-12);
            prop_assert!((p_recall(&probs, &labels).unwrap() - rc).abs() <= 1e-12);
            prop_assert!((p_f1(&probs, &labels).unwrap() - f).abs() <= 1e-12);
        }

        #[test]
        fn pf1_ignores_order((probs, labels) in grid_sample(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut idx: Vec<usize> = (0..probs.len()).collect();
            idx.shuffle(&mut crate::rng::stream(seed, 0));
            let p2: Vec<f64> = idx.iter().map(|&i| probs[i]).collect();
            let l2: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
            prop_assert!((p_f1(&probs, &labels).unwrap() - p_f1(&p2, &l2).unwrap()).abs() <= 1e-12);
        }

        #[test]
        fn pf1_in_unit_interval_and_one_only_when_exact(
            pairs in prop::collection::vec((0.0f64..=1.0, any::<bool>()), 1..20)
        ) {
            let (probs, labels): (Vec<f64>, Vec<bool>) = pairs.into_iter().unzip();
            let f = p_f1(&probs, &labels).unwrap();
            prop_assert!((0.0..=1.0).contains(&f));
            let exact = probs.iter().zip(&labels).all(|(&p, &l)| p == if l { 1.0 } else { 0.0 });
            let any_pos = labels.iter().any(|&l| l);
            prop_assert_eq!(f == 1.0, exact && any_pos);
        }

        #[test]
        fn hard_probabilities_reduce_to_binary_f1(labels in prop::collection::vec(any::<bool>(), 1..20), flips in prop::collection::vec(any::<bool>(), 20)) {
            let probs: Vec<f64> = labels.iter().zip(&flips).map(|(&l, &f)| if l ^ f { 1.0 } else { 0.0 }).collect();
            let b = binary_metrics(&probs, &labels, 0.5).unwrap();
            prop_assert!((p_f1(&probs, &labels).unwrap() - b.f1).abs() <= 1e-12);
        }

        #[test]
        fn auroc_invariant_under_monotone_transform(
            pairs in prop::collection::vec((0.0f64..=1.0, any::<bool>()), 2..30)
        ) {
            let (probs, labels): (Vec<f64>, Vec<bool>) = pairs.into_iter().unzip();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let a = auroc(&probs, &labels).unwrap();
            let t: Vec<f64> = probs.iter().map(|p| (3.0 * p).exp() - 7.0).collect();
            prop_assert!((a - auroc(&t, &labels).unwrap()).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn auroc_matches_pair_count(
            pairs in prop::collection::vec((prop::sample::select(vec![0.0, 0.25, 0.5, 0.75, 1.0]), any::<bool>()), 2..25)
        ) {
            let (probs, labels): (Vec<f64>, Vec<bool>) = pairs.into_iter().unzip();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let mut wins = 0.0;
            let mut total = 0.0;
            for i in 0..probs.len() {
                for j in 0..probs.len() {
                    if labels[i] && !labels[j] {
                        total += 1.0;
                        wins += if probs[i] > probs[j] { 1.0 } else if probs[i] == probs[j] { 0.5 } else { 0.0 };
                    }
                }
            }
            prop_assert!((auroc(&probs, &labels).unwrap() - wins / total).abs() <= 1e-12);
        }

        #[test]
        fn report_is_consistent(
            pairs in prop::collection::vec((0.0f64..=1.0, any::<bool>()), 1..40),
            tau in 0.0f64..=1.0,
        ) {
            let (probs, labels): (Vec<f64>, Vec<bool>) = pairs.into_iter().unzip();
            let r = evaluate(&probs, &labels, tau).unwrap();
            prop_assert_eq!(r.confusion.total(), r.n);
            let f = if r.precision + r.recall > 0.0 { 2.0 * r.precision * r.recall / (r.precision + r.recall) } else { 0.0 };
            prop_assert!((r.f1 - f).abs() <= 1e-12);
            for v in [r.pf1, r.p_precision, r.p_recall, r.accuracy, r.precision, r.recall, r.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
