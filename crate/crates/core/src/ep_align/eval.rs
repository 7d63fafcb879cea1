use serde::Serialize;

use super::{align_infer, EpAlignParams, Modality, MultimodalSample};
use crate::error::{Error, Result};

/// Classification quality of aligned predictions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentEval {
    pub macro_f1: f64,
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<usize>>,
}

/// Per-class precision/recall/F1 from label pairs. Classes that are never
/// predicted (or never present) score 0 for the undefined ratio.
pub fn classification_report(truth: &[usize], predicted: &[usize], classes: usize) -> Result<AlignmentEval> {
    if truth.is_empty() || truth.len() != predicted.len() {
        return Err(Error::InvalidInput(format!(
            "need equally many non-zero truths and predictions, got {} and {}",
            truth.len(),
            predicted.len()
        )));
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= classes || p >= classes {
            return Err(Error::InvalidLabel {
                label: t.max(p),
                classes,
            });
        }
        confusion[t][p] += 1;
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let mut precision = Vec::with_capacity(classes);
    let mut recall = Vec::with_capacity(classes);
    let mut f1 = Vec::with_capacity(classes);
    for c in 0..classes {
        let tp = confusion[c][c];
        let predicted_c: usize = (0..classes).map(|r| confusion[r][c]).sum();
        let actual_c: usize = confusion[c].iter().sum();
        let p = ratio(tp, predicted_c);
        let r = ratio(tp, actual_c);
        precision.push(p);
        recall.push(r);
        f1.push(if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) });
    }
    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
    Ok(AlignmentEval {
        macro_f1: f1.iter().sum::<f64>() / classes as f64,
        accuracy: correct as f64 / truth.len() as f64,
        precision,
        recall,
        f1,
        confusion,
    })
}

/// Aligns every sample using only `modalities` and scores the predictions.
pub fn eval_alignment(
    params: &EpAlignParams,
    dataset: &[MultimodalSample],
    modalities: &[Modality],
) -> Result<AlignmentEval> {
    if dataset.is_empty() {
        return Err(Error::InvalidInput("empty evaluation set".into()));
    }
    let mut truth = Vec::with_capacity(dataset.len());
    let mut predicted = Vec::with_capacity(dataset.len());
    for s in dataset {
        let r = align_infer(&s.features(modalities), params)?;
        truth.push(s.label);
        predicted.push(r.predicted_class);
    }
    classification_report(&truth, &predicted, params.dims.classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictor() {
        let truth = vec![0, 1, 2, 3, 0, 1];
        let r = classification_report(&truth, &truth, 4).unwrap();
        assert_eq!(r.macro_f1, 1.0);
        for (i, row) in r.confusion.iter().enumerate() {
            for (j, &n) in row.iter().enumerate() {
                if i != j {
                    assert_eq!(n, 0);
                }
            }
        }
    }

    #[test]
    fn constant_predictor_balanced() {
        // class 0: precision 1/4, recall 1 -> F1 0.4; the rest 0 -> macro 0.1
        let truth: Vec<usize> = (0..40).map(|i| i % 4).collect();
        let pred = vec![0; 40];
        let r = classification_report(&truth, &pred, 4).unwrap();
        assert!((r.macro_f1 - 0.1).abs() < 1e-15);
        assert_eq!(r.confusion[2][0], 10);
        let row_sums: Vec<usize> = r.confusion.iter().map(|row| row.iter().sum()).collect();
        assert_eq!(row_sums, vec![10; 4]);
    }

    #[test]
    fn rejects_empty() {
        assert!(classification_report(&[], &[], 3).is_err());
    }
}
