use serde::Serialize;

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassificationScores {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub support: usize,
}

/// Accuracy and the unweighted mean F1 of classes 0 and 1. `None` marks an
/// unparseable prediction: it is wrong, and a miss for its true class.
pub fn classification_scores(predictions: &[Option<u8>], truths: &[u8]) -> Result<ClassificationScores, EvalError> {
    if predictions.len() != truths.len() {
        return Err(EvalError::Length { predictions: predictions.len(), truths: truths.len() });
    }
    if let Some(&bad) = truths.iter().chain(predictions.iter().flatten()).find(|&&l| l > 1) {
        return Err(EvalError::Label(bad));
    }
    let n = truths.len();
    let correct = predictions.iter().zip(truths).filter(|(p, t)| **p == Some(**t)).count();
    let class_f1 = |c: u8| {
        let mut tp = 0;
        let mut fp = 0;
        let mut fn_ = 0;
        for (p, &t) in predictions.iter().zip(truths) {
            match (*p == Some(c), t == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    };
    Ok(ClassificationScores {
        accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
        macro_f1: (class_f1(0) + class_f1(1)) / 2.0,
        support: n,
    })
}
