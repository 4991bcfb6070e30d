//! Accuracy and per-class precision/recall.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    /// None when the class was never predicted (precision undefined).
    pub precision: Option<f64>,
    /// None when the class never occurs (recall undefined).
    pub recall: Option<f64>,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub per_class: [ClassMetrics; 2],
    pub samples: usize,
}

/// Compute metrics from (predicted, actual) bit pairs.
pub fn metrics_from_pairs(pairs: &[(u8, u8)]) -> Metrics {
    let mut confusion = [[0usize; 2]; 2]; // [actual][predicted]
    for &(pred, actual) in pairs {
        confusion[actual as usize][pred as usize] += 1;
    }
    let correct = confusion[0][0] + confusion[1][1];
    let accuracy = if pairs.is_empty() { 0.0 } else { correct as f64 / pairs.len() as f64 };
    let per_class = [0, 1].map(|c| {
        let support = confusion[c][0] + confusion[c][1];
        let predicted = confusion[0][c] + confusion[1][c];
        let tp = confusion[c][c];
        ClassMetrics {
            precision: (predicted > 0).then(|| tp as f64 / predicted as f64),
            recall: (support > 0).then(|| tp as f64 / support as f64),
            support,
        }
    });
    Metrics { accuracy, per_class, samples: pairs.len() }
}
