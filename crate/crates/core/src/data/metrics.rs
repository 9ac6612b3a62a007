use serde::Serialize;

use crate::error::{Error, Result};

/// `counts[truth][pred]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn tp(&self, c: usize) -> u64 {
        self.counts[c][c]
    }

    pub fn fp(&self, c: usize) -> u64 {
        (0..self.classes())
            .filter(|&t| t != c)
            .map(|t| self.counts[t][c])
            .sum()
    }

    pub fn fn_(&self, c: usize) -> u64 {
        (0..self.classes())
            .filter(|&p| p != c)
            .map(|p| self.counts[c][p])
            .sum()
    }

    pub fn tn(&self, c: usize) -> u64 {
        self.total() - self.tp(c) - self.fp(c) - self.fn_(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub samples: u64,
    /// Mean over classes of (TP + TN) / (TP + TN + FP + FN).
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    /// Fraction of samples predicted correctly.
    pub hit_rate: f64,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn evaluate(preds: &[usize], truth: &[usize], classes: usize) -> Result<MetricsReport> {
    if preds.len() != truth.len() {
        return Err(Error::Batch(format!(
            "{} predictions for {} labels",
            preds.len(),
            truth.len()
        )));
    }
    if let Some(bad) = preds.iter().chain(truth).find(|&&c| c >= classes) {
        return Err(Error::Schema(format!("class {bad} outside 0..{classes}")));
    }
    let mut counts = vec![vec![0u64; classes]; classes];
    for (&p, &t) in preds.iter().zip(truth) {
        counts[t][p] += 1;
    }
    let cm = ConfusionMatrix { counts };
    let c = classes.max(1) as f64;
    let (mut acc, mut prec, mut rec) = (0.0, 0.0, 0.0);
    for k in 0..classes {
        let (tp, tn, fp, fn_) = (cm.tp(k), cm.tn(k), cm.fp(k), cm.fn_(k));
        acc += ratio(tp + tn, tp + tn + fp + fn_);
        prec += ratio(tp, tp + fp);
        rec += ratio(tp, tp + fn_);
    }
    let hits: u64 = (0..classes).map(|k| cm.tp(k)).sum();
    Ok(MetricsReport {
        samples: preds.len() as u64,
        accuracy: acc / c,
        macro_precision: prec / c,
        macro_recall: rec / c,
        hit_rate: ratio(hits, preds.len() as u64),
        confusion: cm,
    })
}

impl MetricsReport {
    /// `key=value` lines.
    pub fn to_text(&self) -> String {
        format!(
            "samples={}\naccuracy={:.6}\nmacro_precision={:.6}\nmacro_recall={:.6}\nhit_rate={:.6}\n",
            self.samples, self.accuracy, self.macro_precision, self.macro_recall, self.hit_rate
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
