use crate::error::{Error, Result};

/// Per-feature min-max scaler. Degenerate columns (min == max) map to 0;
/// values outside the fitted range are clamped into `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMax {
    pub fn fit(rows: &[Vec<f64>]) -> Option<MinMax> {
        let first = rows.first()?;
        let mut min = first.clone();
        let mut max = first.clone();
        for r in &rows[1..] {
            for (j, v) in r.iter().enumerate() {
                min[j] = min[j].min(*v);
                max[j] = max[j].max(*v);
            }
        }
        Some(MinMax { min, max })
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(v, (lo, hi))| {
                if hi > lo {
                    ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Feature rows with class-index labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub classes: Vec<String>,
    pub scaling: Option<MinMax>,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, classes: Vec<String>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Schema(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if let Some(first) = features.first() {
            if features.iter().any(|r| r.len() != first.len()) {
                return Err(Error::Schema("feature rows have different lengths".into()));
            }
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= classes.len()) {
            return Err(Error::Schema(format!(
                "label {bad} outside {} declared classes",
                classes.len()
            )));
        }
        Ok(Dataset {
            features,
            labels,
            classes,
            scaling: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn one_hot(&self, i: usize) -> Vec<f64> {
        one_hot(self.labels[i], self.num_classes())
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes.clone(),
            scaling: self.scaling.clone(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_classes()];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }
}

pub fn one_hot(label: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[label] = 1.0;
    v
}
