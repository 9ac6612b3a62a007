use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use super::dataset::{Dataset, MinMax};
use crate::error::{Error, Result};

pub const TEST_FRACTION: f64 = 0.2;

/// Stratified downsampling to `per_class` rows per class, an 80:20
/// stratified split, and min-max scaling fitted on the training rows only.
pub fn preprocess(d: &Dataset, per_class: usize, split_seed: u64) -> Result<(Dataset, Dataset)> {
    let mut rng = ChaCha20Rng::seed_from_u64(split_seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); d.num_classes()];
    for (i, &l) in d.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let n_test = (per_class as f64 * TEST_FRACTION).round() as usize;
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (c, mut idx) in by_class.into_iter().enumerate() {
        if idx.len() < per_class {
            return Err(Error::Sampling(format!(
                "class '{}' has {} rows, {per_class} requested",
                d.classes[c],
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        idx.truncate(per_class);
        test_idx.extend_from_slice(&idx[..n_test]);
        train_idx.extend_from_slice(&idx[n_test..]);
    }
    train_idx.shuffle(&mut rng);
    test_idx.shuffle(&mut rng);

    let mut train = d.subset(&train_idx);
    let mut test = d.subset(&test_idx);
    if let Some(scaler) = MinMax::fit(&train.features) {
        for r in &mut train.features {
            *r = scaler.apply(r);
        }
        for r in &mut test.features {
            *r = scaler.apply(r);
        }
        train.scaling = Some(scaler.clone());
        test.scaling = Some(scaler);
    }
    Ok((train, test))
}

/// Synthetic stand-in for labelled traffic: one Gaussian cluster per class
/// in `[0, 1]^F` with seeded means and per-feature spreads, clipped to the
/// unit cube. Means sit in `[0, 0.25)` so most values are small, like
/// min-max scaled traffic counters; large inputs make the default step size
/// of 0.9 diverge.
pub fn synth_generate(classes: usize, features: usize, per_class: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let names: Vec<String> = if classes == super::ingest::DEFAULT_CLASSES.len() {
        super::ingest::DEFAULT_CLASSES
            .iter()
            .map(|s| s.to_string())
            .collect()
    } else {
        (0..classes).map(|c| format!("class{c}")).collect()
    };
    let centres: Vec<Vec<(f64, f64)>> = (0..classes)
        .map(|_| {
            (0..features)
                .map(|_| (rng.random_range(0.0..0.25), rng.random_range(0.03..0.1)))
                .collect()
        })
        .collect();
    let mut rows = Vec::with_capacity(classes * per_class);
    let mut labels = Vec::with_capacity(classes * per_class);
    for (c, centre) in centres.iter().enumerate() {
        for _ in 0..per_class {
            rows.push(
                centre
                    .iter()
                    .map(|&(mu, sd)| {
                        Normal::new(mu, sd)
                            .expect("positive spread")
                            .sample(&mut rng)
                            .clamp(0.0, 1.0)
                    })
                    .collect(),
            );
            labels.push(c);
        }
    }
    Dataset::new(rows, labels, names).expect("generator output is consistent")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synth_is_deterministic_and_sized() {
        let a = synth_generate(5, 21, 200, 9);
        assert_eq!(a, synth_generate(5, 21, 200, 9));
        assert_ne!(a, synth_generate(5, 21, 200, 10));
        assert_eq!(a.len(), 1000);
        assert_eq!(a.num_features(), 21);
        assert_eq!(a.class_counts(), vec![200; 5]);
        assert!(a.features.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn preprocess_paper_sizes() {
        let d = synth_generate(5, 21, 2100, 1);
        let (train, test) = preprocess(&d, 2000, 3).unwrap();
        assert_eq!(train.len() + test.len(), 10_000);
        assert_eq!((train.len(), test.len()), (8000, 2000));
        assert_eq!(train.class_counts(), vec![1600; 5]);
        assert_eq!(test.class_counts(), vec![400; 5]);
    }

    #[test]
    fn scaling_fit_on_train_only() {
        let d = synth_generate(5, 21, 50, 2);
        let (train, test) = preprocess(&d, 40, 3).unwrap();
        let scaler = train.scaling.clone().unwrap();
        // refit on the raw training rows reproduces the stored scaler
        let raw_train: Vec<Vec<f64>> = train
            .features
            .iter()
            .map(|r| {
                r.iter()
                    .zip(scaler.min.iter().zip(&scaler.max))
                    .map(|(v, (lo, hi))| lo + v * (hi - lo))
                    .collect()
            })
            .collect();
        let refit = MinMax::fit(&raw_train).unwrap();
        for (a, b) in refit.min.iter().zip(&scaler.min) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(train
            .features
            .iter()
            .chain(&test.features)
            .flatten()
            .all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn constant_column_becomes_zero() {
        let mut d = synth_generate(2, 3, 10, 4);
        for r in &mut d.features {
            r[1] = 0.7;
        }
        let (train, test) = preprocess(&d, 10, 0).unwrap();
        assert!(train
            .features
            .iter()
            .chain(&test.features)
            .all(|r| r[1] == 0.0));
    }

    #[test]
    fn class_deficit() {
        let d = synth_generate(2, 3, 3, 4);
        assert!(matches!(preprocess(&d, 4, 0), Err(Error::Sampling(_))));
    }
}
