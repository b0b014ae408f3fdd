//! Deterministic dataset splits.

use crate::dataset::TrainingSample;
use crate::SurrogateError;
use gridres_core::RngStream;
use rand::seq::SliceRandom;
use std::collections::BTreeMap;

/// Shuffle `0..n` and cut it into `k` near-equal folds; the first
/// `n mod k` folds take the extra element.
pub fn kfold_split(n: usize, k: usize, stream: RngStream) -> Result<Vec<Vec<usize>>, SurrogateError> {
    if k < 2 {
        return Err(SurrogateError::BadSplit(format!("k must be at least 2, got {k}")));
    }
    if n < k {
        return Err(SurrogateError::BadSplit(format!(
            "cannot cut {n} samples into {k} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream.rng());
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for fold in 0..k {
        let len = base + usize::from(fold < extra);
        folds.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

/// Train indices for one fold: everything outside it.
pub fn kfold_train_indices(folds: &[Vec<usize>], holdout: usize) -> Vec<usize> {
    folds
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != holdout)
        .flat_map(|(_, f)| f.iter().copied())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratifiedSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Split sample indices so every system lands in all three partitions.
///
/// Within each system the samples are shuffled, then
/// `n_val = max(1, ⌊n·val_fraction⌋)` and `n_test = max(1, ⌊n·test_fraction⌋)`
/// are peeled off and the remainder trains. Systems need at least three
/// samples for that to be possible.
pub fn stratified_split(
    samples: &[TrainingSample],
    val_fraction: f64,
    test_fraction: f64,
    stream: RngStream,
) -> Result<StratifiedSplit, SurrogateError> {
    let open_unit = |f: f64| f > 0.0 && f < 1.0;
    if !open_unit(val_fraction) || !open_unit(test_fraction) || val_fraction + test_fraction >= 1.0 {
        return Err(SurrogateError::BadSplit(format!(
            "fractions must lie in (0,1) and sum below 1, got val={val_fraction} test={test_fraction}"
        )));
    }
    if samples.is_empty() {
        return Err(SurrogateError::BadSplit("no samples to split".into()));
    }
    let mut by_system: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_system.entry(s.system_id.as_str()).or_default().push(i);
    }
    let mut rng = stream.rng();
    let mut split = StratifiedSplit { train: Vec::new(), val: Vec::new(), test: Vec::new() };
    for (system, mut indices) in by_system {
        let n = indices.len();
        if n < 3 {
            return Err(SurrogateError::BadSplit(format!(
                "system {system} has only {n} samples; need at least 3 to cover train/val/test"
            )));
        }
        indices.shuffle(&mut rng);
        let n_val = ((n as f64 * val_fraction).floor() as usize).max(1);
        let n_test = ((n as f64 * test_fraction).floor() as usize).max(1);
        split.val.extend_from_slice(&indices[..n_val]);
        split.test.extend_from_slice(&indices[n_val..n_val + n_test]);
        split.train.extend_from_slice(&indices[n_val + n_test..]);
    }
    Ok(split)
}
