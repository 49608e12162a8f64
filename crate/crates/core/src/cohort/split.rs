use super::ClinicalBatch;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

/// Stratified, seeded partition of examples into (train, test) index lists.
///
/// Examples sharing a patient id always land on the same side. Groups are
/// stratified by the label of their first example; the test side receives
/// `round(groups · test_fraction)` groups of which `round(positives · test_fraction)`
/// are positive. Both lists are returned in ascending order.
pub fn split_indices(
    patient_ids: &[String],
    labels: &[u8],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut group_of: HashMap<&str, usize> = HashMap::new();
    for (i, id) in patient_ids.iter().enumerate() {
        let g = *group_of.entry(id.as_str()).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    let n_groups = groups.len();
    let n_test = (n_groups as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test >= n_groups {
        return Err(Error::Size(format!(
            "{n_groups} patients cannot give non-empty sides at test fraction {test_fraction}"
        )));
    }

    let (mut pos, mut neg): (Vec<usize>, Vec<usize>) = (0..n_groups).partition(|&g| labels[groups[g][0]] == 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let pos_test = ((pos.len() as f64 * test_fraction).round() as usize)
        .min(pos.len())
        .min(n_test);
    let neg_test = (n_test - pos_test).min(neg.len());
    let pos_test = n_test - neg_test;

    let mut test: Vec<usize> = pos[..pos_test]
        .iter()
        .chain(&neg[..neg_test])
        .flat_map(|&g| groups[g].iter().copied())
        .collect();
    let mut train: Vec<usize> = pos[pos_test..]
        .iter()
        .chain(&neg[neg_test..])
        .flat_map(|&g| groups[g].iter().copied())
        .collect();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// Splits a batch by patient; see [`split_indices`].
pub fn split_by_patient<T: Scalar>(
    batch: &ClinicalBatch<T>,
    test_fraction: f64,
    seed: u64,
) -> Result<(ClinicalBatch<T>, ClinicalBatch<T>)> {
    let (train, test) = split_indices(&batch.patient_ids, &batch.labels, test_fraction, seed)?;
    Ok((batch.select(&train), batch.select(&test)))
}
