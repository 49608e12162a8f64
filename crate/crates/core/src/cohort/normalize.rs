use super::ClinicalBatch;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use ndarray::Axis;
use serde::{Deserialize, Serialize};

/// Lower bound applied to every standard deviation.
pub const STD_FLOOR: f64 = 1e-6;

/// Per-variable and per-static-column z-score statistics, fitted on training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub static_mean: Vec<f64>,
    pub static_std: Vec<f64>,
    /// Median of measured values, raw units.
    pub population_median: Vec<f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl NormalizationStats {
    pub fn identity(n_variables: usize, n_static: usize) -> Self {
        NormalizationStats {
            mean: vec![0.0; n_variables],
            std: vec![1.0; n_variables],
            static_mean: vec![0.0; n_static],
            static_std: vec![1.0; n_static],
            population_median: vec![0.0; n_variables],
            warnings: Vec::new(),
        }
    }

    /// Raw-unit value of a normalized level for variable `d`.
    pub fn denormalize_value(&self, d: usize, v: f64) -> f64 {
        v * self.std[d] + self.mean[d]
    }
}

fn population_mean_std(vals: &[f64]) -> (f64, f64) {
    let k = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / k;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k;
    (mean, var.sqrt().max(STD_FLOOR))
}

/// Fits statistics on a raw-unit training batch.
///
/// Variable statistics use measured entries only (population std, floored);
/// static statistics use every row. A variable with no measurement gets mean 0,
/// std at the floor, and a warning.
pub fn fit_normalization<T: Scalar>(train: &ClinicalBatch<T>) -> Result<NormalizationStats> {
    if train.n_examples() < 2 {
        return Err(Error::Size(format!(
            "normalization needs at least 2 examples, got {}",
            train.n_examples()
        )));
    }
    let mut stats = NormalizationStats::identity(train.n_variables(), train.n_static());
    for d in 0..train.n_variables() {
        let xs = train.values.index_axis(Axis(1), d);
        let ms = train.mask.index_axis(Axis(1), d);
        let mut measured: Vec<f64> = xs
            .iter()
            .zip(ms.iter())
            .filter(|(_, &m)| m == T::one())
            .map(|(x, _)| x.to_f64_lossy())
            .collect();
        if measured.is_empty() {
            stats.mean[d] = 0.0;
            stats.std[d] = STD_FLOOR;
            stats.population_median[d] = 0.0;
            stats.warnings.push(format!(
                "variable '{}' never measured in training data",
                train.variable_names[d]
            ));
            continue;
        }
        let (mean, std) = population_mean_std(&measured);
        stats.mean[d] = mean;
        stats.std[d] = std;
        measured.sort_by(|a, b| a.total_cmp(b));
        let k = measured.len();
        stats.population_median[d] = if k % 2 == 1 {
            measured[k / 2]
        } else {
            0.5 * (measured[k / 2 - 1] + measured[k / 2])
        };
    }
    for j in 0..train.n_static() {
        let col: Vec<f64> = train.statics.column(j).iter().map(|v| v.to_f64_lossy()).collect();
        let (mean, std) = population_mean_std(&col);
        stats.static_mean[j] = mean;
        stats.static_std[j] = std;
    }
    Ok(stats)
}

fn check_dims<T: Scalar>(batch: &ClinicalBatch<T>, stats: &NormalizationStats) -> Result<()> {
    if stats.mean.len() != batch.n_variables()
        || stats.std.len() != batch.n_variables()
        || stats.static_mean.len() != batch.n_static()
        || stats.static_std.len() != batch.n_static()
    {
        return Err(Error::Shape(format!(
            "stats for {} variables / {} statics applied to a batch with {} / {}",
            stats.mean.len(),
            stats.static_mean.len(),
            batch.n_variables(),
            batch.n_static()
        )));
    }
    Ok(())
}

/// `X ← (X − mean)/std` per variable, `S` likewise per column. The mask is untouched.
pub fn apply_normalization<T: Scalar>(
    batch: &ClinicalBatch<T>,
    stats: &NormalizationStats,
) -> Result<ClinicalBatch<T>> {
    check_dims(batch, stats)?;
    let mut out = batch.clone();
    for (d, mut lane) in out.values.axis_iter_mut(Axis(1)).enumerate() {
        let (mu, sd) = (T::lit(stats.mean[d]), T::lit(stats.std[d]));
        lane.mapv_inplace(|x| (x - mu) / sd);
    }
    for (j, mut col) in out.statics.axis_iter_mut(Axis(1)).enumerate() {
        let (mu, sd) = (T::lit(stats.static_mean[j]), T::lit(stats.static_std[j]));
        col.mapv_inplace(|x| (x - mu) / sd);
    }
    Ok(out)
}

/// Inverse of [`apply_normalization`].
pub fn denormalize<T: Scalar>(batch: &ClinicalBatch<T>, stats: &NormalizationStats) -> Result<ClinicalBatch<T>> {
    check_dims(batch, stats)?;
    let mut out = batch.clone();
    for (d, mut lane) in out.values.axis_iter_mut(Axis(1)).enumerate() {
        let (mu, sd) = (T::lit(stats.mean[d]), T::lit(stats.std[d]));
        lane.mapv_inplace(|x| x * sd + mu);
    }
    for (j, mut col) in out.statics.axis_iter_mut(Axis(1)).enumerate() {
        let (mu, sd) = (T::lit(stats.static_mean[j]), T::lit(stats.static_std[j]));
        col.mapv_inplace(|x| x * sd + mu);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{Array2, Array3};
    use proptest::prelude::*;

    fn batch(x: Vec<f64>, m: Vec<f64>, n: usize, t: usize, statics: Vec<f64>) -> ClinicalBatch<f64> {
        let p = statics.len() / n;
        ClinicalBatch::new(
            Array3::from_shape_vec((n, 1, t), x).unwrap(),
            Array3::from_shape_vec((n, 1, t), m).unwrap(),
            Array2::from_shape_vec((n, p), statics).unwrap(),
            vec![0; n],
            (0..n).map(|i| format!("p{i}")).collect(),
            vec!["v".into()],
            (0..p).map(|j| format!("s{j}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn population_std_over_measured_entries() {
        // the imputed 100.0 must not count
        let b = batch(vec![1.0, 100.0, 3.0, 3.0], vec![1.0, 0.0, 1.0, 0.0], 2, 2, vec![]);
        let s = fit_normalization(&b).unwrap();
        assert_abs_diff_eq!(s.mean[0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.std[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.population_median[0], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn constant_values_hit_the_floor() {
        let b = batch(vec![5.0; 4], vec![1.0; 4], 2, 2, vec![]);
        let s = fit_normalization(&b).unwrap();
        assert_eq!(s.std[0], STD_FLOOR);
    }

    #[test]
    fn never_measured_variable_warns() {
        let b = batch(vec![0.0; 4], vec![0.0; 4], 2, 2, vec![]);
        let s = fit_normalization(&b).unwrap();
        assert_eq!((s.mean[0], s.std[0]), (0.0, STD_FLOOR));
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn needs_two_rows() {
        let b = batch(vec![1.0], vec![1.0], 1, 1, vec![]);
        assert!(matches!(fit_normalization(&b), Err(Error::Size(_))));
    }

    #[test]
    fn mean_maps_to_zero_and_identity_stats_are_identity() {
        let b = batch(vec![1.0, 3.0, 2.0, 2.0], vec![1.0; 4], 2, 2, vec![4.0, 8.0]);
        let s = fit_normalization(&b).unwrap();
        let z = apply_normalization(&b, &s).unwrap();
        assert_abs_diff_eq!(z.values[[1, 0, 0]], 0.0, epsilon = 1e-15);
        let id = NormalizationStats::identity(1, 1);
        assert_eq!(apply_normalization(&b, &id).unwrap(), b);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let b = batch(vec![1.0, 3.0], vec![1.0; 2], 2, 1, vec![]);
        let s = NormalizationStats::identity(2, 0);
        assert!(matches!(apply_normalization(&b, &s), Err(Error::Shape(_))));
    }

    proptest! {
        #[test]
        fn normalized_training_entries_are_standard_and_invertible(
            xs in prop::collection::vec(-50.0f64..50.0, 6..40),
            statics in prop::collection::vec(-5.0f64..5.0, 2..3),
        ) {
            prop_assume!(xs.iter().any(|&x| (x - xs[0]).abs() > 1e-3));
            let n = 2;
            let t = xs.len() / n;
            let xs = xs[..n * t].to_vec();
            prop_assume!(xs.iter().any(|&x| (x - xs[0]).abs() > 1e-3));
            let b = batch(xs, vec![1.0; n * t], n, t, statics[..n].to_vec());
            let s = fit_normalization(&b).unwrap();
            let z = apply_normalization(&b, &s).unwrap();
            let k = z.values.len() as f64;
            let mean = z.values.sum() / k;
            let var = z.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k;
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((var.sqrt() - 1.0).abs() < 1e-9);
            let back = denormalize(&z, &s).unwrap();
            for (a, b) in back.values.iter().zip(b.values.iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
