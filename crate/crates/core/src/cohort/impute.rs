use crate::error::{Error, Result};
use crate::scalar::Scalar;
use ndarray::{Array3, ArrayView3, Axis};

/// Carry-forward imputation with a per-variable median fallback.
///
/// Entries with `mask == 1` are kept. Every other entry becomes the most
/// recent measured value of the same (example, variable) series, or
/// `median[d]` before the first measurement. Values at unmeasured positions
/// are never read, so the function is idempotent.
pub fn impute<T: Scalar>(values: ArrayView3<'_, T>, mask: ArrayView3<'_, T>, median: &[T]) -> Result<Array3<T>> {
    let mut out = values.to_owned();
    impute_in_place(&mut out, mask, median)?;
    Ok(out)
}

pub fn impute_in_place<T: Scalar>(values: &mut Array3<T>, mask: ArrayView3<'_, T>, median: &[T]) -> Result<()> {
    if values.dim() != mask.dim() {
        return Err(Error::Shape(format!(
            "values {:?} vs mask {:?}",
            values.dim(),
            mask.dim()
        )));
    }
    if median.len() != values.dim().1 {
        return Err(Error::Shape(format!(
            "{} medians for {} variables",
            median.len(),
            values.dim().1
        )));
    }
    for (mut series_n, mask_n) in values.axis_iter_mut(Axis(0)).zip(mask.axis_iter(Axis(0))) {
        for (d, (mut series, m)) in series_n
            .axis_iter_mut(Axis(0))
            .zip(mask_n.axis_iter(Axis(0)))
            .enumerate()
        {
            let mut carry = median[d];
            for (x, &mt) in series.iter_mut().zip(m.iter()) {
                if mt == T::one() {
                    carry = *x;
                } else {
                    *x = carry;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use proptest::prelude::*;

    fn one_series(x: &[f64], m: &[f64]) -> (Array3<f64>, Array3<f64>) {
        let t = x.len();
        (
            Array3::from_shape_vec((1, 1, t), x.to_vec()).unwrap(),
            Array3::from_shape_vec((1, 1, t), m.to_vec()).unwrap(),
        )
    }

    #[test]
    fn carry_forward_with_median_prefix() {
        let (x, m) = one_series(&[f64::NAN, 5.0, f64::NAN, 7.0], &[0.0, 1.0, 0.0, 1.0]);
        let out = impute(x.view(), m.view(), &[6.0]).unwrap();
        assert_eq!(out.as_slice().unwrap(), &[6.0, 5.0, 5.0, 7.0]);
    }

    #[test]
    fn never_measured_gets_median_everywhere() {
        let (x, m) = one_series(&[f64::NAN; 4], &[0.0; 4]);
        let out = impute(x.view(), m.view(), &[6.0]).unwrap();
        assert_eq!(out.as_slice().unwrap(), &[6.0; 4]);
    }

    #[test]
    fn fully_measured_is_identity() {
        let (x, m) = one_series(&[1.0, 2.0, 3.0, 4.0], &[1.0; 4]);
        let out = impute(x.view(), m.view(), &[6.0]).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn median_length_is_checked() {
        let (x, m) = one_series(&[1.0], &[1.0]);
        assert!(matches!(impute(x.view(), m.view(), &[]), Err(Error::Shape(_))));
    }

    proptest! {
        #[test]
        fn imputation_is_idempotent_and_causal(
            raw in prop::collection::vec((-10.0f64..10.0, prop::bool::ANY), 1..24),
            cut in 0usize..24,
        ) {
            let x: Vec<f64> = raw.iter().map(|(v, _)| *v).collect();
            let m: Vec<f64> = raw.iter().map(|(_, b)| if *b { 1.0 } else { 0.0 }).collect();
            let (xa, ma) = one_series(&x, &m);
            let once = impute(xa.view(), ma.view(), &[0.5]).unwrap();
            let twice = impute(once.view(), ma.view(), &[0.5]).unwrap();
            prop_assert_eq!(&once, &twice);

            // Changing anything after hour `cut` leaves hours up to `cut` untouched.
            let cut = cut.min(x.len() - 1);
            let mut x2 = x.clone();
            let mut m2 = m.clone();
            for t in cut + 1..x.len() {
                x2[t] += 3.0;
                m2[t] = 1.0 - m2[t];
            }
            let (xb, mb) = one_series(&x2, &m2);
            let other = impute(xb.view(), mb.view(), &[0.5]).unwrap();
            for t in 0..=cut {
                prop_assert_eq!(once[[0, 0, t]], other[[0, 0, t]]);
            }
        }
    }
}
