//! Scalar abstractions shared by the geometry, delay, fitting and statistics code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, Num, NumCast};

/// Floating point scalar: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + NumCast + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only for values the type cannot represent at all.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Non-negative resource quantity: integer amounts (`u64`) or continuous ones (`f64`).
pub trait Quantity: Num + Copy + PartialOrd + Default + Debug + Send + Sync + 'static {
    /// `self - other`, or `None` when the result would be negative.
    fn checked_less(self, other: Self) -> Option<Self> {
        if other <= self {
            Some(self - other)
        } else {
            None
        }
    }

    fn is_negative(self) -> bool {
        self < Self::zero()
    }
}

impl<T> Quantity for T where T: Num + Copy + PartialOrd + Default + Debug + Send + Sync + 'static {}

/// Arithmetic mean and population standard deviation (two-pass).
///
/// Returns `None` for an empty slice.
pub fn mean_std<T: Scalar>(values: &[T]) -> Option<(T, T)> {
    if values.is_empty() {
        return None;
    }
    let n = T::from_usize(values.len())?;
    let mean = values.iter().copied().sum::<T>() / n;
    let var = values
        .iter()
        .map(|&x| {
            let d = x - mean;
            d * d
        })
        .sum::<T>()
        / n;
    Some((mean, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checked_less_rejects_negative_results() {
        assert_eq!(5u64.checked_less(3), Some(2));
        assert_eq!(3u64.checked_less(5), None);
        assert_eq!(2.5f64.checked_less(2.5), Some(0.0));
        assert_eq!(1.0f32.checked_less(1.5), None);
    }

    #[test]
    fn mean_std_matches_hand_values() {
        let (m, s) = mean_std(&[1.0f64, 2.0, 3.0]).unwrap();
        assert_eq!(m, 2.0);
        assert!((s - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let (m, s) = mean_std(&[7.0f32; 4]).unwrap();
        assert_eq!((m, s), (7.0, 0.0));
        assert!(mean_std::<f64>(&[]).is_none());
    }
}
