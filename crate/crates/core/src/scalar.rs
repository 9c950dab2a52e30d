use std::fmt::Debug;

use num_traits::{Num, ToPrimitive};

/// Scalar usable as an edit cost.
///
/// Integers give exact distances, floats allow fractional weights and
/// [`crate::Rational`] gives both. Normalized scores are always reported as
/// `f64`, so the scalar only needs to convert there.
pub trait Cost: Num + Copy + PartialOrd + Debug + ToPrimitive + Send + Sync + 'static {
    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    fn is_negative(self) -> bool {
        self < Self::zero()
    }

    /// Zero or positive; false for values that do not compare, such as NaN.
    fn is_nonnegative(self) -> bool {
        matches!(self.partial_cmp(&Self::zero()), Some(std::cmp::Ordering::Greater | std::cmp::Ordering::Equal))
    }

    /// `self / denominator` in `f64`.
    fn ratio(self, denominator: Self) -> f64 {
        let num = self.to_f64().unwrap_or(f64::NAN);
        let den = denominator.to_f64().unwrap_or(f64::NAN);
        num / den
    }
}

impl<T> Cost for T where T: Num + Copy + PartialOrd + Debug + ToPrimitive + Send + Sync + 'static {}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rational;

    #[test]
    fn ratio_is_exact_for_equal_operands() {
        assert_eq!(7u32.ratio(7), 1.0);
        assert_eq!(Rational::new(3, 7).ratio(Rational::new(3, 7)), 1.0);
        assert_eq!(0.0f64.ratio(5.0), 0.0);
    }

    #[test]
    fn min_of_picks_smaller() {
        assert_eq!(3u32.min_of(2), 2);
        assert_eq!(Rational::new(1, 2).min_of(Rational::new(2, 3)), Rational::new(1, 2));
    }
}
