//! Compensated (Neumaier) summation.
//!
//! Every reduction in the crate that feeds a reported number goes through
//! [`CompensatedSum`] in a fixed order, so results do not depend on how work
//! was split across threads.

use crate::Scalar;

#[derive(Clone, Copy, Debug)]
pub struct CompensatedSum<S> {
    sum: S,
    comp: S,
}

impl<S: Scalar> Default for CompensatedSum<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> CompensatedSum<S> {
    pub fn new() -> Self {
        Self {
            sum: S::zero(),
            comp: S::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, x: S) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp = self.comp + ((self.sum - t) + x);
        } else {
            self.comp = self.comp + ((x - t) + self.sum);
        }
        self.sum = t;
    }

    /// Folds another accumulator in; callers merge partials in a fixed order.
    pub fn merge(&mut self, other: &Self) {
        self.add(other.sum);
        self.add(other.comp);
    }

    #[inline]
    pub fn value(&self) -> S {
        self.sum + self.comp
    }
}

pub fn compensated_sum<S: Scalar, I: IntoIterator<Item = S>>(iter: I) -> S {
    let mut acc = CompensatedSum::new();
    for x in iter {
        acc.add(x);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_cancelled_terms() {
        let xs = [1.0e16, 1.0, -1.0e16, 1.0];
        assert_eq!(compensated_sum(xs), 2.0);
        let naive: f64 = xs.iter().sum();
        assert_ne!(naive, 2.0);
    }

    #[test]
    fn harmonic_partial_sum_matches_reverse_order() {
        let n = 1_000_000;
        let forward = compensated_sum((1..=n).map(|k| 1.0 / k as f64));
        let mut backward = 0.0f64;
        for k in (1..=n).rev() {
            backward += 1.0 / k as f64;
        }
        assert!((forward - backward).abs() < 1e-13);
    }

    #[test]
    fn merge_equals_single_pass_on_exact_data() {
        let mut a = CompensatedSum::<f64>::new();
        let mut b = CompensatedSum::<f64>::new();
        for k in 0..1000 {
            if k < 500 {
                a.add(k as f64 * 0.5);
            } else {
                b.add(k as f64 * 0.5);
            }
        }
        a.merge(&b);
        assert_eq!(a.value(), compensated_sum((0..1000).map(|k| k as f64 * 0.5)));
    }

    #[test]
    fn single_precision_instantiation() {
        let s: f32 = compensated_sum((0..10_000).map(|_| 0.1f32));
        assert!((s - 1000.0).abs() < 1e-3);
    }
}
