//! Compensated summation. Every reduction that feeds a reported total goes
//! through this in a fixed order, so results do not depend on the worker
//! schedule.

#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let y = value - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }

    pub fn sum_iter<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
        let mut k = Self::new();
        for v in iter {
            k.add(v);
        }
        k.value()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensates_small_terms() {
        let mut k = KahanSum::new();
        k.add(1.0);
        for _ in 0..10_000_000 {
            k.add(1e-16);
        }
        assert!((k.value() - (1.0 + 1e-9)).abs() < 1e-12);
    }
}
