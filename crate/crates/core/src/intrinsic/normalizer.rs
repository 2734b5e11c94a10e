use crate::error::{Error, Result};

/// Welford running mean/variance turning raw errors into clipped z-scores.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningNormalizer {
    count: u64,
    mean: f64,
    m2: f64,
    clip: f64,
}

/// Standard deviations below this are treated as this.
const STD_FLOOR: f64 = 1e-8;

impl RunningNormalizer {
    pub fn new(clip: f64) -> Self {
        RunningNormalizer {
            count: 0,
            mean: 0.0,
            m2: 0.0,
            clip,
        }
    }

    pub fn update(&mut self, x: f64) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::NonFinite("intrinsic error"));
        }
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population variance of everything seen so far.
    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0)
        }
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Folds `x` into the statistics, then returns its clipped z-score.
    pub fn normalize(&mut self, x: f64) -> Result<f64> {
        self.update(x)?;
        let z = (x - self.mean) / self.std().max(STD_FLOOR);
        Ok(z.clamp(-self.clip, self.clip))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_sample_is_zero() {
        let mut n = RunningNormalizer::new(5.0);
        assert_eq!(n.normalize(3.7).unwrap(), 0.0);
    }

    #[test]
    fn two_four_six() {
        let mut n = RunningNormalizer::new(5.0);
        for x in [2.0, 4.0, 6.0] {
            n.normalize(x).unwrap();
        }
        assert_eq!(n.mean(), 4.0);
        assert!((n.variance() - 8.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_stream_normalizes_to_zero() {
        let mut n = RunningNormalizer::new(5.0);
        for _ in 0..100 {
            assert_eq!(n.normalize(0.25).unwrap(), 0.0);
        }
    }

    #[test]
    fn clipping_and_rejection() {
        let mut n = RunningNormalizer::new(1.0);
        for _ in 0..50 {
            n.normalize(0.0).unwrap();
        }
        n.normalize(0.001).unwrap();
        assert_eq!(n.normalize(100.0).unwrap(), 1.0);
        assert!(n.normalize(f64::NAN).is_err());
        assert!(n.normalize(f64::INFINITY).is_err());
    }

    proptest! {
        #[test]
        fn matches_batch_statistics(xs in prop::collection::vec(-1e3f64..1e3, 1..200)) {
            let mut n = RunningNormalizer::new(5.0);
            for &x in &xs {
                let z = n.normalize(x).unwrap();
                prop_assert!(z.abs() <= 5.0);
            }
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
            prop_assert!((n.mean() - mean).abs() <= 1e-9 * (1.0 + mean.abs()));
            prop_assert!((n.variance() - var).abs() <= 1e-9 * (1.0 + var));
            prop_assert!(n.variance() >= 0.0);
        }
    }
}
