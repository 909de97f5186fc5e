//! Binomial error estimates.

/// Two-sided 95% normal quantile used for every Wilson interval.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Monte Carlo misclassification estimate with a 95% Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorEstimate {
    pub errors: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl ErrorEstimate {
    /// # Panics
    /// If `errors > trials` or `trials == 0`.
    pub fn new(errors: u64, trials: u64) -> Self {
        assert!(trials > 0, "an estimate needs at least one trial");
        assert!(
            errors <= trials,
            "errors ({errors}) exceed trials ({trials})"
        );
        let p_hat = errors as f64 / trials as f64;
        let (lo, hi) = wilson_interval(errors, trials, Z95);
        Self {
            errors,
            trials,
            p_hat,
            ci_low: lo.min(p_hat).max(0.0),
            ci_high: hi.max(p_hat).min(1.0),
        }
    }

    /// Pools counts; `None` if `parts` is empty.
    pub fn pooled<I: IntoIterator<Item = ErrorEstimate>>(parts: I) -> Option<Self> {
        let (e, t) = parts
            .into_iter()
            .fold((0u64, 0u64), |(e, t), p| (e + p.errors, t + p.trials));
        (t > 0).then(|| Self::new(e, t))
    }

    /// Plug-in binomial standard error sqrt(p(1-p)/n).
    pub fn standard_error(&self) -> f64 {
        (self.p_hat * (1.0 - self.p_hat) / self.trials as f64).sqrt()
    }

    /// True when the two intervals share at least one point.
    pub fn overlaps(&self, other: &ErrorEstimate) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    (center - half, center + half)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wilson_known_value() {
        // 10/100: statsmodels proportion_confint(method="wilson") -> (0.05522914, 0.17436566)
        let (lo, hi) = wilson_interval(10, 100, Z95);
        assert!((lo - 0.055_229_14).abs() < 1e-7);
        assert!((hi - 0.174_365_66).abs() < 1e-7);
    }

    #[test]
    fn zero_errors_interval() {
        let e = ErrorEstimate::new(0, 1000);
        assert_eq!(e.p_hat, 0.0);
        assert_eq!(e.ci_low, 0.0);
        assert!(e.ci_high > 0.0 && e.ci_high < 0.005);
    }

    #[test]
    fn pooling() {
        let p =
            ErrorEstimate::pooled([ErrorEstimate::new(3, 10), ErrorEstimate::new(1, 30)]).unwrap();
        assert_eq!((p.errors, p.trials), (4, 40));
        assert_eq!(p.p_hat, 0.1);
        assert!(ErrorEstimate::pooled(Vec::new()).is_none());
    }

    proptest! {
        #[test]
        fn interval_brackets_estimate(trials in 1u64..100_000, frac in 0.0f64..=1.0) {
            let errors = ((trials as f64) * frac).floor() as u64;
            let e = ErrorEstimate::new(errors, trials);
            prop_assert!(e.ci_low <= e.p_hat && e.p_hat <= e.ci_high);
            prop_assert!(e.ci_low >= 0.0 && e.ci_high <= 1.0);
            prop_assert_eq!(e.p_hat, errors as f64 / trials as f64);
        }
    }
}
