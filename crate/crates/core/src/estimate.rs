//! Monte Carlo estimates with standard errors.
//!
//! Every stochastic quantity in the crate is reported as an [`Estimate`]
//! so that acceptance bands (k standard errors) can be formed uniformly.

/// A point estimate together with its standard error.
///
/// Deterministic quantities (quadrature, closed forms) carry `std_err = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, std_err: 0.0 }
    }

    /// Sample mean and standard error of the mean.
    pub fn from_samples(samples: &[f64]) -> Self {
        let m = samples.len();
        assert!(m > 0, "empty sample set");
        let mean = samples.iter().sum::<f64>() / m as f64;
        if m == 1 {
            return Estimate { value: mean, std_err: 0.0 };
        }
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0);
        Estimate {
            value: mean,
            std_err: (var / m as f64).sqrt(),
        }
    }

    pub fn scale(self, c: f64) -> Self {
        Estimate {
            value: c * self.value,
            std_err: c.abs() * self.std_err,
        }
    }

    /// Sum of independent estimates; standard errors add in quadrature.
    pub fn add(self, other: Estimate) -> Self {
        Estimate {
            value: self.value + other.value,
            std_err: (self.std_err.powi(2) + other.std_err.powi(2)).sqrt(),
        }
    }

    pub fn sub(self, other: Estimate) -> Self {
        self.add(other.scale(-1.0))
    }

    /// Delta-method propagation through |.|^{1/s} applied to a mean of |.|^s.
    pub fn powf(self, e: f64) -> Self {
        let v = self.value.max(0.0);
        let value = v.powf(e);
        let std_err = if v > 0.0 {
            e.abs() * v.powf(e - 1.0) * self.std_err
        } else {
            0.0
        };
        Estimate { value, std_err }
    }

    /// |estimate - target| <= k * std_err.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_err
    }
}

/// Combined standard error of two independent estimates.
pub fn combined_se(a: &Estimate, b: &Estimate) -> f64 {
    (a.std_err.powi(2) + b.std_err.powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_se() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0]);
        assert!((e.value - 2.0).abs() < 1e-15);
        // sample variance 1, se = 1/sqrt(3)
        assert!((e.std_err - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn quadrature_of_errors() {
        let a = Estimate { value: 1.0, std_err: 3.0 };
        let b = Estimate { value: 2.0, std_err: 4.0 };
        let c = a.add(b);
        assert_eq!(c.value, 3.0);
        assert!((c.std_err - 5.0).abs() < 1e-15);
    }
}
