use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, LogNormal, Normal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Element distribution of a synthetic tensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    /// Standard normal.
    Gaussian,
    /// `exp(N(0, 1))` with a random sign.
    LogNormal,
    StudentT { dof: f64 },
    /// Standard normal where a `rate` fraction of entries is multiplied by
    /// `magnitude`.
    GaussianWithOutliers { rate: f64, magnitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub distribution: Distribution,
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(distribution: Distribution, rows: usize, cols: usize, seed: u64) -> Self {
        Self { distribution, rows, cols, seed }
    }

    /// Heavy-tailed stand-in for activations: Student-t with 4 degrees of freedom.
    pub fn activation_like(rows: usize, cols: usize, seed: u64) -> Self {
        Self::new(Distribution::StudentT { dof: 4.0 }, rows, cols, seed)
    }

    /// Stand-in for weights: standard normal.
    pub fn weight_like(rows: usize, cols: usize, seed: u64) -> Self {
        Self::new(Distribution::Gaussian, rows, cols, seed)
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        match self.distribution {
            Distribution::StudentT { dof } if !(dof.is_finite() && dof > 0.0) => bad("student-t needs dof > 0"),
            Distribution::GaussianWithOutliers { rate, magnitude } => {
                if !(0.0..=1.0).contains(&rate) {
                    bad("outlier rate must lie in [0, 1]")
                } else if !(magnitude.is_finite() && magnitude != 0.0) {
                    bad("outlier magnitude must be finite and nonzero")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Seeded tensor; identical specs always produce bit-identical data.
pub fn generate_tensor(spec: &GeneratorSpec) -> Result<Tensor> {
    spec.validate()?;
    let n = spec.rows * spec.cols;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0f64, 1.0).expect("unit normal");
    let data: Vec<f32> = match spec.distribution {
        Distribution::Gaussian => (0..n).map(|_| normal.sample(&mut rng) as f32).collect(),
        Distribution::LogNormal => {
            let ln = LogNormal::new(0.0f64, 1.0).expect("unit lognormal");
            (0..n)
                .map(|_| {
                    let v = ln.sample(&mut rng) as f32;
                    if rng.random_bool(0.5) { -v } else { v }
                })
                .collect()
        }
        Distribution::StudentT { dof } => {
            let t = StudentT::new(dof).map_err(|e| Error::Config(e.to_string()))?;
            (0..n).map(|_| t.sample(&mut rng) as f32).collect()
        }
        Distribution::GaussianWithOutliers { rate, magnitude } => {
            // Outlier positions come from an independent stream so the base
            // values match the plain Gaussian tensor with the same seed.
            let mut pick = ChaCha8Rng::seed_from_u64(spec.seed);
            pick.set_stream(1);
            (0..n)
                .map(|_| {
                    let v = normal.sample(&mut rng);
                    (if pick.random_bool(rate) { v * magnitude } else { v }) as f32
                })
                .collect()
        }
    };
    Tensor::new(spec.rows, spec.cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible() {
        for d in [
            Distribution::Gaussian,
            Distribution::LogNormal,
            Distribution::StudentT { dof: 3.0 },
            Distribution::GaussianWithOutliers { rate: 0.1, magnitude: 10.0 },
        ] {
            let s = GeneratorSpec::new(d, 8, 16, 42);
            let a = generate_tensor(&s).unwrap();
            let b = generate_tensor(&s).unwrap();
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
            assert_ne!(a, generate_tensor(&s.with_seed(43)).unwrap());
        }
    }

    #[test]
    fn outlier_positions() {
        let base = generate_tensor(&GeneratorSpec::new(Distribution::Gaussian, 128, 128, 5)).unwrap();
        let spec = GeneratorSpec::new(Distribution::GaussianWithOutliers { rate: 0.01, magnitude: 100.0 }, 128, 128, 5);
        let out = generate_tensor(&spec).unwrap();
        let moved: Vec<usize> = (0..base.len()).filter(|&i| base.data()[i] != out.data()[i]).collect();
        // binomial(16384, 0.01): mean 163.84, sd 12.7
        assert!((120..=210).contains(&moved.len()), "{}", moved.len());
        for i in moved {
            let want = base.data()[i] * 100.0;
            assert!((out.data()[i] - want).abs() <= want.abs() * 1e-6);
        }
    }

    #[test]
    fn student_t_is_heavy_tailed() {
        let t = generate_tensor(&GeneratorSpec::new(Distribution::StudentT { dof: 3.0 }, 1000, 1000, 1)).unwrap();
        let n = t.len() as f64;
        let mean = t.data().iter().map(|&x| x as f64).sum::<f64>() / n;
        let m2 = t.data().iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
        let m4 = t.data().iter().map(|&x| (x as f64 - mean).powi(4)).sum::<f64>() / n;
        assert!(m4 / (m2 * m2) - 3.0 > 0.0);
    }

    #[test]
    fn invalid_parameters() {
        assert!(generate_tensor(&GeneratorSpec::new(Distribution::StudentT { dof: 0.0 }, 1, 1, 0)).is_err());
        let bad_rate = Distribution::GaussianWithOutliers { rate: 1.5, magnitude: 2.0 };
        assert!(generate_tensor(&GeneratorSpec::new(bad_rate, 1, 1, 0)).is_err());
        let bad_mag = Distribution::GaussianWithOutliers { rate: 0.5, magnitude: f64::NAN };
        assert!(generate_tensor(&GeneratorSpec::new(bad_mag, 1, 1, 0)).is_err());
    }
}
