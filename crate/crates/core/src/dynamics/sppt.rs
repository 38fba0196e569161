use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{wrap, ModelSpec, StateVector};

/// Multiplicative tendency noise with Gaussian spatial correlation.
///
/// Each draw is white noise circularly convolved with a Gaussian kernel
/// normalized so the field has unit variance. The kernel width is
/// `corr_len / sqrt(2)`, which makes the field correlation
/// `exp(-d^2 / (2 corr_len^2))`. Draws are independent in time.
#[derive(Clone, Debug)]
pub struct SpptPerturber {
    kernel: Vec<f64>,
    rng: ChaCha8Rng,
}

impl SpptPerturber {
    pub fn new(spec: &ModelSpec, seed: u64) -> Self {
        SpptPerturber {
            kernel: gaussian_kernel(spec.n, spec.sppt_corr_len),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Zero-mean, unit-variance correlated field.
    pub fn sample_field(&mut self) -> StateVector {
        let n = self.kernel.len();
        let z: Vec<f64> = (0..n)
            .map(|_| StandardNormal.sample(&mut self.rng))
            .collect();
        DVector::from_fn(n, |i, _| {
            self.kernel
                .iter()
                .enumerate()
                .map(|(k, g)| g * z[wrap(i as isize + k as isize, n)])
                .sum()
        })
    }

    /// Tendency multiplier `1 + sigma * xi`, or `None` when the scheme is off.
    pub(crate) fn draw(&mut self, spec: &ModelSpec) -> Option<StateVector> {
        if spec.sppt_amplitude == 0.0 {
            return None;
        }
        let xi = self.sample_field();
        Some(xi.map(|v| 1.0 + spec.sppt_amplitude * v))
    }
}

fn gaussian_kernel(n: usize, corr_len: f64) -> Vec<f64> {
    let mut g: Vec<f64> = (0..n)
        .map(|k| {
            let d = k.min(n - k) as f64;
            if corr_len > 0.0 {
                let w2 = corr_len * corr_len / 2.0;
                (-d * d / (2.0 * w2)).exp()
            } else if k == 0 {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    g.iter_mut().for_each(|v| *v /= norm);
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_has_unit_variance_and_gaussian_correlation() {
        let mut spec = ModelSpec::forecast(40);
        spec.sppt_corr_len = 3.0;
        let mut p = SpptPerturber::new(&spec, 42);
        let draws = 20_000;
        let mut var = 0.0;
        let mut cov = [0.0; 4];
        for _ in 0..draws {
            let f = p.sample_field();
            var += f[0] * f[0];
            for d in 0..4 {
                cov[d] += f[0] * f[d + 1];
            }
        }
        var /= draws as f64;
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
        for d in 0..4 {
            let rho = cov[d] / draws as f64;
            let expect = (-((d + 1) as f64).powi(2) / 18.0).exp();
            assert!(
                (rho - expect).abs() < 0.05,
                "lag {} rho {rho} expect {expect}",
                d + 1
            );
        }
    }

    #[test]
    fn zero_length_gives_white_noise() {
        let g = gaussian_kernel(10, 0.0);
        assert_eq!(g[0], 1.0);
        assert!(g[1..].iter().all(|&v| v == 0.0));
    }
}
