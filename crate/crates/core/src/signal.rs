//! Complex baseband primitives: Zadoff-Chu generation, transforms and
//! circular correlation.
//!
//! Transforms are unnormalized in the forward direction and scaled by `1/N`
//! in the inverse direction, so `idft(dft(x)) == x`. Any length is accepted,
//! prime lengths included.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Default sounding sequence length (prime).
pub const DEFAULT_ZC_LENGTH: usize = 353;
pub const DEFAULT_ZC_ROOT: usize = 1;
/// Capture sample rate used throughout the measurement chain.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 25.6e6;

/// A complex baseband sample stream.
#[derive(Debug, Clone, PartialEq)]
pub struct IqSignal {
    samples: Vec<Complex64>,
    sample_rate_hz: f64,
    center_frequency_hz: f64,
}

impl IqSignal {
    pub fn new(samples: Vec<Complex64>, sample_rate_hz: f64) -> Result<Self> {
        Self::with_center_frequency(samples, sample_rate_hz, 0.0)
    }

    pub fn with_center_frequency(
        samples: Vec<Complex64>,
        sample_rate_hz: f64,
        center_frequency_hz: f64,
    ) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::invalid(
                "sample rate",
                format!("{sample_rate_hz} is not finite and positive"),
            ));
        }
        if !(center_frequency_hz.is_finite() && center_frequency_hz >= 0.0) {
            return Err(Error::invalid(
                "center frequency",
                format!("{center_frequency_hz} is not finite and non-negative"),
            ));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            center_frequency_hz,
        })
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn center_frequency_hz(&self) -> f64 {
        self.center_frequency_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Same metadata, new samples.
    pub fn with_samples(&self, samples: Vec<Complex64>) -> Self {
        Self {
            samples,
            sample_rate_hz: self.sample_rate_hz,
            center_frequency_hz: self.center_frequency_hz,
        }
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }

    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.energy() / self.samples.len() as f64
        }
    }
}

pub fn is_prime(n: usize) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// Zadoff-Chu sequence `x[n] = exp(-i·π·u·n·(n+1)/N)` of prime length `N`.
///
/// The phase index `u·n·(n+1)` is reduced modulo `2N` in integer arithmetic
/// so long sequences keep full phase precision.
pub fn zadoff_chu(root: usize, length: usize) -> Result<Vec<Complex64>> {
    if !is_prime(length) {
        return Err(Error::NotPrime { length });
    }
    if root == 0 || root >= length {
        return Err(Error::invalid(
            "Zadoff-Chu root",
            format!("{root} is outside 1..{length}"),
        ));
    }
    let modulus = 2 * length as u128;
    let seq = (0..length as u128)
        .map(|n| {
            let k = (root as u128 * ((n * (n + 1)) % modulus)) % modulus;
            Complex64::from_polar(1.0, -PI * k as f64 / length as f64)
        })
        .collect();
    Ok(seq)
}

fn transform(samples: &[Complex64], inverse: bool) -> Result<Vec<Complex64>> {
    if samples.is_empty() {
        return Err(Error::Empty("transform input"));
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(samples.len())
    } else {
        planner.plan_fft_forward(samples.len())
    };
    let mut buf = samples.to_vec();
    fft.process(&mut buf);
    if inverse {
        let scale = 1.0 / samples.len() as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(buf)
}

/// Forward DFT, `X[k] = Σ x[n]·exp(-2πi·kn/N)`.
pub fn dft(samples: &[Complex64]) -> Result<Vec<Complex64>> {
    transform(samples, false)
}

/// Inverse DFT including the `1/N` factor.
pub fn idft(spectrum: &[Complex64]) -> Result<Vec<Complex64>> {
    transform(spectrum, true)
}

/// Circular cross-correlation `r[k] = Σ_n a[n]·conj(b[(n-k) mod N])`,
/// computed as `idft(A·conj(B))`.
pub fn circular_cross_correlate(a: &[Complex64], b: &[Complex64]) -> Result<Vec<Complex64>> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let spec_a = dft(a)?;
    let spec_b = dft(b)?;
    let product: Vec<Complex64> = spec_a
        .iter()
        .zip(&spec_b)
        .map(|(x, y)| x * y.conj())
        .collect();
    idft(&product)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_autocorrelation(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| (0..n).map(|i| x[i] * x[(i + n - k) % n].conj()).sum())
            .collect()
    }

    #[test]
    fn primality() {
        let primes: Vec<usize> = (0..40).filter(|&n| is_prime(n)).collect();
        assert_eq!(primes, vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37]);
        assert!(is_prime(353));
        assert!(is_prime(1021));
        assert!(!is_prime(354));
    }

    #[test]
    fn zc_first_sample_is_one() {
        let x = zadoff_chu(1, 5).unwrap();
        assert!((x[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        // n = 1: exp(-iπ·2/5)
        let expected = Complex64::from_polar(1.0, -2.0 * PI / 5.0);
        assert!((x[1] - expected).norm() < 1e-15);
    }

    #[test]
    fn zc_unit_magnitude() {
        let x = zadoff_chu(1, 353).unwrap();
        assert!(x.iter().all(|s| (s.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn zc_periodic_autocorrelation_oracle() {
        let n = 353;
        let x = zadoff_chu(1, n).unwrap();
        let r = direct_autocorrelation(&x);
        assert!((r[0].norm() - n as f64).abs() < 1e-9);
        let worst = r[1..].iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(worst < 1e-9 * n as f64, "sidelobe {worst}");
    }

    #[test]
    fn zc_rejects_bad_arguments() {
        assert!(matches!(
            zadoff_chu(1, 354),
            Err(Error::NotPrime { length: 354 })
        ));
        assert!(matches!(zadoff_chu(0, 353), Err(Error::Invalid { .. })));
        assert!(matches!(zadoff_chu(353, 353), Err(Error::Invalid { .. })));
        assert!(matches!(zadoff_chu(1, 1), Err(Error::NotPrime { .. })));
    }

    #[test]
    fn dft_of_constant() {
        let x = vec![Complex64::new(1.0, 0.0); 4];
        let spec = dft(&x).unwrap();
        assert!((spec[0] - Complex64::new(4.0, 0.0)).norm() < 1e-15);
        assert!(spec[1..].iter().all(|v| v.norm() < 1e-15));
    }

    #[test]
    fn transforms_reject_empty() {
        assert!(matches!(dft(&[]), Err(Error::Empty(_))));
        assert!(matches!(idft(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn delta_correlation_shift() {
        let mut a = vec![Complex64::new(0.0, 0.0); 8];
        let mut b = a.clone();
        a[0] = Complex64::new(1.0, 0.0);
        b[3] = Complex64::new(1.0, 0.0);
        let r = circular_cross_correlate(&a, &b).unwrap();
        let peak = r
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))
            .unwrap()
            .0;
        assert_eq!(peak, 5);
    }

    #[test]
    fn correlation_length_mismatch() {
        let a = vec![Complex64::new(1.0, 0.0); 4];
        let b = vec![Complex64::new(1.0, 0.0); 5];
        assert!(matches!(
            circular_cross_correlate(&a, &b),
            Err(Error::LengthMismatch { left: 4, right: 5 })
        ));
    }

    #[test]
    fn rejects_bad_sample_rate() {
        assert!(IqSignal::new(vec![], 0.0).is_err());
        assert!(IqSignal::new(vec![], f64::NAN).is_err());
        assert!(IqSignal::with_center_frequency(vec![], 1.0, -1.0).is_err());
    }
}
