//! Synthetic channel application and noise injection. Ground truth for
//! exercising the estimator without radio hardware.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;
use crate::signal::{dft, idft, IqSignal};

/// Impulse response on the sample grid of the signal it is applied to.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticChannel {
    taps: Vec<Complex64>,
}

impl SyntheticChannel {
    pub fn new(taps: Vec<Complex64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::Empty("channel taps"));
        }
        if taps.iter().any(|t| !(t.re.is_finite() && t.im.is_finite())) {
            return Err(Error::invalid("channel taps", "non-finite tap value"));
        }
        Ok(Self { taps })
    }

    pub fn identity() -> Self {
        Self {
            taps: vec![Complex64::new(1.0, 0.0)],
        }
    }

    /// Builds taps from `(delay_samples, amplitude)` pairs; paths sharing a
    /// delay add coherently.
    pub fn from_paths(paths: &[(usize, Complex64)]) -> Result<Self> {
        let len = paths
            .iter()
            .map(|&(d, _)| d + 1)
            .max()
            .ok_or(Error::Empty("channel paths"))?;
        let mut taps = vec![Complex64::new(0.0, 0.0); len];
        for &(d, a) in paths {
            taps[d] += a;
        }
        Self::new(taps)
    }

    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }
}

/// Circular convolution `y[n] = Σ_l h[l]·x[(n-l) mod N]`, evaluated in the
/// frequency domain.
pub fn apply_channel(tx: &IqSignal, channel: &SyntheticChannel) -> Result<IqSignal> {
    let n = tx.len();
    if n == 0 {
        return Err(Error::Empty("transmit signal"));
    }
    if channel.taps.len() > n {
        return Err(Error::invalid(
            "channel",
            format!(
                "{} taps exceed signal length {}",
                channel.taps.len(),
                n
            ),
        ));
    }
    let mut padded = channel.taps.clone();
    padded.resize(n, Complex64::new(0.0, 0.0));
    let spec_h = dft(&padded)?;
    let spec_x = dft(tx.samples())?;
    let product: Vec<Complex64> = spec_x.iter().zip(&spec_h).map(|(x, h)| x * h).collect();
    Ok(tx.with_samples(idft(&product)?))
}

/// Adds circularly-symmetric complex Gaussian noise at `snr_db` relative to
/// the mean signal power. `f64::INFINITY` disables noise.
pub fn add_awgn(signal: &IqSignal, snr_db: f64, seed: u64) -> Result<IqSignal> {
    if snr_db.is_nan() {
        return Err(Error::invalid("SNR", "NaN"));
    }
    let power = signal.mean_power();
    if !(power > 0.0) {
        return Err(Error::invalid("signal", "zero energy, SNR undefined"));
    }
    if snr_db == f64::INFINITY {
        return Ok(signal.clone());
    }
    let variance = power / 10f64.powf(snr_db / 10.0);
    let sigma = (variance / 2.0).sqrt();
    let mut rng = rng::seeded(seed, rng::stream::NOISE);
    let samples = signal
        .samples()
        .iter()
        .map(|s| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            s + Complex64::new(re, im) * sigma
        })
        .collect();
    Ok(signal.with_samples(samples))
}
