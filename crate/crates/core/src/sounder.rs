//! Channel estimation from a received capture of a periodic Zadoff-Chu
//! sounding waveform.
//!
//! The chain is `mitigate_artifacts` → `synchronize` → `estimate_cirs` →
//! `average_pdp`. Estimation is done per period in the frequency domain as a
//! ridge-regularized deconvolution, with an optional raised-cosine taper on
//! the outermost frequency bins.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::analysis::PowerDelayProfile;
use crate::error::{Error, Result};
use crate::signal::{circular_cross_correlate, dft, idft, is_prime, zadoff_chu, IqSignal};

pub const DEFAULT_REPETITIONS: usize = 3;
/// Averaging needs at least this many snapshots to be meaningful.
pub const MIN_AVERAGING_REPETITIONS: usize = 3;
pub const DEFAULT_RELATIVE_REGULARIZATION: f64 = 1e-6;
pub const DEFAULT_TAPER_FRACTION: f64 = 0.0;
/// Spike threshold of the artifact stand-in, in multiples of the median
/// magnitude.
pub const SPIKE_FACTOR: f64 = 6.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SoundingWaveform {
    base_sequence: Vec<Complex64>,
    repetitions: usize,
    sample_rate_hz: f64,
}

impl SoundingWaveform {
    pub fn new(
        base_sequence: Vec<Complex64>,
        repetitions: usize,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        if !is_prime(base_sequence.len()) {
            return Err(Error::NotPrime {
                length: base_sequence.len(),
            });
        }
        if repetitions == 0 {
            return Err(Error::invalid("repetitions", "must be at least 1"));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::invalid("sample rate", format!("{sample_rate_hz}")));
        }
        Ok(Self {
            base_sequence,
            repetitions,
            sample_rate_hz,
        })
    }

    pub fn zadoff_chu(
        root: usize,
        length: usize,
        repetitions: usize,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        Self::new(zadoff_chu(root, length)?, repetitions, sample_rate_hz)
    }

    pub fn base_sequence(&self) -> &[Complex64] {
        &self.base_sequence
    }

    pub fn period(&self) -> usize {
        self.base_sequence.len()
    }

    pub fn repetitions(&self) -> usize {
        self.repetitions
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn averaging_is_degenerate(&self) -> bool {
        self.repetitions < MIN_AVERAGING_REPETITIONS
    }
}

/// One estimated impulse response snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelImpulseResponse {
    taps: Vec<Complex64>,
    delay_step_s: f64,
    timestamp_index: usize,
}

impl ChannelImpulseResponse {
    pub fn new(taps: Vec<Complex64>, delay_step_s: f64, timestamp_index: usize) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::Empty("impulse response"));
        }
        if !(delay_step_s.is_finite() && delay_step_s > 0.0) {
            return Err(Error::invalid("delay step", format!("{delay_step_s}")));
        }
        Ok(Self {
            taps,
            delay_step_s,
            timestamp_index,
        })
    }

    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }

    pub fn delay_step_s(&self) -> f64 {
        self.delay_step_s
    }

    pub fn timestamp_index(&self) -> usize {
        self.timestamp_index
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_sqr()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularization {
    /// Fixed ridge term added to `|X[k]|²`.
    Absolute(f64),
    /// Ridge term as a multiple of the mean `|X[k]|²` of the reference.
    RelativeToReference(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOptions {
    pub regularization: Regularization,
    /// Fraction of all frequency bins, centred on Nyquist, covered by the
    /// raised-cosine taper. 0 disables it.
    pub taper_fraction: f64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            regularization: Regularization::RelativeToReference(DEFAULT_RELATIVE_REGULARIZATION),
            taper_fraction: DEFAULT_TAPER_FRACTION,
        }
    }
}

impl EstimatorOptions {
    /// Plain division, no taper.
    pub fn exact() -> Self {
        Self {
            regularization: Regularization::Absolute(0.0),
            taper_fraction: 0.0,
        }
    }
}

/// Result of per-period estimation. `expected_periods` is the waveform's
/// repetition count; fewer CIRs means the capture was short.
#[derive(Debug, Clone, PartialEq)]
pub struct CirEstimates {
    pub cirs: Vec<ChannelImpulseResponse>,
    pub expected_periods: usize,
}

impl CirEstimates {
    pub fn is_partial(&self) -> bool {
        self.cirs.len() < self.expected_periods
    }
}

pub fn build_sounding_signal(waveform: &SoundingWaveform) -> IqSignal {
    let samples = waveform
        .base_sequence
        .iter()
        .copied()
        .cycle()
        .take(waveform.period() * waveform.repetitions)
        .collect();
    IqSignal::new(samples, waveform.sample_rate_hz).expect("waveform sample rate validated")
}

/// Simplified hardware-artifact mitigation: removes the complex mean (DC
/// offset), then replaces samples above `SPIKE_FACTOR ×` the median
/// magnitude by linear interpolation between the nearest clean neighbours.
pub fn mitigate_artifacts(rx: &IqSignal) -> Result<IqSignal> {
    if rx.is_empty() {
        return Err(Error::Empty("capture"));
    }
    if rx.samples().iter().all(|s| s.norm_sqr() == 0.0) {
        return Ok(rx.clone());
    }
    let n = rx.len();
    let mean: Complex64 = rx.samples().iter().sum::<Complex64>() / n as f64;
    let mut out: Vec<Complex64> = rx.samples().iter().map(|s| s - mean).collect();

    let mut mags: Vec<f64> = out.iter().map(|s| s.norm()).collect();
    mags.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        mags[n / 2]
    } else {
        0.5 * (mags[n / 2 - 1] + mags[n / 2])
    };
    if median > 0.0 {
        let limit = SPIKE_FACTOR * median;
        let is_spike: Vec<bool> = out.iter().map(|s| s.norm() > limit).collect();
        let clean_before = |i: usize| (0..i).rev().find(|&j| !is_spike[j]);
        let clean_after = |i: usize| (i + 1..n).find(|&j| !is_spike[j]);
        let original = out.clone();
        for i in (0..n).filter(|&i| is_spike[i]) {
            out[i] = match (clean_before(i), clean_after(i)) {
                (Some(a), Some(b)) => {
                    let w = (i - a) as f64 / (b - a) as f64;
                    original[a] * (1.0 - w) + original[b] * w
                }
                (Some(a), None) => original[a],
                (None, Some(b)) => original[b],
                (None, None) => Complex64::new(0.0, 0.0),
            };
        }
    }
    Ok(rx.with_samples(out))
}

/// Coarse integer-sample alignment: the lag maximizing the circular
/// correlation of the first period-length window against the base
/// sequence. Always in `0..N`.
pub fn synchronize(rx: &IqSignal, waveform: &SoundingWaveform) -> Result<usize> {
    let n = waveform.period();
    if rx.len() < 2 * n {
        return Err(Error::invalid(
            "capture",
            format!("{} samples, at least {} needed to synchronize", rx.len(), 2 * n),
        ));
    }
    let corr = circular_cross_correlate(&rx.samples()[..n], waveform.base_sequence())?;
    let offset = corr
        .iter()
        .enumerate()
        .fold((0, -1.0), |best, (i, v)| {
            let m = v.norm();
            if m > best.1 {
                (i, m)
            } else {
                best
            }
        })
        .0;
    Ok(offset)
}

/// Maximum number of samples analysis windows start ahead of the
/// correlation peak.
pub const SYNC_GUARD_SAMPLES: usize = 32;

/// Window start placing the correlation peak `min(SYNC_GUARD_SAMPLES, N/4)`
/// samples into the CIR, so paths arriving before the strongest one are not
/// wrapped to the end.
pub fn guarded_offset(peak: usize, period: usize) -> usize {
    let guard = SYNC_GUARD_SAMPLES.min(period / 4);
    (peak % period + period - guard) % period
}

/// Drops the first `offset` samples so the capture starts on a period
/// boundary.
pub fn align(rx: &IqSignal, offset: usize) -> Result<IqSignal> {
    if offset >= rx.len() {
        return Err(Error::invalid(
            "alignment offset",
            format!("{offset} beyond capture length {}", rx.len()),
        ));
    }
    Ok(rx.with_samples(rx.samples()[offset..].to_vec()))
}

/// Raised-cosine weights over the outer `fraction` of bins around Nyquist,
/// in DFT bin order.
pub fn spectral_taper(len: usize, fraction: f64) -> Vec<f64> {
    let mut w = vec![1.0; len];
    if fraction <= 0.0 || len == 0 {
        return w;
    }
    let start = 0.5 * (1.0 - fraction.min(1.0));
    for (k, wk) in w.iter_mut().enumerate() {
        let f = k.min(len - k) as f64 / len as f64;
        if f > start {
            *wk = 0.5 * (1.0 + (PI * (f - start) / (0.5 - start)).cos());
        }
    }
    w
}

/// Per-period channel estimates `H = Y·conj(X) / (|X|² + ε)`, tapered and
/// transformed back to the delay domain. `rx` must start on a period
/// boundary.
pub fn estimate_cirs(
    rx: &IqSignal,
    waveform: &SoundingWaveform,
    options: &EstimatorOptions,
) -> Result<CirEstimates> {
    let n = waveform.period();
    let reference = dft(waveform.base_sequence())?;
    let mean_power = reference.iter().map(|x| x.norm_sqr()).sum::<f64>() / n as f64;
    if !(mean_power > 0.0) {
        return Err(Error::invalid("reference sequence", "zero energy"));
    }
    let ridge = match options.regularization {
        Regularization::Absolute(e) => e,
        Regularization::RelativeToReference(r) => r * mean_power,
    };
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(Error::invalid("regularization", format!("{ridge}")));
    }
    if !(0.0..=1.0).contains(&options.taper_fraction) {
        return Err(Error::invalid(
            "taper fraction",
            format!("{} outside [0, 1]", options.taper_fraction),
        ));
    }
    let taper = spectral_taper(n, options.taper_fraction);
    let periods = (rx.len() / n).min(waveform.repetitions());
    if periods == 0 {
        return Err(Error::invalid(
            "capture",
            format!("{} samples, shorter than one period of {n}", rx.len()),
        ));
    }
    let step = 1.0 / rx.sample_rate_hz();
    let cirs = (0..periods)
        .map(|p| {
            let spectrum = dft(&rx.samples()[p * n..(p + 1) * n])?;
            let h: Vec<Complex64> = spectrum
                .iter()
                .zip(&reference)
                .zip(&taper)
                .map(|((y, x), w)| {
                    let denom = x.norm_sqr() + ridge;
                    if denom > 0.0 {
                        y * x.conj() / denom * *w
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect();
            ChannelImpulseResponse::new(idft(&h)?, step, p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CirEstimates {
        cirs,
        expected_periods: waveform.repetitions(),
    })
}

/// Mean of `|h[k]|²` over snapshots.
pub fn average_pdp(cirs: &[ChannelImpulseResponse]) -> Result<PowerDelayProfile> {
    let first = cirs.first().ok_or(Error::Empty("CIR list"))?;
    let len = first.len();
    let step = first.delay_step_s();
    for c in cirs {
        if c.len() != len {
            return Err(Error::LengthMismatch {
                left: len,
                right: c.len(),
            });
        }
        if c.delay_step_s() != step {
            return Err(Error::invalid(
                "CIR list",
                format!("mixed delay steps {step} and {}", c.delay_step_s()),
            ));
        }
    }
    let count = cirs.len() as f64;
    let powers = (0..len)
        .map(|k| cirs.iter().map(|c| c.taps[k].norm_sqr()).sum::<f64>() / count)
        .collect();
    PowerDelayProfile::uniform(0.0, step, powers)
}
