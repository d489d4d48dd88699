//! Power delay profile statistics.
//!
//! Processing order used by [`extract_parameters`]:
//! noise floor → threshold → first-arrival normalization → delay moments →
//! K-factor → cluster count. Each step is exposed on its own so callers can
//! recompose it.

use crate::error::{Error, Result};

/// Noise floor rule: median of the weakest quarter of the bins.
pub const NOISE_FLOOR_RULE: &str = "median-of-weakest-quartile";
pub const DEFAULT_MARGIN_DB: f64 = 12.0;
pub const DEFAULT_MIN_SEPARATION_BINS: usize = 2;
/// Shortest profile for which a noise floor can be estimated.
pub const MIN_FLOOR_BINS: usize = 16;
/// Largest negative radicand (s²) in the delay-spread formula treated as
/// rounding noise.
const RADICAND_TOLERANCE_S2: f64 = 1e-18;
/// Lowest power used when converting to dB in comparisons.
const COMPARE_FLOOR_LINEAR: f64 = 1e-12;

/// Delay/power pairs on a uniform delay grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerDelayProfile {
    delays_s: Vec<f64>,
    powers_linear: Vec<f64>,
    noise_floor_linear: Option<f64>,
}

impl PowerDelayProfile {
    pub fn new(delays_s: Vec<f64>, powers_linear: Vec<f64>) -> Result<Self> {
        if powers_linear.is_empty() {
            return Err(Error::Empty("power delay profile"));
        }
        if delays_s.len() != powers_linear.len() {
            return Err(Error::LengthMismatch {
                left: delays_s.len(),
                right: powers_linear.len(),
            });
        }
        if let Some(p) = powers_linear.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::invalid(
                "profile power",
                format!("{p} is not finite and non-negative"),
            ));
        }
        if delays_s.iter().any(|d| !d.is_finite()) {
            return Err(Error::invalid("profile delay", "non-finite delay"));
        }
        if delays_s.len() > 1 {
            let step = delays_s[1] - delays_s[0];
            if !(step > 0.0) {
                return Err(Error::invalid("profile delays", "not strictly increasing"));
            }
            let scale = delays_s
                .iter()
                .fold(step, |acc, d| acc.max(d.abs()));
            let tolerance = 1e-12 * scale;
            for w in delays_s.windows(2) {
                if ((w[1] - w[0]) - step).abs() > tolerance {
                    return Err(Error::invalid("profile delays", "grid is not uniform"));
                }
            }
        }
        Ok(Self {
            delays_s,
            powers_linear,
            noise_floor_linear: None,
        })
    }

    /// Profile on the grid `first_delay_s + k·step_s`.
    pub fn uniform(first_delay_s: f64, step_s: f64, powers_linear: Vec<f64>) -> Result<Self> {
        if !(step_s.is_finite() && step_s > 0.0) {
            return Err(Error::invalid("delay step", format!("{step_s}")));
        }
        let delays = (0..powers_linear.len())
            .map(|k| first_delay_s + k as f64 * step_s)
            .collect();
        Self::new(delays, powers_linear)
    }

    pub fn with_noise_floor(mut self, floor_linear: f64) -> Self {
        self.noise_floor_linear = Some(floor_linear);
        self
    }

    pub fn delays_s(&self) -> &[f64] {
        &self.delays_s
    }

    pub fn powers_linear(&self) -> &[f64] {
        &self.powers_linear
    }

    pub fn noise_floor_linear(&self) -> Option<f64> {
        self.noise_floor_linear
    }

    pub fn len(&self) -> usize {
        self.powers_linear.len()
    }

    pub fn is_empty(&self) -> bool {
        self.powers_linear.is_empty()
    }

    /// Grid spacing, `None` for a single-bin profile.
    pub fn delay_step_s(&self) -> Option<f64> {
        (self.delays_s.len() > 1).then(|| self.delays_s[1] - self.delays_s[0])
    }

    pub fn total_power(&self) -> f64 {
        self.powers_linear.iter().sum()
    }

    pub fn max_power(&self) -> f64 {
        self.powers_linear.iter().copied().fold(0.0, f64::max)
    }

    /// Same grid and floor with every power multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let mut out = Self::new(
            self.delays_s.clone(),
            self.powers_linear.iter().map(|p| p * factor).collect(),
        )?;
        out.noise_floor_linear = self.noise_floor_linear.map(|f| f * factor);
        Ok(out)
    }

    /// Same powers with every delay moved by `delta_s`.
    pub fn shifted(&self, delta_s: f64) -> Result<Self> {
        let mut out = Self::new(
            self.delays_s.iter().map(|d| d + delta_s).collect(),
            self.powers_linear.clone(),
        )?;
        out.noise_floor_linear = self.noise_floor_linear;
        Ok(out)
    }

    fn require_floor(&self) -> Result<f64> {
        self.noise_floor_linear
            .ok_or_else(|| Error::invalid("profile", "noise floor not computed"))
    }
}

/// Large-scale parameters extracted from one profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParameters {
    pub rms_delay_spread_s: f64,
    pub mean_excess_delay_s: f64,
    pub second_moment_s2: f64,
    /// `None` for NLOS profiles.
    pub k_factor_db: Option<f64>,
    pub cluster_count: usize,
    pub scenario_label: String,
}

impl ChannelParameters {
    /// Checks `σ² = second moment − mean²` to 1e-12 relative.
    pub fn is_consistent(&self) -> bool {
        let radicand = self.second_moment_s2 - self.mean_excess_delay_s.powi(2);
        let ds2 = self.rms_delay_spread_s.powi(2);
        let scale = self.second_moment_s2.max(f64::MIN_POSITIVE);
        (ds2 - radicand.max(0.0)).abs() <= 1e-12 * scale
            || (radicand < 0.0 && radicand > -RADICAND_TOLERANCE_S2 && ds2 == 0.0)
    }

    /// One line in the style of a parameter table: DS in ns, KF in dB or
    /// `x`, cluster count.
    pub fn table_row(&self) -> String {
        let kf = match self.k_factor_db {
            Some(k) => format!("{k:.1} dB"),
            None => "x".to_string(),
        };
        format!(
            "{} | DS {:.1} ns | KF {} | {} clusters",
            self.scenario_label,
            self.rms_delay_spread_s * 1e9,
            kf,
            self.cluster_count
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionOptions {
    pub margin_db: f64,
    pub min_separation_bins: usize,
}

impl Default for ExtractionOptions {
    fn default() -> Self {
        Self {
            margin_db: DEFAULT_MARGIN_DB,
            min_separation_bins: DEFAULT_MIN_SEPARATION_BINS,
        }
    }
}

fn threshold_level(floor: f64, margin_db: f64) -> f64 {
    floor * 10f64.powf(margin_db / 10.0)
}

pub fn estimate_noise_floor(pdp: &PowerDelayProfile) -> Result<f64> {
    if pdp.len() < MIN_FLOOR_BINS {
        return Err(Error::invalid(
            "profile",
            format!(
                "{} bins, at least {MIN_FLOOR_BINS} needed for a noise floor",
                pdp.len()
            ),
        ));
    }
    let mut sorted = pdp.powers_linear.clone();
    sorted.sort_by(f64::total_cmp);
    let weakest = &sorted[..pdp.len() / 4];
    let mid = weakest.len() / 2;
    Ok(if weakest.len() % 2 == 1 {
        weakest[mid]
    } else {
        0.5 * (weakest[mid - 1] + weakest[mid])
    })
}

/// Zeroes bins below `floor · 10^(margin/10)`; the grid is kept.
pub fn threshold_pdp(pdp: &PowerDelayProfile, margin_db: f64) -> Result<PowerDelayProfile> {
    let level = threshold_level(pdp.require_floor()?, margin_db);
    let mut out = pdp.clone();
    for p in &mut out.powers_linear {
        if *p < level {
            *p = 0.0;
        }
    }
    Ok(out)
}

/// Scales the peak to 1 and moves the first bin above threshold to delay 0,
/// discarding the bins before it.
pub fn normalize_pdp(pdp: &PowerDelayProfile, margin_db: f64) -> Result<PowerDelayProfile> {
    let floor = pdp.require_floor()?;
    let level = threshold_level(floor, margin_db);
    let first = pdp
        .powers_linear
        .iter()
        .position(|&p| p > level)
        .ok_or(Error::EmptyProfile)?;
    let peak = pdp.max_power();
    let origin = pdp.delays_s[first];
    let delays = pdp.delays_s[first..].iter().map(|d| d - origin).collect();
    let powers = pdp.powers_linear[first..].iter().map(|p| p / peak).collect();
    Ok(PowerDelayProfile::new(delays, powers)?.with_noise_floor(floor / peak))
}

fn weighted_moment(pdp: &PowerDelayProfile, order: i32) -> Result<f64> {
    let total = pdp.total_power();
    if !(total > 0.0) {
        return Err(Error::ZeroPower);
    }
    let weighted: f64 = pdp
        .delays_s
        .iter()
        .zip(&pdp.powers_linear)
        .map(|(d, p)| p * d.powi(order))
        .sum();
    Ok(weighted / total)
}

/// Power-weighted mean delay.
pub fn mean_excess_delay(pdp: &PowerDelayProfile) -> Result<f64> {
    weighted_moment(pdp, 1)
}

/// Power-weighted mean squared delay (s²).
pub fn second_moment(pdp: &PowerDelayProfile) -> Result<f64> {
    weighted_moment(pdp, 2)
}

fn spread_from_moments(mean: f64, second: f64) -> Result<f64> {
    let radicand = second - mean * mean;
    if radicand >= 0.0 {
        Ok(radicand.sqrt())
    } else if radicand > -RADICAND_TOLERANCE_S2 {
        Ok(0.0)
    } else {
        Err(Error::Inconsistent(format!(
            "negative delay variance {radicand:e} s²"
        )))
    }
}

/// RMS delay spread, `sqrt(second_moment − mean²)`.
pub fn rms_delay_spread(pdp: &PowerDelayProfile) -> Result<f64> {
    spread_from_moments(mean_excess_delay(pdp)?, second_moment(pdp)?)
}

/// Ricean K-factor in dB of a thresholded profile: the strongest bin over
/// the total power of all other non-zero bins. `None` when fewer than two
/// bins carry power.
pub fn k_factor(pdp: &PowerDelayProfile) -> Result<Option<f64>> {
    let surviving: Vec<f64> = pdp.powers_linear.iter().copied().filter(|&p| p > 0.0).collect();
    if surviving.is_empty() {
        return Err(Error::EmptyProfile);
    }
    if surviving.len() < 2 {
        return Ok(None);
    }
    let (strongest_idx, strongest) = surviving
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty");
    let scattered: f64 = surviving
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != strongest_idx)
        .map(|(_, p)| p)
        .sum();
    Ok(Some(10.0 * (strongest / scattered).log10()))
}

/// Local maxima strictly above `floor · 10^(margin/10)`. Among maxima
/// closer than `min_separation_bins`, only the stronger is kept.
pub fn count_clusters(
    pdp: &PowerDelayProfile,
    margin_db: f64,
    min_separation_bins: usize,
) -> Result<usize> {
    Ok(cluster_peaks(pdp, margin_db, min_separation_bins)?.len())
}

/// Bin indices of the accepted cluster peaks, ascending.
pub fn cluster_peaks(
    pdp: &PowerDelayProfile,
    margin_db: f64,
    min_separation_bins: usize,
) -> Result<Vec<usize>> {
    if min_separation_bins == 0 {
        return Err(Error::invalid("min separation", "must be at least 1 bin"));
    }
    let level = threshold_level(pdp.require_floor()?, margin_db);
    let p = &pdp.powers_linear;
    let n = p.len();
    // Plateaus count once, at their first bin.
    let mut candidates: Vec<usize> = (0..n)
        .filter(|&i| {
            p[i] > level
                && (i == 0 || p[i] > p[i - 1])
                && (i + 1 == n || p[i] >= p[i + 1])
        })
        .collect();
    candidates.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    let mut accepted: Vec<usize> = Vec::new();
    for c in candidates {
        if accepted.iter().all(|&a| a.abs_diff(c) >= min_separation_bins) {
            accepted.push(c);
        }
    }
    accepted.sort_unstable();
    Ok(accepted)
}

/// Floor estimation, thresholding and normalization in one step. The
/// returned profile carries its (normalized) noise floor.
pub fn condition_profile(
    pdp: &PowerDelayProfile,
    margin_db: f64,
) -> Result<PowerDelayProfile> {
    let floor = estimate_noise_floor(pdp)?;
    let floored = pdp.clone().with_noise_floor(floor);
    let thresholded = threshold_pdp(&floored, margin_db)?;
    normalize_pdp(&thresholded, margin_db)
}

pub fn extract_parameters(
    pdp: &PowerDelayProfile,
    los: bool,
    options: &ExtractionOptions,
) -> Result<ChannelParameters> {
    let conditioned = condition_profile(pdp, options.margin_db)?;
    let mean = mean_excess_delay(&conditioned)?;
    let second = second_moment(&conditioned)?;
    let spread = spread_from_moments(mean, second)?;
    let k_factor_db = if los { k_factor(&conditioned)? } else { None };
    let cluster_count = count_clusters(
        &conditioned,
        options.margin_db,
        options.min_separation_bins,
    )?;
    Ok(ChannelParameters {
        rms_delay_spread_s: spread,
        mean_excess_delay_s: mean,
        second_moment_s2: second,
        k_factor_db,
        cluster_count,
        scenario_label: if los { "los" } else { "nlos" }.to_string(),
    })
}

/// Measured-versus-simulated comparison metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub measured_ds_s: f64,
    pub simulated_ds_s: f64,
    pub ds_error_s: f64,
    pub ds_relative_error: f64,
    pub measured_cluster_count: usize,
    pub simulated_cluster_count: usize,
    /// Simulated minus measured.
    pub cluster_count_diff: i64,
    pub mean_abs_db_deviation: f64,
    pub options: ExtractionOptions,
}

impl ComparisonReport {
    /// Ordered `key=value` pairs; the four metrics first, then provenance.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("ds_error_s", format!("{:e}", self.ds_error_s)),
            ("ds_relative_error", format!("{}", self.ds_relative_error)),
            ("cluster_count_diff", self.cluster_count_diff.to_string()),
            ("mean_abs_db_deviation", format!("{}", self.mean_abs_db_deviation)),
            ("measured_ds_s", format!("{:e}", self.measured_ds_s)),
            ("simulated_ds_s", format!("{:e}", self.simulated_ds_s)),
            ("measured_cluster_count", self.measured_cluster_count.to_string()),
            ("simulated_cluster_count", self.simulated_cluster_count.to_string()),
            ("margin_db", format!("{}", self.options.margin_db)),
            ("min_separation_bins", self.options.min_separation_bins.to_string()),
            ("noise_floor_rule", NOISE_FLOOR_RULE.to_string()),
        ]
    }
}

/// Compares two normalized profiles. The dB deviation is averaged over the
/// bins above threshold in either profile, after mapping the coarser grid
/// onto the finer one by nearest bin; bins below threshold sit at the
/// common floor.
pub fn compare_pdps(
    measured: &PowerDelayProfile,
    simulated: &PowerDelayProfile,
    options: &ExtractionOptions,
) -> Result<ComparisonReport> {
    let meas = condition_profile(measured, options.margin_db)?;
    let sim = condition_profile(simulated, options.margin_db)?;
    let meas_params = extract_parameters(measured, false, options)?;
    let sim_params = extract_parameters(simulated, false, options)?;

    let ds_m = meas_params.rms_delay_spread_s;
    let ds_s = sim_params.rms_delay_spread_s;
    let ds_error = (ds_s - ds_m).abs();
    let ds_relative = if ds_m > 0.0 {
        ds_error / ds_m
    } else if ds_error == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };

    let thr_m = threshold_level(meas.require_floor()?, options.margin_db);
    let thr_s = threshold_level(sim.require_floor()?, options.margin_db);
    let floor = thr_m.max(thr_s).max(COMPARE_FLOOR_LINEAR);
    let (fine, coarse) = match (meas.delay_step_s(), sim.delay_step_s()) {
        (Some(a), Some(b)) if b < a => (&sim, &meas),
        (None, Some(_)) => (&sim, &meas),
        _ => (&meas, &sim),
    };
    let coarse_step = coarse.delay_step_s();
    let mut deviation_sum = 0.0;
    let mut counted = 0usize;
    for (j, (&t, &pf)) in fine.delays_s.iter().zip(&fine.powers_linear).enumerate() {
        let pc = match coarse_step {
            Some(step) => {
                let idx = (t / step).round();
                if idx >= 0.0 && (idx as usize) < coarse.len() {
                    coarse.powers_linear[idx as usize]
                } else {
                    0.0
                }
            }
            None if j == 0 => coarse.powers_linear[0],
            None => 0.0,
        };
        if pf > 0.0 || pc > 0.0 {
            let db = |p: f64| 10.0 * p.max(floor).log10();
            deviation_sum += (db(pf) - db(pc)).abs();
            counted += 1;
        }
    }
    let mean_abs_db_deviation = if counted > 0 {
        deviation_sum / counted as f64
    } else {
        0.0
    };

    Ok(ComparisonReport {
        measured_ds_s: ds_m,
        simulated_ds_s: ds_s,
        ds_error_s: ds_error,
        ds_relative_error: ds_relative,
        measured_cluster_count: meas_params.cluster_count,
        simulated_cluster_count: sim_params.cluster_count,
        cluster_count_diff: sim_params.cluster_count as i64 - meas_params.cluster_count as i64,
        mean_abs_db_deviation,
        options: *options,
    })
}
