//! Simplified geometry-inspired stochastic channel generator.
//!
//! One channel draw goes through three stages:
//!
//! 1. Large-scale parameters: delay spread is log-normal around the
//!    configured median, the K-factor (LOS only) is normal in dB.
//! 2. Cluster delay line: exponentially distributed delays scaled by the
//!    delay proportionality factor `r_tau`, exponentially decaying powers
//!    with log-normal per-cluster shadowing, user-placed fixed clusters,
//!    and an optional LOS component at zero delay. The delays are then
//!    rescaled so the RMS delay spread of the discrete set hits the drawn
//!    value exactly.
//! 3. Rendering: every cluster gets a uniform random phase and is placed at
//!    its fractional delay with a Hann-windowed sinc kernel.
//!
//! All randomness comes from [`crate::rng`] streams keyed by the caller's
//! seed, so identical inputs give identical outputs.

use std::f64::consts::PI;

use num_complex::{Complex32, Complex64};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::analysis::{
    estimate_noise_floor, normalize_pdp, ChannelParameters, PowerDelayProfile, DEFAULT_MARGIN_DB,
};
use crate::error::{Error, Result};
use crate::io::{config_to_string, Dataset};
use crate::rng::{self, stream, DetRng};
use crate::signal::DEFAULT_SAMPLE_RATE_HZ;
use crate::sounder::{average_pdp, ChannelImpulseResponse};

pub const GENERATOR_VERSION: &str = concat!("chansim ", env!("CARGO_PKG_VERSION"));
pub const DEFAULT_R_TAU: f64 = 2.3;
pub const DEFAULT_SHADOWING_DB: f64 = 3.0;
pub const DEFAULT_CIR_LENGTH_TAPS: usize = 353;
/// Half-width of the interpolation kernel in taps.
pub const KERNEL_HALF_WIDTH: usize = 8;
/// Relative tolerance of delay-spread enforcement when fixed cluster
/// delays are preserved.
pub const PRESERVED_DELAY_TOLERANCE: f64 = 0.05;

pub const PRESET_NAMES: [&str; 4] = ["urban-los", "urban-nlos", "campus-los", "campus-nlos"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedCluster {
    pub delay_s: f64,
    /// Power relative to the total stochastic cluster power.
    pub relative_power_linear: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub label: String,
    pub ds_median_s: f64,
    /// Standard deviation of `log10(DS / 1 s)`.
    pub ds_sigma_log10: f64,
    pub kf_median_db: Option<f64>,
    pub kf_sigma_db: f64,
    pub num_clusters: usize,
    pub r_tau: f64,
    pub per_cluster_shadowing_db: f64,
    pub los: bool,
    pub fixed_clusters: Vec<FixedCluster>,
    /// Keep fixed cluster delays out of the delay-spread rescaling.
    pub preserve_fixed_delays: bool,
    pub sample_rate_hz: f64,
    pub cir_length_taps: usize,
}

impl ScenarioConfig {
    fn measured(label: &str, ds_ns: f64, kf_db: Option<f64>, clusters: usize) -> Self {
        Self {
            label: label.to_string(),
            ds_median_s: ds_ns / 1e9,
            ds_sigma_log10: 0.0,
            kf_median_db: kf_db,
            kf_sigma_db: 0.0,
            num_clusters: clusters,
            r_tau: DEFAULT_R_TAU,
            per_cluster_shadowing_db: DEFAULT_SHADOWING_DB,
            los: kf_db.is_some(),
            fixed_clusters: Vec::new(),
            preserve_fixed_delays: false,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            cir_length_taps: DEFAULT_CIR_LENGTH_TAPS,
        }
    }

    /// Scenario presets carrying the measured delay spread, K-factor and
    /// cluster count of the urban and campus sites.
    pub fn preset(name: &str) -> Option<Self> {
        Some(match name {
            "urban-los" => Self::measured(name, 45.0, Some(13.0), 15),
            "urban-nlos" => Self::measured(name, 125.0, None, 19),
            "campus-los" => Self::measured(name, 50.0, Some(21.0), 17),
            "campus-nlos" => Self::measured(name, 175.0, None, 22),
            _ => return None,
        })
    }

    pub fn window_s(&self) -> f64 {
        self.cir_length_taps as f64 / self.sample_rate_hz
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let non_negative = |v: f64| v.is_finite() && v >= 0.0;
        if self.label.contains(['\n', '\r']) {
            return Err(Error::invalid("label", "must be a single line"));
        }
        if !positive(self.ds_median_s) {
            return Err(Error::invalid("ds_median_s", format!("{}", self.ds_median_s)));
        }
        if !non_negative(self.ds_sigma_log10) {
            return Err(Error::invalid("ds_sigma_log10", format!("{}", self.ds_sigma_log10)));
        }
        if !non_negative(self.kf_sigma_db) {
            return Err(Error::invalid("kf_sigma_db", format!("{}", self.kf_sigma_db)));
        }
        match (self.los, self.kf_median_db) {
            (true, None) => return Err(Error::invalid("kf_median_db", "LOS requires a K-factor")),
            (false, Some(_)) => {
                return Err(Error::invalid("kf_median_db", "NLOS scenarios have no K-factor"))
            }
            (true, Some(k)) if !k.is_finite() => {
                return Err(Error::invalid("kf_median_db", format!("{k}")))
            }
            _ => {}
        }
        if self.num_clusters == 0 {
            return Err(Error::invalid("num_clusters", "must be at least 1"));
        }
        if !(self.r_tau.is_finite() && self.r_tau > 1.0) {
            return Err(Error::invalid("r_tau", format!("{} is not > 1", self.r_tau)));
        }
        if !non_negative(self.per_cluster_shadowing_db) {
            return Err(Error::invalid(
                "per_cluster_shadowing_db",
                format!("{}", self.per_cluster_shadowing_db),
            ));
        }
        if !positive(self.sample_rate_hz) {
            return Err(Error::invalid("sample_rate_hz", format!("{}", self.sample_rate_hz)));
        }
        if self.cir_length_taps == 0 {
            return Err(Error::invalid("cir_length_taps", "must be at least 1"));
        }
        if self.fixed_clusters.len() > self.num_clusters {
            return Err(Error::invalid(
                "fixed_cluster",
                format!(
                    "{} fixed clusters exceed num_clusters {}",
                    self.fixed_clusters.len(),
                    self.num_clusters
                ),
            ));
        }
        for fc in &self.fixed_clusters {
            if !(non_negative(fc.delay_s) && fc.delay_s < self.window_s()) {
                return Err(Error::invalid(
                    "fixed_cluster",
                    format!("delay {} s outside the CIR window", fc.delay_s),
                ));
            }
            if !positive(fc.relative_power_linear) {
                return Err(Error::invalid(
                    "fixed_cluster",
                    format!("power {}", fc.relative_power_linear),
                ));
            }
        }
        Ok(())
    }
}

/// Builds a generator configuration from extracted parameters, keeping
/// everything else from `defaults`.
pub fn config_from_parameters(
    params: &ChannelParameters,
    defaults: &ScenarioConfig,
) -> Result<ScenarioConfig> {
    if params.cluster_count == 0 {
        return Err(Error::invalid("cluster count", "0 clusters, nothing to simulate"));
    }
    let mut config = defaults.clone();
    config.ds_median_s = params.rms_delay_spread_s;
    config.kf_median_db = params.k_factor_db;
    config.los = params.k_factor_db.is_some();
    config.num_clusters = params.cluster_count;
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LargeScale {
    pub ds_s: f64,
    pub kf_db: Option<f64>,
}

pub fn draw_large_scale(config: &ScenarioConfig, seed: u64) -> Result<LargeScale> {
    draw_large_scale_with(config, &mut rng::seeded(seed, stream::LARGE_SCALE))
}

pub fn draw_large_scale_with(config: &ScenarioConfig, rng: &mut DetRng) -> Result<LargeScale> {
    config.validate()?;
    let z_ds: f64 = rng.sample(StandardNormal);
    let z_kf: f64 = rng.sample(StandardNormal);
    let ds_s = config.ds_median_s * 10f64.powf(config.ds_sigma_log10 * z_ds);
    let kf_db = config
        .kf_median_db
        .filter(|_| config.los)
        .map(|median| median + config.kf_sigma_db * z_kf);
    Ok(LargeScale { ds_s, kf_db })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cluster {
    pub delay_s: f64,
    pub power_linear: f64,
    pub fixed: bool,
}

/// How the delay spread target was met.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DsEnforcement {
    Exact,
    /// A single cluster has zero spread; nothing to scale.
    SingleCluster,
    /// Fixed delays were preserved; the residual relative error is bounded
    /// by [`PRESERVED_DELAY_TOLERANCE`].
    Approximate { relative_error: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    /// Scattering clusters sorted by delay.
    pub clusters: Vec<Cluster>,
    /// LOS component at zero delay, 0 for NLOS.
    pub los_power_linear: f64,
    pub enforcement: DsEnforcement,
}

impl ClusterSet {
    pub fn total_power(&self) -> f64 {
        self.los_power_linear + self.scattered_power()
    }

    pub fn scattered_power(&self) -> f64 {
        self.clusters.iter().map(|c| c.power_linear).sum()
    }

    pub fn max_delay_s(&self) -> f64 {
        self.clusters.iter().map(|c| c.delay_s).fold(0.0, f64::max)
    }

    /// RMS delay spread of the discrete set, LOS included.
    pub fn rms_delay_spread_s(&self) -> f64 {
        let delays: Vec<f64> = self.clusters.iter().map(|c| c.delay_s).collect();
        let powers: Vec<f64> = self.clusters.iter().map(|c| c.power_linear).collect();
        discrete_spread(&delays, &powers, self.los_power_linear)
    }
}

fn discrete_spread(delays: &[f64], powers: &[f64], los_power: f64) -> f64 {
    let total = los_power + powers.iter().sum::<f64>();
    let mean = delays.iter().zip(powers).map(|(d, p)| d * p).sum::<f64>() / total;
    let second = delays.iter().zip(powers).map(|(d, p)| d * d * p).sum::<f64>() / total;
    (second - mean * mean).max(0.0).sqrt()
}

pub fn generate_clusters(
    ds_s: f64,
    kf_db: Option<f64>,
    config: &ScenarioConfig,
    seed: u64,
) -> Result<ClusterSet> {
    generate_clusters_with(ds_s, kf_db, config, &mut rng::seeded(seed, stream::CLUSTERS))
}

pub fn generate_clusters_with(
    ds_s: f64,
    kf_db: Option<f64>,
    config: &ScenarioConfig,
    rng: &mut DetRng,
) -> Result<ClusterSet> {
    config.validate()?;
    if !(ds_s.is_finite() && ds_s > 0.0) {
        return Err(Error::invalid("delay spread", format!("{ds_s}")));
    }
    let r_tau = config.r_tau;
    let stochastic = config.num_clusters - config.fixed_clusters.len();

    let mut raw_delays: Vec<f64> = (0..stochastic)
        .map(|_| {
            let u = 1.0 - rng.random::<f64>();
            -r_tau * ds_s * u.ln()
        })
        .collect();
    raw_delays.sort_by(f64::total_cmp);
    if let Some(&min) = raw_delays.first() {
        raw_delays.iter_mut().for_each(|d| *d -= min);
    }
    let decay = (r_tau - 1.0) / (r_tau * ds_s);
    let mut clusters: Vec<Cluster> = raw_delays
        .iter()
        .map(|&d| {
            let z: f64 = rng.sample(StandardNormal);
            let shadow_db = config.per_cluster_shadowing_db * z;
            Cluster {
                delay_s: d,
                power_linear: (-d * decay).exp() * 10f64.powf(-shadow_db / 10.0),
                fixed: false,
            }
        })
        .collect();
    let stochastic_total: f64 = clusters.iter().map(|c| c.power_linear).sum();
    if stochastic_total > 0.0 {
        clusters
            .iter_mut()
            .for_each(|c| c.power_linear /= stochastic_total);
    }
    clusters.extend(config.fixed_clusters.iter().map(|fc| Cluster {
        delay_s: fc.delay_s,
        power_linear: fc.relative_power_linear,
        fixed: true,
    }));
    clusters.sort_by(|a, b| a.delay_s.total_cmp(&b.delay_s));
    let min_delay = clusters[0].delay_s;
    if min_delay > 0.0 {
        // Only reachable with fixed clusters alone.
        clusters.iter_mut().for_each(|c| c.delay_s -= min_delay);
    }

    let scattered_share = match (config.los, kf_db) {
        (true, Some(kf)) => 1.0 / (10f64.powf(kf / 10.0) + 1.0),
        (true, None) => return Err(Error::invalid("K-factor", "LOS draw without K-factor")),
        (false, _) => 1.0,
    };
    let scattered_total: f64 = clusters.iter().map(|c| c.power_linear).sum();
    clusters
        .iter_mut()
        .for_each(|c| c.power_linear *= scattered_share / scattered_total);
    let los_power_linear = if config.los {
        let k = 10f64.powf(kf_db.expect("checked above") / 10.0);
        k / (k + 1.0)
    } else {
        0.0
    };

    let mut set = ClusterSet {
        clusters,
        los_power_linear,
        enforcement: DsEnforcement::Exact,
    };
    enforce_delay_spread(&mut set, ds_s, config)?;
    Ok(set)
}

fn enforce_delay_spread(set: &mut ClusterSet, target: f64, config: &ScenarioConfig) -> Result<()> {
    let current = set.rms_delay_spread_s();
    if current == 0.0 {
        if set.clusters.len() == 1 {
            set.enforcement = DsEnforcement::SingleCluster;
            return Ok(());
        }
        return Err(Error::invalid(
            "cluster set",
            "all clusters at zero delay, delay spread cannot be scaled",
        ));
    }
    let preserve = config.preserve_fixed_delays && !config.fixed_clusters.is_empty();
    if !preserve {
        let alpha = target / current;
        set.clusters.iter_mut().for_each(|c| c.delay_s *= alpha);
        set.enforcement = DsEnforcement::Exact;
        return Ok(());
    }

    let delays: Vec<f64> = set.clusters.iter().map(|c| c.delay_s).collect();
    let powers: Vec<f64> = set.clusters.iter().map(|c| c.power_linear).collect();
    let fixed: Vec<bool> = set.clusters.iter().map(|c| c.fixed).collect();
    let spread_at = |alpha: f64| {
        let scaled: Vec<f64> = delays
            .iter()
            .zip(&fixed)
            .map(|(&d, &f)| if f { d } else { d * alpha })
            .collect();
        discrete_spread(&scaled, &powers, set.los_power_linear)
    };
    let miss = |alpha: f64| (spread_at(alpha) - target).abs();

    let alpha = if spread_at(0.0) <= target {
        let mut hi = 1.0;
        while spread_at(hi) < target {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::invalid(
                    "cluster set",
                    "stochastic clusters carry no spread to scale",
                ));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if spread_at(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    } else {
        // Fixed clusters alone overshoot; search the closest approach.
        let reach = 2.0 * target / current;
        let grid = 1000;
        let best = (0..=grid)
            .map(|i| reach * i as f64 / grid as f64)
            .min_by(|a, b| miss(*a).total_cmp(&miss(*b)))
            .expect("non-empty grid");
        let (mut lo, mut hi) = ((best - reach / grid as f64).max(0.0), best + reach / grid as f64);
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let a = hi - ratio * (hi - lo);
            let b = lo + ratio * (hi - lo);
            if miss(a) < miss(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        0.5 * (lo + hi)
    };
    let relative_error = miss(alpha) / target;
    if relative_error > PRESERVED_DELAY_TOLERANCE {
        return Err(Error::invalid(
            "cluster set",
            format!(
                "delay spread target {target:e} s missed by {:.1}% with preserved fixed delays",
                100.0 * relative_error
            ),
        ));
    }
    for c in set.clusters.iter_mut().filter(|c| !c.fixed) {
        c.delay_s *= alpha;
    }
    set.clusters.sort_by(|a, b| a.delay_s.total_cmp(&b.delay_s));
    set.enforcement = DsEnforcement::Approximate { relative_error };
    Ok(())
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Unit-energy Hann-windowed sinc centred at `delay_samples`, as
/// `(tap index, weight)` pairs. Integer delays give a pure delta.
pub fn interpolation_kernel(delay_samples: f64) -> Vec<(i64, f64)> {
    let base = delay_samples.floor();
    if delay_samples == base {
        return vec![(base as i64, 1.0)];
    }
    let half = KERNEL_HALF_WIDTH as i64;
    let base = base as i64;
    let mut taps: Vec<(i64, f64)> = (base - half + 1..=base + half)
        .map(|n| {
            let x = n as f64 - delay_samples;
            let window = 0.5 * (1.0 + (PI * x / KERNEL_HALF_WIDTH as f64).cos());
            (n, sinc(x) * window)
        })
        .collect();
    let norm = taps.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    taps.iter_mut().for_each(|(_, w)| *w /= norm);
    taps
}

pub fn synthesize_cir(
    clusters: &ClusterSet,
    config: &ScenarioConfig,
    seed: u64,
) -> Result<ChannelImpulseResponse> {
    synthesize_cir_with(clusters, config, &mut rng::seeded(seed, stream::PHASES), 0)
}

/// Renders one realization with fresh random cluster phases. Kernel taps
/// falling outside the CIR window are dropped.
pub fn synthesize_cir_with(
    clusters: &ClusterSet,
    config: &ScenarioConfig,
    rng: &mut DetRng,
    timestamp_index: usize,
) -> Result<ChannelImpulseResponse> {
    let len = config.cir_length_taps;
    let fs = config.sample_rate_hz;
    if clusters.max_delay_s() >= config.window_s() {
        return Err(Error::invalid(
            "cluster delay",
            format!(
                "{:e} s overflows the {}-tap CIR window",
                clusters.max_delay_s(),
                len
            ),
        ));
    }
    let mut taps = vec![Complex64::new(0.0, 0.0); len];
    taps[0] += clusters.los_power_linear.sqrt();
    for cluster in &clusters.clusters {
        let phase = rng.random::<f64>() * 2.0 * PI;
        let amplitude = Complex64::from_polar(cluster.power_linear.sqrt(), phase);
        for (n, w) in interpolation_kernel(cluster.delay_s * fs) {
            if n >= 0 && (n as usize) < len {
                taps[n as usize] += amplitude * w;
            }
        }
    }
    ChannelImpulseResponse::new(taps, 1.0 / fs, timestamp_index)
}

/// Phase-averaged PDP of one large-scale and cluster draw, normalized to a
/// 0 dB peak at zero delay.
pub fn simulate_pdp(
    config: &ScenarioConfig,
    seed: u64,
    realizations: usize,
) -> Result<PowerDelayProfile> {
    if realizations == 0 {
        return Err(Error::invalid("realizations", "must be at least 1"));
    }
    let large = draw_large_scale(config, seed)?;
    let clusters = generate_clusters(large.ds_s, large.kf_db, config, seed)?;
    let mut phases = rng::seeded(seed, stream::PHASES);
    let cirs = (0..realizations)
        .map(|i| synthesize_cir_with(&clusters, config, &mut phases, i))
        .collect::<Result<Vec<_>>>()?;
    let pdp = average_pdp(&cirs)?;
    let floor = estimate_noise_floor(&pdp)?;
    normalize_pdp(&pdp.with_noise_floor(floor), DEFAULT_MARGIN_DB)
}

/// One independent channel draw (large-scale, clusters, phases) per
/// snapshot. Snapshot `i` uses its own stream, so the result does not
/// depend on how the work is scheduled.
pub fn generate_snapshot(config: &ScenarioConfig, seed: u64, index: usize) -> Result<ChannelImpulseResponse> {
    let mut rng = rng::seeded(seed, stream::SNAPSHOT_BASE + index as u64);
    let large = draw_large_scale_with(config, &mut rng)?;
    let clusters = generate_clusters_with(large.ds_s, large.kf_db, config, &mut rng)?;
    synthesize_cir_with(&clusters, config, &mut rng, index)
}

pub fn dataset_metadata(config: &ScenarioConfig, seed: u64, count: usize) -> String {
    format!(
        "# generator={GENERATOR_VERSION}\n# seed={seed}\n# count={count}\n{}",
        config_to_string(config)
    )
}

pub fn generate_dataset(config: &ScenarioConfig, count: usize, seed: u64) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::invalid("snapshot count", "must be at least 1"));
    }
    config.validate()?;
    let snapshots = (0..count)
        .into_par_iter()
        .map(|i| {
            generate_snapshot(config, seed, i).map(|cir| {
                cir.taps()
                    .iter()
                    .map(|t| Complex32::new(t.re as f32, t.im as f32))
                    .collect::<Vec<_>>()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(
        config.sample_rate_hz,
        config.cir_length_taps,
        dataset_metadata(config, seed, count),
        snapshots,
    )
}
