//! File formats.
//!
//! * IQ capture: headerless interleaved little-endian `f32` pairs (I, Q),
//!   with a `<path>.meta` text sidecar holding `sample_rate_hz=` and
//!   `center_frequency_hz=` lines.
//! * Scenario config: UTF-8 `key=value` lines, `#` comments, keys written
//!   in a fixed order so equal configs serialize to equal bytes.
//! * PDP table: CSV `delay_ns,power_db`, six decimals.
//! * Dataset: `CHDS` container, see [`DATASET_HEADER_SIZE`].
//! * Comparison report: `key=value` lines.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::{Complex32, Complex64};

use crate::analysis::{ComparisonReport, PowerDelayProfile};
use crate::error::{Error, Result};
use crate::gbsm::{FixedCluster, ScenarioConfig};
use crate::signal::{IqSignal, DEFAULT_SAMPLE_RATE_HZ};

pub const DATASET_MAGIC: [u8; 4] = *b"CHDS";
pub const DATASET_VERSION: u16 = 1;
/// magic(4) + version(2) + snapshot count(4) + taps(4) + sample rate(8) +
/// config blob length(4), little-endian.
pub const DATASET_HEADER_SIZE: usize = 26;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn corrupt(path: &Path, reason: impl Into<String>) -> Error {
    Error::CorruptFile {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = OsString::from(path.as_os_str());
    name.push(".meta");
    PathBuf::from(name)
}

pub fn write_iq(path: &Path, signal: &IqSignal) -> Result<()> {
    let mut bytes = Vec::with_capacity(signal.len() * 8);
    for s in signal.samples() {
        bytes.extend_from_slice(&(s.re as f32).to_le_bytes());
        bytes.extend_from_slice(&(s.im as f32).to_le_bytes());
    }
    write_file(path, &bytes)?;
    let meta = format!(
        "sample_rate_hz={}\ncenter_frequency_hz={}\n",
        signal.sample_rate_hz(),
        signal.center_frequency_hz()
    );
    write_file(&sidecar_path(path), meta.as_bytes())
}

pub fn read_iq(path: &Path) -> Result<IqSignal> {
    let meta_path = sidecar_path(path);
    if !meta_path.exists() {
        return Err(Error::MissingSidecar { path: meta_path });
    }
    let meta = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let mut sample_rate = None;
    let mut center = 0.0;
    for line in meta.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| corrupt(&meta_path, format!("line without '=': {line}")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| corrupt(&meta_path, format!("{key}: not a number")))?;
        match key.trim() {
            "sample_rate_hz" => sample_rate = Some(value),
            "center_frequency_hz" => center = value,
            other => return Err(corrupt(&meta_path, format!("unknown key {other}"))),
        }
    }
    let sample_rate = sample_rate.ok_or_else(|| corrupt(&meta_path, "sample_rate_hz missing"))?;

    let bytes = read_file(path)?;
    if bytes.len() % 4 != 0 {
        return Err(corrupt(path, format!("{} bytes is not a whole number of floats", bytes.len())));
    }
    if bytes.len() % 8 != 0 {
        return Err(corrupt(path, format!("odd float count {}", bytes.len() / 4)));
    }
    let samples = bytes
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes(c[0..4].try_into().expect("4 bytes"));
            let im = f32::from_le_bytes(c[4..8].try_into().expect("4 bytes"));
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    IqSignal::with_center_frequency(samples, sample_rate, center)
}

/// Canonical text form of a scenario config.
pub fn config_to_string(config: &ScenarioConfig) -> String {
    let mut out = String::new();
    let mut line = |key: &str, value: String| {
        let _ = writeln!(out, "{key}={value}");
    };
    line("label", config.label.clone());
    line("ds_median_s", config.ds_median_s.to_string());
    line("ds_sigma_log10", config.ds_sigma_log10.to_string());
    if let Some(kf) = config.kf_median_db {
        line("kf_median_db", kf.to_string());
    }
    line("kf_sigma_db", config.kf_sigma_db.to_string());
    line("num_clusters", config.num_clusters.to_string());
    line("r_tau", config.r_tau.to_string());
    line("per_cluster_shadowing_db", config.per_cluster_shadowing_db.to_string());
    line("los", config.los.to_string());
    line("sample_rate_hz", config.sample_rate_hz.to_string());
    line("cir_length_taps", config.cir_length_taps.to_string());
    if config.preserve_fixed_delays {
        line("preserve_fixed_delays", "true".into());
    }
    for fc in &config.fixed_clusters {
        line("fixed_cluster", format!("{},{}", fc.delay_s, fc.relative_power_linear));
    }
    out
}

const CONFIG_KEYS: [&str; 11] = [
    "label",
    "ds_median_s",
    "ds_sigma_log10",
    "kf_sigma_db",
    "num_clusters",
    "r_tau",
    "per_cluster_shadowing_db",
    "los",
    "sample_rate_hz",
    "cir_length_taps",
    "kf_median_db",
];

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    use std::collections::HashMap;

    let mut values: HashMap<&str, (usize, &str)> = HashMap::new();
    let mut fixed_clusters = Vec::new();
    let mut preserve = None;
    for (index, raw) in text.lines().enumerate() {
        let line_no = index + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |key: &str, reason: &str| Error::Config {
            line: line_no,
            key: key.to_string(),
            reason: reason.to_string(),
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(line, "expected key=value"))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "fixed_cluster" => {
                let (d, p) = value
                    .split_once(',')
                    .ok_or_else(|| err(key, "expected <delay_s>,<power_linear>"))?;
                let delay_s = d.trim().parse().map_err(|_| err(key, "unparsable delay"))?;
                let relative_power_linear =
                    p.trim().parse().map_err(|_| err(key, "unparsable power"))?;
                fixed_clusters.push(FixedCluster {
                    delay_s,
                    relative_power_linear,
                });
            }
            "preserve_fixed_delays" => {
                if preserve.is_some() {
                    return Err(err(key, "duplicate key"));
                }
                preserve = Some(parse_bool(value).ok_or_else(|| err(key, "expected true or false"))?);
            }
            k if CONFIG_KEYS.contains(&k) => {
                if values.insert(k, (line_no, value)).is_some() {
                    return Err(err(key, "duplicate key"));
                }
            }
            _ => return Err(err(key, "unknown key")),
        }
    }

    let raw = |key: &'static str| -> Result<(usize, &str)> {
        values.get(key).copied().ok_or_else(|| Error::Config {
            line: 0,
            key: key.to_string(),
            reason: "missing mandatory key".into(),
        })
    };
    fn parsed<T: std::str::FromStr>(key: &str, (line, value): (usize, &str)) -> Result<T> {
        value.parse().map_err(|_| Error::Config {
            line,
            key: key.to_string(),
            reason: format!("unparsable value `{value}`"),
        })
    }
    let num = |key: &'static str| -> Result<f64> { parsed(key, raw(key)?) };
    let count = |key: &'static str| -> Result<usize> { parsed(key, raw(key)?) };

    let (los_line, los_text) = raw("los")?;
    let los = parse_bool(los_text).ok_or_else(|| Error::Config {
        line: los_line,
        key: "los".into(),
        reason: "expected true or false".into(),
    })?;
    let kf_median_db = match values.get("kf_median_db") {
        Some(&entry) => Some(parsed("kf_median_db", entry)?),
        None => None,
    };
    let config = ScenarioConfig {
        label: raw("label")?.1.to_string(),
        ds_median_s: num("ds_median_s")?,
        ds_sigma_log10: num("ds_sigma_log10")?,
        kf_median_db,
        kf_sigma_db: num("kf_sigma_db")?,
        num_clusters: count("num_clusters")?,
        r_tau: num("r_tau")?,
        per_cluster_shadowing_db: num("per_cluster_shadowing_db")?,
        los,
        fixed_clusters,
        preserve_fixed_delays: preserve.unwrap_or(false),
        sample_rate_hz: num("sample_rate_hz")?,
        cir_length_taps: count("cir_length_taps")?,
    };
    config.validate()?;
    Ok(config)
}

fn parse_bool(value: &str) -> Option<bool> {
    match value {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

pub fn write_config(path: &Path, config: &ScenarioConfig) -> Result<()> {
    config.validate()?;
    write_file(path, config_to_string(config).as_bytes())
}

pub fn read_config(path: &Path) -> Result<ScenarioConfig> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|_| corrupt(path, "config is not UTF-8"))?;
    parse_config(&text)
}

pub fn power_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

pub fn pdp_to_csv(pdp: &PowerDelayProfile) -> String {
    let mut out = String::from("delay_ns,power_db\n");
    for (d, p) in pdp.delays_s().iter().zip(pdp.powers_linear()) {
        let _ = writeln!(out, "{:.6},{:.6}", d * 1e9, power_db(*p));
    }
    out
}

pub fn write_pdp_csv(path: &Path, pdp: &PowerDelayProfile) -> Result<()> {
    write_file(path, pdp_to_csv(pdp).as_bytes())
}

/// Reads a PDP table. Delays are rebuilt on a uniform grid spanning the
/// first and last row, since the text delays are rounded.
pub fn read_pdp_csv(path: &Path) -> Result<PowerDelayProfile> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|_| corrupt(path, "not UTF-8"))?;
    let mut lines = text.lines();
    match lines.next().map(str::trim) {
        Some("delay_ns,power_db") => {}
        _ => return Err(corrupt(path, "expected header `delay_ns,power_db`")),
    }
    let mut delays_ns = Vec::new();
    let mut powers = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = i + 2;
        let (d, p) = line
            .split_once(',')
            .ok_or_else(|| corrupt(path, format!("row {row}: expected two columns")))?;
        let d: f64 = d
            .trim()
            .parse()
            .map_err(|_| corrupt(path, format!("row {row}: bad delay")))?;
        let p: f64 = p
            .trim()
            .parse()
            .map_err(|_| corrupt(path, format!("row {row}: bad power")))?;
        delays_ns.push(d);
        powers.push(10f64.powf(p / 10.0));
    }
    let first = *delays_ns.first().ok_or_else(|| corrupt(path, "no data rows"))?;
    let step_s = if delays_ns.len() > 1 {
        (delays_ns[delays_ns.len() - 1] - first) * 1e-9 / (delays_ns.len() - 1) as f64
    } else {
        1.0 / DEFAULT_SAMPLE_RATE_HZ
    };
    PowerDelayProfile::uniform(first * 1e-9, step_s, powers)
}

pub fn key_values_to_string<K: AsRef<str>>(entries: &[(K, String)]) -> String {
    entries
        .iter()
        .map(|(k, v)| format!("{}={v}\n", k.as_ref()))
        .collect()
}

pub fn write_report(path: &Path, report: &ComparisonReport) -> Result<()> {
    write_file(path, key_values_to_string(&report.entries()).as_bytes())
}

/// CIR snapshots plus the text config that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    sample_rate_hz: f64,
    cir_length_taps: usize,
    metadata: String,
    snapshots: Vec<Vec<Complex32>>,
}

impl Dataset {
    pub fn new(
        sample_rate_hz: f64,
        cir_length_taps: usize,
        metadata: String,
        snapshots: Vec<Vec<Complex32>>,
    ) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::invalid("sample rate", format!("{sample_rate_hz}")));
        }
        if cir_length_taps == 0 || u32::try_from(cir_length_taps).is_err() {
            return Err(Error::invalid("CIR length", format!("{cir_length_taps}")));
        }
        if u32::try_from(snapshots.len()).is_err() || u32::try_from(metadata.len()).is_err() {
            return Err(Error::invalid("dataset", "too large for the container"));
        }
        if let Some(bad) = snapshots.iter().find(|s| s.len() != cir_length_taps) {
            return Err(Error::LengthMismatch {
                left: bad.len(),
                right: cir_length_taps,
            });
        }
        Ok(Self {
            sample_rate_hz,
            cir_length_taps,
            metadata,
            snapshots,
        })
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn cir_length_taps(&self) -> usize {
        self.cir_length_taps
    }

    pub fn metadata(&self) -> &str {
        &self.metadata
    }

    pub fn snapshots(&self) -> &[Vec<Complex32>] {
        &self.snapshots
    }

    /// Scenario config embedded in the metadata.
    pub fn config(&self) -> Result<ScenarioConfig> {
        parse_config(&self.metadata)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload = self.snapshots.len() * self.cir_length_taps * 8;
        let mut out = Vec::with_capacity(DATASET_HEADER_SIZE + self.metadata.len() + payload);
        out.extend_from_slice(&DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.snapshots.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.cir_length_taps as u32).to_le_bytes());
        out.extend_from_slice(&self.sample_rate_hz.to_le_bytes());
        out.extend_from_slice(&(self.metadata.len() as u32).to_le_bytes());
        out.extend_from_slice(self.metadata.as_bytes());
        for tap in self.snapshots.iter().flatten() {
            out.extend_from_slice(&tap.re.to_le_bytes());
            out.extend_from_slice(&tap.im.to_le_bytes());
        }
        out
    }

    /// Parses a container; `path` only labels errors.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let actual = bytes.len() as u64;
        let truncated = |expected: u64| Error::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            actual,
        };
        if bytes.len() < DATASET_MAGIC.len() {
            return Err(truncated(DATASET_HEADER_SIZE as u64));
        }
        if bytes[..4] != DATASET_MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
            });
        }
        if bytes.len() < DATASET_HEADER_SIZE {
            return Err(truncated(DATASET_HEADER_SIZE as u64));
        }
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != DATASET_VERSION {
            return Err(Error::UnsupportedVersion {
                path: path.to_path_buf(),
                found: version,
            });
        }
        let count = u32_at(6) as u64;
        let taps = u32_at(10) as u64;
        let sample_rate_hz = f64::from_le_bytes(bytes[14..22].try_into().expect("8 bytes"));
        let blob_len = u32_at(22) as u64;
        let expected = count
            .checked_mul(taps)
            .and_then(|n| n.checked_mul(8))
            .and_then(|n| n.checked_add(DATASET_HEADER_SIZE as u64 + blob_len))
            .unwrap_or(u64::MAX);
        if expected != actual {
            return Err(truncated(expected));
        }
        let blob_end = DATASET_HEADER_SIZE + blob_len as usize;
        let metadata = String::from_utf8(bytes[DATASET_HEADER_SIZE..blob_end].to_vec())
            .map_err(|_| corrupt(path, "config blob is not UTF-8"))?;
        let taps = taps as usize;
        let snapshots: Vec<Vec<Complex32>> = if taps == 0 {
            Vec::new()
        } else {
            bytes[blob_end..]
                .chunks_exact(taps * 8)
                .map(|snap| {
                    snap.chunks_exact(8)
                        .map(|c| {
                            Complex32::new(
                                f32::from_le_bytes(c[0..4].try_into().expect("4 bytes")),
                                f32::from_le_bytes(c[4..8].try_into().expect("4 bytes")),
                            )
                        })
                        .collect()
                })
                .collect()
        };
        Self::new(sample_rate_hz, taps, metadata, snapshots)
            .map_err(|e| corrupt(path, e.to_string()))
    }
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    write_file(path, &dataset.to_bytes())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    Dataset::from_bytes(&read_file(path)?, path)
}
