//! Acceptance criteria. Each test prints one `[criterion N] PASS|FAIL` line;
//! run with `--nocapture` to see them all.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use chansim::analysis::{
    extract_parameters, mean_excess_delay, rms_delay_spread, second_moment, ExtractionOptions,
    PowerDelayProfile,
};
use chansim::channel_apply::{add_awgn, apply_channel, SyntheticChannel};
use chansim::gbsm::{
    draw_large_scale, generate_clusters, generate_dataset, simulate_pdp, FixedCluster, ScenarioConfig,
    PRESET_NAMES,
};
use chansim::io::{
    config_to_string, read_config, read_dataset, read_iq, read_pdp_csv, write_config,
    write_dataset, write_iq, write_pdp_csv, Dataset,
};
use chansim::rng::{self, DetRng};
use chansim::signal::{zadoff_chu, IqSignal};
use chansim::sounder::{build_sounding_signal, estimate_cirs, EstimatorOptions, SoundingWaveform};
use chansim::Error;
use num_complex::{Complex32, Complex64};
use rand::Rng;
use tempfile::tempdir;

const FS: f64 = 25.6e6;

fn verdict(criterion: u32, pass: bool, detail: String) {
    println!(
        "[criterion {criterion}] {} {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn test_rng(tag: u64) -> DetRng {
    rng::seeded(0x00AC_CE97, tag)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

#[test]
fn criterion_01_moment_oracles() {
    let start = Instant::now();
    let mut rng = test_rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let len = rng.random_range(4..=512);
        let step = 1.0 / FS;
        let first = rng.random_range(-1e-6..1e-6);
        let powers: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
        let delays: Vec<f64> = (0..len).map(|i| first + i as f64 * step).collect();
        let pdp = PowerDelayProfile::new(delays.clone(), powers.clone()).unwrap();

        // Direct summation: mean, second moment, central second moment.
        let mut total = 0.0;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for (d, p) in delays.iter().zip(&powers) {
            total += p;
            s1 += d * p;
            s2 += d * d * p;
        }
        let mean = s1 / total;
        let m2 = s2 / total;
        let central: f64 = delays
            .iter()
            .zip(&powers)
            .map(|(d, p)| p * (d - mean) * (d - mean))
            .sum::<f64>()
            / total;
        worst = worst
            .max(rel(mean_excess_delay(&pdp).unwrap(), mean))
            .max(rel(second_moment(&pdp).unwrap(), m2));
        // Relative to the second moment scale, the spread oracle is the
        // central form, free of cancellation.
        let ds = rms_delay_spread(&pdp).unwrap();
        worst = worst.max((ds * ds - central).abs() / m2);
    }
    let elapsed = start.elapsed();
    verdict(
        1,
        worst < 1e-12 && elapsed < Duration::from_secs(5),
        format!("max relative error {worst:.2e}, {:.2} s", elapsed.as_secs_f64()),
    );
}

#[test]
fn criterion_02_two_point_spread() {
    let mut worst: f64 = 0.0;
    for d in [1e-9, 100e-9, 1e-6] {
        let pdp = PowerDelayProfile::new(vec![0.0, d], vec![1.0, 1.0]).unwrap();
        worst = worst.max(rel(rms_delay_spread(&pdp).unwrap(), d / 2.0));
    }
    verdict(2, worst <= 1e-15, format!("max relative error {worst:.2e}"));
}

#[test]
fn criterion_03_cazac() {
    let mut worst_db = f64::INFINITY;
    let cases: Vec<(usize, usize)> = (1..5)
        .map(|u| (5, u))
        .chain([(353, 1), (353, 7), (1021, 1), (1021, 7)])
        .collect();
    for (n, u) in cases {
        let x = zadoff_chu(u, n).unwrap();
        let mut peak: f64 = 0.0;
        let mut sidelobe: f64 = 0.0;
        for k in 0..n {
            let r: Complex64 = (0..n).map(|m| x[m] * x[(m + n - k) % n].conj()).sum();
            if k == 0 {
                peak = r.norm();
            } else {
                sidelobe = sidelobe.max(r.norm());
            }
        }
        let ratio_db = 20.0 * (peak / sidelobe.max(f64::MIN_POSITIVE)).log10();
        worst_db = worst_db.min(ratio_db);
    }
    verdict(3, worst_db > 120.0, format!("worst peak-to-sidelobe {worst_db:.1} dB"));
}

const PATHS: [(usize, f64); 3] = [(0, 1.0), (5, 0.6), (12, 0.3)];

fn sound(snr_db: f64, seed: u64) -> (SoundingWaveform, IqSignal) {
    let w = SoundingWaveform::zadoff_chu(1, 353, 3, FS).unwrap();
    let taps: Vec<_> = PATHS.iter().map(|&(d, a)| (d, Complex64::new(a, 0.0))).collect();
    let channel = SyntheticChannel::from_paths(&taps).unwrap();
    let rx = apply_channel(&build_sounding_signal(&w), &channel).unwrap();
    (w.clone(), add_awgn(&rx, snr_db, seed).unwrap())
}

/// Mean complex CIR over periods, and whether the strongest bins sit
/// exactly on the path delays.
fn recover(w: &SoundingWaveform, rx: &IqSignal, opts: &EstimatorOptions) -> (Vec<Complex64>, bool) {
    let est = estimate_cirs(rx, w, opts).unwrap();
    let n = w.period();
    let count = est.cirs.len() as f64;
    let mean: Vec<Complex64> = (0..n)
        .map(|k| est.cirs.iter().map(|c| c.taps()[k]).sum::<Complex64>() / count)
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| mean[b].norm().total_cmp(&mean[a].norm()));
    let mut top: Vec<usize> = order[..PATHS.len()].to_vec();
    top.sort();
    let exact = top == PATHS.iter().map(|p| p.0).collect::<Vec<_>>();
    (mean, exact)
}

#[test]
fn criterion_04_estimator_fidelity() {
    let start = Instant::now();
    let (w, rx) = sound(f64::INFINITY, 0);
    let (taps, exact) = recover(&w, &rx, &EstimatorOptions::exact());
    let noiseless_err = PATHS
        .iter()
        .map(|&(d, a)| (taps[d].norm() - a).abs() / a)
        .fold(0.0, f64::max);
    let noiseless_ok = exact && noiseless_err < 1e-6;

    let mut errors = Vec::new();
    let mut positions_ok = true;
    for seed in 0..100 {
        let (w, rx) = sound(20.0, seed);
        let (taps, exact) = recover(&w, &rx, &EstimatorOptions::default());
        positions_ok &= exact;
        errors.extend(PATHS.iter().map(|&(d, a)| (taps[d] - a).norm() / a));
    }
    let med = median(errors);
    let elapsed = start.elapsed();
    verdict(
        4,
        noiseless_ok && positions_ok && med < 0.1 && elapsed < Duration::from_secs(10),
        format!(
            "noiseless max amplitude error {noiseless_err:.2e} (positions exact: {exact}), \
             20 dB median amplitude error {:.2}% (positions exact: {positions_ok}), {:.2} s",
            100.0 * med,
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_05_closed_loop_delay_spread() {
    let mut pass = true;
    let mut details = Vec::new();
    for name in PRESET_NAMES {
        let start = Instant::now();
        let config = ScenarioConfig::preset(name).unwrap();
        let target = config.ds_median_s;
        // Generator-side identity: the discrete cluster set hits the target.
        let mut construction: f64 = 0.0;
        for seed in 0..200 {
            let ls = draw_large_scale(&config, seed).unwrap();
            let set = generate_clusters(ls.ds_s, ls.kf_db, &config, seed).unwrap();
            construction = construction.max(rel(set.rms_delay_spread_s(), target));
        }
        let mut worst: f64 = 0.0;
        for seed in 0..10 {
            let pdp = simulate_pdp(&config, seed, 200).unwrap();
            let params = extract_parameters(&pdp, config.los, &ExtractionOptions::default()).unwrap();
            worst = worst.max(rel(params.rms_delay_spread_s, target));
        }
        let elapsed = start.elapsed();
        let ok = construction < 1e-9 && worst <= 0.15 && elapsed < Duration::from_secs(30);
        pass &= ok;
        details.push(format!(
            "{name}: worst recovered error {:.1}% over 10 seeds, construction {construction:.1e}, {:.2} s",
            100.0 * worst,
            elapsed.as_secs_f64()
        ));
    }
    verdict(5, pass, details.join("; "));
}

#[test]
fn criterion_06_closed_loop_k_factor() {
    let mut pass = true;
    let mut details = Vec::new();
    for name in PRESET_NAMES {
        let config = ScenarioConfig::preset(name).unwrap();
        let kfs: Vec<Option<f64>> = (0..200)
            .map(|seed| {
                let pdp = simulate_pdp(&config, seed, 200).unwrap();
                extract_parameters(&pdp, config.los, &ExtractionOptions::default())
                    .unwrap()
                    .k_factor_db
            })
            .collect();
        match config.kf_median_db {
            Some(target) => {
                let values: Vec<f64> = kfs.iter().flatten().copied().collect();
                let ok = values.len() == kfs.len() && (median(values.clone()) - target).abs() <= 2.0;
                pass &= ok;
                details.push(format!("{name}: median {:.2} dB vs {target} dB", median(values)));
            }
            None => {
                let ok = kfs.iter().all(Option::is_none);
                pass &= ok;
                details.push(format!("{name}: KF absent in all draws: {ok}"));
            }
        }
    }
    verdict(6, pass, details.join("; "));
}

#[test]
fn criterion_07_cluster_identities() {
    let mut worst_sum: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    let mut monotone = true;
    for name in PRESET_NAMES {
        let config = ScenarioConfig::preset(name).unwrap();
        let mut flat = config.clone();
        flat.per_cluster_shadowing_db = 0.0;
        flat.los = false;
        flat.kf_median_db = None;
        for seed in 0..1000 {
            let ls = draw_large_scale(&config, seed).unwrap();
            let set = generate_clusters(ls.ds_s, ls.kf_db, &config, seed).unwrap();
            worst_sum = worst_sum.max((set.total_power() - 1.0).abs());
            if let Some(kf) = ls.kf_db {
                let ratio = set.los_power_linear / set.scattered_power();
                worst_ratio = worst_ratio.max(rel(ratio, 10f64.powf(kf / 10.0)));
            }
            let set = generate_clusters(ls.ds_s, None, &flat, seed).unwrap();
            monotone &= set
                .clusters
                .windows(2)
                .all(|p| p[1].power_linear <= p[0].power_linear);
        }
    }
    verdict(
        7,
        worst_sum <= 1e-12 && worst_ratio <= 1e-12 && monotone,
        format!("power sum error {worst_sum:.1e}, LOS ratio error {worst_ratio:.1e}, monotone {monotone}"),
    );
}

fn random_config(rng: &mut DetRng) -> ScenarioConfig {
    let mut config = ScenarioConfig::preset(PRESET_NAMES[rng.random_range(0..4)]).unwrap();
    config.label = format!("case-{}", rng.random::<u16>());
    config.ds_median_s = rng.random_range(1e-9..1e-6);
    config.ds_sigma_log10 = rng.random_range(0.0..0.5);
    config.kf_sigma_db = rng.random_range(0.0..4.0);
    config.r_tau = rng.random_range(1.1..4.0);
    config.per_cluster_shadowing_db = rng.random_range(0.0..6.0);
    if config.los {
        config.kf_median_db = Some(rng.random_range(-5.0..25.0));
    }
    let fixed = rng.random_range(0..3);
    config.fixed_clusters = (0..fixed)
        .map(|_| FixedCluster {
            delay_s: rng.random_range(0.0..1e-5),
            relative_power_linear: rng.random_range(0.01..2.0),
        })
        .collect();
    config
}

fn named_failure<T: std::fmt::Debug>(result: chansim::Result<T>, check: fn(&Error) -> bool) -> bool {
    matches!(result, Err(ref e) if check(e))
}

#[test]
fn criterion_08_format_round_trips() {
    let dir = tempdir().unwrap();
    let mut rng = test_rng(8);
    let mut ok = [true; 4];
    for i in 0..100 {
        let len = rng.random_range(1..2000);
        let samples: Vec<Complex64> = (0..len)
            .map(|_| Complex64::new(rng.random::<f32>() as f64 - 0.5, rng.random::<f32>() as f64 - 0.5))
            .collect();
        let signal = IqSignal::with_center_frequency(samples, rng.random_range(1e5..1e8), 2.48e9).unwrap();
        let path = dir.path().join(format!("s{i}.iq"));
        write_iq(&path, &signal).unwrap();
        ok[0] &= read_iq(&path).unwrap() == signal;

        let config = random_config(&mut rng);
        let path = dir.path().join(format!("c{i}.cfg"));
        write_config(&path, &config).unwrap();
        let back = read_config(&path).unwrap();
        ok[1] &= back == config && config_to_string(&back) == config_to_string(&config);

        let taps = rng.random_range(1..64);
        let count = rng.random_range(1..8);
        let snapshots: Vec<Vec<Complex32>> = (0..count)
            .map(|_| (0..taps).map(|_| Complex32::new(rng.random(), -rng.random::<f32>())).collect())
            .collect();
        let dataset = Dataset::new(FS, taps, config_to_string(&config), snapshots).unwrap();
        let path = dir.path().join(format!("d{i}.chds"));
        write_dataset(&path, &dataset).unwrap();
        ok[2] &= read_dataset(&path).unwrap() == dataset;

        let bins = rng.random_range(1..400);
        let mut powers: Vec<f64> = (0..bins).map(|_| rng.random_range(1e-6..1.0)).collect();
        powers[0] = 1.0;
        let pdp = PowerDelayProfile::uniform(0.0, 1.0 / FS, powers.clone()).unwrap();
        let path = dir.path().join(format!("p{i}.csv"));
        write_pdp_csv(&path, &pdp).unwrap();
        let back = read_pdp_csv(&path).unwrap();
        let rewritten = dir.path().join(format!("q{i}.csv"));
        write_pdp_csv(&rewritten, &back).unwrap();
        ok[3] &= std::fs::read(&path).unwrap() == std::fs::read(&rewritten).unwrap()
            && powers
                .iter()
                .zip(back.powers_linear())
                .all(|(a, b)| (10.0 * (a / b).log10()).abs() < 1e-5);
    }

    // Corrupted fixtures.
    let good = dir.path().join("good.chds");
    write_dataset(&good, &generate_dataset(&ScenarioConfig::preset("urban-nlos").unwrap(), 2, 1).unwrap())
        .unwrap();
    let bytes = std::fs::read(&good).unwrap();
    let corrupt = |name: &str, mutate: &dyn Fn(&mut Vec<u8>)| {
        let mut b = bytes.clone();
        mutate(&mut b);
        let p = dir.path().join(name);
        std::fs::write(&p, b).unwrap();
        read_dataset(&p)
    };
    let mut named = vec![
        named_failure(corrupt("magic.chds", &|b| b[0] = b'X'), |e| matches!(e, Error::BadMagic { .. })),
        named_failure(corrupt("version.chds", &|b| b[4] = 9), |e| {
            matches!(e, Error::UnsupportedVersion { .. })
        }),
        named_failure(corrupt("short.chds", &|b| b.truncate(b.len() - 3)), |e| {
            matches!(e, Error::SizeMismatch { .. })
        }),
        named_failure(corrupt("count.chds", &|b| b[6..10].copy_from_slice(&u32::MAX.to_le_bytes())), |e| {
            matches!(e, Error::SizeMismatch { .. })
        }),
        named_failure(corrupt("header.chds", &|b| b.truncate(12)), |e| {
            matches!(e, Error::SizeMismatch { .. })
        }),
    ];
    let iq = dir.path().join("odd.iq");
    std::fs::write(&iq, [0u8; 12]).unwrap();
    std::fs::write(dir.path().join("odd.iq.meta"), "sample_rate_hz=1e6\n").unwrap();
    named.push(named_failure(read_iq(&iq), |e| matches!(e, Error::CorruptFile { .. })));
    named.push(named_failure(read_iq(&dir.path().join("absent.iq")), |e| {
        matches!(e, Error::MissingSidecar { .. })
    }));
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "label=x\nr_tau=abc\n").unwrap();
    named.push(named_failure(read_config(&cfg), |e| matches!(e, Error::Config { .. })));

    let all_named = named.iter().all(|&b| b);
    verdict(
        8,
        ok.iter().all(|&b| b) && all_named,
        format!("iq {} config {} dataset {} pdp csv {}; corrupted fixtures named: {all_named}", ok[0], ok[1], ok[2], ok[3]),
    );
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_chansim")
}

fn run(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(bin()).args(args).current_dir(dir).output().unwrap()
}

#[test]
fn criterion_09_determinism() {
    let config = ScenarioConfig::preset("urban-los").unwrap();
    let mut same = Vec::new();
    same.push(("simulate_pdp", simulate_pdp(&config, 4, 50).unwrap() == simulate_pdp(&config, 4, 50).unwrap()));
    let ls = draw_large_scale(&config, 9).unwrap();
    same.push((
        "generate_clusters",
        generate_clusters(ls.ds_s, ls.kf_db, &config, 9).unwrap()
            == generate_clusters(ls.ds_s, ls.kf_db, &config, 9).unwrap(),
    ));
    let (_, a) = sound(20.0, 3);
    let (_, b) = sound(20.0, 3);
    same.push(("add_awgn", a == b));

    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let many = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
    let serial = one.install(|| generate_dataset(&config, 64, 5).unwrap().to_bytes());
    let parallel = many.install(|| generate_dataset(&config, 64, 5).unwrap().to_bytes());
    same.push(("dataset across thread counts", serial == parallel));

    let dir = tempdir().unwrap();
    let d = dir.path();
    let mut files_equal = true;
    for round in ["a", "b"] {
        let steps: Vec<Vec<String>> = vec![
            vec!["dataset".into(), "--config".into(), "campus-nlos".into(), "--seed".into(), "8".into(), "--count".into(), "50".into(), "--out".into(), format!("{round}.chds")],
            vec!["simulate".into(), "--config".into(), "urban-nlos".into(), "--seed".into(), "8".into(), "--pdp-out".into(), format!("{round}.csv")],
            vec!["loopback".into(), "--channel-spec".into(), "0:1,200:0.5".into(), "--snr-db".into(), "25".into(), "--seed".into(), "8".into(), "--rx-out".into(), format!("{round}.iq")],
        ];
        for args in steps {
            let refs: Vec<&str> = args.iter().map(String::as_str).collect();
            assert!(run(&refs, d).status.success(), "{args:?}");
        }
    }
    for f in ["chds", "csv", "iq", "iq.meta"] {
        files_equal &= std::fs::read(d.join(format!("a.{f}"))).unwrap()
            == std::fs::read(d.join(format!("b.{f}"))).unwrap();
    }
    same.push(("CLI output files", files_equal));
    let pass = same.iter().all(|(_, s)| *s);
    verdict(
        9,
        pass,
        same.iter().map(|(n, s)| format!("{n}: {s}")).collect::<Vec<_>>().join(", "),
    );
}

#[test]
fn criterion_10_end_to_end_pipeline() {
    let start = Instant::now();
    let dir = tempdir().unwrap();
    let d = dir.path();
    let steps: [&[&str]; 6] = [
        &["generate-sounding", "--out", "tx.iq"],
        &[
            "loopback", "--tx", "tx.iq", "--channel-spec", "0:1,117.1875:0.6,273.4375:0.3",
            "--snr-db", "20", "--seed", "7", "--rx-out", "rx.iq",
        ],
        &["estimate", "--rx", "rx.iq", "--pdp-out", "measured.csv"],
        &["extract", "--pdp", "measured.csv", "--out-config", "scenario.cfg"],
        &["simulate", "--config", "scenario.cfg", "--seed", "1", "--pdp-out", "simulated.csv"],
        &[
            "compare", "--measured", "measured.csv", "--simulated", "simulated.csv",
            "--report-out", "report.txt", "--plot-out", "plot.svg",
        ],
    ];
    let mut all_ok = true;
    for args in steps {
        let out = run(args, d);
        if !out.status.success() {
            all_ok = false;
            eprintln!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
        }
    }
    let report = std::fs::read_to_string(d.join("report.txt")).unwrap_or_default();
    let ds_rel: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("ds_relative_error="))
        .and_then(|v| v.parse().ok())
        .unwrap_or(f64::INFINITY);
    let plot_ok = std::fs::read_to_string(d.join("plot.svg"))
        .map(|s| s.matches("<polyline").count() == 2)
        .unwrap_or(false);
    let elapsed = start.elapsed();
    verdict(
        10,
        all_ok && ds_rel < 0.2 && plot_ok && elapsed < Duration::from_secs(60),
        format!("all stages exit 0: {all_ok}, ds_relative_error {ds_rel:.4}, plot {plot_ok}, {:.2} s", elapsed.as_secs_f64()),
    );
}

#[test]
fn cli_exit_codes() {
    let dir = tempdir().unwrap();
    let d = dir.path();
    let out = run(&["generate-sounding", "--zc-length", "354", "--out", "x.iq"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("prime"));
    let out = run(&["generate-sounding", "--repetitions", "1", "--out", "one.iq"], d);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert_eq!(read_iq(&d.join("one.iq")).unwrap().len(), 353);
    let out = run(&["generate-sounding", "--out", "three.iq"], d);
    assert!(out.status.success());
    assert_eq!(read_iq(&d.join("three.iq")).unwrap().len(), 3 * 353);
    let out = run(&["estimate", "--rx", "missing.iq", "--pdp-out", "p.csv"], d);
    assert_eq!(out.status.code(), Some(2));
    let help = run(&["estimate", "--help"], d);
    let text = String::from_utf8_lossy(&help.stdout);
    assert!(text.contains("[default: 353]") && text.contains("[default: 12]"));
}

#[test]
fn cli_loopback_examples() {
    let dir = tempdir().unwrap();
    let d = dir.path();
    for spec in ["0:1", "0:1,100:1"] {
        let out = run(&["loopback", "--channel-spec", spec], d);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    }
    let out = run(&["loopback", "--channel-spec", "0:1,100:1", "--tolerance-bins", "0", "--tolerance-relative", "0"], d);
    assert_eq!(out.status.code(), Some(1));
}
