use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use homsim_cli::ScenarioConfig;
use homsim_core::TimeTagStream;

fn homsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homsim"))
        .args(args)
        .env_remove("HOMSIM_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = homsim(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, cfg: &ScenarioConfig) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, cfg.to_json()).unwrap();
    p
}

fn small_reference(n: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::reference();
    cfg.train.n_pulses = n;
    cfg
}

#[test]
fn simulate_writes_valid_deterministic_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &small_reference(200_000));
    let (a, b) = (dir.path().join("a.ptg1"), dir.path().join("b.ptg1"));
    let text = ok(&["simulate", "--config", s(&cfg), "--out", s(&a)]);
    assert!(text.contains("photons emitted"));
    assert!(text.contains("dark counts"));
    ok(&[
        "simulate",
        "--config",
        s(&cfg),
        "--out",
        s(&b),
        "--threads",
        "3",
    ]);
    let (ba, bb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(&ba[..4], b"PTG1");
    assert_eq!(ba, bb);
    let stream = TimeTagStream::from_ptg1_bytes(&ba).unwrap();
    assert!(stream.records.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn silent_emitters_without_darks_give_no_records() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_reference(50_000);
    cfg.emitter1.emission_prob = 0.0;
    cfg.emitter2.emission_prob = 0.0;
    cfg.detector.dark_rate_cps = 0.0;
    let cfg = write_config(dir.path(), "c.json", &cfg);
    let out = dir.path().join("t.ptg1");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    let stream = TimeTagStream::from_ptg1_bytes(&std::fs::read(&out).unwrap()).unwrap();
    assert!(stream.is_empty());
}

#[test]
fn analyze_hom_report_and_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), "c.json", &small_reference(300_000));
    let (sync, delayed) = (dir.path().join("s.ptg1"), dir.path().join("d.ptg1"));
    ok(&["simulate", "--config", s(&cfg_path), "--out", s(&sync)]);
    ok(&[
        "simulate",
        "--config",
        s(&cfg_path),
        "--out",
        s(&delayed),
        "--delay-ps",
        "500",
        "--seed",
        "2",
    ]);
    let out_dir = dir.path().join("hom");
    let text = ok(&[
        "analyze-hom",
        "--tags",
        s(&sync),
        "--reference",
        s(&delayed),
        "--config",
        s(&cfg_path),
        "--out-dir",
        s(&out_dir),
    ]);
    assert!(text.contains("corrected"));
    assert!(text.contains("V'"));
    assert_eq!(
        text.lines()
            .filter(|l| l
                .trim_start()
                .starts_with(|c: char| c == '-' || c.is_ascii_digit()))
            .count(),
        11
    );
    for f in ["histogram.csv", "peaks.csv", "report.json", "histogram.svg"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    let cfg = ScenarioConfig::load(&cfg_path).unwrap();
    assert_eq!(report["provenance"]["config_digest"], cfg.digest());
    assert_eq!(report["provenance"]["seed"], cfg.seed);
    for key in ["raw", "corrected"] {
        let g = report["result"]["analysis"][key]["g2_zero"]["value"]
            .as_f64()
            .unwrap();
        assert!((0.0..=2.0).contains(&g), "{key} {g}");
    }
    assert!(report["result"]["visibility_corrected"]["value"].is_f64());
    let hist = std::fs::read_to_string(out_dir.join("histogram.csv")).unwrap();
    assert!(hist.starts_with("# bin_width_ps=10\n# window_ps=80000\n"));

    // The exported histogram reproduces the analysis.
    let again = dir.path().join("again");
    ok(&[
        "analyze-hom",
        "--histogram",
        s(&out_dir.join("histogram.csv")),
        "--config",
        s(&cfg_path),
        "--out-dir",
        s(&again),
    ]);
    let r2: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(again.join("report.json")).unwrap()).unwrap();
    assert_eq!(r2["result"]["analysis"], report["result"]["analysis"]);
}

#[test]
fn distinguishable_run_gives_half() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_reference(400_000);
    cfg.circuit.pol_overlap = 0.0;
    cfg.circuit.reflectance = 0.5;
    let cfg = write_config(dir.path(), "c.json", &cfg);
    let tags = dir.path().join("t.ptg1");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&tags)]);
    let out_dir = dir.path().join("hom");
    ok(&[
        "analyze-hom",
        "--tags",
        s(&tags),
        "--config",
        s(&cfg),
        "--out-dir",
        s(&out_dir),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    let g = report["result"]["analysis"]["corrected"]["g2_zero"]["value"]
        .as_f64()
        .unwrap();
    assert!((g - 0.5).abs() < 0.02, "{g}");
}

#[test]
fn theory_with_reference_parameters() {
    let text = ok(&["theory"]);
    let v: f64 = text
        .split(") = ")
        .nth(1)
        .and_then(|t| t.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((0.09..=0.14).contains(&v), "{text}");
}

#[test]
fn splitter_label() {
    assert!(ok(&["calib-splitter", "51", "49", "46", "54"]).contains("r:t = 48.5:51.5"));
}

#[test]
fn fit_decay_on_simulated_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &small_reference(1_000_000));
    let tags = dir.path().join("t.ptg1");
    ok(&[
        "simulate",
        "--config",
        s(&cfg),
        "--out",
        s(&tags),
        "--sources",
        "first",
    ]);
    let trace = dir.path().join("trace.csv");
    ok(&["timetrace", "--tags", s(&tags), "--out", s(&trace)]);
    let json = dir.path().join("fit.json");
    ok(&["fit-decay", "--input", s(&trace), "--json", s(&json)]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let names = report["result"]["names"].as_array().unwrap();
    let i = names.iter().position(|n| n == "tau_fast_ps").unwrap();
    let tau = report["result"]["params"][i].as_f64().unwrap();
    assert!((tau / 720.0 - 1.0).abs() < 0.05, "{tau}");
}

#[test]
fn calibration_commands_read_csv() {
    let dir = tempfile::tempdir().unwrap();
    let fringe = dir.path().join("fringe.csv");
    let rows: String = (0..400)
        .map(|i| {
            let x = i as f64 * 0.05;
            format!("{x},{}\n", 1.0 + 0.9 * x.cos())
        })
        .collect();
    std::fs::write(&fringe, format!("phase,intensity\n{rows}")).unwrap();
    assert!(ok(&["calib-fringe", "--input", s(&fringe)]).contains("fringe visibility = 0.9"));

    let loss = dir.path().join("loss.csv");
    let rows: String = [0.5, 1.0, 1.5, 2.0]
        .iter()
        .map(|l| format!("{l},{}\n", 10f64.powf(-0.65 * l)))
        .collect();
    std::fs::write(&loss, rows).unwrap();
    assert!(ok(&["calib-loss", "--input", s(&loss)]).contains("loss = 6.5000"));

    let malus = dir.path().join("malus.csv");
    let rows: String = (0..36)
        .map(|i| {
            let a = i as f64 * 5.0;
            format!(
                "{a},{}\n",
                1.0 + 0.8 * (2.0 * (a - 30.0).to_radians()).cos()
            )
        })
        .collect();
    std::fs::write(&malus, rows).unwrap();
    let json = dir.path().join("dolp.json");
    let text = ok(&["calib-dolp", "--input", s(&malus), "--json", s(&json)]);
    assert!(text.contains("DOLP = 0.8000"), "{text}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(
        report["provenance"]["input_digests"]
            .as_array()
            .unwrap()
            .len(),
        1
    );
}

#[test]
fn lorentzian_fit_with_instrument_width() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("line.csv");
    let rows: String = (0..201)
        .map(|i| {
            let e = -50.0 + i as f64 * 0.5;
            let hw: f64 = 8.25;
            format!("{e},{}\n", 100.0 * hw * hw / ((e - 2.0).powi(2) + hw * hw))
        })
        .collect();
    std::fs::write(&path, rows).unwrap();
    let text = ok(&[
        "fit-lorentzian",
        "--input",
        s(&path),
        "--instrument-fwhm-uev",
        "3.0",
    ]);
    assert!(text.contains("intrinsic FWHM = 13.500"), "{text}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = homsim(&[
        "simulate",
        "--config",
        s(&missing),
        "--out",
        s(&dir.path().join("x")),
    ]);
    assert_eq!(out.status.code(), Some(1));

    let bad = dir.path().join("bad.json");
    let mut v: serde_json::Value =
        serde_json::from_str(&ScenarioConfig::reference().to_json()).unwrap();
    v["circuit"]["reflectivity"] = 0.5.into();
    std::fs::write(&bad, v.to_string()).unwrap();
    let out = homsim(&[
        "simulate",
        "--config",
        s(&bad),
        "--out",
        s(&dir.path().join("x")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("circuit"));

    let out = homsim(&[
        "fit-lorentzian",
        "--input",
        s(&missing),
        "--instrument-fwhm-uev",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(1));

    // An empty histogram has no side peaks to normalize by.
    let cfg = write_config(dir.path(), "c.json", &small_reference(10));
    let hist = dir.path().join("h.csv");
    let rows: String = (0..16000)
        .map(|i| format!("{},0\n", -80000 + 10 * i))
        .collect();
    std::fs::write(
        &hist,
        format!("# bin_width_ps=10\n# window_ps=80000\nbin_start_ps,counts\n{rows}"),
    )
    .unwrap();
    let out = homsim(&[
        "analyze-hom",
        "--histogram",
        s(&hist),
        "--config",
        s(&cfg),
        "--out-dir",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = homsim(&["calib-splitter", "51", "49", "46"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn truncated_tag_file_reports_offset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &small_reference(1000));
    let tags = dir.path().join("t.ptg1");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&tags)]);
    let mut bytes = std::fs::read(&tags).unwrap();
    bytes.truncate(bytes.len() - 3);
    std::fs::write(&tags, bytes).unwrap();
    let out = homsim(&[
        "correlate",
        "--tags",
        s(&tags),
        "--out",
        s(&dir.path().join("h.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("byte"));
}
