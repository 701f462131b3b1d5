use std::path::Path;
use std::process::{Command, Output};

fn featgate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_featgate"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = featgate(args);
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

#[test]
fn full_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let synth = root.join("synth");
    ok(&["synth", "--out", s(&synth), "--rows", "80", "--seed", "4"]);
    for f in ["prices.csv", "indicators.csv", "aligned.csv", "config.toml"] {
        assert!(synth.join(f).is_file(), "{f}");
    }

    // Re-ingest the raw files; the result must match the dataset synth wrote.
    let cfg_path = synth.join("config.toml");
    let data = root.join("data");
    ok(&[
        "ingest",
        "--prices",
        s(&synth.join("prices.csv")),
        "--covid",
        s(&synth.join("indicators.csv")),
        "--config",
        s(&cfg_path),
        "--out",
        s(&data),
    ]);
    // Returns are recovered from prices, so they agree to rounding only.
    let a = std::fs::read_to_string(data.join("aligned.csv")).unwrap();
    let b = std::fs::read_to_string(synth.join("aligned.csv")).unwrap();
    assert_eq!(a.lines().count(), b.lines().count());
    for (la, lb) in a.lines().zip(b.lines()) {
        for (x, y) in la.split(',').zip(lb.split(',')) {
            match (x.parse::<f64>(), y.parse::<f64>()) {
                (Ok(x), Ok(y)) => assert!((x - y).abs() <= 1e-12, "{la}\n{lb}"),
                _ => assert_eq!(x, y),
            }
        }
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(data.join("ingest_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["rows"], 80);

    let results = root.join("results");
    let stdout = ok(&[
        "run",
        "--config",
        s(&cfg_path),
        "--arm",
        "both",
        "--runs",
        "2",
        "--seed",
        "42",
        "--generations",
        "3",
        "--out",
        s(&results),
    ]);
    assert!(stdout.contains("2 runs per arm"));
    let report_json = std::fs::read_to_string(results.join("report.json")).unwrap();

    let report = root.join("report");
    ok(&["report", "--in", s(&results), "--out", s(&report)]);
    assert_eq!(
        std::fs::read_to_string(report.join("report.json")).unwrap(),
        report_json
    );
    assert!(report.join("plots/hist_r2.svg").is_file());
    assert!(report.join("models/augmented_000.json").is_file());

    // PFI from the stored model reproduces the importance saved with the run.
    let pfi = ok(&[
        "pfi",
        "--model",
        s(&results.join("models/augmented_000.json")),
        "--data",
        s(&synth.join("aligned.csv")),
    ]);
    let pfi: serde_json::Value = serde_json::from_str(&pfi).unwrap();
    let run: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(results.join("runs/augmented_000.json")).unwrap())
            .unwrap();
    assert_eq!(pfi, run["pfi"]);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();

    // IO: config file does not exist.
    let out = featgate(&["run", "--config", s(&root.join("missing.toml")), "--out", s(root)]);
    assert_eq!(out.status.code(), Some(4));

    // Config: unknown key and an invalid GA setting.
    let bad = root.join("bad.toml");
    std::fs::write(&bad, "[ga]\npopulaton = 10\n").unwrap();
    assert_eq!(
        featgate(&["run", "--config", s(&bad), "--out", s(root)])
            .status
            .code(),
        Some(2)
    );
    std::fs::write(&bad, "[ga]\npopulation = 2\n").unwrap();
    assert_eq!(
        featgate(&["run", "--config", s(&bad), "--out", s(root)])
            .status
            .code(),
        Some(2)
    );

    // Data: price file without the configured close column.
    let prices = root.join("prices.csv");
    std::fs::write(&prices, "Date,Open\n2021-01-01,1\n2021-01-02,2\n").unwrap();
    let out = featgate(&["ingest", "--prices", s(&prices), "--out", s(&root.join("d"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Close"));
}
