//! Black-box tests of the binary: exit codes, output formats, config
//! precedence, and rerun determinism.

use std::path::Path;
use std::process::{Command, Output};

use illumest::evaluation::aggregate;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_illumest"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf8 stderr")
}

/// Renders a small labeled dataset and returns its directory.
fn synth_dir(dir: &Path, count: usize, seed: u64) {
    let out = run(&[
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--count",
        &count.to_string(),
        "--seed",
        &seed.to_string(),
    ]);
    assert!(out.status.success(), "synth failed: {}", stderr(&out));
}

#[test]
fn help_covers_every_subcommand() {
    let top = run(&["--help"]);
    assert_eq!(top.status.code(), Some(0));
    for sub in ["estimate", "train", "evaluate", "correct", "synth"] {
        assert!(stdout(&top).contains(sub));
        let help = run(&[sub, "--help"]);
        assert_eq!(help.status.code(), Some(0), "{sub} --help");
        assert!(stdout(&help).contains("default"), "{sub} help lists defaults");
    }
}

#[test]
fn unknown_flag_exits_2_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("rows.csv");
    let out = run(&[
        "estimate",
        "ignored.png",
        "--out",
        out_path.to_str().unwrap(),
        "--definitely-not-a-flag",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--definitely-not-a-flag"));
    assert!(!out_path.exists());
}

#[test]
fn missing_input_exits_1() {
    let out = run(&["estimate", "/definitely/not/here.png"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!stderr(&out).is_empty());
}

#[test]
fn out_of_range_flag_value_exits_2() {
    let out = run(&["estimate", "x.png", "--top-fraction", "2.0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("top_fraction"));
    let out = run(&["--jobs", "0", "estimate", "x.png"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--jobs"));
}

#[test]
fn ffcc_without_model_exits_2() {
    let out = run(&["estimate", "x.png", "--method", "ffcc"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--model"));
}

#[test]
fn estimate_emits_one_unit_norm_row_per_image() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth_dir(&data, 3, 21);
    let out = run(&["estimate", data.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("path,r,g,b"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    let mut prev = String::new();
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 4);
        assert!(fields[0] > prev.as_str(), "rows sorted by path");
        prev = fields[0].to_string();
        let [r, g, b] = [1, 2, 3].map(|i| fields[i].parse::<f64>().unwrap());
        // Rows carry 6 decimals, so the norm check inherits that rounding.
        assert!((r * r + g * g + b * b - 1.0).abs() < 1e-5);
    }
}

#[test]
fn evaluate_csv_matches_the_aggregate_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth_dir(&data, 10, 33);
    let gt = data.join("gt.csv");
    let out = run(&[
        "evaluate",
        "--data",
        data.to_str().unwrap(),
        "--gt",
        gt.to_str().unwrap(),
        "--method",
        "grayworld",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let mut errors = Vec::new();
    let mut footer = Vec::new();
    for line in text.lines().skip(1) {
        let (name, value) = line.split_once(',').unwrap();
        if name.starts_with("img_") {
            errors.push(value.parse::<f64>().unwrap());
        } else {
            footer.push((name.to_string(), value.parse::<f64>().unwrap()));
        }
    }
    assert_eq!(errors.len(), 10);
    let agg = aggregate(&errors).unwrap();
    let want = [
        ("mean", agg.mean),
        ("median", agg.median),
        ("trimean", agg.trimean),
        ("best25_mean", agg.best25_mean),
        ("worst25_mean", agg.worst25_mean),
    ];
    assert_eq!(footer.len(), want.len());
    for ((got_name, got), (want_name, value)) in footer.iter().zip(want) {
        assert_eq!(got_name, want_name);
        // The footer prints 6 decimals, so compare at that precision.
        assert!((got - value).abs() < 5e-7, "{want_name}: {got} vs {value}");
    }
}

#[test]
fn evaluate_json_has_count_and_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth_dir(&data, 4, 55);
    let gt = data.join("gt.csv");
    let out = run(&[
        "evaluate",
        "--data",
        data.to_str().unwrap(),
        "--gt",
        gt.to_str().unwrap(),
        "--method",
        "gi",
        "--json",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("\"count\": 4"));
    for key in ["mean", "median", "trimean", "best25_mean", "worst25_mean", "per_image"] {
        assert!(text.contains(&format!("\"{key}\"")), "missing {key}");
    }
}

#[test]
fn config_file_matches_flags_and_loses_to_them() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth_dir(&data, 1, 77);
    let img = data.join("img_00000.png");
    let img = img.to_str().unwrap();
    let conf = dir.path().join("gi.conf");
    std::fs::write(&conf, "# comment\nsigma = 1.0\n\ntop_fraction = 0.01\n").unwrap();
    let conf = conf.to_str().unwrap();

    let by_file = run(&["estimate", img, "--config", conf]);
    let by_flag = run(&["estimate", img, "--sigma", "1.0", "--top-fraction", "0.01"]);
    assert!(by_file.status.success() && by_flag.status.success());
    assert_eq!(stdout(&by_file), stdout(&by_flag));

    // An explicit flag wins over the same key in the file.
    let mixed = run(&["estimate", img, "--config", conf, "--sigma", "0.5"]);
    let direct = run(&["estimate", img, "--sigma", "0.5", "--top-fraction", "0.01"]);
    assert!(mixed.status.success() && direct.status.success());
    assert_eq!(stdout(&mixed), stdout(&direct));

    let bad = dir.path().join("bad.conf");
    std::fs::write(&bad, "not_a_key = 3\n").unwrap();
    let out = run(&["estimate", img, "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("not_a_key"));
}

#[test]
fn correct_writes_a_decodable_png() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth_dir(&data, 1, 3);
    let img = data.join("img_00000.png");
    let fixed = dir.path().join("fixed.png");
    let out = run(&[
        "correct",
        img.to_str().unwrap(),
        "--out",
        fixed.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let balanced =
        illumest::imaging::load_image(&fixed, &illumest::PreprocessConfig::default()).unwrap();
    let original =
        illumest::imaging::load_image(&img, &illumest::PreprocessConfig::default()).unwrap();
    assert_eq!(balanced.width(), original.width());
    assert_eq!(balanced.height(), original.height());
}

#[test]
fn dump_histogram_rejects_directory_input() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth_dir(&data, 2, 8);
    let dump = dir.path().join("h.txt");
    let out = run(&[
        "estimate",
        data.to_str().unwrap(),
        "--dump-histogram",
        dump.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dump.exists());
}

#[test]
fn train_then_estimate_round_trips_a_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth_dir(&data, 8, 13);
    let model = dir.path().join("m.ffcc");
    let out = run(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--gt",
        data.join("gt.csv").to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
        "--epochs",
        "30",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let est = run(&[
        "estimate",
        data.join("img_00000.png").to_str().unwrap(),
        "--method",
        "ffcc",
        "--model",
        model.to_str().unwrap(),
    ]);
    assert!(est.status.success(), "{}", stderr(&est));
    assert_eq!(stdout(&est).lines().count(), 2);
}
