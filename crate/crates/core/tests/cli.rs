use std::path::Path;
use std::process::{Command, Output};

use distexp::cli::RunManifest;
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_distexp"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn parse_csv(csv_text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let i = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

#[test]
fn dmt_prints_corners() {
    let o = run(&["dmt", "--mt", "3", "--mr", "2"]);
    assert!(o.status.success());
    let (header, rows) = parse_csv(&stdout(&o));
    assert_eq!(column(&header, &rows, "r"), vec![0.0, 1.0, 2.0]);
    assert_eq!(column(&header, &rows, "d"), vec![6.0, 2.0, 0.0]);
}

#[test]
fn reals_carry_seventeen_digits() {
    let o = run(&["layers", "--mt", "2", "--mr", "2", "--b", "2", "--n", "4"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["delta_n"].as_f64().unwrap() - (0.75 + 10.0 / 9.0)).abs() < 1e-12);

    let o = run(&[
        "exponent", "--mt", "1", "--mr", "1", "--b-min", "0.1", "--b-max", "0.1", "--step", "1",
    ]);
    let line = stdout(&o).lines().nth(1).unwrap().to_string();
    let first = line.split(',').next().unwrap();
    let mantissa = first.split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17, "{first}");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(
        run(&["dmt", "--mt", "0", "--mr", "1"]).status.code(),
        Some(2)
    );
    assert_eq!(
        run(&["layers", "--mt", "1", "--mr", "1", "--b", "0.5", "--n", "3"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["layers", "--mt", "1", "--mr", "1", "--b", "-1", "--n", "2"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let o = run(&["simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("defaults:"));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn unwritable_output_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = run(&[
        "--out-dir",
        blocker.to_str().unwrap(),
        "dmt",
        "--mt",
        "1",
        "--mr",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

fn simulate_into(dir: &Path, extra: &[&str]) -> (Vec<String>, Vec<Vec<String>>, RunManifest) {
    let mut args = vec!["--out-dir", dir.to_str().unwrap(), "simulate"];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = parse_csv(&std::fs::read_to_string(dir.join("simulate.csv")).unwrap());
    let manifest: RunManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.join("simulate.manifest.json")).unwrap())
            .unwrap();
    (header, rows, manifest)
}

#[test]
fn exact_simulation_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (header, rows, manifest) = simulate_into(
        dir.path(),
        &[
            "--b",
            "0.5",
            "--n",
            "8",
            "--oracle",
            "exact",
            "--snr-db-min",
            "60",
            "--snr-db-max",
            "120",
            "--snr-db-step",
            "10",
        ],
    );
    assert_eq!(rows.len(), 7);
    let d = column(&header, &rows, "mean_distortion");
    assert!(d.windows(2).all(|w| w[1] < w[0]));
    assert_eq!(manifest.subcommand, "simulate");
    assert_eq!(manifest.seed, None);
    assert_eq!(manifest.outputs, vec![dir.path().join("simulate.csv")]);
    let slope = manifest.results["fitted_exponent"].as_f64().unwrap();
    assert!((slope - 0.46875).abs() < 0.05, "{slope}");
}

#[test]
fn seeded_runs_reproduce_across_thread_counts() {
    let common = [
        "--mt", "2", "--mr", "2", "--b", "2", "--n", "4", "--trials", "50000", "--seed", "17",
    ];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let run_with = |dir: &Path, threads: &str| {
        let mut args = vec![
            "--out-dir",
            dir.to_str().unwrap(),
            "--threads",
            threads,
            "simulate",
        ];
        args.extend_from_slice(&common);
        assert!(run(&args).status.success());
        std::fs::read_to_string(dir.join("simulate.csv")).unwrap()
    };
    let one = run_with(a.path(), "1");
    let four = run_with(b.path(), "4");
    assert_eq!(one, four);
    assert_eq!(run_with(c.path(), "4"), four);
    let manifest: RunManifest = serde_json::from_str(
        &std::fs::read_to_string(a.path().join("simulate.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest.seed, Some(17));
    let (header, rows) = parse_csv(&one);
    assert!(header.contains(&"count_4".to_string()));
    let counts: Vec<f64> = (0..=4)
        .flat_map(|k| column(&header, &rows, &format!("count_{k}")))
        .collect();
    assert_eq!(counts.iter().sum::<f64>(), 50000.0 * rows.len() as f64);
}

#[test]
fn config_files_in_each_format_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let files = [
        ("sim.toml", "b = 0.5\nn = 4\noracle = \"exact\"\nsnr_db_min = 20\nsnr_db_max = 40\nsnr_db_step = 10\n"),
        ("sim.json", r#"{"b": 0.5, "n": 4, "oracle": "exact", "snr_db_min": 20, "snr_db_max": 40, "snr_db_step": 10}"#),
        ("sim.csv", "b,n,oracle,snr_db_min,snr_db_max,snr_db_step\n0.5,4,exact,20,40,10\n"),
    ];
    let mut outputs = Vec::new();
    for (name, text) in files {
        let path = dir.path().join(name);
        std::fs::write(&path, text).unwrap();
        let out = dir.path().join(format!("out-{name}"));
        let (header, rows, manifest) = simulate_into(
            &out,
            &["--config", path.to_str().unwrap(), "--snr-db-max", "30"],
        );
        assert_eq!(column(&header, &rows, "snr_db"), vec![20.0, 30.0]);
        assert_eq!(manifest.parameters["b"], 0.5);
        assert_eq!(manifest.parameters["n"], 4);
        outputs.push(column(&header, &rows, "mean_distortion"));
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "bogus = 1\n").unwrap();
    assert_eq!(
        run(&["simulate", "--config", bad.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn explicit_gains_and_single_layer() {
    let o = run(&[
        "simulate",
        "--b",
        "0.5",
        "--gains",
        "0.5,0.5",
        "--oracle",
        "exact",
        "--snr-db-min",
        "60",
        "--snr-db-max",
        "60",
    ]);
    assert!(o.status.success());
    let (header, rows) = parse_csv(&stdout(&o));
    assert!(header.contains(&"p_2".to_string()));
    assert_eq!(rows.len(), 1);

    let o = run(&[
        "simulate",
        "--b",
        "0.5",
        "--single-layer",
        "--oracle",
        "exact",
    ]);
    let (header, _) = parse_csv(&stdout(&o));
    assert!(header.contains(&"p_1".to_string()) && !header.contains(&"p_2".to_string()));
    assert_eq!(
        run(&["simulate", "--mt", "2", "--b", "1", "--oracle", "exact"])
            .status
            .code(),
        Some(2)
    );
}
