use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn depthreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_depthreg"))
        .args(args)
        .env_remove("DEPTHREG_THREADS")
        .output()
        .expect("binary runs")
}

fn error_json(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("an error line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not JSON ({e}): {stderr}"))
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn sine_cut_args(out: &Path) -> Vec<String> {
    "cut --model parab_sine --n 999 --seed 7 --tau 0.2,0.4 --w0 0 --method bilinear \
     --kernel gaussian --bandwidth 0.37 --directions 360"
        .split_whitespace()
        .map(String::from)
        .chain(["--out".to_string(), out.display().to_string()])
        .collect()
}

fn write_body_csv(dir: &Path) -> std::path::PathBuf {
    let mut s = String::from("weight,calf,thigh\n");
    for i in 0..240 {
        let w = 50.0 + (i as f64 * 0.37) % 40.0;
        let e1 = ((i * 7919) % 101) as f64 / 101.0 - 0.5;
        let e2 = ((i * 104729) % 97) as f64 / 97.0 - 0.5;
        s.push_str(&format!(
            "{w},{},{}\n",
            30.0 + 0.1 * w + 3.0 * e1,
            45.0 + 0.2 * w + 4.0 * e2 + e1
        ));
    }
    s.push_str("71.5,,50\n");
    let path = dir.join("body.csv");
    std::fs::write(&path, s).unwrap();
    path
}

#[test]
fn cut_writes_contours_svg_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let args = sine_cut_args(tmp.path());
    let out = depthreg(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for name in [
        "cut_0.2000_0.0000.csv",
        "cut_0.4000_0.0000.csv",
        "cut_0.2000_0.0000.json",
        "cut_0.4000_0.0000.json",
        "cut_0.0000.svg",
    ] {
        assert!(tmp.path().join(name).exists(), "{name} missing");
    }
    let csv = read(tmp.path(), "cut_0.2000_0.0000.csv");
    assert!(csv.starts_with("w0,tau,vertex_index,y1,y2\n"));
    assert!(csv.lines().count() > 10);

    let manifest: Value = serde_json::from_str(&read(tmp.path(), "manifest.json")).unwrap();
    assert_eq!(manifest["command"], "cut");
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert!(manifest["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(
        manifest["config"]["command"]["cut"]["smoothing"]["bandwidth"],
        0.37
    );
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 5);
}

#[test]
fn svg_is_well_formed_with_each_ring_once() {
    let tmp = TempDir::new().unwrap();
    let args = sine_cut_args(tmp.path());
    assert!(
        depthreg(&args.iter().map(String::as_str).collect::<Vec<_>>())
            .status
            .success()
    );
    let svg = read(tmp.path(), "cut_0.0000.svg");
    let doc = roxmltree::Document::parse(&svg).expect("valid XML");
    let ids: Vec<&str> = doc
        .descendants()
        .filter(|n| n.tag_name().name() == "polygon")
        .filter_map(|n| n.attribute("id"))
        .collect();
    assert_eq!(ids, ["ring-0", "ring-1"]);
}

#[test]
fn manifest_argv_reproduces_identical_csv() {
    let first = TempDir::new().unwrap();
    let second = TempDir::new().unwrap();
    let args = sine_cut_args(first.path());
    assert!(
        depthreg(&args.iter().map(String::as_str).collect::<Vec<_>>())
            .status
            .success()
    );

    let manifest: Value = serde_json::from_str(&read(first.path(), "manifest.json")).unwrap();
    let mut argv: Vec<String> = manifest["argv"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    let at = argv.iter().position(|a| a == "--out").unwrap();
    argv[at + 1] = second.path().display().to_string();
    assert!(
        depthreg(&argv.iter().map(String::as_str).collect::<Vec<_>>())
            .status
            .success()
    );

    for name in ["cut_0.2000_0.0000.csv", "cut_0.4000_0.0000.csv"] {
        assert_eq!(read(first.path(), name), read(second.path(), name));
    }
}

#[test]
fn thread_count_does_not_change_output() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let base = "cut --model parab_homo --n 400 --seed 3 --tau 0.3 --w0 0.5 --bandwidth 0.5 --directions 120";
    let mut one: Vec<&str> = base.split_whitespace().collect();
    let a_out = a.path().display().to_string();
    one.extend(["--threads", "1", "--out", &a_out]);
    assert!(depthreg(&one).status.success());

    let mut env_args: Vec<&str> = base.split_whitespace().collect();
    let b_out = b.path().display().to_string();
    env_args.extend(["--out", &b_out]);
    let out = Command::new(env!("CARGO_BIN_EXE_depthreg"))
        .args(&env_args)
        .env("DEPTHREG_THREADS", "3")
        .output()
        .unwrap();
    assert!(out.status.success());
    let name = "cut_0.3000_0.5000.csv";
    assert_eq!(read(a.path(), name), read(b.path(), name));
}

#[test]
fn csv_source_with_quantile_grid_and_thumb_rule() {
    let tmp = TempDir::new().unwrap();
    let csv = write_body_csv(tmp.path());
    let out_dir = tmp.path().join("out");
    let out = depthreg(&[
        "cut",
        "--csv",
        csv.to_str().unwrap(),
        "--covariate",
        "weight",
        "--responses",
        "calf,thigh",
        "--w0-quantiles",
        "0.1,0.3,0.5,0.7,0.9",
        "--tau",
        "0.01,0.03,0.10,0.25,0.40",
        "--bandwidth-rule",
        "thumb",
        "--directions",
        "60",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let manifest: Value = serde_json::from_str(&read(&out_dir, "manifest.json")).unwrap();
    let outputs = manifest["outputs"].as_array().unwrap();
    // 5 w0 x 5 tau x (csv + json) + 5 svg
    assert_eq!(outputs.len(), 55);
    assert!(manifest["warnings"][0]
        .as_str()
        .unwrap()
        .contains("dropped 1 row"));
}

#[test]
fn bilinear_with_constant_covariate_is_a_computation_error() {
    let tmp = TempDir::new().unwrap();
    let mut s = String::from("w,a,b\n");
    for i in 0..60 {
        s.push_str(&format!(
            "1.0,{},{}\n",
            (i * 13 % 17) as f64,
            (i * 7 % 11) as f64
        ));
    }
    let csv = tmp.path().join("const.csv");
    std::fs::write(&csv, s).unwrap();
    let out = depthreg(&[
        "cut",
        "--csv",
        csv.to_str().unwrap(),
        "--covariate",
        "w",
        "--responses",
        "a,b",
        "--method",
        "bilinear",
        "--bandwidth",
        "0.5",
        "--w0",
        "1",
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err = error_json(&out);
    assert_eq!(err["code"], "degenerate_design");
    assert_eq!(err["module"], "estimators");
    assert_eq!(err["context"]["command"], "cut");
    assert!(err["message"].as_str().unwrap().contains("a_dot"));
}

#[test]
fn config_errors_exit_2_with_json() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().display().to_string();
    let cases: [&[&str]; 6] = [
        &[
            "cut",
            "--model",
            "parab_sine",
            "--method",
            "cubic",
            "--out",
            &out_dir,
        ],
        &["cut", "--model", "nope", "--out", &out_dir],
        &["cut", "--out", &out_dir],
        &[
            "cut",
            "--model",
            "parab_sine",
            "--tau",
            "1.5",
            "--out",
            &out_dir,
        ],
        &[
            "family",
            "--model",
            "parab_sine",
            "--tau",
            "0.3,0.1",
            "--out",
            &out_dir,
        ],
        &["frobnicate"],
    ];
    for args in cases {
        let out = depthreg(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err = error_json(&out);
        assert_eq!(err["code"], "usage", "{args:?}");
        assert_eq!(err["module"], "cli");
        assert!(err["context"].is_object());
    }
}

#[test]
fn missing_file_exits_4() {
    let tmp = TempDir::new().unwrap();
    let out = depthreg(&[
        "cut",
        "--csv",
        "/definitely/not/here.csv",
        "--covariate",
        "w",
        "--responses",
        "a,b",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    let err = error_json(&out);
    assert_eq!(err["code"], "io");
    assert!(err["message"]
        .as_str()
        .unwrap()
        .contains("/definitely/not/here.csv"));
}

#[test]
fn fit_writes_direction_table_and_lp_dump() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().display().to_string();
    let out = depthreg(&[
        "fit",
        "--model",
        "parab_homo",
        "--n",
        "200",
        "--tau",
        "0.25",
        "--w0",
        "-0.5",
        "--method",
        "constant",
        "--bandwidth",
        "0.6",
        "--directions",
        "36",
        "--dump-lp",
        "--out",
        &out_dir,
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = read(tmp.path(), "fit_0.2500_-0.5000.csv");
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "direction,u1,u2,a,b1,b2,c,objective,subgrad_lo,subgrad_hi,status"
    );
    assert_eq!(lines.count(), 36);
    let fits: Value = serde_json::from_str(&read(tmp.path(), "fit_0.2500_-0.5000.json")).unwrap();
    for f in fits.as_array().unwrap() {
        let (lo, hi) = (
            f["subgrad_lo"].as_f64().unwrap(),
            f["subgrad_hi"].as_f64().unwrap(),
        );
        assert!(lo <= 0.25 + 1e-9 && 0.25 <= hi + 1e-9);
    }
    let lp = read(tmp.path(), "fit_0.2500_-0.5000.lp");
    assert!(lp.starts_with("\\ weighted quantile regression, tau = 0.25"));
    assert!(lp.contains("n = 200, q = 2"));
    assert!(lp.trim_end().ends_with("End"));
}

#[test]
fn family_reports_and_repairs_crossing() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().display().to_string();
    let out = depthreg(&[
        "family",
        "--model",
        "parab_sine",
        "--n",
        "150",
        "--seed",
        "6",
        "--tau",
        "0.1,0.2,0.3,0.4",
        "--w0",
        "-1.7",
        "--bandwidth",
        "0.37",
        "--directions",
        "180",
        "--out",
        &out_dir,
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary: Value = serde_json::from_str(&read(tmp.path(), "family_-1.7000.json")).unwrap();
    assert_eq!(summary["crossing_detected"], true);
    assert_eq!(summary["nested_repaired"], true);
    assert!(String::from_utf8_lossy(&out.stderr).contains("raw cuts cross"));
    assert!(tmp.path().join("family_0.4000_-1.7000.csv").exists());
}

#[test]
fn simulate_and_rate_produce_tables() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().display().to_string();
    let out = depthreg(&[
        "simulate",
        "--model",
        "parab_homo",
        "--n",
        "300",
        "--tau",
        "0.2",
        "--w0",
        "0,1",
        "--bandwidth",
        "0.5",
        "--directions",
        "90",
        "--out",
        &out_dir,
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let data = read(tmp.path(), "simulate_data.csv");
    assert_eq!(data.lines().count(), 301);
    let summary = read(tmp.path(), "simulate_summary.csv");
    assert_eq!(summary.lines().count(), 3);

    let out = depthreg(&[
        "rate",
        "--ns",
        "200,400",
        "--reps",
        "2",
        "--n-ref",
        "999",
        "--directions",
        "90",
        "--out",
        &out_dir,
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = read(tmp.path(), "rate_0.2000_0.0000.csv");
    assert_eq!(table.lines().count(), 5);
    let json: Value = serde_json::from_str(&read(tmp.path(), "rate_0.2000_0.0000.json")).unwrap();
    assert_eq!(json["medians"].as_array().unwrap().len(), 2);
}

#[test]
fn ingest_info_summarizes_columns() {
    let tmp = TempDir::new().unwrap();
    let csv = write_body_csv(tmp.path());
    let out_dir = tmp.path().join("info");
    let out = depthreg(&[
        "ingest-info",
        "--csv",
        csv.to_str().unwrap(),
        "--covariate",
        "weight",
        "--responses",
        "calf,thigh",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let info: Value = serde_json::from_str(&read(&out_dir, "ingest-info.json")).unwrap();
    assert_eq!(info["n"], 240);
    assert_eq!(info["dropped_rows"], 1);
    assert_eq!(info["columns"].as_array().unwrap().len(), 3);
    assert!(info["rule_of_thumb_bandwidth"].as_f64().unwrap() > 0.0);
}

#[test]
fn negative_w0_list_is_accepted() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().display().to_string();
    let out = depthreg(&[
        "cut",
        "--model",
        "parab_sine",
        "--n",
        "300",
        "--w0",
        "-1.5,0,1",
        "--bandwidth",
        "0.5",
        "--directions",
        "60",
        "--out",
        &out_dir,
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for w0 in ["-1.5000", "0.0000", "1.0000"] {
        assert!(tmp.path().join(format!("cut_0.2000_{w0}.csv")).exists());
    }
}
