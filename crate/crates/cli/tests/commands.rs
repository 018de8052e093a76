use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svdd-peak"))
        .args(args)
        .current_dir(dir)
        .env_remove("SVDD_PEAK_JOBS")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) {
    fs::write(dir.join(name), body).unwrap();
}

fn json(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

fn two_point(dir: &Path) {
    write(dir, "two.csv", "x1,x2\n0,0\n2,0\n");
}

#[test]
fn train_two_points_splits_mass_evenly() {
    let dir = TempDir::new().unwrap();
    two_point(dir.path());
    let out = run(dir.path(), &["train", "--data", "two.csv", "--s", "2", "--f", "0.1", "--out", "m.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let model = json(dir.path(), "m.json");
    assert_eq!(model["kernel_kind"], "gaussian");
    assert_eq!(model["format_version"], 1);
    for a in model["alphas"].as_array().unwrap() {
        assert!((a.as_f64().unwrap() - 0.5).abs() < 1e-9);
    }
    let manifest = json(dir.path(), "m.json.manifest.json");
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["params"]["s"], 2.0);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn train_single_point_has_zero_radius() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "one.csv", "x1,x2\n1.5,-2\n");
    let out = run(dir.path(), &["train", "--data", "one.csv", "--s", "1", "--f", "0.5", "--out", "m.json"]);
    assert!(out.status.success());
    assert_eq!(json(dir.path(), "m.json")["r_squared"].as_f64().unwrap(), 0.0);
}

#[test]
fn train_without_bandwidth_is_usage_error() {
    let dir = TempDir::new().unwrap();
    two_point(dir.path());
    let out = run(dir.path(), &["train", "--data", "two.csv", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(dir.path(), &["train", "--data", "two.csv", "--s", "1", "--f", "1.5", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn tune_md_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    two_point(dir.path());
    let out = run(dir.path(), &["tune", "--data", "two.csv", "--method", "md", "--out", "r.json"]);
    assert!(out.status.success());
    let report = json(dir.path(), "r.json");
    assert_eq!(report["method"], "md");
    assert!((report["s"].as_f64().unwrap() - 1.908_708_572_209_1).abs() < 1e-9);
    assert!(!dir.path().join("r.curve.csv").exists());
}

#[test]
fn tune_cv_ties_resolve_to_smallest_bandwidth() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "tri.csv", "x1,x2\n0,0\n1,0\n0.5,0.8660254037844386\n");
    let out = run(
        dir.path(),
        &["tune", "--data", "tri.csv", "--method", "cv", "--s-min", "0.2", "--out", "r.json"],
    );
    assert!(out.status.success());
    let report = json(dir.path(), "r.json");
    assert_eq!(report["s"].as_f64().unwrap(), 0.2);
    assert_eq!(report["curve"].as_array().unwrap().len(), 157);
    let curve = fs::read_to_string(dir.path().join("r.curve.csv")).unwrap();
    assert!(curve.starts_with("s,cv\n0.2,"));
}

#[test]
fn tune_without_plateau_exits_3_and_keeps_curve() {
    let dir = TempDir::new().unwrap();
    let shapes = run(dir.path(), &["shapes", "--kind", "banana", "--seed", "1", "--out", "b.csv"]);
    assert!(shapes.status.success());
    let out = run(
        dir.path(),
        &["tune", "--data", "b.csv", "--method", "peak", "--min-run", "500", "--out", "r.json"],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(!dir.path().join("r.json").exists());
    let curve = fs::read_to_string(dir.path().join("r.curve.csv")).unwrap();
    assert!(curve.starts_with("s,v_star,d1,d2,d2_fitted,ci_lower,ci_upper,in_zero_region\n"));
    assert_eq!(curve.lines().count(), 161);
}

#[test]
fn tune_peak_on_banana_is_reproducible() {
    let dir = TempDir::new().unwrap();
    run(dir.path(), &["shapes", "--kind", "banana", "--seed", "1", "--out", "b.csv"]);
    let args = ["tune", "--data", "b.csv", "--method", "peak", "--out", "r.json"];
    assert!(run(dir.path(), &args).status.success());
    let first = fs::read(dir.path().join("r.json")).unwrap();
    let curve = fs::read(dir.path().join("r.curve.csv")).unwrap();
    let report = json(dir.path(), "r.json");
    let (lo, hi) = (report["s_low"].as_f64().unwrap(), report["s_high"].as_f64().unwrap());
    assert!(lo <= hi && lo > 0.05 && hi < 8.0);

    let rerun = run(dir.path(), &["--jobs", "1", "tune", "--data", "b.csv", "--method", "peak", "--out", "r.json"]);
    assert!(rerun.status.success());
    assert_eq!(fs::read(dir.path().join("r.json")).unwrap(), first);
    assert_eq!(fs::read(dir.path().join("r.curve.csv")).unwrap(), curve);
}

#[test]
fn score_labels_points_and_renames_input_label() {
    let dir = TempDir::new().unwrap();
    two_point(dir.path());
    run(dir.path(), &["train", "--data", "two.csv", "--s", "2", "--f", "0.1", "--out", "m.json"]);
    write(dir.path(), "z.csv", "x1,x2,label\n0,0,1\n100,100,0\n");
    let out = run(dir.path(), &["score", "--model", "m.json", "--data", "z.csv", "--out", "s.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let body = fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines[0], "x1,x2,input_label,dist_sq,r_sq,label");
    let first: Vec<&str> = lines[1].split(',').collect();
    let (d, r): (f64, f64) = (first[3].parse().unwrap(), first[4].parse().unwrap());
    assert!((d - r).abs() < 1e-6);
    assert_eq!(first[5], "inlier");
    assert!(lines[2].ends_with(",outlier"));
}

#[test]
fn score_empty_file_gives_header_only() {
    let dir = TempDir::new().unwrap();
    two_point(dir.path());
    run(dir.path(), &["train", "--data", "two.csv", "--s", "2", "--out", "m.json"]);
    write(dir.path(), "empty.csv", "x1,x2\n");
    let out = run(dir.path(), &["score", "--model", "m.json", "--data", "empty.csv", "--out", "s.csv"]);
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(dir.path().join("s.csv")).unwrap(), "x1,x2,dist_sq,r_sq,label\n");
}

#[test]
fn score_rejects_other_format_versions() {
    let dir = TempDir::new().unwrap();
    two_point(dir.path());
    run(dir.path(), &["train", "--data", "two.csv", "--s", "2", "--out", "m.json"]);
    let model = fs::read_to_string(dir.path().join("m.json")).unwrap();
    write(dir.path(), "old.json", &model.replace("\"format_version\": 1", "\"format_version\": 0"));
    let out = run(dir.path(), &["score", "--model", "old.json", "--data", "two.csv", "--out", "s.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("format_version"));
}

#[test]
fn grid_resolution_sets_row_count() {
    let dir = TempDir::new().unwrap();
    run(dir.path(), &["shapes", "--kind", "banana", "--seed", "3", "--out", "b.csv"]);
    run(dir.path(), &["train", "--data", "b.csv", "--s", "0.7", "--out", "m.json"]);
    let out = run(
        dir.path(),
        &["grid", "--model", "m.json", "--data", "b.csv", "--resolution", "50", "--out", "g.csv"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let body = fs::read_to_string(dir.path().join("g.csv")).unwrap();
    let rows: Vec<&str> = body.lines().skip(1).collect();
    assert_eq!(rows.len(), 2500);
    let inside = rows.iter().filter(|r| r.contains(",inlier,")).count();
    assert!(inside > 0 && inside < 2500);
    assert!(rows.iter().any(|r| r.ends_with(",1")));
}

#[test]
fn grid_single_point_model_has_at_most_one_inside_cell() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "one.csv", "x1,x2\n1,1\n");
    run(dir.path(), &["train", "--data", "one.csv", "--s", "1", "--f", "0.5", "--out", "m.json"]);
    let out = run(dir.path(), &["grid", "--model", "m.json", "--out", "g.csv"]);
    assert!(out.status.success());
    let body = fs::read_to_string(dir.path().join("g.csv")).unwrap();
    assert!(body.lines().filter(|r| r.contains(",inlier,")).count() <= 1);
}

#[test]
fn grid_requires_two_dimensional_model() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "d3.csv", "a,b,c\n0,0,0\n1,0,0\n0,1,1\n");
    run(dir.path(), &["train", "--data", "d3.csv", "--s", "1", "--out", "m.json"]);
    let out = run(dir.path(), &["grid", "--model", "m.json", "--out", "g.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn shapes_round_trip_through_csv() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["shapes", "--kind", "three-cluster", "--n", "90", "--seed", "4", "--out", "c.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let data = svdd_core::io::read_dataset(fs::File::open(dir.path().join("c.csv")).unwrap()).unwrap();
    let again = svdd_core::datagen::generate_shape(
        svdd_core::datagen::ShapeKind::ThreeCluster,
        Some(90),
        None,
        4,
    )
    .unwrap();
    assert_eq!(data.x, again);
    assert_eq!(json(dir.path(), "c.csv.manifest.json")["seeds"][0], 4);
}

#[test]
fn simulate_writes_report_and_summary() {
    let dir = TempDir::new().unwrap();
    let out = run(
        dir.path(),
        &[
            "simulate", "--vertices", "5", "--polygons", "1", "--samples", "150", "--s-min", "0.1",
            "--s-max", "4", "--s-step", "0.1", "--resolution", "40", "--out-dir", "sim",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(dir.path().join("sim/polygon_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 2);
    assert!(report.starts_with("vertex_count,polygon_index,seed,"));
    assert!(dir.path().join("sim/ratio_summary.csv").exists());
    assert!(dir.path().join("sim/polygon_report.csv.manifest.json").exists());
}

#[test]
fn shuttle_split_writes_train_and_eval() {
    let dir = TempDir::new().unwrap();
    let mut body = String::new();
    for i in 0..30 {
        let class = if i % 5 == 0 { 4 } else { 1 };
        body.push_str(&format!("{i} 0 {} 1 2 3 4 5 6 {class}\n", i * 2));
    }
    write(dir.path(), "shuttle.trn", &body);
    let out = run(
        dir.path(),
        &["shuttle", "--input", "shuttle.trn", "--sample-class1", "10", "--seed", "2", "--out-dir", "split"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let train = svdd_core::io::read_dataset(fs::File::open(dir.path().join("split/train.csv")).unwrap()).unwrap();
    let eval = svdd_core::io::read_dataset(fs::File::open(dir.path().join("split/eval.csv")).unwrap()).unwrap();
    assert_eq!((train.x.rows(), train.x.cols()), (10, 9));
    assert_eq!(eval.x.rows(), 20);
    assert_eq!(eval.labels.unwrap().iter().filter(|l| **l == 0).count(), 6);

    write(dir.path(), "bad.trn", "1 2 3 4 5 6 7 8 9 1\n1 2 3\n");
    let out = run(dir.path(), &["shuttle", "--input", "bad.trn", "--out-dir", "x"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn shuttle_without_input_prints_location() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["shuttle"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("archive.ics.uci.edu"));
}
