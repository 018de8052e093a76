use std::fs::File;

use svdd_core::datagen::{make_labeled_grid, sample_interior, Polygon};
use svdd_core::eval::{evaluate_peak, polygon_study, score_grid, PeakSettings, PolygonStudyConfig};
use svdd_core::io::{read_dataset, read_model, write_dataset, write_model, write_polygon_rows, write_ratio_summary};
use svdd_core::tuning::BandwidthGrid;
use svdd_core::{train, KernelSpec, SolverConfig};

#[test]
fn unit_square_with_peak_bandwidth_scores_well() {
    let square = Polygon::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
    let x = sample_interior(&square, 400, 5).unwrap();
    let grid = make_labeled_grid(&square, (60, 60)).unwrap();
    let settings = PeakSettings::with_fraction(0.001).unwrap();
    let s_grid = BandwidthGrid::new(0.01, 1.0, 0.01).unwrap();
    let eval = evaluate_peak(&x, &grid.points, &grid.labels, &s_grid, &settings).unwrap();
    let peak = eval.peak.expect("plateau");

    // score the recommended bandwidth directly, on a larger grid that also
    // contains outside cells
    let wide = svdd_core::datagen::LabeledGrid::from_fn(
        svdd_core::datagen::Bounds { x_min: -0.5, x_max: 1.5, y_min: -0.5, y_max: 1.5 },
        (100, 100),
        |p| (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1]),
    )
    .unwrap();
    let model = train(&x, &KernelSpec::gaussian(peak.recommended).unwrap(), &settings.solver).unwrap();
    let (_, counts) = score_grid(&model, &wide).unwrap();
    let f1 = svdd_core::eval::compute_metrics(&counts).f1;
    assert!(f1 >= 0.9, "F1 {f1} at s = {}", peak.recommended);
    assert_eq!(counts.tp + counts.fn_, wide.inside_count());
}

#[test]
fn polygon_study_is_reproducible() {
    let config = PolygonStudyConfig {
        vertex_counts: vec![6],
        polygons_per_count: 1,
        sample_size: 150,
        grid: BandwidthGrid::new(0.1, 3.0, 0.1).unwrap(),
        resolution: (40, 40),
        ..PolygonStudyConfig::default()
    };
    let a = polygon_study(&config).unwrap();
    let b = polygon_study(&config).unwrap();
    assert_eq!(a.rows, b.rows);
    for row in &a.rows {
        if let Some(r) = row.ratio {
            assert!((0.0..=1.0).contains(&r));
        }
    }
    let mut rows_csv = Vec::new();
    write_polygon_rows(&mut rows_csv, &a.rows).unwrap();
    let header = String::from_utf8(rows_csv).unwrap();
    assert!(header.starts_with(
        "vertex_count,polygon_index,seed,s_peak_low,s_peak_high,s_recommended,f_peak,s_best,f_best,ratio"
    ));
    let mut summary_csv = Vec::new();
    write_ratio_summary(&mut summary_csv, &a.summary).unwrap();
    assert!(String::from_utf8(summary_csv).unwrap().starts_with("vertex_count,min,q1,median,q3,max,mean"));
}

#[test]
fn files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let square = Polygon::new(vec![[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [0.0, 1.0]]).unwrap();
    let x = sample_interior(&square, 50, 9).unwrap();
    let data_path = dir.path().join("data.csv");
    write_dataset(File::create(&data_path).unwrap(), &x, None).unwrap();
    let back = read_dataset(File::open(&data_path).unwrap()).unwrap();
    assert_eq!(back.x, x);

    let model = train(&x, &KernelSpec::gaussian(0.7).unwrap(), &SolverConfig::default()).unwrap();
    let model_path = dir.path().join("model.json");
    write_model(File::create(&model_path).unwrap(), &model).unwrap();
    let loaded = read_model(File::open(&model_path).unwrap()).unwrap();
    assert_eq!(loaded.classify(&x).unwrap(), model.classify(&x).unwrap());
}
