use approx::assert_relative_eq;
use svdd_core::baselines::{cv_criterion, dfn_criterion, select_cv, select_dfn, select_md, DEFAULT_CV_EPSILON};
use svdd_core::tuning::BandwidthGrid;
use svdd_core::DataMatrix;

/// Dense-grid argmax of a one-dimensional criterion.
fn dense_argmax(lo: f64, hi: f64, step: f64, f: impl Fn(f64) -> f64) -> f64 {
    let n = ((hi - lo) / step).round() as usize;
    let mut best = (lo, f64::NEG_INFINITY);
    for k in 0..=n {
        let s = lo + k as f64 * step;
        let v = f(s);
        if v > best.1 {
            best = (s, v);
        }
    }
    best.0
}

#[test]
fn cv_matches_dense_grid_on_three_points() {
    let x = DataMatrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]).unwrap();
    let grid = BandwidthGrid::new(0.1, 5.0, 0.01).unwrap();
    let got = select_cv(&x, &grid, DEFAULT_CV_EPSILON).unwrap().s;
    // squared pair distances 1, 1, 4
    let oracle = dense_argmax(0.1, 5.0, 1e-4, |s| cv_criterion(&[1.0, 1.0, 4.0], s, DEFAULT_CV_EPSILON));
    assert!((got - oracle).abs() <= 0.01 + 1e-12, "{got} vs {oracle}");
}

#[test]
fn dfn_matches_dense_grid_on_unit_square() {
    let x = DataMatrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
    let grid = BandwidthGrid::new(0.05, 5.0, 0.01).unwrap();
    let got = select_dfn(&x, &grid).unwrap().s;
    // every corner: nearest squared distance 1, farthest 2
    let oracle = dense_argmax(0.05, 5.0, 1e-4, |s| dfn_criterion(&[(1.0, 2.0); 4], s));
    assert!((got - oracle).abs() <= 0.01 + 1e-12, "{got} vs {oracle}");
}

#[test]
fn selectors_scale_with_the_data() {
    let x = DataMatrix::from_rows(&[[0.0, 0.0], [1.0, 0.2], [2.5, 0.0], [0.7, 1.9], [1.4, -0.8]]).unwrap();
    let c = 4.0;
    let y = x.scaled(c).unwrap();
    assert_relative_eq!(select_md(&y, 0.001).unwrap().s, c * select_md(&x, 0.001).unwrap().s, max_relative = 1e-14);

    let grid = BandwidthGrid::new(0.05, 5.0, 0.05).unwrap();
    let scaled = BandwidthGrid::new(0.05 * c, 5.0 * c, 0.05 * c).unwrap();
    let cv_x = select_cv(&x, &grid, 0.0).unwrap().s;
    let cv_y = select_cv(&y, &scaled, 0.0).unwrap().s;
    assert_relative_eq!(cv_y, c * cv_x, max_relative = 1e-9);
    let dfn_x = select_dfn(&x, &grid).unwrap().s;
    let dfn_y = select_dfn(&y, &scaled).unwrap().s;
    assert_relative_eq!(dfn_y, c * dfn_x, max_relative = 1e-9);
}

#[test]
fn selectors_ignore_row_order_and_translation() {
    let rows = [[0.0, 0.0], [1.0, 0.2], [2.5, 0.0], [0.7, 1.9], [1.4, -0.8]];
    let x = DataMatrix::from_rows(&rows).unwrap();
    let moved: Vec<[f64; 2]> = rows.iter().rev().map(|r| [r[0] + 10.0, r[1] - 3.0]).collect();
    let y = DataMatrix::from_rows(&moved).unwrap();
    let grid = BandwidthGrid::new(0.05, 5.0, 0.05).unwrap();
    assert_eq!(select_cv(&x, &grid, 1e-6).unwrap().s, select_cv(&y, &grid, 1e-6).unwrap().s);
    assert_eq!(select_dfn(&x, &grid).unwrap().s, select_dfn(&y, &grid).unwrap().s);
    assert_relative_eq!(select_md(&x, 0.001).unwrap().s, select_md(&y, 0.001).unwrap().s, max_relative = 1e-12);
}
