//! F1 metrics, grid scoring, the supervised F1 sweep and the random polygon
//! study comparing the Peak choice with the best bandwidth in hindsight.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, OrderStatistics};

use crate::data::DataMatrix;
use crate::datagen::{generate_polygon, make_labeled_grid, sample_interior, LabeledGrid, PolygonConfig};
use crate::error::{Result, SvddError};
use crate::kernel::SquaredDistances;
use crate::smoothing::SplineConfig;
use crate::solver::{Label, SolverConfig, SvddModel};
use crate::tuning::{find_peak, for_each_model, train_at, BandwidthGrid, ObjectiveCurve, PeakResult, DEFAULT_MIN_RUN};

/// Confusion counts with "inside/inlier" as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn from_predictions(predicted: &[bool], truth: &[bool]) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(SvddError::Dimension {
                expected: truth.len(),
                got: predicted.len(),
            });
        }
        let mut c = Self::default();
        for (p, t) in predicted.iter().zip(truth) {
            match (p, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio_or_zero(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and their harmonic mean. A zero denominator yields 0.
pub fn compute_metrics(counts: &ConfusionCounts) -> Metrics {
    let precision = ratio_or_zero(counts.tp, counts.tp + counts.fp);
    let recall = ratio_or_zero(counts.tp, counts.tp + counts.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Metrics {
        precision,
        recall,
        f1,
    }
}

/// `true` where the model labels the row an inlier.
pub fn predict_inliers(model: &SvddModel, points: &DataMatrix) -> Result<Vec<bool>> {
    Ok(model
        .score_rows(points)?
        .into_iter()
        .map(|d| model.label_for(d) == Label::Inlier)
        .collect())
}

/// Classifies every grid cell and counts against the ground-truth labels.
pub fn score_grid(model: &SvddModel, grid: &LabeledGrid) -> Result<(Vec<bool>, ConfusionCounts)> {
    if model.dims() != 2 {
        return Err(SvddError::Dimension {
            expected: 2,
            got: model.dims(),
        });
    }
    let predicted = predict_inliers(model, &grid.points)?;
    let counts = ConfusionCounts::from_predictions(&predicted, &grid.labels)?;
    Ok((predicted, counts))
}

/// A bandwidth whose solve failed during an F1 sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub s: f64,
    pub message: String,
}

/// F1 as a function of the bandwidth, over the bandwidths that trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Sweep {
    pub s_values: Vec<f64>,
    pub counts: Vec<ConfusionCounts>,
    pub metrics: Vec<Metrics>,
    pub best_index: usize,
    pub s_best: f64,
    pub f_best: f64,
    pub failures: Vec<SweepFailure>,
}

/// First index of the largest F1.
fn best_f1_index(metrics: &[Metrics]) -> usize {
    let mut best = 0;
    for (i, m) in metrics.iter().enumerate() {
        if m.f1 > metrics[best].f1 {
            best = i;
        }
    }
    best
}

/// Trains at every `s` (warm-started) and scores the labeled points.
/// Bandwidths whose solve fails are skipped and listed in `failures`.
pub fn f1_sweep(
    x: &DataMatrix,
    points: &DataMatrix,
    labels: &[bool],
    s_values: &[f64],
    config: &SolverConfig,
) -> Result<F1Sweep> {
    config.validate()?;
    if points.rows() != labels.len() {
        return Err(SvddError::Dimension {
            expected: points.rows(),
            got: labels.len(),
        });
    }
    let distances = SquaredDistances::new(x);
    let mut previous: Option<Vec<f64>> = None;
    let mut kept = Vec::new();
    let mut counts = Vec::new();
    let mut failures = Vec::new();
    let mut first_error = None;
    for &s in s_values {
        match train_at(x, &distances, s, config, previous.as_deref()) {
            Ok(model) => {
                let predicted = predict_inliers(&model, points)?;
                counts.push(ConfusionCounts::from_predictions(&predicted, labels)?);
                kept.push(s);
                previous = Some(model.alphas);
            }
            Err(e) => {
                warn!("F1 sweep: skipping s = {s}: {e}");
                failures.push(SweepFailure {
                    s,
                    message: e.to_string(),
                });
                first_error.get_or_insert(e);
                previous = None;
            }
        }
    }
    if kept.is_empty() {
        return Err(first_error
            .unwrap_or_else(|| SvddError::Input("empty bandwidth list".into())));
    }
    let metrics: Vec<Metrics> = counts.iter().map(compute_metrics).collect();
    let best_index = best_f1_index(&metrics);
    Ok(F1Sweep {
        s_best: kept[best_index],
        f_best: metrics[best_index].f1,
        s_values: kept,
        counts,
        metrics,
        best_index,
        failures,
    })
}

/// Solver, smoothing and plateau settings shared by the studies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakSettings {
    pub solver: SolverConfig,
    pub spline: SplineConfig,
    pub min_run: usize,
}

impl PeakSettings {
    pub fn with_fraction(f: f64) -> Result<Self> {
        Ok(Self {
            solver: SolverConfig::with_fraction(f)?,
            spline: SplineConfig::default(),
            min_run: DEFAULT_MIN_RUN,
        })
    }
}

/// Peak choice evaluated against the best F1 over the same grid.
#[derive(Debug, Clone)]
pub struct PeakEvaluation {
    pub curve: ObjectiveCurve,
    pub metrics: Vec<Metrics>,
    pub best_index: usize,
    pub s_best: f64,
    pub f_best: f64,
    pub peak: Option<PeakResult>,
    /// Grid index of the recommended s after snapping.
    pub peak_index: Option<usize>,
    pub f_peak: Option<f64>,
    pub ratio: Option<f64>,
    pub failure: Option<String>,
}

/// Runs one warm-started sweep, recording `V*` for the Peak criterion and
/// the F1 on the labeled points at every bandwidth, then compares the
/// (grid-snapped) Peak recommendation with the best F1.
///
/// Solver failures abort, since the Peak curve needs every bandwidth. A
/// missing plateau is reported in `failure` with the F1 curve kept.
pub fn evaluate_peak(
    x: &DataMatrix,
    points: &DataMatrix,
    labels: &[bool],
    grid: &BandwidthGrid,
    settings: &PeakSettings,
) -> Result<PeakEvaluation> {
    grid.validate()?;
    if points.rows() != labels.len() {
        return Err(SvddError::Dimension {
            expected: points.rows(),
            got: labels.len(),
        });
    }
    let s_values = grid.values();
    let mut v_star = Vec::with_capacity(s_values.len());
    let mut metrics = Vec::with_capacity(s_values.len());
    for_each_model(x, &s_values, &settings.solver, true, |_, model| {
        v_star.push(model.dual_objective);
        let predicted = predict_inliers(model, points)?;
        metrics.push(compute_metrics(&ConfusionCounts::from_predictions(&predicted, labels)?));
        Ok(true)
    })?;
    let curve = ObjectiveCurve::from_values(s_values.clone(), v_star, settings.solver.f)?;
    let best_index = best_f1_index(&metrics);
    let f_best = metrics[best_index].f1;
    let mut eval = PeakEvaluation {
        curve,
        best_index,
        s_best: s_values[best_index],
        f_best,
        metrics,
        peak: None,
        peak_index: None,
        f_peak: None,
        ratio: None,
        failure: None,
    };
    match find_peak(&eval.curve, &settings.spline, settings.min_run) {
        Ok(peak) => {
            let k = grid.snap_index(peak.recommended);
            let f_peak = eval.metrics[k].f1;
            eval.peak_index = Some(k);
            eval.f_peak = Some(f_peak);
            if f_best > 0.0 {
                eval.ratio = Some(f_peak / f_best);
            } else {
                eval.failure = Some("best F1 is zero".into());
            }
            eval.peak = Some(peak);
        }
        Err(e @ SvddError::NoPeakFound { .. }) => eval.failure = Some(e.to_string()),
        Err(e) => return Err(e),
    }
    Ok(eval)
}

/// Random polygon study configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonStudyConfig {
    pub vertex_counts: Vec<usize>,
    pub polygons_per_count: usize,
    pub sample_size: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub grid: BandwidthGrid,
    pub resolution: (usize, usize),
    pub settings: PeakSettings,
    pub seed: u64,
}

impl PolygonStudyConfig {
    /// Vertex counts 5 to 30, twenty polygons each.
    pub fn full() -> Self {
        Self {
            vertex_counts: (5..=30).collect(),
            polygons_per_count: 20,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vertex_counts.is_empty() || self.polygons_per_count == 0 || self.sample_size == 0 {
            return Err(SvddError::Input(
                "study needs vertex counts, polygons and samples".into(),
            ));
        }
        self.grid.validate()?;
        self.settings.solver.validate()?;
        self.settings.spline.validate()?;
        for &k in &self.vertex_counts {
            PolygonConfig {
                k,
                r_min: self.r_min,
                r_max: self.r_max,
                seed: 0,
            }
            .validate()?;
        }
        Ok(())
    }

    /// Seed for one polygon; sampling uses a derived stream.
    pub fn polygon_seed(&self, vertex_count: usize, index: usize) -> u64 {
        self.seed
            .wrapping_mul(1_000_003)
            .wrapping_add((vertex_count * 1000 + index) as u64)
    }
}

impl Default for PolygonStudyConfig {
    /// Desk-scale: vertex counts 5, 10 and 15 with five polygons each.
    fn default() -> Self {
        Self {
            vertex_counts: vec![5, 10, 15],
            polygons_per_count: 5,
            sample_size: 600,
            r_min: 3.0,
            r_max: 5.0,
            grid: BandwidthGrid::low_dimensional(),
            resolution: crate::datagen::DEFAULT_GRID_RESOLUTION,
            settings: PeakSettings::with_fraction(0.001).expect("valid default fraction"),
            seed: 1,
        }
    }
}

const SAMPLE_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

/// One polygon of the study. Missing values mark a failed polygon, with the
/// reason in `error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonRow {
    pub vertex_count: usize,
    pub polygon_index: usize,
    pub seed: u64,
    pub s_peak_low: Option<f64>,
    pub s_peak_high: Option<f64>,
    pub s_recommended: Option<f64>,
    pub f_peak: Option<f64>,
    pub s_best: Option<f64>,
    pub f_best: Option<f64>,
    pub ratio: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub vertex_count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: PolygonStudyConfig,
    pub rows: Vec<PolygonRow>,
    pub summary: Vec<RatioSummary>,
}

impl SimulationReport {
    pub fn ratios(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.ratio).collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = &PolygonRow> {
        self.rows.iter().filter(|r| r.ratio.is_none())
    }
}

/// Quartiles use the median-unbiased interpolation of `statrs`.
pub fn summarize_ratios(vertex_count: usize, ratios: &[f64]) -> Option<RatioSummary> {
    if ratios.is_empty() {
        return None;
    }
    let mut data = Data::new(ratios.to_vec());
    Some(RatioSummary {
        vertex_count,
        min: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        q1: data.lower_quartile(),
        median: data.median(),
        q3: data.upper_quartile(),
        max: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean: ratios.iter().sum::<f64>() / ratios.len() as f64,
    })
}

fn polygon_row(config: &PolygonStudyConfig, vertex_count: usize, index: usize) -> PolygonRow {
    let seed = config.polygon_seed(vertex_count, index);
    let mut row = PolygonRow {
        vertex_count,
        polygon_index: index,
        seed,
        s_peak_low: None,
        s_peak_high: None,
        s_recommended: None,
        f_peak: None,
        s_best: None,
        f_best: None,
        ratio: None,
        error: None,
    };
    let outcome = (|| {
        let poly = generate_polygon(&PolygonConfig {
            k: vertex_count,
            r_min: config.r_min,
            r_max: config.r_max,
            seed,
        })?;
        let x = sample_interior(&poly.polygon, config.sample_size, poly.seed_used ^ SAMPLE_STREAM)?;
        let grid = make_labeled_grid(&poly.polygon, config.resolution)?;
        evaluate_peak(&x, &grid.points, &grid.labels, &config.grid, &config.settings)
    })();
    match outcome {
        Ok(eval) => {
            row.s_best = Some(eval.s_best);
            row.f_best = Some(eval.f_best);
            if let Some(peak) = &eval.peak {
                row.s_peak_low = Some(peak.s_low);
                row.s_peak_high = Some(peak.s_high);
                row.s_recommended = Some(peak.recommended);
            }
            row.f_peak = eval.f_peak;
            row.ratio = eval.ratio;
            row.error = eval.failure;
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    if let Some(e) = &row.error {
        warn!("polygon k={vertex_count} #{index} (seed {seed}) failed: {e}");
    }
    row
}

/// Generates the polygons, runs the Peak evaluation on each and summarizes
/// the F1 ratios per vertex count. Polygons run in parallel on the current
/// rayon pool; rows are ordered by vertex count, then polygon index.
pub fn polygon_study(config: &PolygonStudyConfig) -> Result<SimulationReport> {
    config.validate()?;
    let units: Vec<(usize, usize)> = config
        .vertex_counts
        .iter()
        .flat_map(|&k| (0..config.polygons_per_count).map(move |i| (k, i)))
        .collect();
    let rows: Vec<PolygonRow> = units
        .par_iter()
        .map(|&(k, i)| polygon_row(config, k, i))
        .collect();
    let summary = config
        .vertex_counts
        .iter()
        .filter_map(|&k| {
            let ratios: Vec<f64> = rows
                .iter()
                .filter(|r| r.vertex_count == k)
                .filter_map(|r| r.ratio)
                .collect();
            summarize_ratios(k, &ratios)
        })
        .collect();
    Ok(SimulationReport {
        config: config.clone(),
        rows,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::Bounds;
    use crate::kernel::KernelSpec;
    use crate::solver::train;

    #[test]
    fn metric_examples() {
        let m = compute_metrics(&ConfusionCounts { tp: 10, fp: 0, fn_: 0, tn: 3 });
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        let m = compute_metrics(&ConfusionCounts { tp: 1, fp: 1, fn_: 0, tn: 0 });
        assert_eq!((m.precision, m.recall), (0.5, 1.0));
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
        let m = compute_metrics(&ConfusionCounts { tp: 0, fp: 5, fn_: 5, tn: 0 });
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        let m = compute_metrics(&ConfusionCounts::default());
        assert_eq!(m.f1, 0.0);
    }

    #[test]
    fn counts_from_predictions() {
        let c = ConfusionCounts::from_predictions(&[true, true, false, false], &[true, false, true, false]).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 1, fp: 1, fn_: 1, tn: 1 });
        assert_eq!(c.total(), 4);
        assert!(ConfusionCounts::from_predictions(&[true], &[]).is_err());
    }

    #[test]
    fn single_point_model_marks_only_its_cell() {
        let x = DataMatrix::from_rows(&[[0.5, 0.5]]).unwrap();
        let model = train(&x, &KernelSpec::gaussian(1.0).unwrap(), &SolverConfig::default()).unwrap();
        let bounds = Bounds { x_min: 0.0, x_max: 1.0, y_min: 0.0, y_max: 1.0 };
        let grid = LabeledGrid::from_fn(bounds, (3, 3), |_| true).unwrap();
        let (pred, counts) = score_grid(&model, &grid).unwrap();
        assert_eq!(pred.iter().filter(|p| **p).count(), 1);
        assert!(pred[4]);
        assert_eq!(counts.tp + counts.fn_, 9);
    }

    #[test]
    fn score_grid_needs_two_dimensions() {
        let x = DataMatrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let model = train(&x, &KernelSpec::gaussian(1.0).unwrap(), &SolverConfig::default()).unwrap();
        let bounds = Bounds { x_min: 0.0, x_max: 1.0, y_min: 0.0, y_max: 1.0 };
        let grid = LabeledGrid::from_fn(bounds, (3, 3), |_| true).unwrap();
        assert!(matches!(score_grid(&model, &grid), Err(SvddError::Dimension { .. })));
    }

    #[test]
    fn all_outside_labels_give_zero_f1() {
        let x = DataMatrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        let bounds = Bounds { x_min: -1.0, x_max: 2.0, y_min: -1.0, y_max: 2.0 };
        let grid = LabeledGrid::from_fn(bounds, (10, 10), |_| false).unwrap();
        let sweep = f1_sweep(&x, &grid.points, &grid.labels, &[0.5, 1.0, 2.0], &SolverConfig::default()).unwrap();
        assert!(sweep.metrics.iter().all(|m| m.f1 == 0.0));
        assert_eq!(sweep.s_best, 0.5);
    }

    #[test]
    fn training_points_as_evaluation_set() {
        let x = crate::datagen::generate_shape(crate::datagen::ShapeKind::Banana, Some(120), None, 3).unwrap();
        let labels = vec![true; x.rows()];
        let cfg = SolverConfig::with_fraction(0.05).unwrap();
        let sweep = f1_sweep(&x, &x, &labels, &[0.5, 1.0, 2.0], &cfg).unwrap();
        for m in &sweep.metrics {
            assert!(m.recall >= 0.9, "{m:?}");
        }
        let max = sweep.metrics.iter().map(|m| m.f1).fold(0.0, f64::max);
        assert_eq!(sweep.f_best, max);
    }

    #[test]
    fn failed_bandwidths_are_listed() {
        let x = DataMatrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let labels = vec![true; 3];
        let sweep = f1_sweep(&x, &x, &labels, &[-1.0, 1.0], &SolverConfig::default()).unwrap();
        assert_eq!(sweep.s_values, vec![1.0]);
        assert_eq!(sweep.failures.len(), 1);
        assert_eq!(sweep.failures[0].s, -1.0);
    }

    #[test]
    fn ratio_summary() {
        let s = summarize_ratios(5, &[0.9, 1.0, 0.95, 0.97]).unwrap();
        assert_eq!((s.min, s.max), (0.9, 1.0));
        assert!((s.mean - 0.955).abs() < 1e-12);
        assert!(s.q1 <= s.median && s.median <= s.q3);
        assert!(summarize_ratios(5, &[]).is_none());
    }
}
