//! Bandwidth selection from the optimal dual objective `V*(s)`.
//!
//! The sweep trains one Gaussian SVDD per grid bandwidth and records the
//! attained dual objective. Central differences give `V*'` and `V*''`; a
//! P-spline fit of `V*''` with a pointwise band decides where the second
//! derivative is statistically zero. The selected range is the first such
//! plateau once the curve has turned significantly negative, i.e. the first
//! critical region of `V*'`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Result, SvddError};
use crate::kernel::{KernelSpec, SquaredDistances};
use crate::smoothing::{ci_contains_zero, fit_pspline, SplineConfig, SplineFit};
use crate::solver::{train_with_kernel, SolverConfig, SvddModel};

/// Minimum number of grid intervals, enough for differencing plus a spline.
const MIN_GRID_INTERVALS: usize = 8;

/// Early termination refits the spline every this many new grid points.
const EARLY_STOP_REFIT_EVERY: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthGrid {
    pub s_min: f64,
    pub s_max: f64,
    pub step: f64,
}

impl BandwidthGrid {
    pub fn new(s_min: f64, s_max: f64, step: f64) -> Result<Self> {
        let grid = Self { s_min, s_max, step };
        grid.validate()?;
        Ok(grid)
    }

    /// `[0.05, 8]` in steps of 0.05, for two-dimensional data.
    pub fn low_dimensional() -> Self {
        Self {
            s_min: 0.05,
            s_max: 8.0,
            step: 0.05,
        }
    }

    /// `[1, 100]` in steps of 1, for higher-dimensional data.
    pub fn high_dimensional() -> Self {
        Self {
            s_min: 1.0,
            s_max: 100.0,
            step: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s_min > 0.0 && self.step > 0.0 && self.s_max.is_finite()) {
            return Err(SvddError::Input(format!(
                "grid needs s_min > 0 and step > 0, got {self:?}"
            )));
        }
        if !(self.s_min < self.s_max) {
            return Err(SvddError::Input(format!(
                "grid needs s_min < s_max, got {self:?}"
            )));
        }
        if self.intervals() < MIN_GRID_INTERVALS {
            return Err(SvddError::Input(format!(
                "grid has {} intervals, need at least {MIN_GRID_INTERVALS}",
                self.intervals()
            )));
        }
        Ok(())
    }

    fn intervals(&self) -> usize {
        ((self.s_max - self.s_min) / self.step + 1e-9).floor() as usize
    }

    /// Grid values `s_min + k·step`, computed by multiplication so they do
    /// not accumulate rounding.
    pub fn values(&self) -> Vec<f64> {
        (0..=self.intervals())
            .map(|k| self.s_min + k as f64 * self.step)
            .collect()
    }

    /// Index of the grid point closest to `s` (lower index on ties).
    pub fn snap_index(&self, s: f64) -> usize {
        let k = ((s - self.s_min) / self.step).round().max(0.0) as usize;
        let k = k.min(self.intervals());
        let values = self.values();
        if k > 0 && (values[k - 1] - s).abs() <= (values[k] - s).abs() {
            k - 1
        } else {
            k
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveCurve {
    pub s_values: Vec<f64>,
    pub v_star: Vec<f64>,
    /// Central first differences at `s_values[1..len-1]`.
    pub d1: Vec<f64>,
    /// Central second differences at `s_values[1..len-1]`.
    pub d2: Vec<f64>,
    pub f: f64,
    pub step: f64,
}

impl ObjectiveCurve {
    /// Builds the curve from objective values on an equally spaced grid.
    pub fn from_values(s_values: Vec<f64>, v_star: Vec<f64>, f: f64) -> Result<Self> {
        if s_values.len() != v_star.len() {
            return Err(SvddError::Dimension {
                expected: s_values.len(),
                got: v_star.len(),
            });
        }
        if s_values.len() < 3 {
            return Err(SvddError::Input("need at least 3 grid points to difference".into()));
        }
        let step = s_values[1] - s_values[0];
        let (d1, d2) = central_differences(&v_star, step);
        Ok(Self {
            s_values,
            v_star,
            d1,
            d2,
            f,
            step,
        })
    }

    /// Abscissae of `d1`/`d2`.
    pub fn interior_s(&self) -> &[f64] {
        &self.s_values[1..self.s_values.len() - 1]
    }

    /// Largest increase between consecutive objective values (0 when the
    /// curve is non-increasing).
    pub fn max_increase(&self) -> f64 {
        self.v_star
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

/// `(d1, d2)` at interior points: `(v₊ − v₋)/2h` and `(v₊ − 2v + v₋)/h²`.
pub fn central_differences(v: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    v.windows(3)
        .map(|w| ((w[2] - w[0]) / (2.0 * h), (w[2] - 2.0 * w[1] + w[0]) / (h * h)))
        .unzip()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Initialize each solve from the previous bandwidth's solution.
    pub warm_start: bool,
    /// Solve bandwidths concurrently (implies cold starts).
    pub parallel: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            warm_start: true,
            parallel: false,
        }
    }
}

fn sweep_config(config: &SolverConfig, f: f64) -> Result<SolverConfig> {
    let cfg = SolverConfig { f, ..*config };
    cfg.validate()?;
    Ok(cfg)
}

/// Trains one model per bandwidth in ascending order, handing each to
/// `visit`. Returning `false` from `visit` stops the sweep early.
pub fn for_each_model(
    x: &DataMatrix,
    s_values: &[f64],
    config: &SolverConfig,
    warm_start: bool,
    mut visit: impl FnMut(usize, &SvddModel) -> Result<bool>,
) -> Result<()> {
    config.validate()?;
    let distances = SquaredDistances::new(x);
    let mut previous: Option<Vec<f64>> = None;
    for (idx, &s) in s_values.iter().enumerate() {
        let model = train_at(x, &distances, s, config, previous.as_deref())?;
        if warm_start {
            previous = Some(model.alphas.clone());
        }
        if !visit(idx, &model)? {
            break;
        }
    }
    Ok(())
}

pub(crate) fn train_at(
    x: &DataMatrix,
    distances: &SquaredDistances,
    s: f64,
    config: &SolverConfig,
    init: Option<&[f64]>,
) -> Result<SvddModel> {
    let wrap = |e: SvddError| SvddError::Sweep {
        s,
        source: Box::new(e),
    };
    let kernel = distances.gaussian_kernel(s).map_err(wrap)?;
    let spec = KernelSpec::gaussian(s).map_err(wrap)?;
    train_with_kernel(x, &kernel, &spec, config, init).map_err(wrap)
}

/// Optimal dual objective over the grid with warm-started sequential solves.
pub fn sweep_objective(
    x: &DataMatrix,
    f: f64,
    grid: &BandwidthGrid,
    config: &SolverConfig,
) -> Result<ObjectiveCurve> {
    sweep_objective_with(x, f, grid, config, SweepOptions::default())
}

pub fn sweep_objective_with(
    x: &DataMatrix,
    f: f64,
    grid: &BandwidthGrid,
    config: &SolverConfig,
    options: SweepOptions,
) -> Result<ObjectiveCurve> {
    grid.validate()?;
    let cfg = sweep_config(config, f)?;
    let s_values = grid.values();
    let v_star = if options.parallel {
        let distances = SquaredDistances::new(x);
        s_values
            .par_iter()
            .map(|&s| train_at(x, &distances, s, &cfg, None).map(|m| m.dual_objective))
            .collect::<Result<Vec<f64>>>()?
    } else {
        let mut v = Vec::with_capacity(s_values.len());
        for_each_model(x, &s_values, &cfg, options.warm_start, |_, m| {
            v.push(m.dual_objective);
            Ok(true)
        })?;
        v
    };
    ObjectiveCurve::from_values(s_values, v_star, f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakResult {
    pub s_low: f64,
    pub s_high: f64,
    pub recommended: f64,
    /// Index range of the plateau within the interior grid, inclusive.
    pub run: (usize, usize),
    pub fit: SplineFit,
    /// Per interior point: does the band contain zero?
    pub zero_mask: Vec<bool>,
}

/// Default minimum plateau length, in grid points.
/// A single zero-containing point counts: on real curves the first critical
/// region is usually a transversal crossing only one grid point wide.
pub const DEFAULT_MIN_RUN: usize = 1;

/// Fits the spline to `curve.d2` and locates the plateau.
pub fn find_peak(
    curve: &ObjectiveCurve,
    spline_config: &SplineConfig,
    min_run: usize,
) -> Result<PeakResult> {
    if curve.d2.len() < 10 {
        return Err(SvddError::Input(format!(
            "need at least 10 interior points, got {}",
            curve.d2.len()
        )));
    }
    let fit = fit_pspline(curve.interior_s(), &curve.d2, spline_config)?;
    locate_plateau(curve.interior_s(), fit, min_run)
}

/// Plateau search on an already fitted band.
///
/// Scanning starts after the first point whose band lies entirely below
/// zero, so a flat stretch at the very smallest bandwidths (where `V*` has
/// not started to fall) is not mistaken for the critical region. A band that
/// is never significantly negative is scanned from the start. The first
/// maximal run of zero-containing points with at least `min_run` members is
/// returned. When the band jumps from entirely below zero to entirely above
/// it between neighbours, the neighbour with the smaller fitted magnitude is
/// taken as a one-point run (only when `min_run` is 1).
pub fn locate_plateau(s: &[f64], fit: SplineFit, min_run: usize) -> Result<PeakResult> {
    if s.len() != fit.fitted.len() {
        return Err(SvddError::Dimension {
            expected: s.len(),
            got: fit.fitted.len(),
        });
    }
    let min_run = min_run.max(1);
    let mask = ci_contains_zero(&fit);
    let start = fit
        .ci_upper
        .iter()
        .position(|u| *u < 0.0)
        .map_or(0, |i| i + 1);

    let mut i = start;
    while i < mask.len() {
        if !mask[i] {
            if min_run == 1 && i > 0 && fit.ci_upper[i - 1] < 0.0 && fit.ci_lower[i] > 0.0 {
                let k = if fit.fitted[i - 1].abs() < fit.fitted[i].abs() { i - 1 } else { i };
                return Ok(PeakResult {
                    s_low: s[k],
                    s_high: s[k],
                    recommended: s[k],
                    run: (k, k),
                    fit,
                    zero_mask: mask,
                });
            }
            i += 1;
            continue;
        }
        let begin = i;
        while i < mask.len() && mask[i] {
            i += 1;
        }
        if i - begin >= min_run {
            let (lo, hi) = (s[begin], s[i - 1]);
            return Ok(PeakResult {
                s_low: lo,
                s_high: hi,
                recommended: 0.5 * (lo + hi),
                run: (begin, i - 1),
                fit,
                zero_mask: mask,
            });
        }
    }
    Err(SvddError::NoPeakFound { mask })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakOptions {
    pub min_run: usize,
    pub sweep: SweepOptions,
    /// Stop sweeping once a plateau has been entered and left.
    pub early_stop: bool,
}

impl Default for PeakOptions {
    fn default() -> Self {
        Self {
            min_run: DEFAULT_MIN_RUN,
            sweep: SweepOptions::default(),
            early_stop: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSelection {
    /// The (possibly truncated) curve the plateau was found on.
    pub curve: ObjectiveCurve,
    pub peak: PeakResult,
}

/// Sweep plus plateau detection.
pub fn select_bandwidth_peak(
    x: &DataMatrix,
    f: f64,
    grid: &BandwidthGrid,
    config: &SolverConfig,
    spline_config: &SplineConfig,
    options: &PeakOptions,
) -> Result<PeakSelection> {
    if !options.early_stop {
        let curve = sweep_objective_with(x, f, grid, config, options.sweep)?;
        let peak = find_peak(&curve, spline_config, options.min_run)?;
        return Ok(PeakSelection { curve, peak });
    }

    grid.validate()?;
    let cfg = sweep_config(config, f)?;
    let s_values = grid.values();
    let mut v_star: Vec<f64> = Vec::with_capacity(s_values.len());
    // smallest prefix that supports a spline fit on its interior
    let first_check = 12;
    for_each_model(x, &s_values, &cfg, options.sweep.warm_start, |idx, model| {
        v_star.push(model.dual_objective);
        let len = idx + 1;
        if len < first_check || (len - first_check) % EARLY_STOP_REFIT_EVERY != 0 {
            return Ok(true);
        }
        let partial = ObjectiveCurve::from_values(s_values[..len].to_vec(), v_star.clone(), f)?;
        match find_peak(&partial, spline_config, options.min_run) {
            Ok(peak) if peak.run.1 + 1 < partial.d2.len() => Ok(false),
            _ => Ok(true),
        }
    })?;
    let curve = ObjectiveCurve::from_values(s_values[..v_star.len()].to_vec(), v_star, f)?;
    let peak = find_peak(&curve, spline_config, options.min_run)?;
    Ok(PeakSelection { curve, peak })
}
