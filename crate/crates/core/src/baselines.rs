//! Unsupervised bandwidth selectors from the literature: coefficient of
//! variation (CV), maximum distance (MD) and distance to the farthest
//! neighbour (DFN).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Result, SvddError};
use crate::kernel::SquaredDistances;
use crate::tuning::BandwidthGrid;

pub const DEFAULT_CV_EPSILON: f64 = 1e-6;
pub const DEFAULT_MD_FRACTION: f64 = 0.001;

/// Criterion values closer than this to the maximum count as ties.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMethod {
    Cv,
    Md,
    Dfn,
}

impl BaselineMethod {
    pub fn name(self) -> &'static str {
        match self {
            BaselineMethod::Cv => "cv",
            BaselineMethod::Md => "md",
            BaselineMethod::Dfn => "dfn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub method: BaselineMethod,
    pub s: f64,
    /// `(s, criterion)` pairs for the grid-search methods.
    pub curve: Option<Vec<(f64, f64)>>,
}

fn require_rows(x: &DataMatrix, min: usize, what: &str) -> Result<()> {
    if x.rows() < min {
        return Err(SvddError::Input(format!(
            "{what} needs at least {min} observations, got {}",
            x.rows()
        )));
    }
    Ok(())
}

/// First index within `TIE_TOLERANCE` of the maximum.
fn argmax_smallest(values: &[f64]) -> usize {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .position(|v| *v >= max - TIE_TOLERANCE)
        .unwrap_or(0)
}

fn grid_search(
    method: BaselineMethod,
    grid: &BandwidthGrid,
    criterion: impl Fn(f64) -> f64 + Sync,
) -> Result<BaselineResult> {
    grid.validate()?;
    let s_values = grid.values();
    let values: Vec<f64> = s_values.par_iter().map(|s| criterion(*s)).collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(SvddError::Numerical(format!(
            "{} criterion is not finite at s = {}",
            method.name(),
            s_values[i]
        )));
    }
    let best = argmax_smallest(&values);
    Ok(BaselineResult {
        method,
        s: s_values[best],
        curve: Some(s_values.into_iter().zip(values).collect()),
    })
}

/// Coefficient of variation of the off-diagonal kernel entries.
pub fn cv_criterion(pairs: &[f64], s: f64, epsilon: f64) -> f64 {
    let scale = -0.5 / (s * s);
    let count = pairs.len() as f64;
    let mean = pairs.iter().map(|d2| (d2 * scale).exp()).sum::<f64>() / count;
    let var = pairs
        .iter()
        .map(|d2| {
            let e = (d2 * scale).exp() - mean;
            e * e
        })
        .sum::<f64>()
        / count;
    var / (mean + epsilon)
}

/// CV selector: maximizes `Var / (Mean + ε)` of the distinct off-diagonal
/// kernel entries (population variance).
pub fn select_cv(x: &DataMatrix, grid: &BandwidthGrid, epsilon: f64) -> Result<BaselineResult> {
    require_rows(x, 3, "CV selection")?;
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(SvddError::Input(format!("epsilon must be non-negative, got {epsilon}")));
    }
    let d = SquaredDistances::new(x);
    let n = d.size();
    let pairs: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| d.get(i, j))
        .collect();
    grid_search(BaselineMethod::Cv, grid, |s| cv_criterion(&pairs, s, epsilon))
}

/// MD closed form `s = d_max / sqrt(-ln δ)` with `δ = 1 / (n(1 − f) + 1)`.
pub fn md_bandwidth(d_max: f64, n: usize, f: f64) -> f64 {
    let delta = 1.0 / (n as f64 * (1.0 - f) + 1.0);
    d_max / (-delta.ln()).sqrt()
}

/// MD selector based on the largest pairwise Euclidean distance.
pub fn select_md(x: &DataMatrix, f: f64) -> Result<BaselineResult> {
    require_rows(x, 2, "MD selection")?;
    if !(f > 0.0 && f < 1.0) {
        return Err(SvddError::Input(format!("outlier fraction must be in (0, 1), got {f}")));
    }
    let d_max = SquaredDistances::new(x).max_distance();
    if d_max == 0.0 {
        return Err(SvddError::DegenerateInput("all observations are identical".into()));
    }
    Ok(BaselineResult {
        method: BaselineMethod::Md,
        s: md_bandwidth(d_max, x.rows(), f),
        curve: None,
    })
}

/// Per-row nearest and farthest squared distances, excluding the row itself.
fn neighbour_extremes(d: &SquaredDistances) -> Vec<(f64, f64)> {
    let n = d.size();
    (0..n)
        .map(|i| {
            (0..n).filter(|j| *j != i).map(|j| d.get(i, j)).fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), v| (lo.min(v), hi.max(v)),
            )
        })
        .collect()
}

/// DFN objective: mean of the largest minus mean of the smallest off-diagonal
/// kernel value per row, times two. The Gaussian kernel is decreasing in
/// distance, so those are the nearest and farthest neighbours.
pub fn dfn_criterion(extremes: &[(f64, f64)], s: f64) -> f64 {
    let scale = -0.5 / (s * s);
    let sum: f64 = extremes
        .iter()
        .map(|(near, far)| (near * scale).exp() - (far * scale).exp())
        .sum();
    2.0 * sum / extremes.len() as f64
}

/// DFN selector. Both the max and the min range over `j != i`.
pub fn select_dfn(x: &DataMatrix, grid: &BandwidthGrid) -> Result<BaselineResult> {
    require_rows(x, 3, "DFN selection")?;
    let extremes = neighbour_extremes(&SquaredDistances::new(x));
    grid_search(BaselineMethod::Dfn, grid, |s| dfn_criterion(&extremes, s))
}
