//! SVDD dual solver.
//!
//! Maximizes `Σ α_i K(x_i,x_i) − Σ_ij α_i α_j K(x_i,x_j)` subject to `Σ α_i = 1`
//! and `0 ≤ α_i ≤ C`, with `C = 1/(n f)`. The linear kernel gives the plain
//! hypersphere description, the Gaussian kernel the flexible one.
//!
//! The optimizer is a pairwise (SMO) scheme: each step moves mass from the
//! coordinate with the largest gradient among those that can decrease to the
//! coordinate with the smallest gradient among those that can increase, which
//! is the maximal KKT-violating pair for this constraint set.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Result, SvddError};
use crate::kernel::{dot, kernel_matrix, KernelKind, KernelMatrix, KernelSpec};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Curvature floor for the pairwise step when two points coincide.
const MIN_CURVATURE: f64 = 1e-12;

/// Running gradients are rebuilt from scratch this often to bound drift.
const GRADIENT_REFRESH: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Expected outlier fraction, in (0, 1].
    pub f: f64,
    pub kkt_tol: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            f: 0.001,
            kkt_tol: 1e-6,
            max_iterations: 100_000,
        }
    }
}

impl SolverConfig {
    pub fn with_fraction(f: f64) -> Result<Self> {
        let cfg = Self {
            f,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f > 0.0 && self.f <= 1.0) {
            return Err(SvddError::Input(format!(
                "outlier fraction must lie in (0, 1], got {}",
                self.f
            )));
        }
        if !(self.kkt_tol > 0.0 && self.kkt_tol.is_finite()) {
            return Err(SvddError::Input(format!(
                "kkt_tol must be positive, got {}",
                self.kkt_tol
            )));
        }
        if self.max_iterations == 0 {
            return Err(SvddError::Input("max_iterations must be positive".into()));
        }
        Ok(())
    }

    /// Box constraint `C = 1/(n f)`.
    pub fn box_bound(&self, n: usize) -> f64 {
        1.0 / (n as f64 * self.f)
    }
}

/// Raw optimizer output.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub alphas: Vec<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
}

/// Solves the dual for a precomputed kernel matrix.
///
/// `init` is an optional warm start; it is projected onto the feasible set
/// before use. Without it the solver starts from the uniform point `1/n`.
pub fn solve_dual(
    kernel: &KernelMatrix,
    config: &SolverConfig,
    init: Option<&[f64]>,
) -> Result<DualSolution> {
    config.validate()?;
    let n = kernel.size();
    if n == 0 {
        return Err(SvddError::Input("empty training data".into()));
    }
    let c = config.box_bound(n);
    let mut alphas = match init {
        Some(a) if a.len() == n => project_feasible(a, c),
        Some(a) => {
            return Err(SvddError::Dimension {
                expected: n,
                got: a.len(),
            })
        }
        None => vec![1.0 / n as f64; n],
    };
    let diag = kernel.diagonal();
    let mut grad = full_gradient(kernel, &alphas, &diag);

    let mut iterations = 0;
    let mut since_refresh = 0;
    loop {
        let (up, down, gap) = select_pair(&alphas, &grad, c);
        if gap <= config.kkt_tol {
            // confirm against an exact gradient before declaring convergence
            if since_refresh > 0 {
                grad = full_gradient(kernel, &alphas, &diag);
                since_refresh = 0;
                let (_, _, exact_gap) = select_pair(&alphas, &grad, c);
                if exact_gap <= config.kkt_tol {
                    return Ok(DualSolution {
                        alphas,
                        iterations,
                        kkt_residual: exact_gap.max(0.0),
                    });
                }
                continue;
            }
            return Ok(DualSolution {
                alphas,
                iterations,
                kkt_residual: gap.max(0.0),
            });
        }
        if iterations >= config.max_iterations {
            return Err(SvddError::Convergence {
                iterations,
                kkt_residual: gap,
                best_alphas: alphas,
            });
        }
        let (i, j) = (up.unwrap(), down.unwrap());
        let curvature = (kernel.get(i, i) + kernel.get(j, j) - 2.0 * kernel.get(i, j))
            .max(MIN_CURVATURE);
        let room_up = c - alphas[i];
        let room_down = alphas[j];
        let step = (gap / (2.0 * curvature)).min(room_up).min(room_down);
        alphas[i] = if step == room_up { c } else { alphas[i] + step };
        alphas[j] = if step == room_down { 0.0 } else { alphas[j] - step };
        let (ri, rj) = (kernel.row(i), kernel.row(j));
        let scale = 2.0 * step;
        for ((g, ki), kj) in grad.iter_mut().zip(ri).zip(rj) {
            *g += scale * (ki - kj);
        }
        iterations += 1;
        since_refresh += 1;
        if since_refresh >= GRADIENT_REFRESH {
            grad = full_gradient(kernel, &alphas, &diag);
            since_refresh = 0;
        }
    }
}

/// Gradient of the minimization form `αᵀKα − Σ α_i K_ii`.
fn full_gradient(kernel: &KernelMatrix, alphas: &[f64], diag: &[f64]) -> Vec<f64> {
    kernel
        .mul_vec(alphas)
        .iter()
        .zip(diag)
        .map(|(ka, d)| 2.0 * ka - d)
        .collect()
}

/// Returns (index to increase, index to decrease, violation). Ties resolve to
/// the lowest index.
fn select_pair(alphas: &[f64], grad: &[f64], c: f64) -> (Option<usize>, Option<usize>, f64) {
    let mut up: Option<usize> = None;
    let mut down: Option<usize> = None;
    for (k, (&a, &g)) in alphas.iter().zip(grad).enumerate() {
        if a < c && up.is_none_or(|u| g < grad[u]) {
            up = Some(k);
        }
        if a > 0.0 && down.is_none_or(|d| g > grad[d]) {
            down = Some(k);
        }
    }
    match (up, down) {
        (Some(u), Some(d)) if u != d => (up, down, grad[d] - grad[u]),
        _ => (up, down, 0.0),
    }
}

/// Euclidean projection onto `{Σα = 1, 0 ≤ α ≤ c}` by bisection on the shift.
fn project_feasible(a: &[f64], c: f64) -> Vec<f64> {
    let clipped_sum = |tau: f64| -> f64 { a.iter().map(|v| (v - tau).clamp(0.0, c)).sum() };
    let lo_init = a.iter().cloned().fold(f64::INFINITY, f64::min) - c - 1.0;
    let hi_init = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let (mut lo, mut hi) = (lo_init, hi_init);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if clipped_sum(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut out: Vec<f64> = a.iter().map(|v| (v - 0.5 * (lo + hi)).clamp(0.0, c)).collect();
    // spread the rounding residue over free coordinates
    let residue = 1.0 - out.iter().sum::<f64>();
    if residue != 0.0 {
        let free: Vec<usize> = (0..out.len()).filter(|&k| out[k] > 0.0 && out[k] < c).collect();
        if !free.is_empty() {
            let share = residue / free.len() as f64;
            for k in free {
                out[k] = (out[k] + share).clamp(0.0, c);
            }
        }
    }
    out
}

/// Position of a training observation relative to the description boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Position {
    Inside,
    Boundary,
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Inlier,
    Outlier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionReport {
    pub positions: Vec<Position>,
    /// Observations whose distance disagrees with their α-based position.
    pub inconsistent: Vec<usize>,
}

impl PositionReport {
    pub fn is_consistent(&self) -> bool {
        self.inconsistent.is_empty()
    }
}

/// A fitted description.
///
/// `alphas` covers every training row. Models read back from JSON only know
/// their support vectors, so there `alphas` is indexed by support vector.
#[derive(Debug, Clone)]
pub struct SvddModel {
    pub alphas: Vec<f64>,
    pub sv_indices: Vec<usize>,
    pub boundary_sv_indices: Vec<usize>,
    pub r_squared: f64,
    pub spec: KernelSpec,
    pub config: SolverConfig,
    pub c: f64,
    pub support_vectors: DataMatrix,
    pub dual_objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    sv_alphas: Vec<f64>,
    /// Σ_ij α_i α_j K(x_i, x_j).
    center_norm_sq: f64,
}

/// Trains a description of `x`.
pub fn train(x: &DataMatrix, spec: &KernelSpec, config: &SolverConfig) -> Result<SvddModel> {
    let kernel = kernel_matrix(x, spec)?;
    train_with_kernel(x, &kernel, spec, config, None)
}

/// Trains against a kernel matrix already built for `x` under `spec`, with an
/// optional warm start.
pub fn train_with_kernel(
    x: &DataMatrix,
    kernel: &KernelMatrix,
    spec: &KernelSpec,
    config: &SolverConfig,
    init: Option<&[f64]>,
) -> Result<SvddModel> {
    if kernel.size() != x.rows() {
        return Err(SvddError::Dimension {
            expected: x.rows(),
            got: kernel.size(),
        });
    }
    let solution = solve_dual(kernel, config, init)?;
    SvddModel::from_solution(x, kernel, *spec, *config, solution)
}

impl SvddModel {
    fn from_solution(
        x: &DataMatrix,
        kernel: &KernelMatrix,
        spec: KernelSpec,
        config: SolverConfig,
        solution: DualSolution,
    ) -> Result<Self> {
        let DualSolution {
            alphas,
            iterations,
            kkt_residual,
        } = solution;
        let n = alphas.len();
        let c = config.box_bound(n);
        let tol = config.kkt_tol;
        let sv_indices: Vec<usize> = (0..n).filter(|&i| alphas[i] > 0.0).collect();
        let boundary_sv_indices: Vec<usize> = (0..n)
            .filter(|&i| alphas[i] > tol && alphas[i] < c - tol)
            .collect();
        let k_alpha = kernel.mul_vec(&alphas);
        let center_norm_sq: f64 = (0..n)
            .filter(|&i| alphas[i] != 0.0)
            .map(|i| alphas[i] * k_alpha[i])
            .sum();
        let linear_term: f64 = (0..n).map(|i| alphas[i] * kernel.get(i, i)).sum();
        let dual_objective = linear_term - center_norm_sq;

        let dist_sq = |k: usize| kernel.get(k, k) - 2.0 * k_alpha[k] + center_norm_sq;
        let r_squared = match compute_threshold(&boundary_sv_indices, dist_sq) {
            Ok(r2) => r2,
            Err(SvddError::DegenerateModel(_)) => {
                // every support vector sits at the box bound: pick R² between
                // the furthest interior point and the closest bounded one
                let bounded = sv_indices.iter().map(|&k| dist_sq(k)).fold(f64::INFINITY, f64::min);
                let interior = (0..n)
                    .filter(|&k| alphas[k] <= tol)
                    .map(dist_sq)
                    .fold(f64::NEG_INFINITY, f64::max);
                let r2 = if interior.is_finite() {
                    0.5 * (interior + bounded)
                } else {
                    bounded
                };
                log::warn!("no free support vectors (C = {c}); threshold taken from bounded set");
                r2.max(0.0)
            }
            Err(e) => return Err(e),
        };

        let support_vectors = x.select_rows(&sv_indices)?;
        let sv_alphas = sv_indices.iter().map(|&i| alphas[i]).collect();
        Ok(Self {
            alphas,
            sv_indices,
            boundary_sv_indices,
            r_squared,
            spec,
            config,
            c,
            support_vectors,
            dual_objective,
            iterations,
            kkt_residual,
            sv_alphas,
            center_norm_sq,
        })
    }

    pub fn dims(&self) -> usize {
        self.support_vectors.cols()
    }

    pub fn sv_alphas(&self) -> &[f64] {
        &self.sv_alphas
    }

    /// Squared feature-space distance from `z` to the description center.
    pub fn score_distance(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dims() {
            return Err(SvddError::Dimension {
                expected: self.dims(),
                got: z.len(),
            });
        }
        Ok(self.score_unchecked(z))
    }

    #[inline]
    fn score_unchecked(&self, z: &[f64]) -> f64 {
        let cross: f64 = self
            .support_vectors
            .iter_rows()
            .zip(&self.sv_alphas)
            .map(|(x, a)| a * self.spec.eval_unchecked(x, z))
            .sum();
        let d2 = self.spec.self_value(z) - 2.0 * cross + self.center_norm_sq;
        d2.max(0.0)
    }

    /// Scores every row of `z`; rows are independent and scored in parallel.
    pub fn score_rows(&self, z: &DataMatrix) -> Result<Vec<f64>> {
        if z.cols() != self.dims() {
            return Err(SvddError::Dimension {
                expected: self.dims(),
                got: z.cols(),
            });
        }
        Ok(z.values()
            .par_chunks_exact(z.cols())
            .map(|row| self.score_unchecked(row))
            .collect())
    }

    /// Slack on the `dist² ≤ R²` test. Boundary support vectors agree with
    /// `R²` only to solver accuracy, so without it about half of them would
    /// be labeled outliers.
    pub fn boundary_tolerance(&self) -> f64 {
        10.0 * self.config.kkt_tol
    }

    #[inline]
    pub fn label_for(&self, dist_sq: f64) -> Label {
        if dist_sq > self.r_squared + self.boundary_tolerance() {
            Label::Outlier
        } else {
            Label::Inlier
        }
    }

    pub fn classify(&self, z: &DataMatrix) -> Result<Vec<Label>> {
        Ok(self
            .score_rows(z)?
            .into_iter()
            .map(|d| self.label_for(d))
            .collect())
    }

    /// Positions of the training rows from their multipliers alone.
    pub fn position_report(&self) -> PositionReport {
        let tol = self.config.kkt_tol;
        let positions: Vec<Position> = self
            .alphas
            .iter()
            .map(|&a| {
                if a <= tol {
                    Position::Inside
                } else if a >= self.c - tol {
                    Position::Outside
                } else {
                    Position::Boundary
                }
            })
            .collect();
        PositionReport {
            positions,
            inconsistent: Vec::new(),
        }
    }

    /// As [`position_report`](Self::position_report), additionally checking
    /// each training row's distance against its α-derived position. Needs
    /// the training rows, so only freshly trained models can be checked.
    pub fn position_report_checked(&self, x: &DataMatrix) -> Result<PositionReport> {
        let mut report = self.position_report();
        if x.rows() != self.alphas.len() {
            return Err(SvddError::Dimension {
                expected: self.alphas.len(),
                got: x.rows(),
            });
        }
        let tol = self.boundary_tolerance();
        let d2 = self.score_rows(x)?;
        for (i, (p, d)) in report.positions.iter().zip(&d2).enumerate() {
            let ok = match p {
                Position::Inside => *d < self.r_squared + tol,
                Position::Boundary => (d - self.r_squared).abs() <= tol,
                Position::Outside => *d > self.r_squared - tol,
            };
            if !ok {
                report.inconsistent.push(i);
            }
        }
        Ok(report)
    }

    /// Center `a = Σ α_i x_i` of the input-space hypersphere (linear kernel only).
    pub fn compute_center(&self) -> Result<Vec<f64>> {
        if self.spec.kind != KernelKind::Linear {
            return Err(SvddError::UnsupportedOperation(
                "the center lives in input space only for the linear kernel".into(),
            ));
        }
        let mut center = vec![0.0; self.dims()];
        for (x, a) in self.support_vectors.iter_rows().zip(&self.sv_alphas) {
            for (c, v) in center.iter_mut().zip(x) {
                *c += a * v;
            }
        }
        Ok(center)
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            kernel_kind: self.spec.kind,
            s: self.spec.s,
            f: self.config.f,
            c: self.c,
            r_squared: self.r_squared,
            dual_objective: self.dual_objective,
            support_vectors: self.support_vectors.iter_rows().map(|r| r.to_vec()).collect(),
            alphas: self.sv_alphas.clone(),
            n_train: self.alphas.len(),
            kkt_tol: self.config.kkt_tol,
        }
    }

    pub fn from_file(file: &ModelFile) -> Result<Self> {
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(SvddError::SchemaMismatch {
                found: file.format_version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        if file.alphas.len() != file.support_vectors.len() || file.alphas.is_empty() {
            return Err(SvddError::Input(
                "model alphas and support_vectors must be non-empty and aligned".into(),
            ));
        }
        let spec = KernelSpec {
            kind: file.kernel_kind,
            s: file.s,
        };
        spec.validate()?;
        let support_vectors = DataMatrix::from_rows(&file.support_vectors)?;
        let config = SolverConfig {
            f: file.f,
            kkt_tol: file.kkt_tol,
            ..SolverConfig::default()
        };
        let alphas = file.alphas.clone();
        let k = support_vectors.rows();
        let center_norm_sq: f64 = (0..k)
            .map(|i| {
                let xi = support_vectors.row(i);
                let row: Vec<f64> = support_vectors
                    .iter_rows()
                    .map(|xj| spec.eval_unchecked(xi, xj))
                    .collect();
                alphas[i] * dot(&row, &alphas)
            })
            .sum();
        let tol = config.kkt_tol;
        Ok(Self {
            boundary_sv_indices: (0..k)
                .filter(|&i| alphas[i] > tol && alphas[i] < file.c - tol)
                .collect(),
            sv_indices: (0..k).collect(),
            sv_alphas: alphas.clone(),
            alphas,
            r_squared: file.r_squared,
            spec,
            config,
            c: file.c,
            support_vectors,
            dual_objective: file.dual_objective,
            iterations: 0,
            kkt_residual: 0.0,
            center_norm_sq,
        })
    }
}

/// Squared radius averaged over the boundary support vectors.
///
/// `dist_sq(k)` must return `K(x_k,x_k) − 2Σα_iK(x_i,x_k) + Σα_iα_jK(x_i,x_j)`.
pub fn compute_threshold(
    boundary_sv: &[usize],
    dist_sq: impl Fn(usize) -> f64,
) -> Result<f64> {
    if boundary_sv.is_empty() {
        return Err(SvddError::DegenerateModel(
            "no support vectors strictly inside the box".into(),
        ));
    }
    let total: f64 = boundary_sv.iter().map(|&k| dist_sq(k)).sum();
    Ok((total / boundary_sv.len() as f64).max(0.0))
}

/// On-disk model representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub kernel_kind: KernelKind,
    pub s: f64,
    pub f: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub r_squared: f64,
    pub dual_objective: f64,
    pub support_vectors: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub n_train: usize,
    pub kkt_tol: f64,
}
