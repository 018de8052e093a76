//! Penalized B-spline (P-spline) regression with pointwise confidence bands.
//!
//! Fits `min ‖y − Bβ‖² + λ‖D_d β‖²` with `B` a B-spline basis on uniform knots
//! and `D_d` the order-`d` difference operator on the coefficients. Standard
//! errors come from `σ̂²·(BᵀB + λD_dᵀD_d)⁻¹`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Result, SvddError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lambda {
    /// Chosen by GCV over the default grid.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplineConfig {
    pub degree: usize,
    pub num_interior_knots: usize,
    pub penalty_order: usize,
    pub lambda: Lambda,
    pub ci_level: f64,
}

impl Default for SplineConfig {
    fn default() -> Self {
        Self {
            degree: 3,
            num_interior_knots: 20,
            penalty_order: 2,
            lambda: Lambda::Auto,
            ci_level: 0.95,
        }
    }
}

impl SplineConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda: Lambda::Fixed(lambda),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree < 1 {
            return Err(SvddError::Input("spline degree must be at least 1".into()));
        }
        if self.num_interior_knots < self.penalty_order {
            return Err(SvddError::Input(format!(
                "need at least {} interior knots for a difference penalty of order {}",
                self.penalty_order, self.penalty_order
            )));
        }
        if let Lambda::Fixed(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(SvddError::Input(format!("lambda must be positive, got {l}")));
            }
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(SvddError::Input(format!(
                "ci_level must lie in (0, 1), got {}",
                self.ci_level
            )));
        }
        Ok(())
    }

    fn min_points(&self) -> usize {
        self.degree + self.penalty_order + 2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineFit {
    pub coefficients: Vec<f64>,
    pub fitted: Vec<f64>,
    pub se: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub lambda_used: f64,
    pub sigma2_hat: f64,
    /// Trace of the hat matrix.
    pub effective_df: f64,
}

/// log10 λ grid searched by GCV: −6 … 6 in steps of 0.5.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..=24).map(|k| 10f64.powf(-6.0 + 0.5 * k as f64)).collect()
}

/// Design pieces shared by every λ for one (x, config).
struct Design {
    basis: DMatrix<f64>,
    gram: DMatrix<f64>,
    penalty: DMatrix<f64>,
}

impl Design {
    fn new(x: &[f64], config: &SplineConfig) -> Self {
        let basis = bspline_basis(x, config.degree, config.num_interior_knots);
        let gram = basis.transpose() * &basis;
        let diff = difference_matrix(basis.ncols(), config.penalty_order);
        let penalty = diff.transpose() * &diff;
        Self {
            basis,
            gram,
            penalty,
        }
    }

    fn factor(&self, lambda: f64) -> Result<Cholesky<f64, Dyn>> {
        let a = &self.gram + &self.penalty * lambda;
        Cholesky::new(a).ok_or_else(|| {
            SvddError::Numerical(format!("penalized normal equations singular at λ = {lambda:e}"))
        })
    }
}

struct Solved {
    coefficients: DVector<f64>,
    fitted: DVector<f64>,
    rss: f64,
    edf: f64,
    chol: Cholesky<f64, Dyn>,
}

fn solve(design: &Design, y: &DVector<f64>, lambda: f64) -> Result<Solved> {
    let chol = design.factor(lambda)?;
    let rhs = design.basis.transpose() * y;
    let coefficients = chol.solve(&rhs);
    let fitted = &design.basis * &coefficients;
    let rss = (y - &fitted).norm_squared();
    let edf = chol.solve(&design.gram).trace();
    if !(coefficients.iter().all(|v| v.is_finite()) && edf.is_finite()) {
        return Err(SvddError::Numerical(format!("non-finite spline fit at λ = {lambda:e}")));
    }
    Ok(Solved {
        coefficients,
        fitted,
        rss,
        edf,
        chol,
    })
}

fn check_inputs(x: &[f64], y: &[f64], config: &SplineConfig) -> Result<()> {
    config.validate()?;
    if x.len() != y.len() {
        return Err(SvddError::Dimension {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < config.min_points() {
        return Err(SvddError::Input(format!(
            "need at least {} points for a degree-{} spline with order-{} penalty, got {}",
            config.min_points(),
            config.degree,
            config.penalty_order,
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(SvddError::Input("non-finite value in spline data".into()));
    }
    if x.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SvddError::Input("abscissae must be strictly ascending".into()));
    }
    Ok(())
}

/// Picks λ by generalized cross-validation, `n·RSS/(n − tr H)²`, over
/// [`default_lambda_grid`]. Near-equal scores resolve to the smaller λ.
pub fn select_lambda(x: &[f64], y: &[f64], config: &SplineConfig) -> Result<f64> {
    check_inputs(x, y, config)?;
    let design = Design::new(x, config);
    select_lambda_with(&design, &DVector::from_column_slice(y))
}

fn select_lambda_with(design: &Design, y: &DVector<f64>) -> Result<f64> {
    let n = y.len() as f64;
    let mean = y.mean();
    let tss: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    // scores this close are rounding noise, e.g. an exactly reproducible line
    let tie = 1e-12 * (tss / n + f64::MIN_POSITIVE);
    let mut best: Option<(f64, f64)> = None;
    let mut last_err = None;
    for lambda in default_lambda_grid() {
        let solved = match solve(design, y, lambda) {
            Ok(s) => s,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let denom = (n - solved.edf).max(f64::EPSILON);
        let gcv = n * solved.rss / (denom * denom);
        if best.is_none_or(|(_, g)| gcv < g - tie) {
            best = Some((lambda, gcv));
        }
    }
    match (best, last_err) {
        (Some((lambda, _)), _) => Ok(lambda),
        (None, Some(e)) => Err(e),
        (None, None) => Err(SvddError::Numerical("empty lambda grid".into())),
    }
}

/// Fits a P-spline to `(x, y)`.
pub fn fit_pspline(x: &[f64], y: &[f64], config: &SplineConfig) -> Result<SplineFit> {
    check_inputs(x, y, config)?;
    let design = Design::new(x, config);
    let yv = DVector::from_column_slice(y);
    let lambda = match config.lambda {
        Lambda::Fixed(l) => l,
        Lambda::Auto => select_lambda_with(&design, &yv)?,
    };
    let solved = solve(&design, &yv, lambda)?;
    let n = y.len() as f64;
    let sigma2_hat = solved.rss / (n - solved.edf).max(1.0);

    let z = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 * (1.0 + config.ci_level));
    let cov_basis = solved.chol.solve(&design.basis.transpose());
    let se: Vec<f64> = (0..y.len())
        .map(|i| {
            let leverage = design.basis.row(i).dot(&cov_basis.column(i).transpose());
            (sigma2_hat * leverage.max(0.0)).sqrt()
        })
        .collect();
    let fitted: Vec<f64> = solved.fitted.iter().copied().collect();
    let ci_lower = fitted.iter().zip(&se).map(|(f, s)| f - z * s).collect();
    let ci_upper = fitted.iter().zip(&se).map(|(f, s)| f + z * s).collect();
    Ok(SplineFit {
        coefficients: solved.coefficients.iter().copied().collect(),
        fitted,
        se,
        ci_lower,
        ci_upper,
        lambda_used: lambda,
        sigma2_hat,
        effective_df: solved.edf,
    })
}

/// Per point: does the confidence interval contain zero?
pub fn ci_contains_zero(fit: &SplineFit) -> Vec<bool> {
    fit.ci_lower
        .iter()
        .zip(&fit.ci_upper)
        .map(|(lo, hi)| *lo <= 0.0 && 0.0 <= *hi)
        .collect()
}

/// B-spline design matrix on `num_interior` uniform interior knots spanning
/// `[min x, max x]`. Has `num_interior + degree + 1` columns.
pub fn bspline_basis(x: &[f64], degree: usize, num_interior: usize) -> DMatrix<f64> {
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let segments = num_interior + 1;
    let width = if hi > lo { (hi - lo) / segments as f64 } else { 1.0 };
    let n_basis = num_interior + degree + 1;
    let knot = |j: usize| lo + (j as f64 - degree as f64) * width;

    let mut basis = DMatrix::zeros(x.len(), n_basis);
    let mut values = vec![0.0; degree + 1];
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    for (row, &xv) in x.iter().enumerate() {
        let seg = (((xv - lo) / width).floor().max(0.0) as usize).min(segments - 1);
        let span = seg + degree;
        // Cox–de Boor, non-zero functions only
        values[0] = 1.0;
        for j in 1..=degree {
            left[j] = xv - knot(span + 1 - j);
            right[j] = knot(span + j) - xv;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = values[r] / (right[r + 1] + left[j - r]);
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        for (k, v) in values.iter().enumerate() {
            basis[(row, seg + k)] = *v;
        }
    }
    basis
}

/// Order-`order` forward difference operator, `(n − order) × n`.
pub fn difference_matrix(n: usize, order: usize) -> DMatrix<f64> {
    let mut d = DMatrix::<f64>::identity(n, n);
    for _ in 0..order {
        let rows = d.nrows();
        d = DMatrix::from_fn(rows - 1, n, |i, j| d[(i + 1, j)] - d[(i, j)]);
    }
    d
}
