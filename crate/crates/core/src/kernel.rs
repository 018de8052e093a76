//! Gaussian and linear kernels and dense kernel-matrix construction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Result, SvddError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Gaussian,
    Linear,
}

/// Kernel family plus bandwidth. The bandwidth is ignored by the linear kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub s: f64,
}

impl KernelSpec {
    pub fn gaussian(s: f64) -> Result<Self> {
        let spec = Self {
            kind: KernelKind::Gaussian,
            s,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn linear() -> Self {
        Self {
            kind: KernelKind::Linear,
            s: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == KernelKind::Gaussian && !(self.s.is_finite() && self.s > 0.0) {
            return Err(SvddError::Input(format!(
                "gaussian bandwidth must be positive and finite, got {}",
                self.s
            )));
        }
        Ok(())
    }

    /// Kernel evaluation without validation; callers guarantee equal lengths.
    #[inline]
    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Gaussian => {
                let d2 = squared_distance(a, b);
                (-d2 / (2.0 * self.s * self.s)).exp()
            }
            KernelKind::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        }
    }

    /// Value of K(a, a) without touching `a` where the kernel allows it.
    #[inline]
    pub(crate) fn self_value(&self, a: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Gaussian => 1.0,
            KernelKind::Linear => a.iter().map(|x| x * x).sum(),
        }
    }
}

/// Squared Euclidean distance, summed term by term.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

pub fn kernel_value(a: &[f64], b: &[f64], spec: &KernelSpec) -> Result<f64> {
    if a.len() != b.len() {
        return Err(SvddError::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(SvddError::Input("non-finite kernel argument".into()));
    }
    spec.validate()?;
    Ok(spec.eval_unchecked(a, b))
}

/// Dense, full (not triangular) symmetric kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl KernelMatrix {
    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// αᵀKα, accumulated row by row in index order.
    pub fn quadratic_form(&self, alphas: &[f64]) -> f64 {
        (0..self.n)
            .filter(|&i| alphas[i] != 0.0)
            .map(|i| alphas[i] * dot(self.row(i), alphas))
            .sum()
    }

    /// Kα.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| dot(self.row(i), v)).collect()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Builds the full kernel matrix. Rows are computed in parallel; every entry
/// is an independent evaluation so the result does not depend on scheduling.
pub fn kernel_matrix(x: &DataMatrix, spec: &KernelSpec) -> Result<KernelMatrix> {
    spec.validate()?;
    let n = x.rows();
    let mut entries = vec![0.0; n * n];
    entries
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| {
            let xi = x.row(i);
            for (j, out) in row.iter_mut().enumerate() {
                *out = spec.eval_unchecked(xi, x.row(j));
            }
        });
    Ok(KernelMatrix { n, entries })
}

/// Pairwise squared distances, reused to build Gaussian kernel matrices for
/// many bandwidths.
#[derive(Debug, Clone)]
pub struct SquaredDistances {
    n: usize,
    entries: Vec<f64>,
}

impl SquaredDistances {
    pub fn new(x: &DataMatrix) -> Self {
        let n = x.rows();
        let mut entries = vec![0.0; n * n];
        entries
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, row)| {
                let xi = x.row(i);
                for (j, out) in row.iter_mut().enumerate() {
                    *out = squared_distance(xi, x.row(j));
                }
            });
        Self { n, entries }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Gaussian kernel matrix; bit-identical to [`kernel_matrix`] for the
    /// same data and bandwidth.
    pub fn gaussian_kernel(&self, s: f64) -> Result<KernelMatrix> {
        let spec = KernelSpec::gaussian(s)?;
        let denom = 2.0 * spec.s * spec.s;
        let mut entries = vec![0.0; self.entries.len()];
        entries
            .par_chunks_mut(self.n.max(1))
            .zip(self.entries.par_chunks(self.n.max(1)))
            .for_each(|(out, d2)| {
                for (o, d) in out.iter_mut().zip(d2) {
                    *o = (-d / denom).exp();
                }
            });
        Ok(KernelMatrix { n: self.n, entries })
    }

    /// Largest pairwise Euclidean distance.
    pub fn max_distance(&self) -> f64 {
        self.entries.iter().cloned().fold(0.0, f64::max).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const K_DIST2_S2: f64 = 0.606_530_659_712_633_4; // exp(-0.5)

    #[test]
    fn gaussian_identity_and_known_value() {
        let g1 = KernelSpec::gaussian(1.0).unwrap();
        assert_eq!(kernel_value(&[3.0, -1.0], &[3.0, -1.0], &g1).unwrap(), 1.0);
        let g2 = KernelSpec::gaussian(2.0).unwrap();
        let v = kernel_value(&[0.0, 0.0], &[2.0, 0.0], &g2).unwrap();
        assert!((v - K_DIST2_S2).abs() < 1e-15);
    }

    #[test]
    fn linear_is_dot_product() {
        let v = kernel_value(&[1.0, 2.0], &[3.0, 4.0], &KernelSpec::linear()).unwrap();
        assert_eq!(v, 11.0);
    }

    #[test]
    fn errors() {
        let g = KernelSpec::gaussian(1.0).unwrap();
        assert!(matches!(
            kernel_value(&[1.0], &[1.0, 2.0], &g),
            Err(SvddError::Dimension { .. })
        ));
        assert!(matches!(
            kernel_value(&[f64::NAN], &[1.0], &g),
            Err(SvddError::Input(_))
        ));
        assert!(KernelSpec::gaussian(0.0).is_err());
        assert!(KernelSpec::gaussian(-1.0).is_err());
    }

    #[test]
    fn matrix_examples() {
        let g = KernelSpec::gaussian(2.0).unwrap();
        let one = DataMatrix::from_rows(&[[4.0, 1.0]]).unwrap();
        let k = kernel_matrix(&one, &g).unwrap();
        assert_eq!(k.size(), 1);
        assert_eq!(k.get(0, 0), 1.0);

        let two = DataMatrix::from_rows(&[[0.0, 0.0], [2.0, 0.0]]).unwrap();
        let k = kernel_matrix(&two, &g).unwrap();
        assert_eq!(k.get(0, 0), 1.0);
        assert_eq!(k.get(1, 1), 1.0);
        assert!((k.get(0, 1) - K_DIST2_S2).abs() < 1e-15);
        assert_eq!(k.get(0, 1), k.get(1, 0));

        let same = DataMatrix::from_rows(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]]).unwrap();
        let k = kernel_matrix(&same, &g).unwrap();
        assert!((0..3).all(|i| (0..3).all(|j| k.get(i, j) == 1.0)));
    }

    fn point() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, 3)
    }

    #[test]
    fn cached_distances_match_direct_kernel() {
        let x = DataMatrix::from_rows(&[[0.0, 0.1], [2.0, 0.0], [1.3, -0.7], [5.0, 5.0]]).unwrap();
        let d = SquaredDistances::new(&x);
        for s in [0.1, 0.77, 3.0] {
            let a = d.gaussian_kernel(s).unwrap();
            let b = kernel_matrix(&x, &KernelSpec::gaussian(s).unwrap()).unwrap();
            assert_eq!(a, b);
        }
        assert!((d.max_distance() - 49.01f64.sqrt()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn gaussian_range_and_symmetry(a in point(), b in point(), s in 0.05f64..20.0) {
            let g = KernelSpec::gaussian(s).unwrap();
            let ab = kernel_value(&a, &b, &g).unwrap();
            let ba = kernel_value(&b, &a, &g).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ab <= 1.0 && ab >= 0.0);
            if a == b {
                prop_assert_eq!(ab, 1.0);
            }
        }

        #[test]
        fn gaussian_increasing_in_bandwidth(a in point(), b in point()) {
            prop_assume!(squared_distance(&a, &b) > 1e-6);
            let grid: Vec<f64> = (1..40).map(|k| k as f64 * 0.5).collect();
            let vals: Vec<f64> = grid
                .iter()
                .map(|&s| kernel_value(&a, &b, &KernelSpec::gaussian(s).unwrap()).unwrap())
                .collect();
            for w in vals.windows(2) {
                // strict unless both ends have underflowed or saturated
                prop_assert!(w[1] > w[0] || w[0] == 0.0 || w[1] == 1.0);
            }
        }

        #[test]
        fn kernel_matrix_psd_spot_check(
            pts in prop::collection::vec(point(), 2..12),
            v in prop::collection::vec(-1.0f64..1.0, 12),
            s in 0.2f64..5.0,
        ) {
            let x = DataMatrix::from_rows(&pts).unwrap();
            let k = kernel_matrix(&x, &KernelSpec::gaussian(s).unwrap()).unwrap();
            let v = &v[..x.rows()];
            prop_assert!(k.quadratic_form(v) >= -1e-10);
            for i in 0..x.rows() {
                prop_assert_eq!(k.get(i, i), 1.0);
                for j in 0..x.rows() {
                    prop_assert_eq!(k.get(i, j), k.get(j, i));
                    prop_assert!(k.get(i, j) > 0.0 || squared_distance(x.row(i), x.row(j)) / (2.0 * s * s) > 700.0);
                }
            }
        }
    }
}
