//! Helpers shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use svdd_core::datagen::rng_from_seed;
use svdd_core::kernel::squared_distance;
use svdd_core::DataMatrix;

pub fn random_dataset(n: usize, m: usize, scale: f64, seed: u64) -> DataMatrix {
    let mut rng = rng_from_seed(seed);
    let values = (0..n * m).map(|_| rng.random_range(-scale..scale)).collect();
    DataMatrix::new(n, m, values).unwrap()
}

/// Dual objective `Σ α_i K_ii − αᵀKα` for a dense kernel.
pub fn dual_objective(k: &[Vec<f64>], alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    let mut diag = 0.0;
    for i in 0..n {
        diag += alpha[i] * k[i][i];
        for j in 0..n {
            quad += alpha[i] * alpha[j] * k[i][j];
        }
    }
    diag - quad
}

pub fn gaussian_kernel(x: &DataMatrix, s: f64) -> Vec<Vec<f64>> {
    (0..x.rows())
        .map(|i| {
            (0..x.rows())
                .map(|j| (-squared_distance(x.row(i), x.row(j)) / (2.0 * s * s)).exp())
                .collect()
        })
        .collect()
}

/// Grid values in `[0, hi]` at `step`, always including `hi` itself.
fn axis(hi: f64, step: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..).map(|k| k as f64 * step).take_while(|t| *t < hi).collect();
    v.push(hi);
    v
}

/// Exhaustive maximization of the dual over `{Σα = 1, 0 ≤ α ≤ c}`.
///
/// The first `n − 2` multipliers run over a grid of `step`; the last pair is
/// then a one-dimensional concave quadratic in `t = α_{n−1}` (with
/// `α_n = r − t`), maximized exactly on its feasible interval.
pub fn brute_force_dual(k: &[Vec<f64>], c: f64, step: f64) -> f64 {
    let n = k.len();
    assert!(n >= 2);
    let c = c.min(1.0);
    let free = n - 2;
    let ax = axis(c, step);
    let mut idx = vec![0usize; free];
    let mut best = f64::NEG_INFINITY;
    loop {
        let mut alpha: Vec<f64> = idx.iter().map(|&i| ax[i]).collect();
        let r = 1.0 - alpha.iter().sum::<f64>();
        let (lo, hi) = ((r - c).max(0.0), c.min(r));
        if lo <= hi + 1e-15 {
            alpha.push(0.0);
            alpha.push(0.0);
            let (p, q) = (n - 2, n - 1);
            let eval = |t: f64, alpha: &mut Vec<f64>| {
                alpha[p] = t;
                alpha[q] = r - t;
                dual_objective(k, alpha)
            };
            // W(t) = a t² + b t + const; recover a, b from three evaluations
            let w0 = eval(0.0, &mut alpha);
            let w1 = eval(1.0, &mut alpha);
            let wm = eval(-1.0, &mut alpha);
            let a = 0.5 * (w1 + wm) - w0;
            let b = 0.5 * (w1 - wm);
            let mut t = if a < 0.0 { -b / (2.0 * a) } else { lo };
            t = t.clamp(lo, hi.max(lo));
            for cand in [t, lo, hi.max(lo)] {
                best = best.max(eval(cand, &mut alpha));
            }
        }
        // odometer increment over the free coordinates
        let mut d = 0;
        loop {
            if d == free {
                return best;
            }
            idx[d] += 1;
            if idx[d] < ax.len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}
