//! Small scalar and dense linear-algebra routines shared by the solvers.

use nalgebra::{DMatrix, DVector};

/// Inverse golden ratio.
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Root of a continuous `f` with `f(lo)` and `f(hi)` of opposite signs, by bisection
/// until the bracket cannot shrink further in floating point.
pub fn bisect(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let lo_positive = f(lo) > 0.0;
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Golden-section search for a maximum of `f` on `[a, b]`; returns the final bracket.
pub fn golden_section_max(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    (a, b)
}

/// Maximize `f` on `(lo, hi)`: pre-scan `points` interior grid points, then
/// golden-section on the bracket around the best one. Returns the final bracket.
pub fn scan_then_golden(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, points: usize, tol: f64) -> Option<(f64, f64)> {
    let step = (hi - lo) / (points + 1) as f64;
    let grid: Vec<f64> = (1..=points).map(|k| lo + step * k as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let best = (0..points)
        .filter(|&k| values[k].is_finite())
        .max_by(|&a, &b| values[a].total_cmp(&values[b]).then(b.cmp(&a)))?;
    let a = if best == 0 { lo } else { grid[best - 1] };
    let b = if best + 1 == points { hi } else { grid[best + 1] };
    Some(golden_section_max(f, a, b, tol))
}

/// Solve `m x = rhs` by LU, `None` when `m` is numerically singular.
pub fn solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if m.nrows() == 0 {
        return Some(DVector::zeros(0));
    }
    let x = m.clone().lu().solve(rhs)?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Largest eigenvalue modulus of a square matrix.
///
/// Power iteration on the two-step map from a ones vector with a small
/// index-dependent perturbation; the two-step ratio also converges when the
/// dominant eigenvalues come in a `+r, -r` pair. Falls back to a dense
/// eigenvalue computation when the iteration stagnates.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    if n == 0 || m.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    let mut x = DVector::from_fn(n, |i, _| 1.0 + 1e-3 * (i + 1) as f64 / n as f64);
    x /= x.norm();
    let mut prev = f64::NAN;
    let mut prev_change = f64::NAN;
    for _ in 0..5000 {
        let y = m * &x;
        let z = m * &y;
        let norm = z.norm();
        if norm == 0.0 {
            break;
        }
        let estimate = norm.sqrt();
        x = z / norm;
        let change = (estimate - prev).abs();
        if change.is_finite() && prev_change.is_finite() && prev_change > 0.0 {
            let rate = change / prev_change;
            if rate < 0.95 && change * rate / (1.0 - rate) <= 1e-12 * estimate.max(1e-300) {
                return estimate;
            }
        }
        if change <= 4.0 * f64::EPSILON * estimate {
            return estimate;
        }
        prev = estimate;
        prev_change = change;
    }
    m.clone().complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}
