//! Small dense complex linear algebra used in the tracker's inner loop.

use nalgebra::DMatrix;

use crate::slp::C64;

/// In-place LU factorization with partial pivoting of a row-major `n × n`
/// matrix. Returns false when a pivot is negligible against the largest
/// entry of the matrix.
pub fn lu_factor(a: &mut [C64], n: usize, piv: &mut [usize]) -> bool {
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 || !scale.is_finite() {
        return false;
    }
    let tiny = scale * 1e-14;
    for k in 0..n {
        let (mut best, mut best_abs) = (k, a[k * n + k].norm());
        for r in k + 1..n {
            let v = a[r * n + k].norm();
            if v > best_abs {
                best = r;
                best_abs = v;
            }
        }
        if best_abs <= tiny {
            return false;
        }
        piv[k] = best;
        if best != k {
            for c in 0..n {
                a.swap(k * n + c, best * n + c);
            }
        }
        let inv = a[k * n + k].inv();
        for r in k + 1..n {
            let f = a[r * n + k] * inv;
            a[r * n + k] = f;
            if f.re == 0.0 && f.im == 0.0 {
                continue;
            }
            for c in k + 1..n {
                let u = a[k * n + c];
                a[r * n + c] -= f * u;
            }
        }
    }
    true
}

/// Solves `A x = b` in place using the output of [`lu_factor`].
pub fn lu_solve(lu: &[C64], n: usize, piv: &[usize], b: &mut [C64]) {
    for k in 0..n {
        b.swap(k, piv[k]);
    }
    for r in 1..n {
        let mut s = b[r];
        for c in 0..r {
            s -= lu[r * n + c] * b[c];
        }
        b[r] = s;
    }
    for r in (0..n).rev() {
        let mut s = b[r];
        for c in r + 1..n {
            s -= lu[r * n + c] * b[c];
        }
        b[r] = s / lu[r * n + r];
    }
}

pub fn max_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Singular values, largest first.
pub fn singular_values(m: &DMatrix<C64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of singular values above `rel_tol` times the largest.
pub fn numerical_rank(sv: &[f64], rel_tol: f64) -> usize {
    match sv.first() {
        Some(&top) if top > 0.0 => sv.iter().filter(|&&s| s > rel_tol * top).count(),
        _ => 0,
    }
}
