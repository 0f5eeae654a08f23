//! Dense least squares by Householder QR.
//!
//! Columns are processed in the caller's order. A column whose remaining norm,
//! after the reflections of the columns already accepted, falls to
//! `tol * (its original norm)` or below is deferred out of the basis and reported
//! as dropped. Callers therefore control which of a set of collinear columns
//! survives by ordering them by priority.

use rayon::prelude::*;

/// Relative tolerance below which a column is treated as linearly dependent.
pub const RANK_TOLERANCE: f64 = 1e-10;

// Below this many multiply-adds per reflection the update runs serially.
const PARALLEL_WORK: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct QrSolution {
    /// Indices of retained columns, in basis order.
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
    /// Coefficients aligned with `kept`.
    pub coefficients: Vec<f64>,
    /// Upper-triangular factor, row-major `kept.len()` square.
    r: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    // Scaled to avoid overflow on very large counts.
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * a.iter().map(|v| (v / scale).powi(2)).sum::<f64>().sqrt()
}

fn reflect(v: &[f64], target: &mut [f64]) {
    let d = 2.0 * dot(v, target);
    if d != 0.0 {
        target.iter_mut().zip(v).for_each(|(t, vi)| *t -= d * vi);
    }
}

/// Solves `min ||y - X b||` for the columns of `X`.
pub fn least_squares(columns: &[Vec<f64>], y: &[f64], tol: f64) -> QrSolution {
    let norms: Vec<f64> = columns.iter().map(|c| norm(c)).collect();
    least_squares_scaled(columns, &norms, y, tol)
}

/// As [`least_squares`], but rank decisions compare each column's remaining norm
/// with `reference_norms` instead of its own norm. Pass the norms of the columns
/// before any projection (e.g. demeaning) so that columns the projection absorbed
/// are recognised.
pub fn least_squares_scaled(columns: &[Vec<f64>], reference_norms: &[f64], y: &[f64], tol: f64) -> QrSolution {
    let n = y.len();
    let mut work: Vec<Vec<f64>> = columns.to_vec();
    let mut rhs = y.to_vec();
    let original_norms = reference_norms;
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut r_columns: Vec<Vec<f64>> = Vec::new();
    let mut row = 0;
    for j in 0..work.len() {
        let (head, rest) = work.split_at_mut(j + 1);
        let col = &mut head[j];
        if row >= n {
            dropped.push(j);
            continue;
        }
        let tail_norm = norm(&col[row..]);
        if original_norms[j] == 0.0 || tail_norm <= tol * original_norms[j] {
            dropped.push(j);
            continue;
        }
        let alpha = if col[row] > 0.0 { -tail_norm } else { tail_norm };
        let mut v = col[row..].to_vec();
        v[0] -= alpha;
        let v_norm = norm(&v);
        v.iter_mut().for_each(|x| *x /= v_norm);

        let work_size = (n - row) * rest.len();
        if work_size >= PARALLEL_WORK {
            rest.par_iter_mut().for_each(|c| reflect(&v, &mut c[row..]));
        } else {
            rest.iter_mut().for_each(|c| reflect(&v, &mut c[row..]));
        }
        reflect(&v, &mut rhs[row..]);

        let mut r_col = col[..row].to_vec();
        r_col.push(alpha);
        r_columns.push(r_col);
        kept.push(j);
        row += 1;
    }

    let p = kept.len();
    let mut r = vec![0.0; p * p];
    for (m, r_col) in r_columns.iter().enumerate() {
        for (i, value) in r_col.iter().enumerate() {
            r[i * p + m] = *value;
        }
    }
    let mut coefficients = vec![0.0; p];
    for i in (0..p).rev() {
        let mut acc = rhs[i];
        for m in i + 1..p {
            acc -= r[i * p + m] * coefficients[m];
        }
        coefficients[i] = acc / r[i * p + i];
    }
    QrSolution { kept, dropped, coefficients, r }
}

impl QrSolution {
    pub fn rank(&self) -> usize {
        self.kept.len()
    }

    /// `(X'X)^{-1}` over the retained columns, row-major, in basis order.
    pub fn xtx_inverse(&self) -> Vec<f64> {
        let p = self.kept.len();
        // R^{-1} is upper triangular; solve R * inv = I column by column.
        let mut inv = vec![0.0; p * p];
        for col in 0..p {
            for i in (0..=col).rev() {
                let mut acc = if i == col { 1.0 } else { 0.0 };
                for m in i + 1..=col {
                    acc -= self.r[i * p + m] * inv[m * p + col];
                }
                inv[i * p + col] = acc / self.r[i * p + i];
            }
        }
        let mut out = vec![0.0; p * p];
        for a in 0..p {
            for b in a..p {
                let start = b;
                let value: f64 = (start..p).map(|m| inv[a * p + m] * inv[b * p + m]).sum();
                out[a * p + b] = value;
                out[b * p + a] = value;
            }
        }
        out
    }
}

/// `sum_g s_g s_g'` with `s_g = sum_{i in g} x_i u_i`, row-major `p x p`.
pub fn cluster_meat(columns: &[&[f64]], residuals: &[f64], clusters: &[usize], n_clusters: usize) -> Vec<f64> {
    let p = columns.len();
    let mut scores = vec![0.0; n_clusters * p];
    for (i, (&g, &u)) in clusters.iter().zip(residuals).enumerate() {
        for (j, col) in columns.iter().enumerate() {
            scores[g * p + j] += col[i] * u;
        }
    }
    let mut meat = vec![0.0; p * p];
    for g in 0..n_clusters {
        let s = &scores[g * p..(g + 1) * p];
        for a in 0..p {
            for b in 0..p {
                meat[a * p + b] += s[a] * s[b];
            }
        }
    }
    meat
}

/// White's heteroskedasticity-robust meat `sum_i u_i^2 x_i x_i'`.
pub fn hc_meat(columns: &[&[f64]], residuals: &[f64]) -> Vec<f64> {
    let p = columns.len();
    let mut meat = vec![0.0; p * p];
    for (i, &u) in residuals.iter().enumerate() {
        let w = u * u;
        for a in 0..p {
            for b in 0..p {
                meat[a * p + b] += w * columns[a][i] * columns[b][i];
            }
        }
    }
    meat
}

/// `scale * A M A` for symmetric row-major `p x p` matrices.
pub fn sandwich(bread: &[f64], meat: &[f64], p: usize, scale: f64) -> Vec<f64> {
    let mut tmp = vec![0.0; p * p];
    for a in 0..p {
        for b in 0..p {
            tmp[a * p + b] = (0..p).map(|m| bread[a * p + m] * meat[m * p + b]).sum();
        }
    }
    let mut out = vec![0.0; p * p];
    for a in 0..p {
        for b in 0..p {
            out[a * p + b] = scale * (0..p).map(|m| tmp[a * p + m] * bread[m * p + b]).sum::<f64>();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn to_matrix(columns: &[Vec<f64>]) -> DMatrix<f64> {
        let n = columns[0].len();
        DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i])
    }

    #[test]
    fn matches_svd_solution() {
        let columns =
            vec![vec![1.0, 1.0, 1.0, 1.0, 1.0], vec![0.0, 1.0, 2.0, 3.0, 4.0], vec![0.3, -1.2, 2.2, 0.1, 0.9]];
        let y = vec![1.0, 2.5, 2.9, 4.2, 5.1];
        let sol = least_squares(&columns, &y, RANK_TOLERANCE);
        assert_eq!(sol.kept, vec![0, 1, 2]);
        let x = to_matrix(&columns);
        let svd = x.clone().svd(true, true);
        let oracle = svd.solve(&DVector::from_vec(y), 1e-14).unwrap();
        for (a, b) in sol.coefficients.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let inv = (x.transpose() * x).try_inverse().unwrap();
        let mine = sol.xtx_inverse();
        for a in 0..3 {
            for b in 0..3 {
                assert!((mine[a * 3 + b] - inv[(a, b)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn collinear_column_dropped_in_priority_order() {
        let a = vec![1.0, 0.0, 1.0, 0.0];
        let b = vec![0.0, 1.0, 0.0, 1.0];
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let y = vec![1.0, 2.0, 3.0, 5.0];
        let sol = least_squares(&[sum.clone(), a.clone(), b.clone()], &y, RANK_TOLERANCE);
        assert_eq!(sol.kept, vec![0, 1]);
        assert_eq!(sol.dropped, vec![2]);
        let sol = least_squares(&[a, b, sum], &y, RANK_TOLERANCE);
        assert_eq!(sol.dropped, vec![2]);
        assert!((sol.coefficients[0] - 2.0).abs() < 1e-14);
        assert!((sol.coefficients[1] - 3.5).abs() < 1e-14);
    }

    #[test]
    fn zero_column_dropped() {
        let sol = least_squares(&[vec![0.0; 3], vec![1.0, 2.0, 3.0]], &[2.0, 4.0, 6.0], RANK_TOLERANCE);
        assert_eq!(sol.dropped, vec![0]);
        assert!((sol.coefficients[0] - 2.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn singleton_clusters_equal_hc(
            data in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -2.0f64..2.0), 6..30)
        ) {
            let x1: Vec<f64> = data.iter().map(|d| d.0).collect();
            let x2: Vec<f64> = data.iter().map(|d| d.1).collect();
            let u: Vec<f64> = data.iter().map(|d| d.2).collect();
            let clusters: Vec<usize> = (0..u.len()).collect();
            let cols = [x1.as_slice(), x2.as_slice()];
            let a = cluster_meat(&cols, &u, &clusters, u.len());
            let b = hc_meat(&cols, &u);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-10 * (1.0 + y.abs()));
            }
        }

        #[test]
        fn residuals_orthogonal(
            data in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -10.0f64..10.0), 5..40)
        ) {
            let ones = vec![1.0; data.len()];
            let x1: Vec<f64> = data.iter().map(|d| d.0).collect();
            let x2: Vec<f64> = data.iter().map(|d| d.1).collect();
            let y: Vec<f64> = data.iter().map(|d| d.2).collect();
            let cols = vec![ones, x1, x2];
            let sol = least_squares(&cols, &y, RANK_TOLERANCE);
            let resid: Vec<f64> = (0..y.len())
                .map(|i| y[i] - sol.kept.iter().zip(&sol.coefficients).map(|(&j, b)| cols[j][i] * b).sum::<f64>())
                .collect();
            for &j in &sol.kept {
                prop_assert!(dot(&cols[j], &resid).abs() < 1e-8);
            }
        }
    }
}
