//! Shared oracles for integration tests: dense linear algebra kept fully
//! independent of the library's matrix-free code paths.
//!
//! Not every test target uses every helper.
#![allow(dead_code)]

use genprior::{LinearOperator, Tensor};

/// Solve `a x = b` by Gaussian elimination with partial pivoting.
/// Panics on a numerically singular system.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = a.len();
    assert!(a.iter().all(|row| row.len() == n));
    assert_eq!(b.len(), n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        assert!(
            a[col][col].abs() > 1e-12,
            "singular system at column {col}"
        );
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut v = b[row];
        for k in row + 1..n {
            v -= a[row][k] * x[k];
        }
        x[row] = v / a[row][row];
    }
    x
}

/// Materialize an operator as a dense row-major matrix by applying it to
/// every basis vector.
pub fn materialize(op: &LinearOperator) -> Vec<Vec<f64>> {
    let (m, n) = (op.m(), op.n());
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = Tensor::zeros(&[n]);
        e.data_mut()[j] = 1.0;
        cols.push(op.apply(&e).unwrap().into_data());
    }
    let mut rows = vec![vec![0.0; n]; m];
    for (j, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            rows[i][j] = v;
        }
    }
    rows
}

/// Dense `Aᵀ (A Aᵀ)⁻¹ r` via Gaussian elimination.
pub fn dense_pinv_apply(a: &[Vec<f64>], r: &[f64]) -> Vec<f64> {
    let m = a.len();
    let n = a[0].len();
    assert_eq!(r.len(), m);
    let mut gram = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            let mut acc = 0.0;
            for k in 0..n {
                acc += a[i][k] * a[j][k];
            }
            gram[i][j] = acc;
        }
    }
    let s = gauss_solve(gram, r.to_vec());
    let mut out = vec![0.0; n];
    for (i, si) in s.iter().enumerate() {
        for k in 0..n {
            out[k] += a[i][k] * si;
        }
    }
    out
}

pub fn dense_matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum())
        .collect()
}

pub fn dense_matvec_t(a: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let n = a[0].len();
    let mut out = vec![0.0; n];
    for (row, &yi) in a.iter().zip(y) {
        for (o, &r) in out.iter_mut().zip(row) {
            *o += yi * r;
        }
    }
    out
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations,
/// descending order.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for sweep in 0..60 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a[i][j] * a[i][j];
            }
        }
        if off.sqrt() < 1e-12 {
            break;
        }
        assert!(sweep < 59, "Jacobi did not converge (off = {off})");
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    eig
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-300)
}

pub fn vec_rel_err(got: &[f64], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    let num: f64 = got
        .iter()
        .zip(want)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let den: f64 = want.iter().map(|b| b * b).sum::<f64>().sqrt();
    num / den.max(1e-300)
}
