//! Solution-quality metrics against a ground truth.

use nalgebra::DMatrix;
use pathfinding::kuhn_munkres::kuhn_munkres_min;
use pathfinding::matrix::Matrix;

use crate::error::{dim_err, Result};
use crate::matrix::BinaryMatrix;

/// Minimum-cost perfect matching on a square cost matrix (Kuhn-Munkres).
/// Returns `assignment[row] = column`.
pub fn linear_assignment(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let weights = Matrix::from_rows(cost.iter().cloned()).expect("cost matrix must be square");
    assert_eq!(weights.columns, n, "cost matrix must be square");
    kuhn_munkres_min(&weights).1
}

fn column_distances(z: &BinaryMatrix, z_star: &BinaryMatrix, allow_complement: bool) -> Result<Vec<Vec<i64>>> {
    if z.shape() != z_star.shape() {
        return Err(dim_err("hamming_error", format!("{:?}", z_star.shape()), format!("{:?}", z.shape())));
    }
    let (n, k) = z.shape();
    let mut cost = vec![vec![0i64; k]; k];
    for row in 0..n {
        let a = z.row(row);
        let b = z_star.row(row);
        for (i, c) in cost.iter_mut().enumerate() {
            for (j, cell) in c.iter_mut().enumerate() {
                *cell += (a[i] != b[j]) as i64;
            }
        }
    }
    if allow_complement {
        for c in cost.iter_mut().flatten() {
            *c = (*c).min(n as i64 - *c);
        }
    }
    Ok(cost)
}

/// Hamming error minimized over column permutations, with the optimal
/// matching (`perm[k]` = column of `z_star` matched to column `k` of `z`).
pub fn hamming_assignment(z: &BinaryMatrix, z_star: &BinaryMatrix) -> Result<(f64, Vec<usize>)> {
    let cost = column_distances(z, z_star, false)?;
    let perm = linear_assignment(&cost);
    let total: i64 = perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    let (n, k) = z.shape();
    Ok((total as f64 / (n * k) as f64, perm))
}

/// E_Hamm = min over σ ∈ S_K of ‖Zσ − Z*‖₀ / (NK).
pub fn hamming_error(z: &BinaryMatrix, z_star: &BinaryMatrix) -> Result<f64> {
    hamming_assignment(z, z_star).map(|(e, _)| e)
}

/// Hamming error when each column may also be matched in complemented form
/// (1 − z_k). Diagnostic for "inverted" solutions.
pub fn hamming_error_with_complements(z: &BinaryMatrix, z_star: &BinaryMatrix) -> Result<f64> {
    let cost = column_distances(z, z_star, true)?;
    let perm = linear_assignment(&cost);
    let total: i64 = perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    let (n, k) = z.shape();
    Ok(total as f64 / (n * k) as f64)
}

/// E_Reg = ‖W‖_F / (KD).
pub fn regularizer_metric(w: &DMatrix<f64>) -> f64 {
    let size = (w.nrows() * w.ncols()) as f64;
    if size == 0.0 {
        0.0
    } else {
        w.norm() / size
    }
}
