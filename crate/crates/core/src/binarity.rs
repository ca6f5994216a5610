//! The binarity defect f(M) = ½ Σ m(m − 1) and its sphere reformulation.
//!
//! For an integer column u and binary Z, f(Zu) = ½(uᵀZᵀZu − uᵀZᵀ1). With
//! ΛΛᵀ = (ZᵀZ)⁻¹, s = Λ⁻¹u and μ = ½ΛᵀZᵀ1 this equals ½‖s − μ‖² − ½‖μ‖², so
//! columns with f(Zu) = f* lie on a sphere of radius √(‖μ‖² + 2f*) around μ.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Error, Result};
use crate::matrix::{BinaryMatrix, IntMatrix};

/// ½ Σ m(m − 1) over all entries, exactly.
pub fn defect(m: &IntMatrix) -> u64 {
    defect_of_values(m.as_slice())
}

pub(crate) fn defect_of_values(values: &[i64]) -> u64 {
    let twice: i128 = values.iter().map(|&v| v as i128 * (v as i128 - 1)).sum();
    (twice / 2) as u64
}

/// Defect of a real matrix whose entries must all be integers.
pub fn defect_real(m: &DMatrix<f64>) -> Result<u64> {
    let mut values = Vec::with_capacity(m.len());
    for &v in m.iter() {
        if !v.is_finite() || v.fract() != 0.0 || v.abs() > 2f64.powi(52) {
            return Err(Error::Domain(format!("entry {v} is not an integer")));
        }
        values.push(v as i64);
    }
    Ok(defect_of_values(&values))
}

/// f(Zu) from the Gram caches: ½(uᵀ(ZᵀZ)u − uᵀ(Zᵀ1)), in exact arithmetic.
pub fn defect_column(gram: &IntMatrix, colsum: &[i64], u: &[i64]) -> Result<i64> {
    let k = colsum.len();
    if gram.rows() != k || gram.cols() != k || u.len() != k {
        return Err(dim_err("defect_column", k, u.len()));
    }
    Ok(defect_column_unchecked(gram, colsum, u))
}

#[inline]
pub(crate) fn defect_column_unchecked(gram: &IntMatrix, colsum: &[i64], u: &[i64]) -> i64 {
    let k = colsum.len();
    let g = gram.as_slice();
    let mut quad: i128 = 0;
    for i in 0..k {
        if u[i] == 0 {
            continue;
        }
        let mut row: i128 = 0;
        for j in 0..k {
            row += g[i * k + j] as i128 * u[j] as i128;
        }
        quad += u[i] as i128 * row;
    }
    let lin: i128 = u.iter().zip(colsum).map(|(&a, &b)| a as i128 * b as i128).sum();
    ((quad - lin) / 2) as i64
}

/// Sphere parameterization of the binary-preserving columns of Z.
#[derive(Clone, Debug)]
pub struct SphereGeometry {
    /// Λ = ΨΣ⁻¹ from the SVD Z = ΦΣΨᵀ, so ΛΛᵀ = (ZᵀZ)⁻¹.
    pub lambda: DMatrix<f64>,
    /// Λ⁻¹ = ΣΨᵀ.
    pub lambda_inv: DMatrix<f64>,
    pub mu: DVector<f64>,
    pub mu_norm_sq: f64,
    pub gram: IntMatrix,
    pub colsum: Vec<i64>,
}

impl SphereGeometry {
    pub fn k(&self) -> usize {
        self.colsum.len()
    }

    /// Radius of the sphere holding columns with defect `f_star`.
    pub fn radius(&self, f_star: u64) -> f64 {
        (self.mu_norm_sq + 2.0 * f_star as f64).sqrt()
    }

    pub fn defect_column(&self, u: &[i64]) -> Result<i64> {
        defect_column(&self.gram, &self.colsum, u)
    }
}

pub fn build_geometry(z: &BinaryMatrix) -> Result<SphereGeometry> {
    z.require_full_column_rank()?;
    let k = z.cols();
    let svd = z.to_real().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sigma = &svd.singular_values;
    let lambda = DMatrix::from_fn(k, k, |i, j| v_t[(j, i)] / sigma[j]);
    let lambda_inv = DMatrix::from_fn(k, k, |i, j| sigma[i] * v_t[(i, j)]);
    let gram = z.gram();
    let colsum = z.colsum();
    let c = DVector::from_iterator(k, colsum.iter().map(|&v| v as f64));
    let mu = lambda.transpose() * c * 0.5;
    let mu_norm_sq = mu.norm_squared();
    Ok(SphereGeometry { lambda, lambda_inv, mu, mu_norm_sq, gram, colsum })
}

/// ½‖s − μ‖² − ½‖μ‖² with s = Λ⁻¹u; a floating-point cross-check of f(Zu).
pub fn defect_via_sphere(geom: &SphereGeometry, u: &[i64]) -> Result<f64> {
    let k = geom.k();
    if u.len() != k {
        return Err(dim_err("defect_via_sphere", k, u.len()));
    }
    let uv = DVector::from_iterator(k, u.iter().map(|&v| v as f64));
    let s = &geom.lambda_inv * uv;
    Ok(0.5 * (s - &geom.mu).norm_squared() - 0.5 * geom.mu_norm_sq)
}
