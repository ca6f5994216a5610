//! The linear-Gaussian latent feature model X = ZW + ε and its MAP objective.

use nalgebra::DMatrix;

use crate::error::{dim_err, Error, Result};
use crate::instrument::record_row_scan;
use crate::matrix::{BinaryMatrix, FeatureMatrix, IntMatrix};

/// Observations together with the model hyperparameters.
#[derive(Clone, Debug)]
pub struct LfmInstance {
    pub x: DMatrix<f64>,
    pub tau: f64,
    pub sigma_x: f64,
    pub sigma_w: f64,
    pub pi: Vec<f64>,
}

impl LfmInstance {
    pub fn new(x: DMatrix<f64>, sigma_x: f64, sigma_w: f64, pi: Vec<f64>) -> Result<Self> {
        if !(sigma_x > 0.0 && sigma_x.is_finite()) || !(sigma_w > 0.0 && sigma_w.is_finite()) {
            return Err(Error::Domain(format!(
                "noise and prior scales must be positive and finite (sigma_x={sigma_x}, sigma_w={sigma_w})"
            )));
        }
        if pi.is_empty() {
            return Err(Error::Domain("feature probabilities must not be empty".into()));
        }
        if let Some(p) = pi.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::Domain(format!("feature probability {p} outside (0, 1)")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("observation matrix has non-finite entries".into()));
        }
        let tau = (sigma_x / sigma_w).powi(2);
        Ok(Self { x, tau, sigma_x, sigma_w, pi })
    }

    /// Instance with π_k = ½ for every feature.
    pub fn with_uniform_prior(x: DMatrix<f64>, sigma_x: f64, sigma_w: f64, k: usize) -> Result<Self> {
        Self::new(x, sigma_x, sigma_w, vec![0.5; k])
    }

    /// Instance parameterized directly by τ, with σ_W = 1.
    pub fn from_tau(x: DMatrix<f64>, tau: f64, k: usize) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::Domain(format!("tau must be positive, got {tau}")));
        }
        Self::with_uniform_prior(x, tau.sqrt(), 1.0, k)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn k(&self) -> usize {
        self.pi.len()
    }

    /// True when the Bernoulli prior on Z is constant in Z (all π_k = ½).
    pub fn has_flat_z_prior(&self) -> bool {
        self.pi.iter().all(|&p| p == 0.5)
    }
}

fn check_shapes(x: &DMatrix<f64>, z: &BinaryMatrix, w: &DMatrix<f64>) -> Result<()> {
    if x.nrows() != z.rows() || z.cols() != w.nrows() || x.ncols() != w.ncols() {
        return Err(dim_err(
            "X ≈ ZW",
            format!("X {}x{}, Z {}xK, W Kx{}", x.nrows(), x.ncols(), x.nrows(), x.ncols()),
            format!("Z {}x{}, W {}x{}", z.rows(), z.cols(), w.nrows(), w.ncols()),
        ));
    }
    Ok(())
}

/// Frobenius norm ‖X − ZW‖_F.
pub fn residual(x: &DMatrix<f64>, z: &BinaryMatrix, w: &DMatrix<f64>) -> Result<f64> {
    check_shapes(x, z, w)?;
    record_row_scan();
    let mut total = 0.0;
    let mut fitted = vec![0.0; w.ncols()];
    for n in 0..z.rows() {
        fitted.iter_mut().for_each(|v| *v = 0.0);
        for (k, &bit) in z.row(n).iter().enumerate() {
            if bit == 1 {
                for (d, f) in fitted.iter_mut().enumerate() {
                    *f += w[(k, d)];
                }
            }
        }
        for (d, f) in fitted.iter().enumerate() {
            let r = x[(n, d)] - f;
            total += r * r;
        }
    }
    Ok(total.sqrt())
}

/// ‖X − ZW‖_F² + τ‖W‖_F².
pub fn map_objective(inst: &LfmInstance, z: &BinaryMatrix, w: &DMatrix<f64>) -> Result<f64> {
    let r = residual(&inst.x, z, w)?;
    Ok(r * r + inst.tau * w.norm_squared())
}

/// Minimizer of the MAP objective over W with Z held fixed:
/// (ZᵀZ + τI)W = ZᵀX, or the minimum-norm least-squares solution when τ = 0.
pub fn solve_w_given_z(inst: &LfmInstance, z: &BinaryMatrix) -> Result<FeatureMatrix> {
    solve_ridge(&inst.x, z, inst.tau)
}

pub(crate) fn solve_ridge(x: &DMatrix<f64>, z: &BinaryMatrix, tau: f64) -> Result<FeatureMatrix> {
    if x.nrows() != z.rows() {
        return Err(dim_err("solve_w_given_z", x.nrows(), z.rows()));
    }
    if !(tau >= 0.0) {
        return Err(Error::Domain(format!("tau must be nonnegative, got {tau}")));
    }
    let zr = z.to_real();
    let w = if tau > 0.0 {
        let k = z.cols();
        let a = zr.transpose() * &zr + DMatrix::identity(k, k) * tau;
        let b = zr.transpose() * x;
        match a.clone().cholesky() {
            Some(ch) => ch.solve(&b),
            None => a.lu().solve(&b).ok_or_else(|| Error::Domain("ridge system is singular".into()))?,
        }
    } else {
        let pinv = zr
            .pseudo_inverse(f64::EPSILON * z.rows().max(z.cols()) as f64 * 16.0)
            .map_err(|e| Error::Domain(e.to_string()))?;
        pinv * x
    };
    FeatureMatrix::new(w)
}

/// A candidate factorization with its cached residual and Gram data.
#[derive(Clone, Debug)]
pub struct SolutionPair {
    pub z: BinaryMatrix,
    pub w: FeatureMatrix,
    pub residual: f64,
    pub gram: IntMatrix,
    pub colsum: Vec<i64>,
}

impl SolutionPair {
    pub fn new(x: &DMatrix<f64>, z: BinaryMatrix, w: FeatureMatrix) -> Result<Self> {
        let residual = residual(x, &z, &w)?;
        let gram = z.gram();
        let colsum = z.colsum();
        Ok(Self { z, w, residual, gram, colsum })
    }

    /// Re-derives every cached quantity and reports the first mismatch.
    pub fn verify(&self, x: &DMatrix<f64>) -> Result<()> {
        let r = residual(x, &self.z, &self.w)?;
        if (r - self.residual).abs() > 1e-9 * r.max(1.0) {
            return Err(Error::Domain(format!("cached residual {} != {}", self.residual, r)));
        }
        if self.gram != self.z.gram() || self.colsum != self.z.colsum() {
            return Err(Error::Domain("cached Gram data out of date".into()));
        }
        Ok(())
    }
}
