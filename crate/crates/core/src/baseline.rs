//! Alternating MAP estimator: closed-form W, then the best binary row of Z
//! for each observation given W.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{BinaryMatrix, FeatureMatrix};
use crate::model::{map_objective, solve_w_given_z, LfmInstance};
use crate::rng::stream_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZUpdate {
    /// Exact minimization over all 2^K rows (K ≤ 16).
    ExhaustiveRow,
    /// Single-bit flips until no flip helps.
    CoordinateFlip,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub max_outer_iters: usize,
    pub z_update: ZUpdate,
    pub restarts: usize,
    pub rng_seed: u64,
    /// Stop once an outer iteration lowers the objective by less than this.
    pub tolerance: f64,
    /// Annealed Gibbs sweeps used to pick the starting point.
    pub anneal_sweeps: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { max_outer_iters: 100, z_update: ZUpdate::ExhaustiveRow, restarts: 5, rng_seed: 0, tolerance: 1e-9, anneal_sweeps: 60 }
    }
}

impl BaselineConfig {
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.max_outer_iters == 0 || self.restarts == 0 {
            return Err(Error::Config("max_outer_iters and restarts must be positive".into()));
        }
        if k == 0 {
            return Err(Error::Config("K must be positive".into()));
        }
        if self.z_update == ZUpdate::ExhaustiveRow && k > 16 {
            return Err(Error::Config(format!("exhaustive row updates need K ≤ 16, got {k}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct BaselineFit {
    pub z: BinaryMatrix,
    pub w: FeatureMatrix,
    pub objective: f64,
    /// Objective after every half-step of the winning restart, starting
    /// from the annealed initial point.
    pub objective_trace: Vec<f64>,
    pub restart: usize,
}

/// Row cost ‖x‖² − 2 z·b + zᵀ A z without the constant, A = WWᵀ, b = Wx.
fn row_cost(z: &[u8], a: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    let k = z.len();
    let mut c = 0.0;
    for i in (0..k).filter(|&i| z[i] == 1) {
        c -= 2.0 * b[i];
        for j in (0..k).filter(|&j| z[j] == 1) {
            c += a[(i, j)];
        }
    }
    c
}

/// Best row by visiting all patterns in Gray-code order, keeping the current
/// row unless another is strictly better.
fn exhaustive_row(current: &[u8], a: &DMatrix<f64>, b: &DVector<f64>) -> Vec<u8> {
    let k = current.len();
    let mut best_cost = row_cost(current, a, b);
    let mut best = current.to_vec();
    let mut z = vec![0u8; k];
    let mut az = DVector::<f64>::zeros(k);
    let mut cost = 0.0;
    for step in 1u64..(1u64 << k) {
        let j = step.trailing_zeros() as usize;
        if z[j] == 0 {
            cost += -2.0 * b[j] + 2.0 * az[j] + a[(j, j)];
            z[j] = 1;
            for i in 0..k {
                az[i] += a[(i, j)];
            }
        } else {
            for i in 0..k {
                az[i] -= a[(i, j)];
            }
            z[j] = 0;
            cost -= -2.0 * b[j] + 2.0 * az[j] + a[(j, j)];
        }
        if cost < best_cost - 1e-12 * (1.0 + best_cost.abs()) {
            best_cost = cost;
            best.copy_from_slice(&z);
        }
    }
    best
}

fn coordinate_row(current: &[u8], a: &DMatrix<f64>, b: &DVector<f64>) -> Vec<u8> {
    let k = current.len();
    let mut z = current.to_vec();
    let mut az: DVector<f64> = DVector::from_fn(k, |i, _| (0..k).filter(|&j| z[j] == 1).map(|j| a[(i, j)]).sum());
    loop {
        let mut improved = false;
        for j in 0..k {
            let on = -2.0 * b[j] + 2.0 * (az[j] - if z[j] == 1 { a[(j, j)] } else { 0.0 }) + a[(j, j)];
            let delta = if z[j] == 0 { on } else { -on };
            if delta < -1e-12 {
                let sign = if z[j] == 0 { 1.0 } else { -1.0 };
                z[j] ^= 1;
                for i in 0..k {
                    az[i] += sign * a[(i, j)];
                }
                improved = true;
            }
        }
        if !improved {
            return z;
        }
    }
}

fn update_z(x: &DMatrix<f64>, z: &mut BinaryMatrix, w: &DMatrix<f64>, mode: ZUpdate) {
    let a = w * w.transpose();
    let bx = w * x.transpose();
    for n in 0..z.rows() {
        let b = bx.column(n).clone_owned();
        let new = match mode {
            ZUpdate::ExhaustiveRow => exhaustive_row(z.row(n), &a, &b),
            ZUpdate::CoordinateFlip => coordinate_row(z.row(n), &a, &b),
        };
        z.row_mut(n).copy_from_slice(&new);
    }
}

/// One Gibbs sweep over the bits of every row at temperature `temp`.
fn gibbs_sweep<R: Rng + ?Sized>(x: &DMatrix<f64>, z: &mut BinaryMatrix, w: &DMatrix<f64>, temp: f64, rng: &mut R) {
    let a = w * w.transpose();
    let bx = w * x.transpose();
    let k = z.cols();
    for n in 0..z.rows() {
        let row = z.row_mut(n);
        let mut az: Vec<f64> = (0..k).map(|i| (0..k).filter(|&j| row[j] == 1).map(|j| a[(i, j)]).sum()).collect();
        for j in 0..k {
            let others = az[j] - if row[j] == 1 { a[(j, j)] } else { 0.0 };
            let on = -2.0 * bx[(j, n)] + 2.0 * others + a[(j, j)];
            let p_on = 1.0 / (1.0 + (on / temp).clamp(-700.0, 700.0).exp());
            let bit = rng.random_bool(p_on) as u8;
            if bit != row[j] {
                let sign = if bit == 1 { 1.0 } else { -1.0 };
                for (i, v) in az.iter_mut().enumerate() {
                    *v += sign * a[(i, j)];
                }
                row[j] = bit;
            }
        }
    }
}

fn run_once(inst: &LfmInstance, k: usize, cfg: &BaselineConfig, restart: usize) -> Result<BaselineFit> {
    let mut rng = stream_rng(cfg.rng_seed, restart as u64);
    let mut z = BinaryMatrix::from_fn(inst.n(), k, |_, _| rng.random_bool(0.5));
    let mut w = solve_w_given_z(inst, &z)?;
    // Annealed start: Gibbs sweeps cooling from the mean per-row residual.
    if cfg.anneal_sweeps > 0 {
        let t0 = (map_objective(inst, &z, &w)? / inst.n() as f64).max(f64::MIN_POSITIVE);
        let decay = (1e-4f64).powf(1.0 / cfg.anneal_sweeps as f64);
        let mut temp = t0;
        for _ in 0..cfg.anneal_sweeps {
            gibbs_sweep(&inst.x, &mut z, &w, temp, &mut rng);
            w = solve_w_given_z(inst, &z)?;
            temp *= decay;
        }
    }
    let mut trace = vec![map_objective(inst, &z, &w)?];
    for _ in 0..cfg.max_outer_iters {
        let start = *trace.last().unwrap();
        update_z(&inst.x, &mut z, &w, cfg.z_update);
        trace.push(map_objective(inst, &z, &w)?);
        w = solve_w_given_z(inst, &z)?;
        let obj = map_objective(inst, &z, &w)?;
        trace.push(obj);
        if start - obj < cfg.tolerance {
            break;
        }
    }
    let objective = *trace.last().unwrap();
    Ok(BaselineFit { z, w, objective, objective_trace: trace, restart })
}

/// Best of `cfg.restarts` alternating runs from random binary starts.
pub fn fit(inst: &LfmInstance, k: usize, cfg: &BaselineConfig) -> Result<BaselineFit> {
    cfg.validate(k)?;
    if inst.k() != k {
        return Err(Error::Config(format!("instance has K = {} feature probabilities, asked for K = {k}", inst.k())));
    }
    let mut best: Option<BaselineFit> = None;
    for restart in 0..cfg.restarts {
        let run = run_once(inst, k, cfg, restart)?;
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}
