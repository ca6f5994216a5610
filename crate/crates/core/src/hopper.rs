//! Markov chain over transforms U that moves (Ẑ, Ŵ) to (ẐU, U⁻¹Ŵ).
//!
//! Each step replaces one column of U by a candidate column. The determinant
//! factor and the change in ‖U⁻¹Ŵ‖² of every candidate come from cached
//! U⁻¹C (C = candidate columns) and Ω = U⁻¹ŴŴᵀU⁻ᵀ in O(K) each, so a step
//! costs O(N_s K + K²) and never touches the N data rows.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::binarity::{defect, defect_column_unchecked};
use crate::error::{dim_err, Error, Result};
use crate::instrument::record_row_scan;
use crate::matrix::{BinaryMatrix, FeatureMatrix, IntMatrix, TransformMatrix};
use crate::model::{solve_w_given_z, LfmInstance};
use crate::rng::{seeded, Rng as ChainRng};
use crate::sampler::{sample_candidates_with, CandidateSet};

const DRIFT_LIMIT: f64 = 1e-6;

fn ser_beta<S: Serializer>(beta: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if beta.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*beta)
    }
}

fn de_beta<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(v) => Ok(v),
        Raw::Text(t) if matches!(t.as_str(), "inf" | "greedy" | "infinity") => Ok(f64::INFINITY),
        Raw::Text(t) => Err(serde::de::Error::custom(format!("beta must be a number or \"inf\", got {t:?}"))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HopperConfig {
    /// Inverse temperature; infinity selects greedy moves.
    #[serde(serialize_with = "ser_beta", deserialize_with = "de_beta")]
    pub beta: f64,
    /// Weight of the binarity defect in the cost.
    pub gamma: f64,
    pub iterations: usize,
    /// Redraw candidates every this many steps; `usize::MAX` never does.
    pub resample_every: usize,
    pub rng_seed: u64,
    /// Replacements whose determinant factor is below this are singular.
    pub det_tolerance: f64,
    /// Recompute cached inverses from scratch after this many updates.
    pub refresh_every: usize,
}

impl Default for HopperConfig {
    fn default() -> Self {
        Self {
            beta: f64::INFINITY,
            gamma: 1.0,
            iterations: 1000,
            resample_every: 50,
            rng_seed: 0,
            det_tolerance: 1e-9,
            refresh_every: 100,
        }
    }
}

impl HopperConfig {
    pub fn greedy(iterations: usize, rng_seed: u64) -> Self {
        Self { iterations, rng_seed, ..Self::default() }
    }

    pub fn is_greedy(&self) -> bool {
        self.beta.is_infinite()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be finite and ≥ 0, got {}", self.gamma)));
        }
        if self.iterations == 0 || self.resample_every == 0 || self.refresh_every == 0 {
            return Err(Error::Config("iterations, resample_every and refresh_every must be positive".into()));
        }
        if !(self.det_tolerance > 0.0) {
            return Err(Error::Config(format!("det_tolerance must be positive, got {}", self.det_tolerance)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct HopperState {
    pub u: TransformMatrix,
    pub u_inv: DMatrix<f64>,
    pub log_abs_det: f64,
    /// U⁻¹ŴŴᵀU⁻ᵀ.
    pub omega: DMatrix<f64>,
    /// τ‖U⁻¹Ŵ‖².
    pub prior_w: f64,
    /// −log P(clamp(ẐU)) under the Bernoulli prior; zero when every π_k = ½.
    pub prior_z: f64,
    pub defect_total: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub cost: f64,
    pub defect: u64,
    pub prior_w: f64,
    pub k: usize,
    pub changed: bool,
}

#[derive(Clone, Debug)]
pub struct HopResult {
    pub u_best: TransformMatrix,
    pub best_cost: f64,
    pub z_out: BinaryMatrix,
    pub w_out: FeatureMatrix,
    pub trace: Vec<TraceRow>,
}

/// Cost of U computed from scratch: τ‖U⁻¹Ŵ‖² + γ f(ẐU) plus the Bernoulli
/// term on clamp(ẐU) when the prior is not flat.
pub fn hopper_cost(u: &IntMatrix, z_hat: &BinaryMatrix, w_hat: &DMatrix<f64>, inst: &LfmInstance, gamma: f64) -> Result<f64> {
    let lu = u.to_real().lu();
    let uw = lu.solve(w_hat).ok_or_else(|| Error::Domain("transform is singular".into()))?;
    let zu = z_hat.mul_int(u)?;
    let mut cost = inst.tau * uw.norm_squared() + gamma * defect(&zu) as f64;
    if !inst.has_flat_z_prior() {
        let clamped = zu.clamp01();
        for k in 0..u.cols() {
            let ones = (0..z_hat.rows()).filter(|&n| clamped.get(n, k) == 1).count();
            cost += bernoulli_cost(inst.pi[k], ones, z_hat.rows());
        }
    }
    Ok(cost)
}

fn bernoulli_cost(pi: f64, ones: usize, n: usize) -> f64 {
    -(ones as f64 * pi.ln() + (n - ones) as f64 * (1.0 - pi).ln())
}

/// Per-candidate data that only changes when the candidate set does.
struct CandidateCache {
    /// Candidates as a K × N_s real matrix.
    c: DMatrix<f64>,
    defects: Vec<u64>,
    /// Ones in clamp(Ẑc); empty when the prior is flat.
    ones: Vec<usize>,
}

pub struct Hopper<'a> {
    z_hat: &'a BinaryMatrix,
    w_hat: DMatrix<f64>,
    inst: &'a LfmInstance,
    gram: IntMatrix,
    colsum: Vec<i64>,
    cands: CandidateSet,
    cache: CandidateCache,
    cfg: HopperConfig,
    rng: ChainRng,
    state: HopperState,
    /// U⁻¹C.
    y: DMatrix<f64>,
    col_defects: Vec<u64>,
    col_ones: Vec<usize>,
    /// Candidate index equal to each column of U, if any.
    col_cand: Vec<Option<usize>>,
    iteration: usize,
    updates_since_refresh: usize,
    best_cost: f64,
    best_u: TransformMatrix,
    trace: Vec<TraceRow>,
    deltas: Vec<f64>,
}

fn ones_of(z: &BinaryMatrix, u: &[i64]) -> usize {
    z.mul_column(u).iter().filter(|&&v| v >= 1).count()
}

impl<'a> Hopper<'a> {
    pub fn new(
        z_hat: &'a BinaryMatrix,
        w_hat: &DMatrix<f64>,
        inst: &'a LfmInstance,
        cands: CandidateSet,
        cfg: HopperConfig,
    ) -> Result<Self> {
        Self::with_start(z_hat, w_hat, inst, cands, cfg, IntMatrix::identity(z_hat.cols()))
    }

    /// Chain started from an arbitrary regular U.
    pub fn with_start(
        z_hat: &'a BinaryMatrix,
        w_hat: &DMatrix<f64>,
        inst: &'a LfmInstance,
        cands: CandidateSet,
        cfg: HopperConfig,
        u0: TransformMatrix,
    ) -> Result<Self> {
        cfg.validate()?;
        let k = z_hat.cols();
        if w_hat.nrows() != k {
            return Err(dim_err("Ŵ rows", k, w_hat.nrows()));
        }
        if inst.n() != z_hat.rows() || inst.k() != k {
            return Err(dim_err("instance shape", format!("N={} K={k}", z_hat.rows()), format!("N={} K={}", inst.n(), inst.k())));
        }
        if u0.rows() != k || u0.cols() != k {
            return Err(dim_err("U", format!("{k}x{k}"), format!("{}x{}", u0.rows(), u0.cols())));
        }
        if u0.det() == 0 {
            return Err(Error::Domain("starting transform is singular".into()));
        }
        if cands.is_empty() {
            return Err(Error::Domain("candidate set is empty".into()));
        }
        if cands.geometry().k() != k {
            return Err(dim_err("candidate length", k, cands.geometry().k()));
        }
        let w_rank = w_hat.clone().svd(false, false).singular_values.iter().filter(|&&s| s > 1e-10 * (1.0 + w_hat.amax())).count();
        if w_rank < k {
            log::warn!("Ŵ has rank {w_rank} < K = {k}; equivalence classes may be larger than the transforms found");
        }
        let gram = z_hat.gram();
        let colsum = z_hat.colsum();
        let cache = Self::build_cache(z_hat, inst, &cands);
        let mut hopper = Self {
            z_hat,
            w_hat: w_hat.clone(),
            inst,
            gram,
            colsum,
            cache,
            cands,
            rng: seeded(cfg.rng_seed),
            cfg,
            state: HopperState {
                u: u0.clone(),
                u_inv: DMatrix::zeros(k, k),
                log_abs_det: 0.0,
                omega: DMatrix::zeros(k, k),
                prior_w: 0.0,
                prior_z: 0.0,
                defect_total: 0,
            },
            y: DMatrix::zeros(0, 0),
            col_defects: vec![0; k],
            col_ones: vec![0; k],
            col_cand: vec![None; k],
            iteration: 0,
            updates_since_refresh: 0,
            best_cost: f64::INFINITY,
            best_u: u0,
            trace: Vec::new(),
            deltas: Vec::new(),
        };
        hopper.recompute_all()?;
        hopper.best_cost = hopper.cost();
        Ok(hopper)
    }

    fn build_cache(z_hat: &BinaryMatrix, inst: &LfmInstance, cands: &CandidateSet) -> CandidateCache {
        let k = z_hat.cols();
        let cols: Vec<&Vec<i64>> = cands.columns().collect();
        let c = DMatrix::from_fn(k, cols.len(), |r, i| cols[i][r] as f64);
        let defects = cands.iter().map(|(_, d)| d).collect();
        let ones = if inst.has_flat_z_prior() {
            Vec::new()
        } else {
            record_row_scan();
            cols.iter().map(|u| ones_of(z_hat, u)).collect()
        };
        CandidateCache { c, defects, ones }
    }

    /// Rebuilds U⁻¹, Ω, U⁻¹C and the per-column data from U.
    fn recompute_all(&mut self) -> Result<()> {
        let k = self.k();
        let u = &self.state.u;
        let u_inv = u.to_real().try_inverse().ok_or_else(|| Error::Domain("transform is singular".into()))?;
        let uw = &u_inv * &self.w_hat;
        let omega = &uw * uw.transpose();
        self.state.log_abs_det = (u.det().unsigned_abs() as f64).ln();
        self.state.prior_w = self.inst.tau * omega.trace();
        self.state.u_inv = u_inv;
        self.state.omega = omega;
        self.y = &self.state.u_inv * &self.cache.c;
        let mut total = 0;
        let flat = self.inst.has_flat_z_prior();
        let mut prior_z = 0.0;
        for j in 0..k {
            let col = self.state.u.column(j);
            self.col_defects[j] = defect_column_unchecked(&self.gram, &self.colsum, &col) as u64;
            total += self.col_defects[j];
            self.col_cand[j] = self.cands.index_of(&col);
            if !flat {
                self.col_ones[j] = match self.col_cand[j] {
                    Some(i) => self.cache.ones[i],
                    None => {
                        record_row_scan();
                        ones_of(self.z_hat, &col)
                    }
                };
                prior_z += bernoulli_cost(self.inst.pi[j], self.col_ones[j], self.z_hat.rows());
            }
        }
        self.state.defect_total = total;
        self.state.prior_z = prior_z;
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.z_hat.cols()
    }

    pub fn state(&self) -> &HopperState {
        &self.state
    }

    pub fn config(&self) -> &HopperConfig {
        &self.cfg
    }

    pub fn candidates(&self) -> &CandidateSet {
        &self.cands
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn cost(&self) -> f64 {
        self.state.prior_w + self.cfg.gamma * self.state.defect_total as f64 + self.state.prior_z
    }

    pub fn best(&self) -> (&TransformMatrix, f64) {
        (&self.best_u, self.best_cost)
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    /// det(U′)/det(U) for U′ = U with column k replaced by `u_new`.
    pub fn rank1_det_update(&self, k: usize, u_new: &[i64]) -> f64 {
        let u_inv_du = self.u_inv_delta(k, u_new);
        1.0 + u_inv_du[k]
    }

    fn u_inv_delta(&self, k: usize, u_new: &[i64]) -> DVector<f64> {
        let du = DVector::from_fn(self.k(), |r, _| (u_new[r] - self.state.u.get(r, k)) as f64);
        &self.state.u_inv * du
    }

    /// Change in τ‖U⁻¹Ŵ‖² for the replacement, and v = U⁻¹Δu / factor.
    /// The replacement must be nonsingular.
    pub fn rank1_cost_update(&self, k: usize, u_new: &[i64]) -> (f64, DVector<f64>) {
        let u_inv_du = self.u_inv_delta(k, u_new);
        let factor = 1.0 + u_inv_du[k];
        let v = u_inv_du / factor;
        (self.prior_delta(k, &v), v)
    }

    fn prior_delta(&self, k: usize, v: &DVector<f64>) -> f64 {
        let omega = &self.state.omega;
        let omega_kv: f64 = (0..self.k()).map(|j| omega[(k, j)] * v[j]).sum();
        self.inst.tau * (v.norm_squared() * omega[(k, k)] - 2.0 * omega_kv)
    }

    /// Replaces column k of U by `u_new`, updating every cache in O(K² + K N_s).
    pub fn apply_column_update(&mut self, k: usize, u_new: &[i64], v: &DVector<f64>) -> Result<()> {
        let cand = self.cands.index_of(u_new);
        let defect = match cand {
            Some(i) => self.cache.defects[i],
            None => defect_column_unchecked(&self.gram, &self.colsum, u_new) as u64,
        };
        let ones = if self.inst.has_flat_z_prior() {
            0
        } else {
            match cand {
                Some(i) => self.cache.ones[i],
                None => {
                    record_row_scan();
                    ones_of(self.z_hat, u_new)
                }
            }
        };
        let factor = self.rank1_det_update(k, u_new);
        self.apply(k, u_new, v, factor, defect, ones, cand)
    }

    #[allow(clippy::too_many_arguments)]
    fn apply(
        &mut self,
        k: usize,
        u_new: &[i64],
        v: &DVector<f64>,
        factor: f64,
        defect: u64,
        ones: usize,
        cand: Option<usize>,
    ) -> Result<()> {
        let delta = self.prior_delta(k, v);
        let st = &mut self.state;
        st.u.set_column(k, u_new);

        let row_k = st.u_inv.row(k).clone_owned();
        st.u_inv -= v * row_k;

        let a = st.omega.column(k).clone_owned();
        let okk = a[k];
        st.omega -= v * a.transpose();
        st.omega -= &a * v.transpose();
        st.omega += v * v.transpose() * okk;

        let y_row = self.y.row(k).clone_owned();
        for (i, yk) in y_row.iter().enumerate() {
            if *yk != 0.0 {
                let mut col = self.y.column_mut(i);
                col.axpy(-yk, v, 1.0);
            }
        }

        st.prior_w += delta;
        st.log_abs_det += factor.abs().ln();
        st.defect_total = st.defect_total - self.col_defects[k] + defect;
        self.col_defects[k] = defect;
        if !self.inst.has_flat_z_prior() {
            let n = self.z_hat.rows();
            st.prior_z += bernoulli_cost(self.inst.pi[k], ones, n) - bernoulli_cost(self.inst.pi[k], self.col_ones[k], n);
            self.col_ones[k] = ones;
        }
        self.col_cand[k] = cand;

        self.updates_since_refresh += 1;
        if self.updates_since_refresh >= self.cfg.refresh_every {
            self.refresh()?;
        }
        Ok(())
    }

    /// Recomputes cached quantities from U and fails if they had drifted.
    pub fn refresh(&mut self) -> Result<()> {
        let before = (self.state.u_inv.clone(), self.state.omega.clone(), self.state.prior_w, self.y.clone());
        self.recompute_all()?;
        self.updates_since_refresh = 0;
        let rel = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a - b).amax() / (1.0 + b.amax());
        let checks = [
            ("U⁻¹", rel(&before.0, &self.state.u_inv)),
            ("Ω", rel(&before.1, &self.state.omega)),
            ("prior_w", (before.2 - self.state.prior_w).abs() / (1.0 + self.state.prior_w.abs())),
            ("U⁻¹C", if before.3.shape() == self.y.shape() { rel(&before.3, &self.y) } else { 0.0 }),
        ];
        for (quantity, drift) in checks {
            if !(drift <= DRIFT_LIMIT) {
                return Err(Error::NumericalDrift { quantity, drift, limit: DRIFT_LIMIT, iteration: self.iteration });
            }
        }
        Ok(())
    }

    fn resample(&mut self) -> Result<()> {
        let geometry = self.cands.geometry().clone();
        let cfg = self.cands.config.clone();
        self.cands = sample_candidates_with(geometry, &cfg, &mut self.rng)?;
        self.cache = Self::build_cache(self.z_hat, self.inst, &self.cands);
        self.y = &self.state.u_inv * &self.cache.c;
        for j in 0..self.k() {
            self.col_cand[j] = self.cands.index_of(&self.state.u.column(j));
        }
        Ok(())
    }

    /// One move: pick a column uniformly, then choose among the nonsingular
    /// replacements (and keeping it) by the Boltzmann weights, or the best
    /// one in greedy mode.
    pub fn step(&mut self) -> Result<TraceRow> {
        if self.iteration > 0 && self.iteration % self.cfg.resample_every == 0 {
            self.resample()?;
        }
        let k = self.rng.random_range(0..self.k());
        let n_s = self.cache.c.ncols();
        let current = self.col_cand[k];
        let n = self.z_hat.rows();
        let flat = self.inst.has_flat_z_prior();
        let omega_kk = self.state.omega[(k, k)];
        let omega_k = self.state.omega.row(k).clone_owned();
        let tau = self.inst.tau;
        let gamma = self.cfg.gamma;
        let cur_defect = self.col_defects[k] as f64;
        let cur_bern = if flat { 0.0 } else { bernoulli_cost(self.inst.pi[k], self.col_ones[k], n) };

        self.deltas.clear();
        self.deltas.resize(n_s, f64::NAN);
        let mut any = false;
        for i in 0..n_s {
            if Some(i) == current {
                continue;
            }
            let y = self.y.column(i);
            let f = y[k];
            if f.abs() < self.cfg.det_tolerance {
                continue;
            }
            // v = (y − e_k)/f
            let omega_y = omega_k.dot(&y.transpose());
            let omega_v = (omega_y - omega_kk) / f;
            let v_sq = (y.norm_squared() - 2.0 * f + 1.0) / (f * f);
            let mut d = tau * (v_sq * omega_kk - 2.0 * omega_v) + gamma * (self.cache.defects[i] as f64 - cur_defect);
            if !flat {
                d += bernoulli_cost(self.inst.pi[k], self.cache.ones[i], n) - cur_bern;
            }
            self.deltas[i] = d;
            any = true;
        }
        if !any {
            log::debug!("iteration {}: no nonsingular replacement for column {k}", self.iteration);
        }

        let choice = if self.cfg.is_greedy() {
            let tol = 1e-12 * (1.0 + self.cost().abs());
            let mut best: Option<(usize, f64)> = None;
            for (i, &d) in self.deltas.iter().enumerate() {
                if d.is_nan() {
                    continue;
                }
                if best.is_none_or(|(_, b)| d < b) {
                    best = Some((i, d));
                }
            }
            best.filter(|&(_, d)| d < -tol).map(|(i, _)| i)
        } else {
            let beta = self.cfg.beta;
            let max_logit = self.deltas.iter().filter(|d| !d.is_nan()).map(|d| -beta * d).fold(0.0f64, f64::max);
            let stay_w = (-max_logit).exp();
            let total: f64 = stay_w + self.deltas.iter().filter(|d| !d.is_nan()).map(|d| (-beta * d - max_logit).exp()).sum::<f64>();
            let mut target = self.rng.random::<f64>() * total;
            let mut pick = None;
            if target >= stay_w {
                target -= stay_w;
                for (i, &d) in self.deltas.iter().enumerate() {
                    if d.is_nan() {
                        continue;
                    }
                    let w = (-beta * d - max_logit).exp();
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick
        };

        let changed = choice.is_some();
        if let Some(i) = choice {
            let y = self.y.column(i).clone_owned();
            let f = y[k];
            let mut v = y;
            v[k] -= 1.0;
            v /= f;
            let u_new: Vec<i64> = self.cands.get(i).0.clone();
            let defect = self.cache.defects[i];
            let ones = if flat { 0 } else { self.cache.ones[i] };
            self.apply(k, &u_new, &v, f, defect, ones, Some(i))?;
        }

        let cost = self.cost();
        if cost < self.best_cost {
            self.best_cost = cost;
            self.best_u = self.state.u.clone();
        }
        let row = TraceRow {
            iteration: self.iteration,
            cost,
            defect: self.state.defect_total,
            prior_w: self.state.prior_w,
            k,
            changed,
        };
        self.iteration += 1;
        self.trace.push(row.clone());
        Ok(row)
    }

    /// Runs until the configured number of iterations.
    pub fn run(&mut self) -> Result<()> {
        while self.iteration < self.cfg.iterations {
            self.step()?;
        }
        Ok(())
    }

    /// Best transform visited with the corresponding pair. W_out is U⁻¹Ŵ
    /// when ẐU is binary, otherwise the closed-form W for the clamped Z.
    pub fn finish(self) -> Result<HopResult> {
        let zu = self.z_hat.mul_int(&self.best_u)?;
        let z_out = zu.clamp01();
        let w_out = if defect(&zu) == 0 {
            let uw = self
                .best_u
                .to_real()
                .lu()
                .solve(&self.w_hat)
                .ok_or_else(|| Error::Domain("best transform is singular".into()))?;
            FeatureMatrix::new(uw)?
        } else {
            solve_w_given_z(self.inst, &z_out)?
        };
        Ok(HopResult { u_best: self.best_u, best_cost: self.best_cost, z_out, w_out, trace: self.trace })
    }
}

pub fn hop(
    z_hat: &BinaryMatrix,
    w_hat: &DMatrix<f64>,
    inst: &LfmInstance,
    cands: CandidateSet,
    cfg: HopperConfig,
) -> Result<HopResult> {
    let mut hopper = Hopper::new(z_hat, w_hat, inst, cands, cfg)?;
    hopper.run()?;
    hopper.finish()
}

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("iteration,cost,defect,prior_w,k,changed\n");
    for r in trace {
        out.push_str(&format!("{},{:?},{},{:?},{},{}\n", r.iteration, r.cost, r.defect, r.prior_w, r.k, r.changed as u8));
    }
    out
}
