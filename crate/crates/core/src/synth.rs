//! Synthetic instances: patch-image features, constrained binary Z, noise.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::matrix::{BinaryMatrix, FeatureMatrix};
use crate::model::LfmInstance;
use crate::pdc::PdcKind;
use crate::rng::{seeded, Rng as StdRng};

/// Attempts at drawing a full-rank Z before giving up.
pub const RANK_RETRIES: usize = 100;
/// Row draws allowed per row when enforcing pair constraints.
const ROW_RETRIES: usize = 10_000;
/// Noise scale assumed for noiseless instances so that τ stays positive.
pub const NOISELESS_SIGMA_X: f64 = 1e-3;

fn half() -> f64 {
    0.5
}

fn default_kinds() -> Vec<PdcKind> {
    vec![PdcKind::Pdc1]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ZKind {
    Iid {
        #[serde(default = "half")]
        p: f64,
    },
    /// Last feature always active, others Bernoulli(p).
    Bias {
        #[serde(default = "half")]
        p: f64,
    },
    /// `n_pairs` disjoint feature pairs (0,1), (2,3), … each obeying a
    /// condition; `kinds` is cycled over the pairs.
    Pdc {
        n_pairs: usize,
        #[serde(default = "default_kinds")]
        kinds: Vec<PdcKind>,
        #[serde(default = "half")]
        p: f64,
    },
}

fn default_image_side() -> usize {
    30
}

fn default_patch_side() -> usize {
    7
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub kind: ZKind,
    pub k: usize,
    pub n: usize,
    /// Defaults to image_side².
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default = "default_image_side")]
    pub image_side: usize,
    #[serde(default = "default_patch_side")]
    pub patch_side: usize,
    pub noise_sigma: f64,
    #[serde(default)]
    pub nonnegative_features: bool,
    pub rng_seed: u64,
}

impl GeneratorSpec {
    pub fn new(kind: ZKind, k: usize, n: usize, noise_sigma: f64, rng_seed: u64) -> Self {
        Self {
            kind,
            k,
            n,
            d: None,
            image_side: default_image_side(),
            patch_side: default_patch_side(),
            noise_sigma,
            nonnegative_features: false,
            rng_seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.d.unwrap_or(self.image_side * self.image_side)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n == 0 {
            return Err(Error::Config(format!("K and N must be positive (K={}, N={})", self.k, self.n)));
        }
        if self.patch_side == 0 || self.patch_side > self.image_side {
            return Err(Error::Config(format!(
                "patch side {} does not fit in image side {}",
                self.patch_side, self.image_side
            )));
        }
        if self.dim() != self.image_side * self.image_side {
            return Err(dim_err("feature dimension D = image_side²", self.image_side * self.image_side, self.dim()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise_sigma must be ≥ 0, got {}", self.noise_sigma)));
        }
        let p = match &self.kind {
            ZKind::Iid { p } | ZKind::Bias { p } => *p,
            ZKind::Pdc { n_pairs, kinds, p } => {
                if 2 * n_pairs > self.k {
                    return Err(Error::Config(format!("{n_pairs} disjoint pairs need K ≥ {}, got {}", 2 * n_pairs, self.k)));
                }
                if kinds.is_empty() {
                    return Err(Error::Config("pdc kinds must not be empty".into()));
                }
                *p
            }
        };
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("p must lie in [0, 1], got {p}")));
        }
        Ok(())
    }

    /// Planted (i, j, kind) constraints.
    pub fn planted_pairs(&self) -> Vec<(usize, usize, PdcKind)> {
        match &self.kind {
            ZKind::Pdc { n_pairs, kinds, .. } => (0..*n_pairs).map(|m| (2 * m, 2 * m + 1, kinds[m % kinds.len()])).collect(),
            _ => Vec::new(),
        }
    }
}

/// K × D features, each zero except a standard-normal patch at a uniformly
/// chosen position in the image.
pub fn gen_features_with<R: Rng + ?Sized>(spec: &GeneratorSpec, rng: &mut R) -> Result<FeatureMatrix> {
    spec.validate()?;
    let (side, patch) = (spec.image_side, spec.patch_side);
    let mut w = DMatrix::zeros(spec.k, side * side);
    for k in 0..spec.k {
        let top = rng.random_range(0..=side - patch);
        let left = rng.random_range(0..=side - patch);
        for r in top..top + patch {
            for c in left..left + patch {
                let v: f64 = StandardNormal.sample(rng);
                w[(k, r * side + c)] = if spec.nonnegative_features { v.abs() } else { v };
            }
        }
    }
    FeatureMatrix::new(w)
}

pub fn gen_features(spec: &GeneratorSpec) -> Result<FeatureMatrix> {
    gen_features_with(spec, &mut seeded(spec.rng_seed))
}

/// N × K Bernoulli(p) rows where every row satisfies all `constraints`,
/// drawn by resampling violating rows. Columns in `always_on` are fixed to 1.
pub fn constrained_rows<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    p: f64,
    constraints: &[(usize, usize, PdcKind)],
    always_on: &[usize],
    rng: &mut R,
) -> Result<BinaryMatrix> {
    let mut z = BinaryMatrix::zeros(n, k);
    let mut row = vec![false; k];
    for r in 0..n {
        let mut ok = false;
        for _ in 0..ROW_RETRIES {
            for (c, v) in row.iter_mut().enumerate() {
                *v = always_on.contains(&c) || rng.random_bool(p);
            }
            if constraints.iter().all(|&(i, j, kind)| kind.allows(row[i], row[j])) {
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::Generation(format!("no row satisfying the pair constraints after {ROW_RETRIES} draws")));
        }
        for (c, &v) in row.iter().enumerate() {
            z.set(r, c, v);
        }
    }
    Ok(z)
}

/// Draws Z for `spec`, regenerating until it has full column rank.
/// Returns the matrix and the number of rejected draws.
pub fn gen_z_with<R: Rng + ?Sized>(spec: &GeneratorSpec, rng: &mut R) -> Result<(BinaryMatrix, usize)> {
    spec.validate()?;
    let (n, k) = (spec.n, spec.k);
    if n < k {
        return Err(Error::Generation(format!("N = {n} rows cannot have rank K = {k}")));
    }
    let planted = spec.planted_pairs();
    let (p, always_on) = match &spec.kind {
        ZKind::Iid { p } | ZKind::Pdc { p, .. } => (*p, vec![]),
        ZKind::Bias { p } => (*p, vec![k - 1]),
    };
    for attempt in 0..RANK_RETRIES {
        let z = constrained_rows(n, k, p, &planted, &always_on, rng)?;
        if z.rank() == k {
            if attempt > 0 {
                log::debug!("full-rank Z after {attempt} retries");
            }
            return Ok((z, attempt));
        }
    }
    Err(Error::Generation(format!("no full-rank Z after {RANK_RETRIES} attempts")))
}

pub fn gen_z(spec: &GeneratorSpec) -> Result<BinaryMatrix> {
    gen_z_with(spec, &mut seeded(spec.rng_seed)).map(|(z, _)| z)
}

#[derive(Clone, Debug)]
pub struct GeneratedInstance {
    pub x: DMatrix<f64>,
    pub z: BinaryMatrix,
    pub w: FeatureMatrix,
    pub instance: LfmInstance,
}

/// X = Z*W* + ε with ε ~ N(0, noise_sigma²) and σ_W = 1. Noiseless specs get
/// σ_X = `NOISELESS_SIGMA_X` in the instance so that τ > 0.
pub fn gen_instance(spec: &GeneratorSpec) -> Result<GeneratedInstance> {
    let mut rng: StdRng = seeded(spec.rng_seed);
    let (z, _) = gen_z_with(spec, &mut rng)?;
    let w = gen_features_with(spec, &mut rng)?;
    let mut x = z.to_real() * &*w;
    if spec.noise_sigma > 0.0 {
        for v in x.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *v += spec.noise_sigma * e;
        }
    }
    let sigma_x = if spec.noise_sigma > 0.0 { spec.noise_sigma } else { NOISELESS_SIGMA_X };
    let instance = LfmInstance::with_uniform_prior(x.clone(), sigma_x, 1.0, spec.k)?;
    Ok(GeneratedInstance { x, z, w, instance })
}

/// Index of the first all-ones column.
pub fn find_bias_column(z: &BinaryMatrix) -> Option<usize> {
    (0..z.cols()).find(|&k| (0..z.rows()).all(|n| z.get(n, k) == 1))
}

/// The equivalent solution in which feature `i` is complemented against the
/// bias: column i of U is e_bias − e_i (U is its own inverse).
pub fn make_inverted_solution(
    z: &BinaryMatrix,
    w: &DMatrix<f64>,
    bias_index: usize,
    i: usize,
) -> Result<(BinaryMatrix, DMatrix<f64>)> {
    let k = z.cols();
    if w.nrows() != k {
        return Err(dim_err("feature rows", k, w.nrows()));
    }
    if bias_index >= k || i >= k || i == bias_index {
        return Err(Error::Index(format!("need distinct indices below K = {k}, got bias {bias_index}, i {i}")));
    }
    if (0..z.rows()).any(|n| z.get(n, bias_index) == 0) {
        return Err(Error::Domain(format!("column {bias_index} is not an all-ones bias column")));
    }
    let mut z2 = z.clone();
    for n in 0..z.rows() {
        z2.set(n, i, z.get(n, i) == 0);
    }
    let mut w2 = w.clone();
    let wi = w.row(i).clone_owned();
    w2.set_row(i, &(-&wi));
    let wb = w.row(bias_index) + &wi;
    w2.set_row(bias_index, &wb);

    let before = z.to_real() * w;
    let after = z2.to_real() * &w2;
    let scale = 1.0 + before.amax();
    debug_assert!((before - after).amax() <= 1e-9 * scale);
    Ok((z2, w2))
}
