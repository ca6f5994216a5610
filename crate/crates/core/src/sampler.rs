//! Random search for integer columns u with f(Zu) = 0 (strict) or small.
//!
//! Points are drawn uniformly from the sphere |s − μ|² = |μ|² + 2f* and mapped
//! back to integer columns by u = round(Λs).

use std::sync::Arc;

use indexmap::IndexMap;
use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::binarity::{build_geometry, defect_column_unchecked, SphereGeometry};
use crate::error::{dim_err, Error, Result};
use crate::matrix::BinaryMatrix;
use crate::rng::seeded;

/// Tolerance law for the target defect f*.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Tolerance {
    /// f* = 0 always; the λ → ∞ limit.
    Strict,
    /// P(f* = m) ∝ exp(−λm).
    Exponential { lambda: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub n_samples: usize,
    pub tolerance: Tolerance,
    pub rng_seed: u64,
    /// Rounded columns with any larger entry are discarded.
    pub max_entry_abs: i64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { n_samples: 10_000, tolerance: Tolerance::Strict, rng_seed: 0, max_entry_abs: 8 }
    }
}

impl SamplerConfig {
    pub fn strict(n_samples: usize, rng_seed: u64) -> Self {
        Self { n_samples, rng_seed, ..Self::default() }
    }

    pub fn tolerant(n_samples: usize, lambda: f64, rng_seed: u64) -> Self {
        Self { n_samples, tolerance: Tolerance::Exponential { lambda }, rng_seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be at least 1".into()));
        }
        if let Tolerance::Exponential { lambda } = self.tolerance {
            if !(lambda > 0.0) {
                return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
            }
        }
        if self.max_entry_abs < 1 {
            return Err(Error::Config("max_entry_abs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Draws f* from the tolerance law. One uniform variate is consumed in both
/// modes so strict and tolerant runs with the same seed see the same spheres.
pub fn sample_f_star<R: Rng + ?Sized>(tolerance: Tolerance, rng: &mut R) -> u64 {
    // uniform on (0, 1]
    let u: f64 = 1.0 - rng.random::<f64>();
    match tolerance {
        Tolerance::Strict => 0,
        Tolerance::Exponential { lambda } => {
            let m = (-u.ln() / lambda).floor();
            if m >= u64::MAX as f64 {
                u64::MAX
            } else {
                m as u64
            }
        }
    }
}

/// Uniform point on the sphere of center μ and radius √(|μ|² + 2f*).
pub fn sample_sphere_point<R: Rng + ?Sized>(geom: &SphereGeometry, f_star: u64, rng: &mut R) -> DVector<f64> {
    let k = geom.k();
    let radius = geom.radius(f_star);
    loop {
        let g = DVector::from_iterator(k, (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let norm = g.norm();
        if norm > 0.0 {
            return &geom.mu + g * (radius / norm);
        }
    }
}

/// Counters describing what happened to each draw.
#[derive(Clone, Debug, Default, Serialize)]
pub struct SamplerStats {
    pub draws: usize,
    pub rejected_zero: usize,
    pub rejected_bound: usize,
    pub rejected_defect: usize,
    pub accepted: usize,
}

/// Outcome of one draw, exposed for auditing.
#[derive(Clone, Debug)]
pub struct Draw {
    pub f_star: u64,
    pub column: Vec<i64>,
    pub defect: Option<i64>,
    pub accepted: bool,
}

/// Deduplicated integer columns with their exact defects f(Zu).
#[derive(Clone, Debug)]
pub struct CandidateSet {
    entries: IndexMap<Vec<i64>, u64>,
    geometry: Arc<SphereGeometry>,
    pub config: SamplerConfig,
    pub stats: SamplerStats,
}

#[derive(Serialize)]
pub struct CandidateRecord<'a> {
    pub columns: Vec<&'a [i64]>,
    pub defects: Vec<u64>,
    pub config: &'a SamplerConfig,
    pub stats: &'a SamplerStats,
}

impl CandidateSet {
    /// Starts a set holding the K unit vectors, which are always binary-preserving.
    fn with_unit_vectors(geometry: Arc<SphereGeometry>, config: SamplerConfig) -> Self {
        let k = geometry.k();
        let mut entries = IndexMap::new();
        for i in 0..k {
            let mut e = vec![0; k];
            e[i] = 1;
            entries.insert(e, 0);
        }
        Self { entries, geometry, config, stats: SamplerStats::default() }
    }

    /// A set built from explicit columns; defects are computed exactly.
    pub fn from_columns(geometry: Arc<SphereGeometry>, columns: &[Vec<i64>]) -> Result<Self> {
        let k = geometry.k();
        let mut entries = IndexMap::new();
        for c in columns {
            if c.len() != k {
                return Err(dim_err("CandidateSet::from_columns", k, c.len()));
            }
            if c.iter().all(|&v| v == 0) {
                return Err(Error::Domain("candidate columns must be nonzero".into()));
            }
            let d = defect_column_unchecked(&geometry.gram, &geometry.colsum, c);
            entries.insert(c.clone(), d as u64);
        }
        Ok(Self { entries, geometry, config: SamplerConfig::default(), stats: SamplerStats::default() })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn geometry(&self) -> &Arc<SphereGeometry> {
        &self.geometry
    }

    pub fn columns(&self) -> impl Iterator<Item = &Vec<i64>> {
        self.entries.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<i64>, u64)> {
        self.entries.iter().map(|(c, &d)| (c, d))
    }

    pub fn get(&self, index: usize) -> (&Vec<i64>, u64) {
        let (c, &d) = self.entries.get_index(index).expect("candidate index in range");
        (c, d)
    }

    pub fn index_of(&self, column: &[i64]) -> Option<usize> {
        self.entries.get_index_of(column)
    }

    pub fn defect_of(&self, column: &[i64]) -> Option<u64> {
        self.entries.get(column).copied()
    }

    pub fn contains(&self, column: &[i64]) -> bool {
        self.entries.contains_key(column)
    }

    /// Columns with zero defect, i.e. those keeping Zu binary.
    pub fn binary_columns(&self) -> Vec<Vec<i64>> {
        self.entries.iter().filter(|(_, &d)| d == 0).map(|(c, _)| c.clone()).collect()
    }

    pub fn record(&self) -> CandidateRecord<'_> {
        CandidateRecord {
            columns: self.entries.keys().map(Vec::as_slice).collect(),
            defects: self.entries.values().copied().collect(),
            config: &self.config,
            stats: &self.stats,
        }
    }
}

/// Builds the sphere geometry of Z and samples candidates from it.
pub fn sample_candidates(z: &BinaryMatrix, cfg: &SamplerConfig) -> Result<CandidateSet> {
    let geometry = Arc::new(build_geometry(z)?);
    let mut rng = seeded(cfg.rng_seed);
    sample_candidates_with(geometry, cfg, &mut rng)
}

/// Samples candidates from an existing geometry using the caller's RNG.
pub fn sample_candidates_with<R: Rng + ?Sized>(
    geometry: Arc<SphereGeometry>,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<CandidateSet> {
    cfg.validate()?;
    let mut set = CandidateSet::with_unit_vectors(geometry.clone(), cfg.clone());
    for_each_draw(&geometry, cfg, rng, |draw| {
        if draw.accepted {
            set.entries.entry(draw.column).or_insert(draw.defect.expect("accepted draws carry a defect") as u64);
        }
    }, &mut set.stats);
    Ok(set)
}

/// Runs the sampling loop, reporting every draw to `visit`.
pub fn for_each_draw<R: Rng + ?Sized>(
    geom: &SphereGeometry,
    cfg: &SamplerConfig,
    rng: &mut R,
    mut visit: impl FnMut(Draw),
    stats: &mut SamplerStats,
) {
    let k = geom.k();
    let mut column = vec![0i64; k];
    for _ in 0..cfg.n_samples {
        stats.draws += 1;
        let f_star = sample_f_star(cfg.tolerance, rng);
        let s = sample_sphere_point(geom, f_star, rng);
        let v = &geom.lambda * s;
        let mut in_bounds = true;
        for (c, x) in column.iter_mut().zip(v.iter()) {
            let r = x.round();
            if !(r.abs() <= cfg.max_entry_abs as f64) {
                in_bounds = false;
                break;
            }
            *c = r as i64;
        }
        if !in_bounds {
            stats.rejected_bound += 1;
            visit(Draw { f_star, column: Vec::new(), defect: None, accepted: false });
            continue;
        }
        if column.iter().all(|&c| c == 0) {
            stats.rejected_zero += 1;
            visit(Draw { f_star, column: column.clone(), defect: None, accepted: false });
            continue;
        }
        let d = defect_column_unchecked(&geom.gram, &geom.colsum, &column);
        let budget = match cfg.tolerance {
            Tolerance::Strict => 0,
            Tolerance::Exponential { .. } => f_star,
        };
        let accepted = d >= 0 && (d as u64) <= budget;
        if accepted {
            stats.accepted += 1;
        } else {
            stats.rejected_defect += 1;
        }
        visit(Draw { f_star, column: column.clone(), defect: Some(d), accepted });
    }
}
