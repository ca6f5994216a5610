//! Counting equivalent solutions found by the strict sampler across sizes.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::binarity::build_geometry;
use crate::error::{Error, Result};
use crate::matrix::BinaryMatrix;
use crate::oracle::{count_regular_subsets, enumerate_equivalents, EnumerationLimits};
use crate::rng::stream_rng;
use crate::sampler::{sample_candidates_with, SamplerConfig, Tolerance};
use crate::synth::{gen_z_with, GeneratorSpec, ZKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountExperimentConfig {
    pub generator: ZKind,
    pub k: usize,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    /// Draws per trial of the strict sampler.
    pub n_samples: usize,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_max_entry")]
    pub max_entry_abs: i64,
}

fn default_max_entry() -> i64 {
    SamplerConfig::default().max_entry_abs
}

impl CountExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.trials == 0 || self.n_samples == 0 || self.n_grid.is_empty() {
            return Err(Error::Config("K, trials, n_samples and n_grid must be nonempty/positive".into()));
        }
        if let Some(&n) = self.n_grid.iter().find(|&&n| n < self.k) {
            return Err(Error::Config(format!("N = {n} is below K = {}", self.k)));
        }
        Ok(())
    }

    /// Cells in output order: for each N, trials 0..T.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        self.n_grid.iter().flat_map(|&n| (0..self.trials).map(move |t| (n, t))).collect()
    }
}

pub fn generator_label(kind: &ZKind) -> String {
    match kind {
        ZKind::Iid { p } => format!("iid({p})"),
        ZKind::Bias { .. } => "bias".into(),
        ZKind::Pdc { n_pairs, .. } => format!("pdc({n_pairs})"),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountRow {
    pub generator: String,
    pub k: usize,
    pub n: usize,
    pub trial: usize,
    pub count: usize,
    /// Exact class count, when the instance is small enough to enumerate.
    pub oracle_count: Option<usize>,
    /// Rank-deficient draws discarded before this Z.
    pub retries: usize,
}

/// Number of distinct regular matrices assembled from the binary columns
/// that the strict sampler finds for Z.
pub fn sampled_class_count(z: &BinaryMatrix, sampler: &SamplerConfig, rng: &mut crate::rng::Rng) -> Result<usize> {
    let geometry = Arc::new(build_geometry(z)?);
    let cands = sample_candidates_with(geometry, sampler, rng)?;
    Ok(count_regular_subsets(&cands.binary_columns(), z.cols()))
}

/// One (N, trial) cell; its random stream depends only on the seed, N and trial.
pub fn count_trial(cfg: &CountExperimentConfig, n: usize, trial: usize) -> Result<CountRow> {
    let mut rng = stream_rng(cfg.rng_seed, ((n as u64) << 32) | trial as u64);
    let spec = GeneratorSpec::new(cfg.generator.clone(), cfg.k, n, 0.0, cfg.rng_seed);
    let (z, retries) = gen_z_with(&spec, &mut rng)?;
    if retries > 0 {
        log::info!("N={n} trial={trial}: {retries} rank-deficient draws regenerated");
    }
    let sampler = SamplerConfig {
        n_samples: cfg.n_samples,
        tolerance: Tolerance::Strict,
        rng_seed: cfg.rng_seed,
        max_entry_abs: cfg.max_entry_abs,
    };
    let count = sampled_class_count(&z, &sampler, &mut rng)?;
    let oracle_count = match enumerate_equivalents(&z, EnumerationLimits::default()) {
        Ok(report) => Some(report.count),
        Err(Error::Size(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(CountRow { generator: generator_label(&cfg.generator), k: cfg.k, n, trial, count, oracle_count, retries })
}

pub fn count_experiment(cfg: &CountExperimentConfig) -> Result<Vec<CountRow>> {
    cfg.validate()?;
    cfg.cells().into_iter().map(|(n, t)| count_trial(cfg, n, t)).collect()
}

/// Linear-interpolation quantile of sorted data (the common "type 7" rule).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountSummary {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Box-plot statistics of the counts per N, in first-appearance order of N.
pub fn summarize(rows: &[CountRow]) -> Vec<CountSummary> {
    let mut ns: Vec<usize> = Vec::new();
    for r in rows {
        if !ns.contains(&r.n) {
            ns.push(r.n);
        }
    }
    ns.into_iter()
        .map(|n| {
            let mut v: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.count as f64).collect();
            v.sort_by(f64::total_cmp);
            CountSummary {
                n,
                min: v[0],
                q1: quantile(&v, 0.25),
                median: quantile(&v, 0.5),
                q3: quantile(&v, 0.75),
                max: v[v.len() - 1],
            }
        })
        .collect()
}

pub fn rows_csv(rows: &[CountRow]) -> String {
    let mut out = String::from("generator,K,N,trial,count,oracle_count,retries\n");
    for r in rows {
        let oracle = r.oracle_count.map(|c| c.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{},{},{},{}\n", r.generator, r.k, r.n, r.trial, r.count, oracle, r.retries));
    }
    out
}

pub fn summary_csv(summary: &[CountSummary]) -> String {
    let mut out = String::from("N,min,q1,median,q3,max\n");
    for s in summary {
        out.push_str(&format!("{},{},{},{},{},{}\n", s.n, s.min, s.q1, s.median, s.q3, s.max));
    }
    out
}
