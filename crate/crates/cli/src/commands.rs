use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use equihop::baseline::{self, BaselineConfig};
use equihop::experiment::{self, CountExperimentConfig};
use equihop::hopper::{self, HopperConfig};
use equihop::io::{read_binary_csv, read_real_csv, format_binary_csv, format_int_csv, format_real_csv};
use equihop::metrics::{hamming_error, hamming_error_with_complements, regularizer_metric};
use equihop::model::residual;
use equihop::oracle::{enumerate_equivalents, EnumerationLimits};
use equihop::pdc::{self, MultilabelOptions, PdcOptions};
use equihop::sampler::{sample_candidates, SamplerConfig};
use equihop::synth::{gen_instance, GeneratorSpec};
use equihop::{BinaryMatrix, Error, LfmInstance};

use crate::artifacts::{Metrics, Provenance, RunDir};
use crate::GlobalArgs;

/// 1 usage or configuration, 2 bad or missing data, 3 numerical drift.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::NumericalDrift { .. } => 3,
                Error::Config(_) => 1,
                _ => 2,
            };
        }
    }
    2
}

fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())).into())
}

fn optional_config<T: DeserializeOwned + Default>(g: &GlobalArgs) -> Result<T> {
    g.config.as_deref().map(load_config).transpose().map(Option::unwrap_or_default)
}

fn required_config<T: DeserializeOwned>(g: &GlobalArgs, what: &str) -> Result<T> {
    match &g.config {
        Some(path) => load_config(path),
        None => Err(Error::Config(format!("--config <{what} JSON> is required")).into()),
    }
}

fn binary(path: &Path) -> Result<BinaryMatrix> {
    read_binary_csv(path).with_context(|| format!("reading binary matrix {}", path.display()))
}

fn real(path: &Path) -> Result<nalgebra::DMatrix<f64>> {
    read_real_csv(path).with_context(|| format!("reading real matrix {}", path.display()))
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Noise and prior scales of the model the data are scored under.
#[derive(Args, Clone, Debug, Serialize)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 1.0)]
    pub sigma_x: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_w: f64,
}

impl ModelArgs {
    fn instance(&self, x: nalgebra::DMatrix<f64>, k: usize) -> Result<LfmInstance> {
        Ok(LfmInstance::with_uniform_prior(x, self.sigma_x, self.sigma_w, k)?)
    }
}

pub fn synth(g: &GlobalArgs) -> Result<()> {
    let mut spec: GeneratorSpec = required_config(g, "generator spec")?;
    if let Some(seed) = g.seed {
        spec.rng_seed = seed;
    }
    spec.validate()?;
    let inst = gen_instance(&spec)?;
    let config = serde_json::to_value(&spec)?;
    let mut run = RunDir::create(&g.out, Provenance::new("synth", Some(spec.rng_seed), &config), config)?;
    run.write("X.csv", format_real_csv(&inst.x).as_bytes())?;
    run.write("Zstar.csv", format_binary_csv(&inst.z).as_bytes())?;
    run.write("Wstar.csv", format_real_csv(&inst.w).as_bytes())?;
    run.write_json(
        "meta.json",
        json!({
            "spec": spec,
            "seed": spec.rng_seed,
            "n": inst.z.rows(),
            "k": inst.z.cols(),
            "d": inst.x.ncols(),
            "sigma_x": inst.instance.sigma_x,
            "sigma_w": inst.instance.sigma_w,
            "planted_pairs": spec.planted_pairs(),
        }),
    )?;
    run.finish()
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub k: usize,
    /// Ground truth, for the Hamming error.
    #[arg(long)]
    pub zstar: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

pub fn fit(g: &GlobalArgs, a: &FitArgs) -> Result<()> {
    let mut cfg: BaselineConfig = optional_config(g)?;
    if let Some(seed) = g.seed {
        cfg.rng_seed = seed;
    }
    let x = real(&a.x)?;
    let zstar = a.zstar.as_deref().map(binary).transpose()?;
    let inst = a.model.instance(x, a.k)?;
    let config = json!({ "baseline": cfg, "args": a });
    let mut run = RunDir::create(&g.out, Provenance::new("fit", Some(cfg.rng_seed), &config), config)?;
    run.input("x", &a.x)?;
    if let Some(p) = &a.zstar {
        run.input("zstar", p)?;
    }
    let result = baseline::fit(&inst, a.k, &cfg)?;
    run.write("Zhat.csv", format_binary_csv(&result.z).as_bytes())?;
    run.write("What.csv", format_real_csv(&result.w).as_bytes())?;
    let trace: Vec<Value> = result.objective_trace.iter().enumerate().map(|(i, v)| json!({ "step": i, "objective": v })).collect();
    let csv: String = std::iter::once("step,objective\n".to_string())
        .chain(result.objective_trace.iter().enumerate().map(|(i, v)| format!("{i},{v:?}\n")))
        .collect();
    run.write_table("fit_trace", g.format, csv, &trace)?;
    let mut m = Metrics::default();
    m.push("residual", residual(&inst.x, &result.z, &result.w)?);
    m.push("objective", result.objective);
    m.push("e_reg", regularizer_metric(&result.w));
    m.push("restart", result.restart);
    if let Some(zs) = &zstar {
        m.push("e_hamm", hamming_error(&result.z, zs)?);
    }
    run.write_metrics(&m)?;
    run.finish()
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HopRunConfig {
    pub sampler: SamplerConfig,
    pub hopper: HopperConfig,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct HopArgs {
    #[arg(long)]
    pub x: PathBuf,
    /// Estimated Z to post-process.
    #[arg(long)]
    pub z: PathBuf,
    /// Estimated W paired with --z.
    #[arg(long)]
    pub w: PathBuf,
    #[arg(long)]
    pub zstar: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

pub fn hop(g: &GlobalArgs, a: &HopArgs) -> Result<()> {
    let mut cfg: HopRunConfig = optional_config(g)?;
    if let Some(seed) = g.seed {
        cfg.sampler.rng_seed = seed;
        cfg.hopper.rng_seed = seed;
    }
    cfg.sampler.validate()?;
    cfg.hopper.validate()?;
    let x = real(&a.x)?;
    let z = binary(&a.z)?;
    let w = real(&a.w)?;
    let zstar = a.zstar.as_deref().map(binary).transpose()?;
    let inst = a.model.instance(x, z.cols())?;
    let config = json!({ "hop": cfg, "args": a });
    let mut run = RunDir::create(&g.out, Provenance::new("hop", Some(cfg.hopper.rng_seed), &config), config)?;
    for (role, p) in [("x", &a.x), ("z", &a.z), ("w", &a.w)] {
        run.input(role, p)?;
    }
    if let Some(p) = &a.zstar {
        run.input("zstar", p)?;
    }
    let residual_before = residual(&inst.x, &z, &w)?;
    let cands = sample_candidates(&z, &cfg.sampler)?;
    let n_candidates = cands.len();
    let result = hopper::hop(&z, &w, &inst, cands, cfg.hopper.clone())?;
    run.write("Zhop.csv", format_binary_csv(&result.z_out).as_bytes())?;
    run.write("Whop.csv", format_real_csv(&result.w_out).as_bytes())?;
    run.write("U.csv", format_int_csv(&result.u_best).as_bytes())?;
    run.write_table("hop_trace", g.format, hopper::trace_csv(&result.trace), &result.trace)?;
    let mut m = Metrics::default();
    m.push("residual_before", residual_before);
    m.push("residual_after", residual(&inst.x, &result.z_out, &result.w_out)?);
    m.push("e_reg_before", regularizer_metric(&w));
    m.push("e_reg_after", regularizer_metric(&result.w_out));
    if let Some(zs) = &zstar {
        m.push("e_hamm_before", hamming_error(&z, zs)?);
        m.push("e_hamm_after", hamming_error(&result.z_out, zs)?);
    }
    m.push("best_cost", result.best_cost);
    m.push("candidates", n_candidates);
    m.push("transform_is_permutation", result.u_best.is_permutation());
    run.write_metrics(&m)?;
    run.finish()
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct EnumerateArgs {
    #[arg(long)]
    pub z: PathBuf,
    #[arg(long, default_value_t = EnumerationLimits::default().max_n)]
    pub max_n: usize,
    #[arg(long, default_value_t = EnumerationLimits::default().max_k)]
    pub max_k: usize,
}

#[derive(Serialize)]
struct EquivalentRow {
    index: usize,
    det: i64,
    /// Hamming error between the equivalent Z and the input.
    e_hamm: f64,
    transform: Vec<Vec<i64>>,
    z: String,
}

pub fn enumerate(g: &GlobalArgs, a: &EnumerateArgs) -> Result<()> {
    let z = binary(&a.z)?;
    let config = json!({ "args": a });
    let mut run = RunDir::create(&g.out, Provenance::new("enumerate", None, &config), config)?;
    run.input("z", &a.z)?;
    let report = enumerate_equivalents(&z, EnumerationLimits { max_n: a.max_n, max_k: a.max_k })?;
    let mut rows = Vec::new();
    for (index, u) in report.canonical_transforms.iter().enumerate() {
        let zu = z.mul_int(u)?.clamp01();
        rows.push(EquivalentRow {
            index,
            det: u.det() as i64,
            e_hamm: hamming_error(&zu, &z)?,
            transform: (0..u.rows()).map(|i| (0..u.cols()).map(|j| u.get(i, j)).collect()).collect(),
            z: format_binary_csv(&zu).trim_end().replace('\n', ";"),
        });
    }
    let mut csv = String::from("index,det,e_hamm,transform,z\n");
    for r in &rows {
        let t: Vec<String> = r.transform.iter().map(|row| row.iter().map(i64::to_string).collect::<Vec<_>>().join(" ")).collect();
        csv.push_str(&format!("{},{},{:?},{},{}\n", r.index, r.det, r.e_hamm, t.join(";"), r.z.replace(',', " ")));
    }
    run.write_table("equivalents", g.format, csv, &rows)?;
    let mut m = Metrics::default();
    m.push("count", report.count);
    m.push("identifiable", report.identifiable);
    m.push("certified", report.certification.is_certified());
    m.push("certification", &report.certification);
    m.push("non_integer_columns", report.non_integer_columns);
    m.push("max_e_hamm", rows.iter().map(|r| r.e_hamm).fold(0.0, f64::max));
    run.write_metrics(&m)?;
    run.finish()
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct PdcScanArgs {
    /// Dense binary CSV.
    #[arg(long, conflicts_with = "multilabel", required_unless_present = "multilabel")]
    pub z: Option<PathBuf>,
    /// Sparse label-list file.
    #[arg(long)]
    pub multilabel: Option<PathBuf>,
    /// Count pairs that involve a constant column.
    #[arg(long)]
    pub include_degenerate: bool,
}

pub fn pdc_scan(g: &GlobalArgs, a: &PdcScanArgs) -> Result<()> {
    let (z, input) = match (&a.z, &a.multilabel) {
        (Some(p), _) => (binary(p)?, p),
        (None, Some(p)) => (
            pdc::read_multilabel(p, &MultilabelOptions::default()).with_context(|| format!("reading {}", p.display()))?,
            p,
        ),
        (None, None) => bail!(Error::Config("one of --z or --multilabel is required".into())),
    };
    let opts = PdcOptions { exclude_degenerate: !a.include_degenerate };
    let config = json!({ "args": a });
    let mut run = RunDir::create(&g.out, Provenance::new("pdc-scan", None, &config), config)?;
    run.input("z", input)?;
    let report = pdc::detect_pdc_with(&z, opts);
    let mut csv = String::from("i,j,kind,degenerate\n");
    for p in &report.pairs {
        csv.push_str(&format!("{},{},{},{}\n", p.i, p.j, p.kind, p.degenerate as u8));
    }
    run.write_table("pdc_pairs", g.format, csv, &report.pairs)?;
    let mut m = Metrics::default();
    m.push("n", z.rows());
    m.push("k", z.cols());
    m.push("pdc_pair_count", report.pdc_pair_count);
    m.push("pdc_ratio", report.pdc_ratio);
    m.push("n_pairs_eligible", report.n_pairs_eligible);
    m.push("pdc1", report.pdc1);
    m.push("pdc2", report.pdc2);
    m.push("pdc3", report.pdc3);
    run.write_metrics(&m)?;
    run.finish()
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct MetricsArgs {
    #[arg(long)]
    pub z: PathBuf,
    #[arg(long)]
    pub zstar: Option<PathBuf>,
    #[arg(long)]
    pub w: Option<PathBuf>,
    /// With --w, also report the residual.
    #[arg(long, requires = "w")]
    pub x: Option<PathBuf>,
}

pub fn metrics(g: &GlobalArgs, a: &MetricsArgs) -> Result<()> {
    let z = binary(&a.z)?;
    let config = json!({ "args": a });
    let mut run = RunDir::create(&g.out, Provenance::new("metrics", None, &config), config)?;
    run.input("z", &a.z)?;
    let mut m = Metrics::default();
    if let Some(p) = &a.zstar {
        run.input("zstar", p)?;
        let zs = binary(p)?;
        m.push("e_hamm", hamming_error(&z, &zs)?);
        m.push("e_hamm_with_complements", hamming_error_with_complements(&z, &zs)?);
    }
    if let Some(p) = &a.w {
        run.input("w", p)?;
        let w = real(p)?;
        m.push("e_reg", regularizer_metric(&w));
        if let Some(px) = &a.x {
            run.input("x", px)?;
            m.push("residual", residual(&real(px)?, &z, &w)?);
        }
    }
    run.write_metrics(&m)?;
    run.finish()
}

pub fn count_experiment(g: &GlobalArgs) -> Result<()> {
    let mut cfg: CountExperimentConfig = required_config(g, "count experiment")?;
    if let Some(seed) = g.seed {
        cfg.rng_seed = seed;
    }
    cfg.validate()?;
    let config = serde_json::to_value(&cfg)?;
    let mut run = RunDir::create(&g.out, Provenance::new("count-experiment", Some(cfg.rng_seed), &config), config)?;
    // every cell owns its random stream, so the thread count cannot change the numbers
    let rows = cfg
        .cells()
        .par_iter()
        .map(|&(n, t)| experiment::count_trial(&cfg, n, t))
        .collect::<equihop::Result<Vec<_>>>()?;
    let summary = experiment::summarize(&rows);
    run.write_table("counts", g.format, experiment::rows_csv(&rows), &rows)?;
    run.write_table("counts_summary", g.format, experiment::summary_csv(&summary), &summary)?;
    run.finish()
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct SurveyArgs {
    /// Label-list files; the file stem names the dataset.
    #[arg(required = true)]
    pub datasets: Vec<PathBuf>,
    /// Separator between labels and the rest of a line.
    #[arg(long, default_value_t = ' ')]
    pub delimiter: char,
    #[arg(long)]
    pub include_degenerate: bool,
}

pub fn survey(g: &GlobalArgs, a: &SurveyArgs) -> Result<()> {
    let parse = MultilabelOptions { delimiter: a.delimiter, declared_k: None };
    let opts = PdcOptions { exclude_degenerate: !a.include_degenerate };
    let named: Vec<(String, PathBuf)> = a
        .datasets
        .iter()
        .map(|p| (p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path_str(p)), p.clone()))
        .collect();
    let config = json!({ "args": a });
    let mut run = RunDir::create(&g.out, Provenance::new("survey", None, &config), config)?;
    let rows: Vec<pdc::SurveyRow> =
        named.par_iter().map(|d| pdc::survey(std::slice::from_ref(d), &parse, opts).remove(0)).collect();
    for r in rows.iter().filter(|r| r.error.is_some()) {
        log::warn!("dataset {} skipped: {}", r.name, r.error.as_deref().unwrap_or_default());
    }
    run.write_table("survey", g.format, pdc::survey_csv(&rows), &rows)?;
    run.finish()
}
