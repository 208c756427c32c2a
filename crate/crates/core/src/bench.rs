//! Multi-seed experiments, summary statistics and the Mann-Whitney U test.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use rayon::prelude::*;
use serde::Deserialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::clustering::{kmeans, ClusterModel, DEFAULT_CLUSTERS, DEFAULT_MAX_ITERS};
use crate::optimizers::{
    cep_solve, greedy_solve, rii_solve, Algorithm, Budget, CepParams, ConvergenceLog,
    DEFAULT_ALPHA, DEFAULT_LOG_STRIDE, DEFAULT_MAX_EVALUATIONS,
};
use crate::problem::{MosaicProblem, DEFAULT_N_REDU};
use crate::render::load_image;
use crate::tiledb::{ingest_tiles, TileDatabase, DEFAULT_BINS};
use crate::{parse_dims, rng_from_seed, MosaicError, Result};

/// Largest smaller-sample size for which the exact null distribution is used.
pub const EXACT_MAX_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UTest {
    /// `U` for the first sample: pairs `(a, b)` with `a > b`, ties counting half.
    pub u: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub exact: bool,
}

/// Midranks (1-based) of `values`.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn tie_groups(values: &[f64]) -> Vec<usize> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut groups = Vec::new();
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j + 1 < v.len() && v[j + 1] == v[i] {
            j += 1;
        }
        groups.push(j - i + 1);
        i = j + 1;
    }
    groups
}

fn u_statistic(a: &[f64], b: &[f64]) -> f64 {
    let combined: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&combined);
    let rank_sum: f64 = ranks[..a.len()].iter().sum();
    let m = a.len() as f64;
    rank_sum - m * (m + 1.0) / 2.0
}

/// Null distribution of `U` for samples of sizes `m` and `n` without ties:
/// entry `u` is the number of orderings giving `U = u`, as `f64`.
///
/// Uses `f(i, j, u) = f(i - 1, j, u - j) + f(i, j - 1, u)`, splitting on
/// whether the largest observation belongs to the first sample.
pub fn u_null_counts(m: usize, n: usize) -> Vec<f64> {
    let top = m * n;
    let mut f = vec![vec![0.0f64; top + 1]; m + 1];
    for row in f.iter_mut() {
        row[0] = 1.0;
    }
    for j in 1..=n {
        for i in 1..=m {
            let (lower, upper) = f.split_at_mut(i);
            let prev = &lower[i - 1];
            let cur = &mut upper[0];
            for u in (j..=i * j).rev() {
                cur[u] += prev[u - j];
            }
        }
    }
    f.swap_remove(m)
}

/// Exact two-sided p-value; only meaningful without ties.
pub fn exact_p_value(u: f64, m: usize, n: usize) -> f64 {
    let counts = u_null_counts(m, n);
    let total: f64 = counts.iter().sum();
    let u = u.round() as usize;
    let lower: f64 = counts[..=u].iter().sum::<f64>() / total;
    let upper: f64 = counts[u..].iter().sum::<f64>() / total;
    (2.0 * lower.min(upper)).min(1.0)
}

/// Normal approximation with tie-corrected variance and continuity correction.
pub fn normal_p_value(u: f64, m: usize, n: usize, ties: &[usize]) -> f64 {
    let (mf, nf) = (m as f64, n as f64);
    let total = mf + nf;
    let mean = mf * nf / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t as f64).powi(3) - t as f64).sum();
    let var = if total > 1.0 {
        mf * nf / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)))
    } else {
        0.0
    };
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * normal.sf(z)).min(1.0)
}

/// Two-sided Mann-Whitney U test.
///
/// Exact when the smaller sample has at most [`EXACT_MAX_SIZE`] values and
/// there are no ties, normal approximation otherwise.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<UTest> {
    if a.is_empty() || b.is_empty() {
        return Err(MosaicError::InvalidArgument(
            "Mann-Whitney U test needs two non-empty samples".into(),
        ));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(MosaicError::InvalidArgument("sample contains NaN".into()));
    }
    let u = u_statistic(a, b);
    let combined: Vec<f64> = a.iter().chain(b).copied().collect();
    let ties = tie_groups(&combined);
    let tied = ties.iter().any(|&t| t > 1);
    let (m, n) = (a.len(), b.len());
    if !tied && m.min(n) <= EXACT_MAX_SIZE {
        // the null distribution is symmetric, so evaluate it on the cheaper axis
        let (small, large) = (m.min(n), m.max(n));
        Ok(UTest {
            u,
            p: exact_p_value(u, small, large),
            exact: true,
        })
    } else {
        Ok(UTest {
            u,
            p: normal_p_value(u, m, n, &ties),
            exact: false,
        })
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
pub fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub image: String,
    pub seed: u64,
    pub final_mae: f64,
    pub evaluations: u64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub log: ConvergenceLog,
}

#[derive(Debug, Clone)]
pub struct FailedCell {
    pub algorithm: Algorithm,
    pub image: String,
    pub seed: u64,
    pub error: String,
}

/// One target image prepared for solving.
#[derive(Debug, Clone)]
pub struct ImageCase {
    pub id: String,
    pub problem: MosaicProblem,
}

#[derive(Debug, Clone, Copy)]
pub struct CellParams {
    pub alpha: f64,
    pub budget: Budget,
}

fn run_cell(
    case: &ImageCase,
    algorithm: Algorithm,
    seed: u64,
    model: Option<&ClusterModel>,
    params: &CellParams,
) -> Result<RunOutcome> {
    let mut rng = rng_from_seed(seed);
    let result = match algorithm {
        Algorithm::Cep => {
            let model = model.ok_or_else(|| {
                MosaicError::InvalidArgument("cep needs a cluster model".into())
            })?;
            let p = CepParams {
                alpha: params.alpha,
                budget: params.budget,
            };
            cep_solve(&case.problem, model, &p, &mut rng)?
        }
        Algorithm::Rii => rii_solve(&case.problem, &params.budget, &mut rng)?,
        Algorithm::Greedy => greedy_solve(&case.problem)?,
    };
    Ok(RunOutcome {
        summary: RunSummary {
            algorithm,
            image: case.id.clone(),
            seed,
            final_mae: result.overall_fitness(),
            evaluations: result.evaluations_used,
            wall_ms: result.wall_time.as_millis() as u64,
        },
        log: result.log,
    })
}

/// Runs every `(algorithm, image, seed)` cell, concurrently. Results come
/// back in algorithm, image, seed order. Greedy is deterministic, so it runs
/// once per image and is reported under every seed.
pub fn run_cells(
    cases: &[ImageCase],
    algorithms: &[Algorithm],
    seeds: &[u64],
    model: Option<&ClusterModel>,
    params: &CellParams,
) -> (Vec<RunOutcome>, Vec<FailedCell>) {
    let mut cells = Vec::new();
    for &alg in algorithms {
        for (ci, _) in cases.iter().enumerate() {
            let cell_seeds: &[u64] = if alg == Algorithm::Greedy && !seeds.is_empty() {
                &seeds[..1]
            } else {
                seeds
            };
            for &seed in cell_seeds {
                cells.push((alg, ci, seed));
            }
        }
    }
    let results: Vec<_> = cells
        .par_iter()
        .map(|&(alg, ci, seed)| (alg, ci, seed, run_cell(&cases[ci], alg, seed, model, params)))
        .collect();

    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for (alg, ci, seed, r) in results {
        let fan_out: Vec<u64> = if alg == Algorithm::Greedy {
            seeds.to_vec()
        } else {
            vec![seed]
        };
        match r {
            Ok(outcome) => {
                for s in fan_out {
                    let mut o = outcome.clone();
                    o.summary.seed = s;
                    outcomes.push(o);
                }
            }
            Err(e) => {
                for s in fan_out {
                    failures.push(FailedCell {
                        algorithm: alg,
                        image: cases[ci].id.clone(),
                        seed: s,
                        error: e.to_string(),
                    });
                }
            }
        }
    }
    (outcomes, failures)
}

/// Per-algorithm statistics in the shape of a comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmStats {
    pub algorithm: Algorithm,
    pub runs: usize,
    pub mean_mae: f64,
    pub sd_mae: f64,
    /// Two-sided U-test p-value against the reference algorithm's MAEs.
    pub p_value: Option<f64>,
    pub mean_wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub reference: Algorithm,
    pub stats: Vec<AlgorithmStats>,
}

pub const ROW_LABELS: [&str; 4] = [
    "Average MAE value",
    "Standard deviation",
    "P-value",
    "Average running time",
];

/// Aggregates runs per algorithm and tests each against `reference`.
pub fn summarize(summaries: &[RunSummary], reference: Algorithm) -> Result<Report> {
    let mut by_alg: BTreeMap<Algorithm, Vec<&RunSummary>> = BTreeMap::new();
    for s in summaries {
        by_alg.entry(s.algorithm).or_default().push(s);
    }
    let ref_maes: Option<Vec<f64>> = by_alg
        .get(&reference)
        .map(|v| v.iter().map(|s| s.final_mae).collect());
    let mut stats = Vec::new();
    for (alg, runs) in &by_alg {
        let maes: Vec<f64> = runs.iter().map(|s| s.final_mae).collect();
        let walls: Vec<f64> = runs.iter().map(|s| s.wall_ms as f64).collect();
        let p_value = match &ref_maes {
            Some(r) => Some(mann_whitney_u(&maes, r)?.p),
            None => None,
        };
        stats.push(AlgorithmStats {
            algorithm: *alg,
            runs: runs.len(),
            mean_mae: mean(&maes),
            sd_mae: sample_sd(&maes),
            p_value,
            mean_wall_ms: mean(&walls),
        });
    }
    Ok(Report { reference, stats })
}

impl Report {
    fn cells(&self) -> Vec<Vec<String>> {
        let p = |s: &AlgorithmStats| match s.p_value {
            Some(_) if s.algorithm == self.reference => "NA".to_string(),
            Some(p) => format!("{p:.4e}"),
            None => "NA".to_string(),
        };
        vec![
            self.stats.iter().map(|s| format!("{:.4}", s.mean_mae)).collect(),
            self.stats.iter().map(|s| format!("{:.4}", s.sd_mae)).collect(),
            self.stats.iter().map(p).collect(),
            self.stats
                .iter()
                .map(|s| format!("{:.2}s", s.mean_wall_ms / 1000.0))
                .collect(),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric");
        for s in &self.stats {
            out.push(',');
            out.push_str(s.algorithm.name());
        }
        out.push('\n');
        for (label, row) in ROW_LABELS.iter().zip(self.cells()) {
            let _ = writeln!(out, "{label},{}", row.join(","));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let label_w = ROW_LABELS.iter().map(|l| l.len()).max().unwrap_or(0);
        let cells = self.cells();
        let col_w: Vec<usize> = self
            .stats
            .iter()
            .enumerate()
            .map(|(i, s)| {
                cells
                    .iter()
                    .map(|r| r[i].len())
                    .chain([s.algorithm.name().len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = format!("{:label_w$}", "");
        for (s, w) in self.stats.iter().zip(&col_w) {
            let _ = write!(out, "  {:>w$}", s.algorithm.name());
        }
        out.push('\n');
        for (label, row) in ROW_LABELS.iter().zip(&cells) {
            let _ = write!(out, "{label:label_w$}");
            for (c, w) in row.iter().zip(&col_w) {
                let _ = write!(out, "  {c:>w$}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn summary_csv(summaries: &[RunSummary]) -> String {
    let mut out = String::from("algorithm,image,seed,final_mae,evaluations,wall_ms\n");
    for s in summaries {
        let _ = writeln!(
            out,
            "{},{},{},{:.10},{},{}",
            s.algorithm, s.image, s.seed, s.final_mae, s.evaluations, s.wall_ms
        );
    }
    out
}

fn default_tile_size() -> String {
    "32x32".into()
}
fn default_grid() -> String {
    "80x100".into()
}
fn default_n_redu() -> usize {
    DEFAULT_N_REDU
}
fn default_algorithms() -> Vec<String> {
    vec!["cep".into(), "rii".into(), "greedy".into()]
}
fn default_max_evaluations() -> u64 {
    DEFAULT_MAX_EVALUATIONS
}
fn default_seeds() -> Vec<u64> {
    vec![1]
}
fn default_clusters() -> usize {
    DEFAULT_CLUSTERS
}
fn default_bins() -> usize {
    DEFAULT_BINS
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_log_stride() -> u64 {
    DEFAULT_LOG_STRIDE
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("bench-out")
}
fn default_reference() -> String {
    "cep".into()
}

/// Experiment description, read from TOML. Relative paths resolve against
/// the config file's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub images: Vec<PathBuf>,
    /// Tile cache file; built from `tiles` and written here when missing.
    pub cache: Option<PathBuf>,
    /// Tile directory to ingest.
    pub tiles: Option<PathBuf>,
    #[serde(default = "default_tile_size")]
    pub tile_size: String,
    #[serde(default = "default_grid")]
    pub grid: String,
    #[serde(default = "default_n_redu")]
    pub n_redu: usize,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<String>,
    #[serde(default = "default_max_evaluations")]
    pub max_evaluations: u64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_clusters")]
    pub clusters: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub cluster_seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_log_stride")]
    pub log_stride: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_reference")]
    pub reference: String,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| MosaicError::Parse {
            what: "experiment config",
            message: e.to_string(),
        })?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.images.iter_mut().for_each(resolve);
        cfg.cache.iter_mut().for_each(resolve);
        cfg.tiles.iter_mut().for_each(resolve);
        resolve(&mut cfg.out_dir);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| MosaicError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn algorithms(&self) -> Result<Vec<Algorithm>> {
        self.algorithms.iter().map(|a| a.parse()).collect()
    }
}

/// Loads the cache if present, otherwise ingests the tile directory (and
/// writes the cache when a path was given).
pub fn load_or_ingest(
    cache: Option<&Path>,
    tiles: Option<&Path>,
    tile_size: (usize, usize),
    bins: usize,
) -> Result<TileDatabase> {
    if let Some(c) = cache.filter(|c| c.exists()) {
        return TileDatabase::load_cache(c, Some(tile_size))?.with_bins(bins);
    }
    let dir = tiles.ok_or_else(|| {
        MosaicError::InvalidArgument("need an existing tile cache or a tile directory".into())
    })?;
    let ingested = ingest_tiles(dir, tile_size, bins)?;
    if let Some(c) = cache {
        ingested.db.save_cache(c)?;
    }
    Ok(ingested.db)
}

#[derive(Debug)]
pub struct ExperimentOutput {
    pub outcomes: Vec<RunOutcome>,
    pub failures: Vec<FailedCell>,
    pub report: Report,
}

fn image_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Runs a configured experiment and writes `summary.csv`, `report.csv` and
/// one `convergence_<alg>_<image>_<seed>.csv` per run into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let algorithms = cfg.algorithms()?;
    if algorithms.is_empty() || cfg.images.is_empty() || cfg.seeds.is_empty() {
        return Err(MosaicError::InvalidArgument(
            "experiment needs at least one algorithm, image and seed".into(),
        ));
    }
    let reference: Algorithm = cfg.reference.parse()?;
    let tile_size = parse_dims(&cfg.tile_size)?;
    let grid = parse_dims(&cfg.grid)?;
    let params = CellParams {
        alpha: cfg.alpha,
        budget: Budget {
            max_evaluations: cfg.max_evaluations,
            log_stride: cfg.log_stride,
        },
    };
    CepParams {
        alpha: cfg.alpha,
        budget: params.budget,
    }
    .validate()?;

    let db = Arc::new(load_or_ingest(
        cfg.cache.as_deref(),
        cfg.tiles.as_deref(),
        tile_size,
        cfg.bins,
    )?);
    let model = if algorithms.contains(&Algorithm::Cep) {
        let mut rng = rng_from_seed(cfg.cluster_seed);
        Some(kmeans(&db.histogram_vectors(), cfg.clusters, DEFAULT_MAX_ITERS, &mut rng)?)
    } else {
        None
    };

    let mut cases = Vec::new();
    let mut failures = Vec::new();
    for path in &cfg.images {
        let id = image_id(path);
        match load_image(path).and_then(|img| MosaicProblem::new(&img, db.clone(), grid, cfg.n_redu)) {
            Ok(problem) => cases.push(ImageCase { id, problem }),
            Err(e) => {
                warn!("image {} failed: {e}", path.display());
                for &alg in &algorithms {
                    for &seed in &cfg.seeds {
                        failures.push(FailedCell {
                            algorithm: alg,
                            image: id.clone(),
                            seed,
                            error: e.to_string(),
                        });
                    }
                }
            }
        }
    }
    info!(
        "running {} algorithms x {} images x {} seeds",
        algorithms.len(),
        cases.len(),
        cfg.seeds.len()
    );
    let (outcomes, cell_failures) = run_cells(&cases, &algorithms, &cfg.seeds, model.as_ref(), &params);
    failures.extend(cell_failures);

    fs::create_dir_all(&cfg.out_dir).map_err(|e| MosaicError::io(&cfg.out_dir, e))?;
    for o in &outcomes {
        let s = &o.summary;
        let path = cfg
            .out_dir
            .join(format!("convergence_{}_{}_{}.csv", s.algorithm, s.image, s.seed));
        fs::write(&path, o.log.to_csv()).map_err(|e| MosaicError::io(&path, e))?;
    }
    let summaries: Vec<RunSummary> = outcomes.iter().map(|o| o.summary.clone()).collect();
    let path = cfg.out_dir.join("summary.csv");
    fs::write(&path, summary_csv(&summaries)).map_err(|e| MosaicError::io(&path, e))?;
    let report = summarize(&summaries, reference)?;
    let path = cfg.out_dir.join("report.csv");
    fs::write(&path, report.to_csv()).map_err(|e| MosaicError::io(&path, e))?;
    Ok(ExperimentOutput {
        outcomes,
        failures,
        report,
    })
}
