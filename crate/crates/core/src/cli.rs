//! Command-line front end.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};

use crate::bench::{run_experiment, summary_csv, ExperimentConfig};
use crate::clustering::{kmeans, ClusterModel, DEFAULT_CLUSTERS, DEFAULT_MAX_ITERS};
use crate::optimizers::{
    cep_solve, greedy_solve, rii_solve, Algorithm, Budget, CepParams, DEFAULT_ALPHA,
    DEFAULT_LOG_STRIDE, DEFAULT_MAX_EVALUATIONS,
};
use crate::problem::{Assignment, MosaicProblem, DEFAULT_N_REDU};
use crate::render::{load_image, read_solution, render, save_image, write_solution};
use crate::tiledb::{ingest_tiles, TileDatabase, DEFAULT_BINS};
use crate::{parse_dims, rng_from_seed, MosaicError, Result};

#[derive(Debug, Parser)]
#[command(name = "photomosaic", version, about = "Photomosaic composition under a tile reuse cap")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decode a tile directory into a binary cache.
    Ingest {
        #[arg(long)]
        tiles: PathBuf,
        #[arg(long, default_value = "32x32")]
        tile_size: String,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        #[arg(long)]
        cache: PathBuf,
    },
    /// Cluster cached tiles by color histogram.
    Cluster {
        #[arg(long)]
        cache: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CLUSTERS)]
        clusters: usize,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
        max_iters: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve one target image and write the mosaic, solution and log.
    Solve {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        /// Cluster model from `cluster`; fitted on the fly when omitted.
        #[arg(long)]
        clusters_model: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_CLUSTERS)]
        clusters: usize,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        /// Block rows x block columns.
        #[arg(long, default_value = "80x100")]
        grid: String,
        #[arg(long, default_value = "32x32")]
        tile_size: String,
        #[arg(long, default_value_t = DEFAULT_N_REDU)]
        nredu: usize,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_EVALUATIONS)]
        max_evals: u64,
        #[arg(long, default_value_t = DEFAULT_LOG_STRIDE)]
        log_stride: u64,
        #[arg(long, default_value = "cep")]
        algorithm: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_image: Option<PathBuf>,
        #[arg(long)]
        out_log: Option<PathBuf>,
        #[arg(long)]
        out_solution: Option<PathBuf>,
    },
    /// Render a saved solution.
    Render {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        solution: PathBuf,
        #[arg(long, default_value_t = DEFAULT_N_REDU)]
        nredu: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a TOML-described experiment.
    Bench {
        #[arg(long)]
        config: PathBuf,
    },
}

fn print_params(command: &str, params: &[(&str, String)]) {
    println!("{command}:");
    for (k, v) in params {
        println!("  {k} = {v}");
    }
}

fn load_db(cache: &Path, tile_size: Option<(usize, usize)>, bins: usize) -> Result<Arc<TileDatabase>> {
    Ok(Arc::new(TileDatabase::load_cache(cache, tile_size)?.with_bins(bins)?))
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            tiles,
            tile_size,
            bins,
            cache,
        } => {
            let size = parse_dims(&tile_size)?;
            print_params(
                "ingest",
                &[
                    ("tiles", tiles.display().to_string()),
                    ("tile_size", format!("{}x{}", size.0, size.1)),
                    ("bins", bins.to_string()),
                    ("cache", cache.display().to_string()),
                ],
            );
            let ingested = ingest_tiles(&tiles, size, bins)?;
            ingested.db.save_cache(&cache)?;
            println!("tiles: {}", ingested.db.len());
            println!("skipped: {}", ingested.skipped.len());
            for s in &ingested.skipped {
                println!("  {}: {}", s.path.display(), s.reason);
            }
        }
        Command::Cluster {
            cache,
            clusters,
            bins,
            seed,
            max_iters,
            out,
        } => {
            print_params(
                "cluster",
                &[
                    ("cache", cache.display().to_string()),
                    ("clusters", clusters.to_string()),
                    ("bins", bins.to_string()),
                    ("seed", seed.to_string()),
                    ("max_iters", max_iters.to_string()),
                    ("out", out.display().to_string()),
                ],
            );
            let db = load_db(&cache, None, bins)?;
            let model = kmeans(&db.histogram_vectors(), clusters, max_iters, &mut rng_from_seed(seed))?;
            model.save(&out)?;
            println!("inertia: {:.6}", model.inertia());
        }
        Command::Solve {
            image,
            cache,
            clusters_model,
            clusters,
            bins,
            grid,
            tile_size,
            nredu,
            alpha,
            max_evals,
            log_stride,
            algorithm,
            seed,
            out_image,
            out_log,
            out_solution,
        } => {
            let grid = parse_dims(&grid)?;
            let size = parse_dims(&tile_size)?;
            let algorithm: Algorithm = algorithm.parse()?;
            if nredu == 0 {
                return Err(MosaicError::InvalidArgument("--nredu must be >= 1".into()));
            }
            let params = CepParams {
                alpha,
                budget: Budget {
                    max_evaluations: max_evals,
                    log_stride,
                },
            };
            params.validate()?;
            print_params(
                "solve",
                &[
                    ("image", image.display().to_string()),
                    ("cache", cache.display().to_string()),
                    (
                        "clusters_model",
                        clusters_model
                            .as_ref()
                            .map_or("(fit)".into(), |p| p.display().to_string()),
                    ),
                    ("clusters", clusters.to_string()),
                    ("bins", bins.to_string()),
                    ("grid", format!("{}x{}", grid.0, grid.1)),
                    ("tile_size", format!("{}x{}", size.0, size.1)),
                    ("nredu", nredu.to_string()),
                    ("alpha", alpha.to_string()),
                    ("max_evals", max_evals.to_string()),
                    ("log_stride", log_stride.to_string()),
                    ("algorithm", algorithm.to_string()),
                    ("seed", seed.to_string()),
                    ("rng", "ChaCha8 (seed_from_u64)".into()),
                ],
            );
            let db = load_db(&cache, Some(size), bins)?;
            let target = load_image(&image)?;
            let problem = MosaicProblem::new(&target, db.clone(), grid, nredu)?;
            let mut rng = rng_from_seed(seed);
            let result = match algorithm {
                Algorithm::Cep => {
                    let points = db.histogram_vectors();
                    let model = match &clusters_model {
                        Some(p) => ClusterModel::load(p, &points)?,
                        None => kmeans(&points, clusters, DEFAULT_MAX_ITERS, &mut rng_from_seed(seed))?,
                    };
                    cep_solve(&problem, &model, &params, &mut rng)?
                }
                Algorithm::Rii => rii_solve(&problem, &params.budget, &mut rng)?,
                Algorithm::Greedy => greedy_solve(&problem)?,
            };
            println!("fitness: {:.6}", result.overall_fitness());
            println!("evaluations: {}", result.evaluations_used);
            println!("wall_ms: {}", result.wall_time.as_millis());
            if let Some(p) = &out_image {
                save_image(&render(&problem, &result.assignment), p)?;
            }
            if let Some(p) = &out_log {
                std::fs::write(p, result.log.to_csv()).map_err(|e| MosaicError::io(p, e))?;
            }
            if let Some(p) = &out_solution {
                write_solution(p, grid, result.assignment.tiles())?;
            }
        }
        Command::Render {
            image,
            cache,
            solution,
            nredu,
            out,
        } => {
            print_params(
                "render",
                &[
                    ("image", image.display().to_string()),
                    ("cache", cache.display().to_string()),
                    ("solution", solution.display().to_string()),
                    ("nredu", nredu.to_string()),
                    ("out", out.display().to_string()),
                ],
            );
            let (grid, tiles) = read_solution(&solution)?;
            let db = load_db(&cache, None, DEFAULT_BINS)?;
            let problem = MosaicProblem::new(&load_image(&image)?, db, grid, nredu)?;
            let assignment = Assignment::new(&problem, tiles)?;
            save_image(&render(&problem, &assignment), &out)?;
            println!("fitness: {:.6}", assignment.overall_fitness());
        }
        Command::Bench { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            print_params("bench", &[("config", format!("{cfg:#?}"))]);
            let out = run_experiment(&cfg)?;
            for f in &out.failures {
                eprintln!("failed: {} {} seed {}: {}", f.algorithm, f.image, f.seed, f.error);
            }
            let summaries: Vec<_> = out.outcomes.iter().map(|o| o.summary.clone()).collect();
            print!("{}", summary_csv(&summaries));
            println!();
            print!("{}", out.report.to_text());
        }
    }
    Ok(())
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
