//! Desk-scale comparison on procedural data: one 640x800 target, a 20x25
//! grid of 32x32 blocks, 1000 tiles, n_redu = 5, 2e5 evaluations, 30 seeds.
//!
//! cargo run --release --example desk_scale [TILE_SEED [IMAGE_SEED]]

use std::sync::Arc;

use photomosaic::bench::{median, run_cells, summarize, CellParams, ImageCase};
use photomosaic::clustering::kmeans;
use photomosaic::optimizers::{Algorithm, Budget};
use photomosaic::problem::MosaicProblem;
use photomosaic::{rng_from_seed, synthetic};

fn main() -> photomosaic::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<u64>().expect("numeric seed"));
    let tile_seed = args.next().unwrap_or(2024);
    let image_seed = args.next().unwrap_or(7);
    let db = Arc::new(synthetic::tile_database(tile_seed, 1000, (32, 32), 15)?);
    let target = synthetic::landscape(image_seed, 640, 800);
    let problem = MosaicProblem::new(&target, db.clone(), (20, 25), 5)?;
    let model = kmeans(&db.histogram_vectors(), 90, 100, &mut rng_from_seed(0))?;
    let cases = [ImageCase { id: "landscape".into(), problem }];
    let seeds: Vec<u64> = (1..=30).collect();
    let params = CellParams {
        alpha: 0.75,
        budget: Budget {
            max_evaluations: 200_000,
            log_stride: 1000,
        },
    };
    let algorithms = [Algorithm::Cep, Algorithm::Rii, Algorithm::Greedy];
    let (outcomes, failures) = run_cells(&cases, &algorithms, &seeds, Some(&model), &params);
    assert!(failures.is_empty());
    let summaries: Vec<_> = outcomes.iter().map(|o| o.summary.clone()).collect();
    for alg in algorithms {
        let maes: Vec<f64> = summaries.iter().filter(|s| s.algorithm == alg).map(|s| s.final_mae).collect();
        println!("{alg}: median {:.5}", median(&maes));
    }
    print!("{}", summarize(&summaries, Algorithm::Cep)?.to_text());
    Ok(())
}
