#![allow(dead_code)]

use std::io::Write;
use std::sync::Arc;

use photomosaic::problem::MosaicProblem;
use photomosaic::tiledb::TileDatabase;
use photomosaic::{rng_from_seed, synthetic};
use rand::Rng;

/// Prints one result line straight to stdout so it shows even when the
/// harness captures test output.
pub fn report(criterion: u32, name: &str, pass: bool, detail: &str) {
    let line = format!(
        "[{}] criterion {criterion:>2} {name}: {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

/// A random problem with procedural tiles and blocks.
pub fn random_problem(
    seed: u64,
    grid: (usize, usize),
    tiles: usize,
    n_redu: usize,
    tile_size: (usize, usize),
) -> MosaicProblem {
    let db = Arc::new(synthetic::tile_database(seed, tiles, tile_size, 4).unwrap());
    let mut rng = rng_from_seed(seed ^ 0x5eed);
    let blocks = (0..grid.0 * grid.1)
        .map(|_| synthetic::tile_pixels(&mut rng, tile_size.0, tile_size.1))
        .collect();
    MosaicProblem::from_blocks(blocks, db, grid, n_redu).unwrap()
}

/// Random instance shape where the reuse cap binds: `n * n_redu` is close to `D`.
pub fn tight_problem(seed: u64) -> MosaicProblem {
    let mut rng = rng_from_seed(seed);
    let grid: (usize, usize) = (rng.gen_range(2..=6), rng.gen_range(2..=6));
    let d: usize = grid.0 * grid.1;
    let n_redu: usize = rng.gen_range(1..=3);
    let tiles = d.div_ceil(n_redu) + rng.gen_range(0..=2);
    random_problem(seed, grid, tiles, n_redu, (4, 4))
}

pub fn small_db(seed: u64, n: usize) -> Arc<TileDatabase> {
    Arc::new(synthetic::tile_database(seed, n, (8, 8), 15).unwrap())
}
