//! Library-level pipeline: experiment config, oracle cross-check, caches.

mod common;

use std::path::Path;

use common::{random_problem, small_db};
use photomosaic::bench::{run_experiment, ExperimentConfig};
use photomosaic::optimizers::{exhaustive_oracle, greedy_solve, Algorithm};
use photomosaic::problem::MosaicProblem;
use photomosaic::tiledb::TileDatabase;
use photomosaic::{rng_from_seed, synthetic};
use rand::Rng;

/// Minimum-cost perfect matching on a square matrix (Hungarian method with
/// potentials), returning the total cost.
fn hungarian(cost: &[Vec<i64>]) -> i64 {
    let n = cost.len();
    let inf = i64::MAX / 4;
    let (mut u, mut v) = (vec![0i64; n + 1], vec![0i64; n + 1]);
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    -v[0]
}

#[test]
fn oracle_matches_hungarian_when_each_tile_is_used_once() {
    for seed in 0..20u64 {
        let mut rng = rng_from_seed(seed);
        let d = rng.gen_range(2..=9);
        let grid = if d % 3 == 0 { (3, d / 3) } else { (1, d) };
        let problem = random_problem(seed, grid, d, 1, (4, 4));
        let cost: Vec<Vec<i64>> = (0..d)
            .map(|l| (0..d).map(|k| problem.block_tile_sad(l, k) as i64).collect())
            .collect();
        let oracle = exhaustive_oracle(&problem).unwrap();
        assert_eq!(oracle.total_sad() as i64, hungarian(&cost), "seed {seed}");
        // with n_redu = 1 and D = n the greedy result is a permutation
        let g = greedy_solve(&problem).unwrap();
        assert!(g.assignment.total_sad() >= oracle.total_sad());
    }
}

#[test]
fn hungarian_sanity() {
    assert_eq!(hungarian(&[vec![4, 1, 3], vec![2, 0, 5], vec![3, 2, 2]]), 5);
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("experiment.toml");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn experiment_runs_every_cell_and_writes_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    synthetic::tile_database(4, 40, (8, 8), 15)
        .unwrap()
        .save_cache(&tmp.path().join("tiles.cache"))
        .unwrap();
    for i in 0..3 {
        synthetic::landscape(i, 32, 40)
            .save(tmp.path().join(format!("img{i}.png")))
            .unwrap();
    }
    let cfg_path = write_config(
        tmp.path(),
        r#"
images = ["img0.png", "img1.png", "img2.png"]
cache = "tiles.cache"
tile_size = "8x8"
grid = "4x5"
n_redu = 2
algorithms = ["cep", "rii"]
max_evaluations = 3000
seeds = [5]
clusters = 4
out_dir = "out"
"#,
    );
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    let out = run_experiment(&cfg).unwrap();
    assert!(out.failures.is_empty());
    assert_eq!(out.outcomes.len(), 6);
    let out_dir = tmp.path().join("out");
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 7);
    assert!(out_dir.join("report.csv").exists());
    for alg in ["cep", "rii"] {
        for i in 0..3 {
            let log = out_dir.join(format!("convergence_{alg}_img{i}_5.csv"));
            assert!(log.exists(), "{}", log.display());
        }
    }
    for o in &out.outcomes {
        assert!(o.log.is_monotone());
        assert!(o.summary.evaluations <= 3000);
    }
}

#[test]
fn unreadable_image_is_reported_and_the_rest_still_runs() {
    let tmp = tempfile::tempdir().unwrap();
    synthetic::tile_database(4, 40, (8, 8), 15)
        .unwrap()
        .save_cache(&tmp.path().join("tiles.cache"))
        .unwrap();
    synthetic::landscape(1, 32, 40).save(tmp.path().join("good.png")).unwrap();
    std::fs::write(tmp.path().join("bad.png"), b"not a png").unwrap();
    let cfg_path = write_config(
        tmp.path(),
        r#"
images = ["good.png", "bad.png"]
cache = "tiles.cache"
tile_size = "8x8"
grid = "4x5"
n_redu = 2
algorithms = ["rii", "greedy"]
max_evaluations = 1000
seeds = [1, 2]
out_dir = "out"
reference = "greedy"
"#,
    );
    let out = run_experiment(&ExperimentConfig::load(&cfg_path).unwrap()).unwrap();
    assert_eq!(out.failures.len(), 4);
    assert!(out.failures.iter().all(|f| f.image == "bad"));
    assert_eq!(out.outcomes.len(), 4);
    assert!(out.outcomes.iter().all(|o| o.summary.image == "good"));
    let greedy: Vec<f64> = out
        .outcomes
        .iter()
        .filter(|o| o.summary.algorithm == Algorithm::Greedy)
        .map(|o| o.summary.final_mae)
        .collect();
    assert_eq!(greedy.len(), 2);
    assert_eq!(greedy[0], greedy[1]);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let err = ExperimentConfig::from_toml("images = []\nbudget = 3\n", Path::new(".")).unwrap_err();
    assert!(err.to_string().contains("budget"), "{err}");
}

#[test]
fn cache_round_trip_through_disk_feeds_the_same_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let db = small_db(8, 25);
    let path = tmp.path().join("c.bin");
    db.save_cache(&path).unwrap();
    let loaded = TileDatabase::load_cache(&path, Some((8, 8))).unwrap();
    assert_eq!(&loaded, db.as_ref());
    let img = synthetic::landscape(3, 40, 40);
    let a = MosaicProblem::new(&img, db, (5, 5), 1).unwrap();
    let b = MosaicProblem::new(&img, std::sync::Arc::new(loaded), (5, 5), 1).unwrap();
    let (ga, gb) = (greedy_solve(&a).unwrap(), greedy_solve(&b).unwrap());
    assert_eq!(ga.assignment.tiles(), gb.assignment.tiles());
}
