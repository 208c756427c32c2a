//! End-to-end runs of the `photomosaic` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use photomosaic::render::read_solution;
use photomosaic::tiledb::TileDatabase;
use photomosaic::{rng_from_seed, synthetic};
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_photomosaic"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A directory of `n` procedural PNG tiles plus one non-image file.
fn tile_dir(root: &Path, n: usize, size: u32) -> PathBuf {
    let dir = root.join("tiles");
    std::fs::create_dir_all(dir.join("nested")).unwrap();
    let mut rng = rng_from_seed(11);
    for i in 0..n {
        let px = synthetic::tile_pixels(&mut rng, size as usize, size as usize);
        let img = image::RgbImage::from_raw(size, size, px).unwrap();
        let sub = if i % 2 == 0 { dir.clone() } else { dir.join("nested") };
        img.save(sub.join(format!("tile{i:03}.png"))).unwrap();
    }
    std::fs::write(dir.join("README.txt"), "not an image").unwrap();
    dir
}

fn target(root: &Path, w: u32, h: u32) -> PathBuf {
    let p = root.join("target.png");
    synthetic::landscape(5, h, w).save(&p).unwrap();
    p
}

#[test]
fn ingest_counts_tiles_and_skips_non_images() {
    let tmp = TempDir::new().unwrap();
    let dir = tile_dir(tmp.path(), 2, 8);
    let cache = tmp.path().join("tiles.cache");
    let out = run(&["ingest", "--tiles", path_str(&dir), "--tile-size", "8x8", "--cache", path_str(&cache)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("tiles: 2"), "{stdout}");
    assert!(stdout.contains("skipped: 1"), "{stdout}");
    assert!(stdout.contains("tile_size = 8x8"), "{stdout}");
    assert_eq!(TileDatabase::load_cache(&cache, Some((8, 8))).unwrap().len(), 2);
}

#[test]
fn ingest_cluster_solve_render() {
    let tmp = TempDir::new().unwrap();
    let dir = tile_dir(tmp.path(), 12, 8);
    let cache = tmp.path().join("tiles.cache");
    let model = tmp.path().join("clusters.txt");
    let image = target(tmp.path(), 40, 32);
    let (mosaic, log, solution) = (
        tmp.path().join("mosaic.png"),
        tmp.path().join("log.csv"),
        tmp.path().join("solution.txt"),
    );
    assert!(run(&["ingest", "--tiles", path_str(&dir), "--tile-size", "8x8", "--cache", path_str(&cache)])
        .status
        .success());
    let out = run(&["cluster", "--cache", path_str(&cache), "--clusters", "3", "--out", path_str(&model)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_to_string(&model).unwrap().starts_with("kmeans 3 12"));

    let out = run(&[
        "solve", "--image", path_str(&image), "--cache", path_str(&cache),
        "--clusters-model", path_str(&model), "--grid", "4x5", "--tile-size", "8x8",
        "--nredu", "2", "--max-evals", "2000", "--log-stride", "100", "--seed", "3",
        "--out-image", path_str(&mosaic), "--out-log", path_str(&log),
        "--out-solution", path_str(&solution),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    for key in ["grid = 4x5", "nredu = 2", "alpha = 0.75", "algorithm = cep", "seed = 3", "fitness:"] {
        assert!(stdout.contains(key), "missing {key:?} in {stdout}");
    }
    let img = image::open(&mosaic).unwrap();
    assert_eq!((img.width(), img.height()), (40, 32));
    let csv = std::fs::read_to_string(&log).unwrap();
    assert!(csv.starts_with("evaluations,fitness,wall_ms\n"));
    let ((rows, cols), tiles) = read_solution(&solution).unwrap();
    assert_eq!((rows, cols, tiles.len()), (4, 5, 20));
    for k in 0..12 {
        assert!(tiles.iter().filter(|&&t| t == k).count() <= 2);
    }

    let rerendered = tmp.path().join("again.png");
    let out = run(&[
        "render", "--image", path_str(&image), "--cache", path_str(&cache),
        "--solution", path_str(&solution), "--nredu", "2", "--out", path_str(&rerendered),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(image::open(&rerendered).unwrap(), img);
}

#[test]
fn repeated_solves_write_identical_solutions() {
    let tmp = TempDir::new().unwrap();
    let cache = tmp.path().join("tiles.cache");
    synthetic::tile_database(2, 30, (8, 8), 15).unwrap().save_cache(&cache).unwrap();
    let image = target(tmp.path(), 48, 32);
    for alg in ["cep", "rii", "greedy"] {
        let mut texts = Vec::new();
        for run_id in 0..2 {
            let sol = tmp.path().join(format!("{alg}{run_id}.txt"));
            let out = run(&[
                "solve", "--image", path_str(&image), "--cache", path_str(&cache),
                "--clusters", "4", "--grid", "4x6", "--tile-size", "8x8", "--nredu", "1",
                "--max-evals", "3000", "--algorithm", alg, "--seed", "9",
                "--out-solution", path_str(&sol),
            ]);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            texts.push(std::fs::read(&sol).unwrap());
        }
        assert_eq!(texts[0], texts[1], "{alg} solutions differ");
    }
}

#[test]
fn default_grid_renders_at_full_size() {
    let tmp = TempDir::new().unwrap();
    let cache = tmp.path().join("tiles.cache");
    synthetic::tile_database(3, 1600, (32, 32), 15).unwrap().save_cache(&cache).unwrap();
    let image = target(tmp.path(), 100, 80);
    let mosaic = tmp.path().join("mosaic.png");
    let out = run(&[
        "solve", "--image", path_str(&image), "--cache", path_str(&cache),
        "--grid", "80x100", "--tile-size", "32x32", "--algorithm", "rii",
        "--max-evals", "20000", "--out-image", path_str(&mosaic),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let img = image::open(&mosaic).unwrap();
    assert_eq!((img.width(), img.height()), (3200, 2560));
}

#[test]
fn domain_errors_exit_one() {
    let tmp = TempDir::new().unwrap();
    let cache = tmp.path().join("tiles.cache");
    synthetic::tile_database(2, 10, (8, 8), 15).unwrap().save_cache(&cache).unwrap();
    let image = target(tmp.path(), 16, 16);
    let common = ["solve", "--image", path_str(&image), "--cache", path_str(&cache), "--grid", "2x2"];
    let base = [&common[..], &["--tile-size", "8x8"]].concat();

    let out = run(&[&base[..], &["--nredu", "0"]].concat());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nredu"));

    // 10 tiles cannot cover 16 blocks once each
    let out = run(&["solve", "--image", path_str(&image), "--cache", path_str(&cache), "--grid", "4x4", "--tile-size", "8x8", "--nredu", "1"]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&[&common[..], &["--tile-size", "16x16"]].concat());
    assert_eq!(out.status.code(), Some(1), "tile size mismatch with the cache");

    let out = run(&[&base[..], &["--alpha", "1.5"]].concat());
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["solve", "--image", path_str(&image)]);
    assert_eq!(out.status.code(), Some(2), "missing --cache is a usage error");
}

#[test]
fn empty_tile_directory_is_an_error() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("empty");
    std::fs::create_dir(&dir).unwrap();
    let cache = tmp.path().join("c");
    let out = run(&["ingest", "--tiles", path_str(&dir), "--cache", path_str(&cache)]);
    assert_eq!(out.status.code(), Some(1));
}
