//! Mosaic composition and the plain-text solution format.
//!
//! A solution file holds `n_r n_c` on its first line, then the `D` tile ids
//! in row-major block order, one grid row per line, space separated.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use image::RgbImage;

use crate::problem::{Assignment, MosaicProblem};
use crate::{MosaicError, Result};

/// Composes the mosaic: block `(r, c)` is replaced by the pixels of its tile.
pub fn render(problem: &MosaicProblem, assignment: &Assignment) -> RgbImage {
    render_tiles(problem, assignment.tiles())
}

pub fn render_tiles(problem: &MosaicProblem, tiles: &[usize]) -> RgbImage {
    assert_eq!(tiles.len(), problem.num_blocks(), "one tile per block");
    let db = problem.db();
    let blocks: Vec<&[u8]> = tiles.iter().map(|&k| db.tile_pixels(k)).collect();
    crate::problem::reassemble_blocks(&blocks, problem.grid(), problem.tile_size())
}

/// Writes PNG or JPEG depending on the extension.
pub fn save_image(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|e| MosaicError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn load_image(path: &Path) -> Result<RgbImage> {
    image::open(path)
        .map(|img| img.to_rgb8())
        .map_err(|e| MosaicError::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

/// MAE between two equally sized images on intensities normalized to [0, 1].
pub fn image_mae(a: &RgbImage, b: &RgbImage) -> f64 {
    assert_eq!(a.dimensions(), b.dimensions(), "images must match in size");
    let total: u64 = a
        .as_raw()
        .iter()
        .zip(b.as_raw())
        .map(|(&p, &q)| u64::from(p.abs_diff(q)))
        .sum();
    total as f64 / (255.0 * a.as_raw().len() as f64)
}

pub fn solution_text(grid: (usize, usize), tiles: &[usize]) -> String {
    let mut out = format!("{} {}\n", grid.0, grid.1);
    for row in tiles.chunks(grid.1) {
        let line: Vec<String> = row.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

pub fn parse_solution(text: &str) -> Result<((usize, usize), Vec<usize>)> {
    let bad = |message: String| MosaicError::Parse {
        what: "solution",
        message,
    };
    let mut tokens = text.split_whitespace().map(|t| {
        t.parse::<usize>()
            .map_err(|e| bad(format!("token {t:?}: {e}")))
    });
    let rows = tokens.next().ok_or_else(|| bad("empty file".into()))??;
    let cols = tokens.next().ok_or_else(|| bad("missing column count".into()))??;
    let tiles = tokens.collect::<Result<Vec<_>>>()?;
    if tiles.len() != rows * cols {
        return Err(bad(format!(
            "{} tile ids for a {rows}x{cols} grid",
            tiles.len()
        )));
    }
    Ok(((rows, cols), tiles))
}

pub fn write_solution(path: &Path, grid: (usize, usize), tiles: &[usize]) -> Result<()> {
    fs::write(path, solution_text(grid, tiles)).map_err(|e| MosaicError::io(path, e))
}

pub fn read_solution(path: &Path) -> Result<((usize, usize), Vec<usize>)> {
    let text = fs::read_to_string(path).map_err(|e| MosaicError::io(path, e))?;
    parse_solution(&text)
}
