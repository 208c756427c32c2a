//! The target image as a grid of blocks, the MAE fitness, and the
//! incrementally maintained assignment state.
//!
//! Grid and tile dimensions are `(rows, cols)` throughout: a grid of
//! `n_r x n_c` blocks of `m_b x n_b` pixels covers an image that is
//! `n_r * m_b` pixels high and `n_c * n_b` pixels wide.
//!
//! Fitness is tracked as integer sums of absolute 8-bit differences (SAD).
//! The MAE on normalized intensities is `sad / (255 * values_per_block)`, so
//! every comparison the optimizers make is exact.

use std::sync::Arc;

use image::RgbImage;
use rand::Rng;

use crate::sampler::FenwickSampler;
use crate::tiledb::{resize_rgb, TileDatabase};
use crate::{MosaicError, Result};

pub const DEFAULT_GRID: (usize, usize) = (80, 100);
pub const DEFAULT_N_REDU: usize = 5;

/// Sum of absolute differences between two equal-length byte buffers.
#[inline]
pub fn sad(a: &[u8], b: &[u8]) -> u64 {
    debug_assert_eq!(a.len(), b.len());
    // u32 lanes vectorize well; 4096-value chunks cannot overflow.
    a.chunks(4096)
        .zip(b.chunks(4096))
        .map(|(x, y)| {
            x.iter()
                .zip(y)
                .map(|(&p, &q)| u32::from(p.abs_diff(q)))
                .sum::<u32>() as u64
        })
        .sum()
}

/// Splits `image` into a `grid` of `tile_size` blocks, row-major, resizing
/// it first (bilinear) if it is not exactly the covered size.
pub fn partition_image(
    image: &RgbImage,
    grid: (usize, usize),
    tile_size: (usize, usize),
) -> Result<Vec<Vec<u8>>> {
    if image.width() == 0 || image.height() == 0 {
        return Err(MosaicError::InvalidArgument("target image has a zero dimension".into()));
    }
    if grid.0 == 0 || grid.1 == 0 || tile_size.0 == 0 || tile_size.1 == 0 {
        return Err(MosaicError::InvalidArgument(format!(
            "grid {grid:?} and tile size {tile_size:?} must be non-zero"
        )));
    }
    let (rows, cols) = (grid.0 * tile_size.0, grid.1 * tile_size.1);
    let img = resize_rgb(image, (rows, cols));
    let raw = img.as_raw();
    let stride = cols * 3;
    let (mb, nb) = tile_size;
    let mut blocks = Vec::with_capacity(grid.0 * grid.1);
    for r in 0..grid.0 {
        for c in 0..grid.1 {
            let mut block = Vec::with_capacity(mb * nb * 3);
            for y in 0..mb {
                let start = (r * mb + y) * stride + c * nb * 3;
                block.extend_from_slice(&raw[start..start + nb * 3]);
            }
            blocks.push(block);
        }
    }
    Ok(blocks)
}

/// Inverse of [`partition_image`] on the resized image.
pub fn reassemble_blocks<B: AsRef<[u8]>>(
    blocks: &[B],
    grid: (usize, usize),
    tile_size: (usize, usize),
) -> RgbImage {
    assert_eq!(blocks.len(), grid.0 * grid.1, "block count must match grid");
    let (mb, nb) = tile_size;
    let (rows, cols) = (grid.0 * mb, grid.1 * nb);
    let mut raw = vec![0u8; rows * cols * 3];
    let stride = cols * 3;
    for (l, block) in blocks.iter().enumerate() {
        let block = block.as_ref();
        let (r, c) = (l / grid.1, l % grid.1);
        for y in 0..mb {
            let dst = (r * mb + y) * stride + c * nb * 3;
            raw[dst..dst + nb * 3].copy_from_slice(&block[y * nb * 3..(y + 1) * nb * 3]);
        }
    }
    RgbImage::from_raw(cols as u32, rows as u32, raw).expect("buffer sized to image")
}

/// A target image partitioned against a tile database, plus the reuse cap.
#[derive(Debug, Clone)]
pub struct MosaicProblem {
    db: Arc<TileDatabase>,
    grid: (usize, usize),
    n_redu: usize,
    blocks: Vec<u8>,
}

impl MosaicProblem {
    pub fn new(
        image: &RgbImage,
        db: Arc<TileDatabase>,
        grid: (usize, usize),
        n_redu: usize,
    ) -> Result<Self> {
        let blocks = partition_image(image, grid, db.tile_size())?;
        Self::from_blocks(blocks, db, grid, n_redu)
    }

    pub fn from_blocks(
        blocks: Vec<Vec<u8>>,
        db: Arc<TileDatabase>,
        grid: (usize, usize),
        n_redu: usize,
    ) -> Result<Self> {
        if n_redu == 0 {
            return Err(MosaicError::InvalidArgument("n_redu must be >= 1".into()));
        }
        if grid.0 == 0 || grid.1 == 0 {
            return Err(MosaicError::InvalidArgument(format!("grid {grid:?} has a zero dimension")));
        }
        let d = grid.0 * grid.1;
        if blocks.len() != d {
            return Err(MosaicError::InvalidArgument(format!(
                "{} blocks for a {}x{} grid",
                blocks.len(),
                grid.0,
                grid.1
            )));
        }
        let len = db.values_per_tile();
        if let Some(b) = blocks.iter().find(|b| b.len() != len) {
            return Err(MosaicError::InvalidArgument(format!(
                "block has {} values, tiles have {len}",
                b.len()
            )));
        }
        if db.len().saturating_mul(n_redu) < d {
            return Err(MosaicError::Infeasible {
                tiles: db.len(),
                n_redu,
                blocks: d,
            });
        }
        Ok(MosaicProblem {
            db,
            grid,
            n_redu,
            blocks: blocks.concat(),
        })
    }

    pub fn db(&self) -> &Arc<TileDatabase> {
        &self.db
    }

    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }

    /// Number of blocks `D = n_r * n_c`.
    pub fn num_blocks(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    pub fn num_tiles(&self) -> usize {
        self.db.len()
    }

    pub fn n_redu(&self) -> usize {
        self.n_redu
    }

    pub fn tile_size(&self) -> (usize, usize) {
        self.db.tile_size()
    }

    /// `(height, width)` in pixels of the covered image.
    pub fn image_size(&self) -> (usize, usize) {
        let (mb, nb) = self.tile_size();
        (self.grid.0 * mb, self.grid.1 * nb)
    }

    pub fn block(&self, l: usize) -> &[u8] {
        let len = self.db.values_per_tile();
        &self.blocks[l * len..(l + 1) * len]
    }

    /// The resized target image the blocks were cut from.
    pub fn target_image(&self) -> RgbImage {
        let len = self.db.values_per_tile();
        let blocks: Vec<&[u8]> = self.blocks.chunks_exact(len).collect();
        reassemble_blocks(&blocks, self.grid, self.tile_size())
    }

    /// Divisor turning a block SAD into an MAE in [0, 1].
    pub fn sad_scale(&self) -> f64 {
        255.0 * self.db.values_per_tile() as f64
    }

    /// Unchecked SAD between block `l` and tile `k`; panics when out of range.
    #[inline]
    pub fn block_tile_sad(&self, l: usize, k: usize) -> u64 {
        sad(self.block(l), self.db.tile_pixels(k))
    }

    /// Mean absolute error between block `l` and tile `k` on intensities in [0, 1].
    pub fn block_tile_mae(&self, l: usize, k: usize) -> Result<f64> {
        if l >= self.num_blocks() {
            return Err(MosaicError::OutOfRange {
                index: l,
                len: self.num_blocks(),
            });
        }
        if k >= self.num_tiles() {
            return Err(MosaicError::OutOfRange {
                index: k,
                len: self.num_tiles(),
            });
        }
        Ok(self.block_tile_sad(l, k) as f64 / self.sad_scale())
    }
}

/// A decision vector with its cached usage counts and per-block fitness.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    x: Vec<usize>,
    usage: Vec<u32>,
    sampler: FenwickSampler,
    n_redu: u32,
    scale: f64,
}

impl Assignment {
    /// Builds the cached state for `x`, computing one SAD per block.
    pub fn new(problem: &MosaicProblem, x: Vec<usize>) -> Result<Self> {
        let d = problem.num_blocks();
        if x.len() != d {
            return Err(MosaicError::InvalidArgument(format!(
                "assignment has {} entries, problem has {d} blocks",
                x.len()
            )));
        }
        let n = problem.num_tiles();
        let mut usage = vec![0u32; n];
        for &k in &x {
            if k >= n {
                return Err(MosaicError::OutOfRange { index: k, len: n });
            }
            usage[k] += 1;
            if usage[k] as usize > problem.n_redu() {
                return Err(MosaicError::InvalidArgument(format!(
                    "tile {k} used more than n_redu = {} times",
                    problem.n_redu()
                )));
            }
        }
        let sads: Vec<u64> = x
            .iter()
            .enumerate()
            .map(|(l, &k)| problem.block_tile_sad(l, k))
            .collect();
        Ok(Assignment {
            x,
            usage,
            sampler: FenwickSampler::new(&sads),
            n_redu: problem.n_redu() as u32,
            scale: problem.sad_scale(),
        })
    }

    pub fn tiles(&self) -> &[usize] {
        &self.x
    }

    pub fn tile_at(&self, l: usize) -> usize {
        self.x[l]
    }

    pub fn usage(&self) -> &[u32] {
        &self.usage
    }

    pub fn is_available(&self, k: usize) -> bool {
        self.usage[k] < self.n_redu
    }

    pub fn num_blocks(&self) -> usize {
        self.x.len()
    }

    pub fn block_sad(&self, l: usize) -> u64 {
        self.sampler.weight(l)
    }

    pub fn total_sad(&self) -> u64 {
        self.sampler.total()
    }

    pub fn per_block_fitness(&self, l: usize) -> f64 {
        self.block_sad(l) as f64 / self.scale
    }

    /// `sum_l fitness(l, x_l)`.
    pub fn fitness_sum(&self) -> f64 {
        self.total_sad() as f64 / self.scale
    }

    /// Mean per-block MAE: the minimization objective.
    pub fn overall_fitness(&self) -> f64 {
        self.fitness_sum() / self.x.len() as f64
    }

    /// Whether block `l` fits strictly better than the current average.
    pub fn beats_average(&self, l: usize) -> bool {
        // fitness(l) < sum / D, cross-multiplied to stay in integers
        u128::from(self.block_sad(l)) * (self.x.len() as u128) < u128::from(self.total_sad())
    }

    /// Roulette draw of a block index, proportional to its fitness.
    /// `None` when every block already matches exactly.
    pub fn weighted_block_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<usize> {
        self.sampler.sample(rng)
    }

    /// Replaces the tile at block `g` by `k`, whose SAD against the block is
    /// `new_sad` and strictly smaller than the current one.
    pub fn apply_mutation(&mut self, g: usize, k: usize, new_sad: u64) {
        assert!(self.usage[k] < self.n_redu, "tile {k} is at its reuse cap");
        assert!(new_sad < self.block_sad(g), "mutation must strictly improve block {g}");
        let old = self.x[g];
        self.usage[old] -= 1;
        self.usage[k] += 1;
        self.x[g] = k;
        self.sampler.set(g, new_sad);
    }

    /// Recounts usage and recomputes every block's SAD from scratch,
    /// reporting the first disagreement with the cached state.
    pub fn verify(&self, problem: &MosaicProblem) -> std::result::Result<(), String> {
        let fresh = Assignment::new(problem, self.x.clone()).map_err(|e| e.to_string())?;
        if fresh.usage != self.usage {
            return Err("usage counts disagree with a recount".into());
        }
        if fresh.sampler.weights() != self.sampler.weights() {
            return Err("per-block fitness disagrees with a recompute".into());
        }
        if fresh.total_sad() != self.total_sad() {
            return Err("fitness sum disagrees with a recompute".into());
        }
        if fresh.sampler != self.sampler {
            return Err("sampler tree disagrees with a rebuild".into());
        }
        Ok(())
    }
}
