//! Tile database: ingestion, color histograms and the binary cache.
//!
//! Pixels are kept as 8-bit RGB, row-major, channel-interleaved. The
//! normalized intensity of a stored byte `p` is `p / 255`, so every distance
//! computed on the bytes is exactly the distance on normalized intensities
//! scaled by 255.
//!
//! # Cache layout
//!
//! All integers little-endian.
//!
//! | field        | type                          |
//! |--------------|-------------------------------|
//! | magic        | `b"CEPTILE\0"` (8 bytes)      |
//! | version      | u32, currently 1              |
//! | tile rows    | u32                           |
//! | tile cols    | u32                           |
//! | bins         | u32 (per channel)             |
//! | n            | u32                           |
//! | n records    | see below                     |
//! | checksum     | SHA-256 of every prior byte   |
//!
//! Each record is `path_len: u32`, `path: [u8; path_len]` (UTF-8),
//! `pixels: [u8; rows*cols*3]`, `histogram: [f64; 3*bins]`.

use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::RgbImage;
use log::warn;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::{MosaicError, Result};

pub const DEFAULT_BINS: usize = 15;
pub const DEFAULT_TILE_SIZE: (usize, usize) = (32, 32);

const MAGIC: &[u8; 8] = b"CEPTILE\0";
const VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;
const HEADER_LEN: usize = 8 + 4 * 5;

/// Per-channel color histogram: `bins` bins for R, then G, then B.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    bins: usize,
    values: Vec<f64>,
}

impl Histogram {
    pub fn bins_per_channel(&self) -> usize {
        self.bins
    }

    /// The concatenated `3 * bins` vector used for clustering.
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.values[c * self.bins..(c + 1) * self.bins]
    }
}

/// Borrowed view of one tile in a [`TileDatabase`].
#[derive(Debug, Clone, Copy)]
pub struct Tile<'a> {
    pub id: usize,
    pub source_path: &'a str,
    pub pixels: &'a [u8],
}

impl Tile<'_> {
    /// Normalized intensity of the `i`-th channel value, in [0, 1].
    pub fn intensity(&self, i: usize) -> f64 {
        f64::from(self.pixels[i]) / 255.0
    }
}

/// Bin of an 8-bit value among `bins` equal-width bins over [0, 1]:
/// `floor(p / 255 * bins)`, with 1.0 folded into the last bin.
fn bin_of(p: u8, bins: usize) -> usize {
    ((usize::from(p) * bins) / 255).min(bins - 1)
}

/// Normalized per-channel histogram of an interleaved RGB pixel buffer.
pub fn compute_histogram(pixels: &[u8], bins: usize) -> Histogram {
    assert!(bins >= 1, "histogram needs at least one bin");
    assert!(
        !pixels.is_empty() && pixels.len().is_multiple_of(3),
        "pixel buffer must be non-empty RGB"
    );
    let mut counts = vec![0u64; 3 * bins];
    for px in pixels.chunks_exact(3) {
        for (c, &p) in px.iter().enumerate() {
            counts[c * bins + bin_of(p, bins)] += 1;
        }
    }
    let total = (pixels.len() / 3) as f64;
    Histogram {
        bins,
        values: counts.into_iter().map(|c| c as f64 / total).collect(),
    }
}

/// An undecodable file encountered during ingestion.
#[derive(Debug, Clone)]
pub struct SkippedFile {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug)]
pub struct Ingested {
    pub db: TileDatabase,
    pub skipped: Vec<SkippedFile>,
}

/// The immutable set of candidate tiles, aligned with their histograms.
#[derive(Debug, Clone, PartialEq)]
pub struct TileDatabase {
    tile_size: (usize, usize),
    bins: usize,
    paths: Vec<String>,
    pixels: Vec<u8>,
    histograms: Vec<Histogram>,
}

impl TileDatabase {
    /// Builds a database from already-sized RGB buffers.
    pub fn from_pixels(
        tile_size: (usize, usize),
        bins: usize,
        tiles: Vec<(String, Vec<u8>)>,
    ) -> Result<Self> {
        if bins == 0 {
            return Err(MosaicError::InvalidArgument("bins must be >= 1".into()));
        }
        if tile_size.0 == 0 || tile_size.1 == 0 {
            return Err(MosaicError::InvalidArgument(format!(
                "tile size {tile_size:?} has a zero dimension"
            )));
        }
        let len = tile_size.0 * tile_size.1 * 3;
        let mut paths = Vec::with_capacity(tiles.len());
        let mut pixels = Vec::with_capacity(tiles.len() * len);
        for (path, px) in tiles {
            if px.len() != len {
                return Err(MosaicError::InvalidArgument(format!(
                    "tile {path} has {} values, expected {len}",
                    px.len()
                )));
            }
            paths.push(path);
            pixels.extend_from_slice(&px);
        }
        let histograms = pixels
            .par_chunks_exact(len)
            .map(|px| compute_histogram(px, bins))
            .collect();
        Ok(TileDatabase {
            tile_size,
            bins,
            paths,
            pixels,
            histograms,
        })
    }

    /// Same tiles with histograms recomputed at a different bin count.
    pub fn with_bins(&self, bins: usize) -> Result<Self> {
        if bins == self.bins {
            return Ok(self.clone());
        }
        let tiles = (0..self.len())
            .map(|k| (self.paths[k].clone(), self.tile_pixels(k).to_vec()))
            .collect();
        TileDatabase::from_pixels(self.tile_size, bins, tiles)
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// `(rows, cols)` of every tile.
    pub fn tile_size(&self) -> (usize, usize) {
        self.tile_size
    }

    /// Number of channel values per tile (`rows * cols * 3`).
    pub fn values_per_tile(&self) -> usize {
        self.tile_size.0 * self.tile_size.1 * 3
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn tile(&self, id: usize) -> Tile<'_> {
        Tile {
            id,
            source_path: &self.paths[id],
            pixels: self.tile_pixels(id),
        }
    }

    pub fn tile_pixels(&self, id: usize) -> &[u8] {
        let len = self.values_per_tile();
        &self.pixels[id * len..(id + 1) * len]
    }

    pub fn histograms(&self) -> &[Histogram] {
        &self.histograms
    }

    pub fn histogram_vectors(&self) -> Vec<Vec<f64>> {
        self.histograms.iter().map(|h| h.values.clone()).collect()
    }

    pub fn save_cache(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| MosaicError::io(path, e))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.pixels.len() + CHECKSUM_LEN);
        out.extend_from_slice(MAGIC);
        for v in [
            VERSION,
            self.tile_size.0 as u32,
            self.tile_size.1 as u32,
            self.bins as u32,
            self.len() as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for k in 0..self.len() {
            let p = self.paths[k].as_bytes();
            out.extend_from_slice(&(p.len() as u32).to_le_bytes());
            out.extend_from_slice(p);
            out.extend_from_slice(self.tile_pixels(k));
            for v in &self.histograms[k].values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    /// Loads a cache file, optionally requiring a specific tile size.
    pub fn load_cache(path: &Path, expected_tile_size: Option<(usize, usize)>) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| MosaicError::io(path, e))?;
        Self::decode(&bytes, expected_tile_size)
    }

    pub fn decode(bytes: &[u8], expected_tile_size: Option<(usize, usize)>) -> Result<Self> {
        if bytes.len() < HEADER_LEN + CHECKSUM_LEN {
            return Err(MosaicError::CorruptCache(format!(
                "file is {} bytes, shorter than the {}-byte header and checksum",
                bytes.len(),
                HEADER_LEN + CHECKSUM_LEN
            )));
        }
        if &bytes[..8] != MAGIC {
            return Err(MosaicError::CorruptCache("bad magic".into()));
        }
        let (body, checksum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
        if Sha256::digest(body).as_slice() != checksum {
            return Err(MosaicError::CorruptCache("checksum mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: 8 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(MosaicError::CacheVersion {
                found: version,
                expected: VERSION,
            });
        }
        let tile_size = (r.u32()? as usize, r.u32()? as usize);
        if let Some(requested) = expected_tile_size {
            if requested != tile_size {
                return Err(MosaicError::TileSizeMismatch {
                    found: tile_size,
                    requested,
                });
            }
        }
        let bins = r.u32()? as usize;
        let n = r.u32()? as usize;
        if bins == 0 || tile_size.0 == 0 || tile_size.1 == 0 {
            return Err(MosaicError::CorruptCache("zero-sized header field".into()));
        }
        let len = tile_size.0 * tile_size.1 * 3;
        let mut paths = Vec::with_capacity(n);
        let mut pixels = Vec::with_capacity(n * len);
        let mut histograms = Vec::with_capacity(n);
        for _ in 0..n {
            let plen = r.u32()? as usize;
            let path = std::str::from_utf8(r.take(plen)?)
                .map_err(|_| MosaicError::CorruptCache("non UTF-8 tile path".into()))?;
            paths.push(path.to_owned());
            pixels.extend_from_slice(r.take(len)?);
            let values = r
                .take(3 * bins * 8)?
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                .collect();
            histograms.push(Histogram { bins, values });
        }
        if r.pos != body.len() {
            return Err(MosaicError::CorruptCache(format!(
                "{} trailing bytes after last record",
                body.len() - r.pos
            )));
        }
        Ok(TileDatabase {
            tile_size,
            bins,
            paths,
            pixels,
            histograms,
        })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| MosaicError::CorruptCache("truncated record".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| MosaicError::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| MosaicError::io(dir, e))?;
        let path = entry.path();
        let ty = entry.file_type().map_err(|e| MosaicError::io(&path, e))?;
        if ty.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Resizes an image to `(rows, cols)` with bilinear filtering.
pub fn resize_rgb(img: &RgbImage, size: (usize, usize)) -> RgbImage {
    let (rows, cols) = size;
    if img.height() as usize == rows && img.width() as usize == cols {
        return img.clone();
    }
    image::imageops::resize(img, cols as u32, rows as u32, FilterType::Triangle)
}

/// Decodes every image under `dir` (recursively, sorted by path) into a tile.
pub fn ingest_tiles(dir: &Path, tile_size: (usize, usize), bins: usize) -> Result<Ingested> {
    if !dir.is_dir() {
        return Err(MosaicError::EmptyTileDirectory(dir.to_path_buf()));
    }
    let mut files = Vec::new();
    collect_files(dir, &mut files)?;
    files.sort();

    let decoded: Vec<_> = files
        .par_iter()
        .map(|path| match image::open(path) {
            Ok(img) => Ok(resize_rgb(&img.to_rgb8(), tile_size).into_raw()),
            Err(e) => Err(e.to_string()),
        })
        .collect();

    let mut tiles = Vec::new();
    let mut skipped = Vec::new();
    for (path, result) in files.into_iter().zip(decoded) {
        match result {
            Ok(px) => tiles.push((path.to_string_lossy().into_owned(), px)),
            Err(reason) => {
                warn!("skipping {}: {reason}", path.display());
                skipped.push(SkippedFile { path, reason });
            }
        }
    }
    if tiles.is_empty() {
        return Err(MosaicError::EmptyTileDirectory(dir.to_path_buf()));
    }
    let db = TileDatabase::from_pixels(tile_size, bins, tiles)?;
    Ok(Ingested { db, skipped })
}
