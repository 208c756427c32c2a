//! Photomosaic composition under a tile reuse cap.
//!
//! The pipeline is: ingest a tile directory into a [`tiledb::TileDatabase`],
//! cluster tile color histograms with K-means ([`clustering`]), partition a
//! target image into a [`problem::MosaicProblem`], solve the constrained
//! assignment with one of the [`optimizers`], and [`render`] the result.
//! The [`bench`] module runs multi-seed experiments and significance tests.

pub mod bench;
pub mod cli;
pub mod clustering;
mod error;
pub mod optimizers;
pub mod problem;
pub mod render;
pub mod sampler;
pub mod synthetic;
pub mod tiledb;

pub use error::{MosaicError, Result};

/// Random generator used everywhere a seed is accepted.
///
/// ChaCha8 seeded through `SeedableRng::seed_from_u64`, so a single `u64`
/// seed reproduces a run bit for bit across platforms.
pub type MosaicRng = rand_chacha::ChaCha8Rng;

/// Builds the crate's generator from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> MosaicRng {
    use rand::SeedableRng;
    MosaicRng::seed_from_u64(seed)
}

/// Parses `"32x32"`-style dimension pairs (rows x columns).
pub fn parse_dims(text: &str) -> Result<(usize, usize)> {
    let (a, b) = text
        .split_once(['x', 'X'])
        .ok_or_else(|| MosaicError::InvalidArgument(format!("expected AxB, got {text:?}")))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| MosaicError::InvalidArgument(format!("bad dimension {s:?} in {text:?}")))
    };
    Ok((parse(a)?, parse(b)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims() {
        assert_eq!(parse_dims("80x100").unwrap(), (80, 100));
        assert_eq!(parse_dims("32X16").unwrap(), (32, 16));
        assert!(parse_dims("80").is_err());
        assert!(parse_dims("ax3").is_err());
    }
}
