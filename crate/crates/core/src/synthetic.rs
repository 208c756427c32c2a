//! Deterministic procedural tiles and target images.
//!
//! Used by the benchmarks and tests when no real tile corpus is at hand.
//! Tiles are smooth gradients, blobs, soft stripes or soft edges between a
//! random color pair, with mild pixel noise;
//! targets are a simple landscape (sky, sun, hills, textured ground).

use image::{Rgb, RgbImage};
use rand::Rng;

use crate::rng_from_seed;
use crate::tiledb::TileDatabase;
use crate::Result;

fn lerp(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

fn to_byte(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn random_color<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    [rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0)]
}

/// One procedural `rows x cols` RGB tile.
pub fn tile_pixels<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Vec<u8> {
    let a = random_color(rng);
    // second color near the first most of the time, so tiles have a dominant hue
    let b = if rng.gen_bool(0.7) {
        let spread = rng.gen_range(10.0..80.0);
        [
            (a[0] + rng.gen_range(-spread..spread)).clamp(0.0, 255.0),
            (a[1] + rng.gen_range(-spread..spread)).clamp(0.0, 255.0),
            (a[2] + rng.gen_range(-spread..spread)).clamp(0.0, 255.0),
        ]
    } else {
        random_color(rng)
    };
    let kind = rng.gen_range(0..4);
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let (dx, dy) = (angle.cos(), angle.sin());
    let (cx, cy) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
    let radius = rng.gen_range(0.15..0.6);
    let freq = rng.gen_range(0.5..2.5);
    let offset = rng.gen_range(-0.3..0.3);
    let softness = rng.gen_range(0.02..0.2);
    let noise = rng.gen_range(0.0..10.0);
    let mut px = Vec::with_capacity(rows * cols * 3);
    for y in 0..rows {
        for x in 0..cols {
            let u = (x as f64 + 0.5) / cols as f64;
            let v = (y as f64 + 0.5) / rows as f64;
            let along = (u - 0.5) * dx + (v - 0.5) * dy;
            let t = match kind {
                0 => (along + 0.5).clamp(0.0, 1.0),
                1 => {
                    let d = ((u - cx).powi(2) + (v - cy).powi(2)).sqrt();
                    (d / radius).min(1.0)
                }
                2 => 0.5 + 0.5 * ((along * freq) * std::f64::consts::TAU).sin(),
                // soft edge between two regions
                _ => 1.0 / (1.0 + (-(along - offset) / softness).exp()),
            };
            let c = lerp(a, b, t);
            for ch in c {
                px.push(to_byte(ch + rng.gen_range(-noise..=noise)));
            }
        }
    }
    px
}

/// A database of `n` procedural tiles.
pub fn tile_database(seed: u64, n: usize, tile_size: (usize, usize), bins: usize) -> Result<TileDatabase> {
    let mut rng = rng_from_seed(seed);
    let tiles = (0..n)
        .map(|i| (format!("synthetic/{i:05}"), tile_pixels(&mut rng, tile_size.0, tile_size.1)))
        .collect();
    TileDatabase::from_pixels(tile_size, bins, tiles)
}

/// A `height x width` landscape with per-seed colors and layout.
pub fn landscape(seed: u64, height: u32, width: u32) -> RgbImage {
    let mut rng = rng_from_seed(seed);
    let sky_top = [rng.gen_range(20.0..90.0), rng.gen_range(60.0..140.0), rng.gen_range(150.0..255.0)];
    let sky_bottom = [rng.gen_range(180.0..255.0), rng.gen_range(150.0..230.0), rng.gen_range(120.0..220.0)];
    let sun = [255.0, rng.gen_range(200.0..250.0), rng.gen_range(60.0..160.0)];
    let hill_a = [rng.gen_range(20.0..80.0), rng.gen_range(80.0..160.0), rng.gen_range(20.0..80.0)];
    let hill_b = [rng.gen_range(60.0..140.0), rng.gen_range(50.0..110.0), rng.gen_range(20.0..60.0)];
    let ground = [rng.gen_range(90.0..160.0), rng.gen_range(70.0..120.0), rng.gen_range(30.0..80.0)];
    let (sun_x, sun_y) = (rng.gen_range(0.15..0.85), rng.gen_range(0.1..0.35));
    let sun_r = rng.gen_range(0.05..0.12);
    let phase: f64 = rng.gen_range(0.0..6.3);
    let horizon = rng.gen_range(0.45..0.6);
    let (w, h) = (f64::from(width), f64::from(height));
    RgbImage::from_fn(width, height, |x, y| {
        let u = (f64::from(x) + 0.5) / w;
        let v = (f64::from(y) + 0.5) / h;
        let far = horizon + 0.08 * (u * 7.0 + phase).sin() + 0.03 * (u * 23.0).sin();
        let near = horizon + 0.18 + 0.06 * (u * 4.0 + 2.0 * phase).cos();
        let c = if v > near {
            let t = 0.5 + 0.5 * ((u * 60.0).sin() * (v * 45.0).cos());
            lerp(ground, hill_b, 0.3 * t + 0.4 * (v - near))
        } else if v > far {
            lerp(hill_a, hill_b, (v - far) / (near - far).max(1e-6))
        } else {
            let d = ((u - sun_x).powi(2) * (w / h).powi(2) + (v - sun_y).powi(2)).sqrt();
            if d < sun_r {
                sun
            } else {
                let glow = (1.0 - (d - sun_r) / 0.3).clamp(0.0, 1.0) * 0.35;
                lerp(lerp(sky_top, sky_bottom, v / far), sun, glow)
            }
        };
        Rgb([to_byte(c[0]), to_byte(c[1]), to_byte(c[2])])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_deterministic() {
        let a = tile_database(3, 20, (8, 8), 15).unwrap();
        let b = tile_database(3, 20, (8, 8), 15).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, tile_database(4, 20, (8, 8), 15).unwrap());
        assert_eq!(landscape(1, 40, 50), landscape(1, 40, 50));
        assert_eq!(landscape(1, 40, 50).dimensions(), (50, 40));
    }
}
