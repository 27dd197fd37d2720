//! Procedurally drawn digit glyphs, a stand-in for MNIST when the IDX files
//! are not available.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{DataSource, DigitSet};
use crate::numerics::Tensor;

pub const GLYPH_SIDE: usize = 28;

type Stroke = &'static [(f32, f32)];

fn ellipse(cx: f32, cy: f32, rx: f32, ry: f32, from: f32, to: f32, n: usize) -> Vec<(f32, f32)> {
    (0..=n)
        .map(|i| {
            let t = from + (to - from) * i as f32 / n as f32;
            (cx + rx * t.cos(), cy + ry * t.sin())
        })
        .collect()
}

/// Polyline strokes per digit in unit coordinates (x right, y down).
fn skeleton(digit: usize) -> Vec<Vec<(f32, f32)>> {
    use std::f32::consts::PI;
    const ONE: Stroke = &[(0.38, 0.26), (0.52, 0.12), (0.52, 0.88)];
    const TWO: Stroke = &[
        (0.26, 0.30),
        (0.36, 0.16),
        (0.55, 0.12),
        (0.71, 0.24),
        (0.69, 0.42),
        (0.26, 0.87),
        (0.78, 0.87),
    ];
    const THREE: Stroke = &[
        (0.26, 0.18),
        (0.58, 0.12),
        (0.72, 0.27),
        (0.48, 0.47),
        (0.74, 0.64),
        (0.62, 0.86),
        (0.26, 0.84),
    ];
    const FOUR_A: Stroke = &[(0.64, 0.88), (0.64, 0.12), (0.22, 0.64), (0.80, 0.64)];
    const FIVE: Stroke = &[
        (0.74, 0.14),
        (0.33, 0.14),
        (0.29, 0.46),
        (0.58, 0.41),
        (0.74, 0.60),
        (0.62, 0.85),
        (0.26, 0.83),
    ];
    const SIX: Stroke = &[
        (0.68, 0.14),
        (0.42, 0.28),
        (0.29, 0.58),
        (0.35, 0.84),
        (0.60, 0.86),
        (0.72, 0.68),
        (0.60, 0.52),
        (0.31, 0.60),
    ];
    const SEVEN: Stroke = &[(0.22, 0.15), (0.78, 0.15), (0.44, 0.88)];
    const NINE_TAIL: Stroke = &[(0.70, 0.32), (0.62, 0.88)];
    match digit {
        0 => vec![ellipse(0.5, 0.5, 0.27, 0.38, 0.0, 2.0 * PI, 24)],
        1 => vec![ONE.to_vec()],
        2 => vec![TWO.to_vec()],
        3 => vec![THREE.to_vec()],
        4 => vec![FOUR_A.to_vec()],
        5 => vec![FIVE.to_vec()],
        6 => vec![SIX.to_vec()],
        7 => vec![SEVEN.to_vec()],
        8 => vec![
            ellipse(0.5, 0.30, 0.19, 0.17, 0.0, 2.0 * PI, 18),
            ellipse(0.5, 0.68, 0.23, 0.20, 0.0, 2.0 * PI, 18),
        ],
        _ => vec![ellipse(0.5, 0.32, 0.20, 0.18, 0.0, 2.0 * PI, 18), NINE_TAIL.to_vec()],
    }
}

fn segment_distance(p: (f32, f32), a: (f32, f32), b: (f32, f32)) -> f32 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

/// Renders one randomly deformed glyph into `out` (`28 × 28`, row-major).
fn render(digit: usize, rng: &mut ChaCha8Rng, out: &mut [f32]) {
    let jitter = Normal::new(0.0f32, 0.035).expect("valid std");
    let angle: f32 = rng.random_range(-0.3..0.3);
    let shear: f32 = rng.random_range(-0.25..0.25);
    let sx: f32 = rng.random_range(0.75..1.1);
    let sy: f32 = rng.random_range(0.8..1.1);
    let tx: f32 = rng.random_range(-0.09..0.09);
    let ty: f32 = rng.random_range(-0.07..0.07);
    let thickness: f32 = rng.random_range(1.0..2.8);
    let gain: f32 = rng.random_range(0.65..1.0);
    let (sin, cos) = angle.sin_cos();
    let side = GLYPH_SIDE as f32;
    let strokes: Vec<Vec<(f32, f32)>> = skeleton(digit)
        .into_iter()
        .map(|stroke| {
            stroke
                .into_iter()
                .map(|(x, y)| {
                    let (x, y) = (x - 0.5 + jitter.sample(rng), y - 0.5 + jitter.sample(rng));
                    let (x, y) = (sx * (x + shear * y), sy * y);
                    let (x, y) = (cos * x - sin * y, sin * x + cos * y);
                    ((x + 0.5 + tx) * side, (y + 0.5 + ty) * side)
                })
                .collect()
        })
        .collect();
    let noise = Normal::new(0.0f32, 0.12).expect("valid std");
    for r in 0..GLYPH_SIDE {
        for c in 0..GLYPH_SIDE {
            let p = (c as f32 + 0.5, r as f32 + 0.5);
            let d = strokes
                .iter()
                .flat_map(|s| s.windows(2).map(move |w| segment_distance(p, w[0], w[1])))
                .fold(f32::INFINITY, f32::min);
            let v = (thickness / 2.0 + 0.5 - d).clamp(0.0, 1.0);
            out[r * GLYPH_SIDE + c] = if v > 0.0 {
                (gain * v * (1.0 + noise.sample(rng))).clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
    }
}

/// `per_class` glyphs of each of the ten digits, labels cycling `0..10`.
/// Sample `i` depends only on `(seed, i)`.
pub fn synthetic_digits(per_class: usize, seed: u64) -> DigitSet {
    let n = per_class * 10;
    let pixels = GLYPH_SIDE * GLYPH_SIDE;
    let mut data = vec![0.0f32; n * pixels];
    data.par_chunks_mut(pixels).enumerate().for_each(|(i, out)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        render(i % 10, &mut rng, out);
    });
    DigitSet {
        images: Tensor::new(vec![n, pixels], data).expect("glyph buffer matches shape"),
        labels: (0..n).map(|i| i % 10).collect(),
        source: DataSource::SyntheticGlyphs,
    }
}
