//! Colored-MNIST construction for every correlation topology.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{check_ratio, BiasedDataset, DataError, DigitSet, Split};
use crate::debias::CorrelationTopology;

pub type Palette = Vec<[f32; 3]>;

/// Ten widely spaced foreground colors.
pub const DEFAULT_PALETTE: [[f32; 3]; 10] = [
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [1.0, 1.0, 0.0],
    [1.0, 0.0, 1.0],
    [0.0, 1.0, 1.0],
    [1.0, 0.5, 0.0],
    [0.5, 0.0, 1.0],
    [0.0, 0.5, 0.5],
    [0.5, 0.25, 0.0],
];

/// Eleventh color for topologies with more attributes than digits.
pub const EXTRA_COLOR: [f32; 3] = [1.0, 0.5, 0.75];

/// The first `attrs` colors of the default palette, extended by [`EXTRA_COLOR`].
pub fn default_palette(attrs: usize) -> Result<Palette, DataError> {
    let mut all = DEFAULT_PALETTE.to_vec();
    all.push(EXTRA_COLOR);
    if attrs == 0 || attrs > all.len() {
        return Err(DataError::Palette {
            palette: all.len(),
            attrs,
        });
    }
    all.truncate(attrs);
    Ok(all)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ColoredConfig {
    /// Cap on train digits used per class; `None` uses all.
    pub train_per_class: Option<usize>,
    /// Test samples per `(digit, color)` cell; `None` uses the largest equal count.
    pub test_per_cell: Option<usize>,
}

fn tint(gray: &[f32], color: &[f32; 3], out: &mut [f32]) {
    let pixels = gray.len();
    for (ch, &c) in color.iter().enumerate() {
        for (o, &g) in out[ch * pixels..(ch + 1) * pixels].iter_mut().zip(gray) {
            *o = g * c;
        }
    }
}

/// Builds a biased train split and a color-balanced test split.
///
/// Per class, `round(ρ·n)` train digits (at least one) receive a uniformly
/// drawn non-aligned color; the rest receive their aligned color, cycling
/// through the colors of a split class.
pub fn make_colored_mnist(
    train: &DigitSet,
    test: &DigitSet,
    topology: &CorrelationTopology,
    ratio: f64,
    palette: &[[f32; 3]],
    config: &ColoredConfig,
    seed: u64,
) -> Result<BiasedDataset, DataError> {
    check_ratio(ratio)?;
    topology.validate()?;
    let (classes, k) = (topology.classes(), topology.attrs());
    if palette.len() != k {
        return Err(DataError::Palette {
            palette: palette.len(),
            attrs: k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // (source index, label, attribute, split)
    let mut plan: Vec<(usize, usize, usize, Split)> = Vec::new();
    for c in 0..classes {
        let aligned = topology.aligned_attrs(c);
        let off: Vec<usize> = (0..k).filter(|a| !aligned.contains(a)).collect();
        if off.is_empty() {
            return Err(DataError::Param(format!("class {c} has no non-aligned color")));
        }
        let mut idx: Vec<usize> = (0..train.labels.len()).filter(|&i| train.labels[i] == c).collect();
        if let Some(cap) = config.train_per_class {
            idx.truncate(cap);
        }
        if idx.is_empty() {
            return Err(DataError::Param(format!("no train digits of class {c}")));
        }
        idx.shuffle(&mut rng);
        let mut minority = (ratio * idx.len() as f64).round() as usize;
        if minority == 0 {
            log::warn!("ratio {ratio} leaves class {c} without minority samples; using one");
            minority = 1;
        }
        for (j, &i) in idx.iter().enumerate() {
            let a = if j < minority {
                off[rng.random_range(0..off.len())]
            } else {
                aligned.start + (j - minority) % aligned.len()
            };
            plan.push((i, c, a, Split::Train));
        }
    }
    plan.sort_unstable_by_key(|p| p.0);

    let mut test_idx: Vec<Vec<usize>> = (0..classes)
        .map(|c| (0..test.labels.len()).filter(|&i| test.labels[i] == c).collect())
        .collect();
    let largest = test_idx.iter().map(|v| v.len() / k).min().unwrap_or(0);
    let per_cell = config.test_per_cell.unwrap_or(largest);
    if per_cell == 0 || per_cell > largest {
        return Err(DataError::Param(format!(
            "test split supports at most {largest} samples per cell, requested {per_cell}"
        )));
    }
    let mut test_plan = Vec::with_capacity(classes * k * per_cell);
    for (c, idx) in test_idx.iter_mut().enumerate() {
        idx.shuffle(&mut rng);
        for (j, &i) in idx.iter().take(per_cell * k).enumerate() {
            test_plan.push((i, c, j % k, Split::Test));
        }
    }

    let pixels = train.images.cols();
    let dim = 3 * pixels;
    let n = plan.len() + test_plan.len();
    let mut features = vec![0.0f32; n * dim];
    let all: Vec<_> = plan.iter().chain(&test_plan).copied().collect();
    features.par_chunks_mut(dim).zip(all.par_iter()).for_each(|(out, &(i, _, a, split))| {
        let source = if split == Split::Train { train } else { test };
        tint(source.images.row(i), &palette[a], out);
    });
    BiasedDataset::new(
        features,
        all.iter().map(|p| p.1).collect(),
        all.iter().map(|p| p.2).collect(),
        all.iter().map(|p| p.3).collect(),
        dim,
        topology.clone(),
        ratio as f32,
        train.source,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_digits;

    fn digits() -> (DigitSet, DigitSet) {
        (synthetic_digits(100, 1), synthetic_digits(12, 2))
    }

    #[test]
    fn one_to_one_counts() {
        let (train, test) = digits();
        let topo = CorrelationTopology::one_to_one(10).unwrap();
        let ds = make_colored_mnist(&train, &test, &topo, 0.05, &DEFAULT_PALETTE, &ColoredConfig::default(), 3).unwrap();
        assert_eq!(ds.dim(), 2352);
        assert!((ds.minority_fraction(Split::Train) - 0.05).abs() < 1e-12);
        let counts = ds.group_counts(Split::Test);
        assert!(counts.iter().all(|&c| c == 1));
    }

    #[test]
    fn half_ratio_is_balanced() {
        let (train, test) = digits();
        let (train, test) = (restrict(&train, 2), restrict(&test, 2));
        let topo = CorrelationTopology::one_to_one(2).unwrap();
        let ds = make_colored_mnist(&train, &test, &topo, 0.5, &DEFAULT_PALETTE[..2], &ColoredConfig::default(), 3).unwrap();
        let counts = ds.group_counts(Split::Train);
        assert_eq!(counts, vec![50, 50, 50, 50]);
    }

    fn restrict(set: &DigitSet, classes: usize) -> DigitSet {
        let keep: Vec<usize> = (0..set.labels.len()).filter(|&i| set.labels[i] < classes).collect();
        let rows: Vec<&[f32]> = keep.iter().map(|&i| set.images.row(i)).collect();
        DigitSet {
            images: crate::numerics::Tensor::from_rows(&rows).unwrap(),
            labels: keep.iter().map(|&i| set.labels[i]).collect(),
            source: set.source,
        }
    }

    #[test]
    fn many_to_one_shares_first_color() {
        let (train, test) = digits();
        let topo = CorrelationTopology::merged_leading(10, 1).unwrap();
        let palette = default_palette(9).unwrap();
        let ds = make_colored_mnist(&train, &test, &topo, 0.01, &palette, &ColoredConfig::default(), 4).unwrap();
        assert_eq!(ds.attrs(), 9);
        let counts = ds.group_counts(Split::Train);
        assert_eq!(counts[0], 99);
        assert_eq!(counts[9], 99);
        assert_eq!(counts[9 * 9 + 8], 99);
    }

    #[test]
    fn one_to_many_splits_evenly() {
        let (train, test) = digits();
        let topo = CorrelationTopology::split_leading(10, 1).unwrap();
        let palette = default_palette(11).unwrap();
        let ds = make_colored_mnist(&train, &test, &topo, 0.02, &palette, &ColoredConfig::default(), 4).unwrap();
        let counts = ds.group_counts(Split::Train);
        assert_eq!(counts[0] + counts[1], 98);
        assert!(counts[0].abs_diff(counts[1]) <= 1);
        assert_eq!(counts[11 + 2], 98);
    }

    #[test]
    fn tiny_ratio_keeps_one_minority_sample() {
        let (train, test) = digits();
        let topo = CorrelationTopology::one_to_one(10).unwrap();
        let ds = make_colored_mnist(&train, &test, &topo, 0.001, &DEFAULT_PALETTE, &ColoredConfig::default(), 3).unwrap();
        assert!((ds.minority_fraction(Split::Train) - 0.01).abs() < 1e-12);
    }

    #[test]
    fn coloring_is_per_pixel_scaling() {
        let (train, _) = digits();
        let gray = train.images.row(0);
        let mut out = vec![1.0f32; 3 * gray.len()];
        tint(gray, &[0.5, 1.0, 0.25], &mut out);
        for (p, &g) in gray.iter().enumerate() {
            assert_eq!(out[p], g * 0.5);
            assert_eq!(out[gray.len() + p], g);
            assert_eq!(out[2 * gray.len() + p], g * 0.25);
            if g == 0.0 {
                assert!(out[p] == 0.0 && out[gray.len() + p] == 0.0 && out[2 * gray.len() + p] == 0.0);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let (train, test) = digits();
        let topo = CorrelationTopology::one_to_one(10).unwrap();
        let cfg = ColoredConfig::default();
        assert!(matches!(
            make_colored_mnist(&train, &test, &topo, 0.01, &DEFAULT_PALETTE[..9], &cfg, 1),
            Err(DataError::Palette { .. })
        ));
        assert!(matches!(
            make_colored_mnist(&train, &test, &topo, 1.5, &DEFAULT_PALETTE, &cfg, 1),
            Err(DataError::Ratio(_))
        ));
    }
}
