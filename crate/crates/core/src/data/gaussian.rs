//! Low-dimensional Gaussian surrogate with an easy spurious feature.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_ratio, BiasedDataset, DataError, DataSource, Split};
use crate::debias::CorrelationTopology;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianConfig {
    pub classes: usize,
    pub ratio: f64,
    pub core_dims: usize,
    pub spurious_dims: usize,
    /// Distance between class means in the core block.
    pub core_separation: f64,
    /// Distance between attribute means in the spurious block.
    pub spurious_separation: f64,
    pub train_per_class: usize,
    pub test_per_cell: usize,
    pub seed: u64,
}

impl Default for GaussianConfig {
    fn default() -> Self {
        Self {
            classes: 2,
            ratio: 0.01,
            core_dims: 5,
            spurious_dims: 5,
            core_separation: 2.0,
            spurious_separation: 8.0,
            train_per_class: 2000,
            test_per_cell: 500,
            seed: 0,
        }
    }
}

/// Mean of component `c` in a block: `±sep/2` on the first axis for two
/// components, otherwise `sep/√2` along axis `c` (pairwise distance `sep`).
fn block_mean(c: usize, count: usize, sep: f64, dims: usize) -> Vec<f64> {
    let mut m = vec![0.0; dims];
    if count == 2 {
        m[0] = if c == 0 { -sep / 2.0 } else { sep / 2.0 };
    } else {
        m[c] = sep / std::f64::consts::SQRT_2;
    }
    m
}

/// Core features follow class-mean Gaussians, spurious features follow
/// attribute-mean Gaussians. In train, `round(ρ·n)` samples per class (at
/// least one) carry a random non-aligned attribute; test is balanced.
pub fn make_gaussian_toy(cfg: &GaussianConfig) -> Result<BiasedDataset, DataError> {
    check_ratio(cfg.ratio)?;
    let l = cfg.classes;
    let needed = if l == 2 { 1 } else { l };
    if l < 2 || cfg.core_dims < needed || cfg.spurious_dims < needed {
        return Err(DataError::Param(format!(
            "{l} classes need at least {needed} core and spurious dimensions"
        )));
    }
    if !(cfg.core_separation >= 0.0 && cfg.spurious_separation > 0.0) {
        return Err(DataError::Param("separations must be non-negative (spurious positive)".into()));
    }
    if cfg.train_per_class == 0 || cfg.test_per_cell == 0 {
        return Err(DataError::Param("split sizes must be positive".into()));
    }
    let topology = CorrelationTopology::one_to_one(l)?;
    let dim = cfg.core_dims + cfg.spurious_dims;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let minority = ((cfg.ratio * cfg.train_per_class as f64).round() as usize).max(1);
    let mut groups = Vec::new();
    for y in 0..l {
        for j in 0..cfg.train_per_class {
            let a = if j < minority {
                let other = rng.random_range(0..l - 1);
                if other >= y {
                    other + 1
                } else {
                    other
                }
            } else {
                y
            };
            groups.push((y, a, Split::Train, j));
        }
    }
    for y in 0..l {
        for a in 0..l {
            for j in 0..cfg.test_per_cell {
                groups.push((y, a, Split::Test, j));
            }
        }
    }

    let mut features = Vec::with_capacity(groups.len() * dim);
    for &(y, a, _, _) in &groups {
        let core = block_mean(y, l, cfg.core_separation, cfg.core_dims);
        let spur = block_mean(a, l, cfg.spurious_separation, cfg.spurious_dims);
        for m in core.into_iter().chain(spur) {
            let z: f64 = StandardNormal.sample(&mut rng);
            features.push((m + z) as f32);
        }
    }
    BiasedDataset::new(
        features,
        groups.iter().map(|g| g.0).collect(),
        groups.iter().map(|g| g.1).collect(),
        groups.iter().map(|g| g.2).collect(),
        dim,
        topology,
        cfg.ratio as f32,
        DataSource::Gaussian,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::evaluate_predictions;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn shapes_and_balance() {
        let cfg = GaussianConfig {
            train_per_class: 300,
            test_per_cell: 20,
            ..GaussianConfig::default()
        };
        let ds = make_gaussian_toy(&cfg).unwrap();
        assert_eq!(ds.dim(), 10);
        assert_eq!(ds.group_counts(Split::Test), vec![20; 4]);
        assert_eq!(ds.indices(Split::Train).len(), 600);
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = GaussianConfig {
            train_per_class: 50,
            test_per_cell: 5,
            ..GaussianConfig::default()
        };
        let a = make_gaussian_toy(&cfg).unwrap();
        assert_eq!(a.checksum().unwrap(), make_gaussian_toy(&cfg).unwrap().checksum().unwrap());
        let other = GaussianConfig { seed: 1, ..cfg };
        assert_ne!(a.checksum().unwrap(), make_gaussian_toy(&other).unwrap().checksum().unwrap());
    }

    #[test]
    fn minority_fraction_matches_ratio() {
        let cfg = GaussianConfig {
            ratio: 0.05,
            train_per_class: 1000,
            test_per_cell: 1,
            ..GaussianConfig::default()
        };
        let ds = make_gaussian_toy(&cfg).unwrap();
        assert_eq!(ds.group_counts(Split::Train), vec![950, 50, 50, 950]);
    }

    #[test]
    fn multiclass_needs_dimensions() {
        let cfg = GaussianConfig {
            classes: 4,
            core_dims: 3,
            ..GaussianConfig::default()
        };
        assert!(make_gaussian_toy(&cfg).is_err());
    }

    #[test]
    fn uninformative_core_caps_gba_at_chance() {
        // With no core signal every classifier's GBA is exactly 1/2 for two
        // classes; the spurious-only rule splits it into Φ(s/2) on aligned
        // groups and 1 - Φ(s/2) on conflicting ones.
        let s = 1.5;
        let cfg = GaussianConfig {
            core_separation: 0.0,
            spurious_separation: s,
            train_per_class: 1,
            test_per_cell: 20_000,
            ..GaussianConfig::default()
        };
        let ds = make_gaussian_toy(&cfg).unwrap();
        let test = ds.test_split();
        let spur = cfg.core_dims;
        let preds: Vec<usize> = (0..test.y.len()).map(|i| usize::from(test.x.row(i)[spur] > 0.0)).collect();
        let e = evaluate_predictions(&preds, &test.groups(), 2, 2).unwrap();
        let phi = Normal::new(0.0, 1.0).unwrap().cdf(s / 2.0);
        let tol = 4.0 * (phi * (1.0 - phi) / 20_000.0).sqrt();
        assert!((e.accuracy[&(0, 0)] - phi).abs() < tol);
        assert!((e.accuracy[&(1, 1)] - phi).abs() < tol);
        assert!((e.accuracy[&(0, 1)] - (1.0 - phi)).abs() < tol);
        assert!((e.gba - 0.5).abs() < tol);
        // The core block alone is chance on every group.
        let core: Vec<usize> = (0..test.y.len()).map(|i| usize::from(test.x.row(i)[0] > 0.0)).collect();
        let e = evaluate_predictions(&core, &test.groups(), 2, 2).unwrap();
        assert!((e.gba - 0.5).abs() < 0.02);
    }
}
