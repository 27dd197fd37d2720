use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use lc_core::data::{
    check_ratio, default_palette, load_mnist_dir, make_colored_mnist, make_gaussian_toy, manifest_csv, save_dataset,
    synthetic_digits, BiasedDataset, ColoredConfig, DataSource, DigitSet, GaussianConfig, Split,
};
use lc_core::debias::CorrelationTopology;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DatasetKind {
    Cmnist,
    /// Digits 0 and 1 share one color.
    CmnistM2o,
    /// Digit 0 is split across two colors.
    CmnistO2m,
    Gauss,
}

impl DatasetKind {
    fn name(self) -> &'static str {
        match self {
            Self::Cmnist => "cmnist",
            Self::CmnistM2o => "cmnist-m2o",
            Self::CmnistO2m => "cmnist-o2m",
            Self::Gauss => "gauss",
        }
    }
}

fn parse_ratio(s: &str) -> Result<f64, String> {
    let r: f64 = s.parse().map_err(|e| format!("{e}"))?;
    check_ratio(r).map_err(|e| e.to_string())?;
    Ok(r)
}

#[derive(clap::Args)]
pub struct Args {
    #[arg(long, value_enum)]
    dataset: DatasetKind,
    /// Minority fraction ρ in (0, 1).
    #[arg(long, value_parser = parse_ratio)]
    ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output container path; `PATH.manifest.csv` and `PATH.meta` are written alongside.
    #[arg(long)]
    out: PathBuf,
    /// Directory holding the four MNIST IDX files; synthetic glyphs are used when absent.
    #[arg(long)]
    mnist_dir: Option<PathBuf>,
    /// Train samples per class (glyphs drawn, MNIST cap, or Gaussian count).
    #[arg(long)]
    train_per_class: Option<usize>,
    /// Test samples per (label, attribute) cell.
    #[arg(long)]
    test_per_cell: Option<usize>,
}

/// Glyph pools are fixed; `--seed` only drives coloring and splitting.
const GLYPH_TRAIN_SEED: u64 = 1;
const GLYPH_TEST_SEED: u64 = 2;
const GLYPH_TRAIN_PER_CLASS: usize = 2000;
const GLYPH_TEST_PER_CELL: usize = 20;

fn digits(args: &Args, attrs: usize) -> Result<(DigitSet, DigitSet), CliError> {
    if let Some(dir) = &args.mnist_dir {
        return Ok(load_mnist_dir(dir)?);
    }
    let per_cell = args.test_per_cell.unwrap_or(GLYPH_TEST_PER_CELL);
    let train = synthetic_digits(args.train_per_class.unwrap_or(GLYPH_TRAIN_PER_CLASS), GLYPH_TRAIN_SEED);
    let test = synthetic_digits(per_cell * attrs, GLYPH_TEST_SEED);
    Ok((train, test))
}

fn build(args: &Args) -> Result<BiasedDataset, CliError> {
    let topology = match args.dataset {
        DatasetKind::Gauss => {
            let defaults = GaussianConfig::default();
            return Ok(make_gaussian_toy(&GaussianConfig {
                ratio: args.ratio,
                train_per_class: args.train_per_class.unwrap_or(defaults.train_per_class),
                test_per_cell: args.test_per_cell.unwrap_or(defaults.test_per_cell),
                seed: args.seed,
                ..defaults
            })?);
        }
        DatasetKind::Cmnist => CorrelationTopology::one_to_one(10),
        DatasetKind::CmnistM2o => CorrelationTopology::merged_leading(10, 1),
        DatasetKind::CmnistO2m => CorrelationTopology::split_leading(10, 1),
    }
    .map_err(|e| CliError::Usage(e.to_string()))?;
    let (train, test) = digits(args, topology.attrs())?;
    let config = ColoredConfig {
        train_per_class: args.mnist_dir.as_ref().and(args.train_per_class),
        test_per_cell: args
            .test_per_cell
            .or(args.mnist_dir.is_none().then_some(GLYPH_TEST_PER_CELL)),
    };
    let palette = default_palette(topology.attrs())?;
    Ok(make_colored_mnist(
        &train, &test, &topology, args.ratio, &palette, &config, args.seed,
    )?)
}

pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = OsString::from(path.as_os_str());
    name.push(suffix);
    PathBuf::from(name)
}

fn meta_text(args: &Args, ds: &BiasedDataset, checksum: u64) -> String {
    let counts = |split| ds.indices(split).len();
    let mut out = String::new();
    let _ = writeln!(out, "dataset={}", args.dataset.name());
    let _ = writeln!(out, "ratio={}", args.ratio);
    let _ = writeln!(out, "seed={}", args.seed);
    let _ = writeln!(out, "source={}", ds.source().name());
    let _ = writeln!(out, "topology={}", ds.topology());
    let _ = writeln!(out, "train_samples={}", counts(Split::Train));
    let _ = writeln!(out, "test_samples={}", counts(Split::Test));
    let _ = writeln!(out, "train_minority_fraction={}", ds.minority_fraction(Split::Train));
    let _ = writeln!(out, "checksum={checksum:016x}");
    out
}

pub fn run(args: Args) -> Result<(), CliError> {
    let ds = build(&args)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    save_dataset(&ds, &args.out)?;
    let checksum = ds.checksum()?;
    let manifest = sibling(&args.out, ".manifest.csv");
    std::fs::write(&manifest, manifest_csv(&ds)).map_err(|e| CliError::io(&manifest, e))?;
    let meta = sibling(&args.out, ".meta");
    let text = meta_text(&args, &ds, checksum);
    std::fs::write(&meta, &text).map_err(|e| CliError::io(&meta, e))?;
    if ds.source() == DataSource::SyntheticGlyphs {
        log::warn!("MNIST files not supplied; digits are synthetic glyphs");
    }
    print!("{text}");
    Ok(())
}
