use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::ValueEnum;
use lc_core::data::{fnv1a, load_dataset};
use lc_core::debias::PriorStrategy;
use lc_core::trainer::{summary_text, train, write_run, LossMode, TopologyChoice, TrainConfig};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Loss {
    Lc,
    Ce,
    Rwce,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Prior {
    Moving,
    Batch,
    Dataset,
    MovingSample,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Topology {
    /// Use the dataset's correlation topology.
    Dataset,
    /// Assume one attribute per label.
    OneToOne,
}

/// Learning-rate schedule flag value.
#[derive(Clone, Debug)]
pub struct Decay(Vec<(u64, f64)>);

fn parse_decay(s: &str) -> Result<Decay, String> {
    if s.is_empty() || s == "none" {
        return Ok(Decay(Vec::new()));
    }
    s.split(',')
        .map(|item| {
            let (at, factor) = item
                .split_once(':')
                .ok_or_else(|| format!("expected ITERATION:FACTOR, got {item:?}"))?;
            let at = at.trim().parse().map_err(|e| format!("{at:?}: {e}"))?;
            let factor: f64 = factor.trim().parse().map_err(|e| format!("{factor:?}: {e}"))?;
            if !(factor > 0.0) {
                return Err(format!("decay factor must be positive, got {factor}"));
            }
            Ok((at, factor))
        })
        .collect::<Result<_, _>>()
        .map(Decay)
}

#[derive(clap::Args)]
pub struct Args {
    /// Dataset container written by `gen-data`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = Loss::Lc)]
    loss: Loss,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    mixup: Switch,
    #[arg(long, value_enum, default_value_t = Prior::Moving)]
    prior: Prior,
    #[arg(long, value_enum, default_value_t = Topology::Dataset)]
    topology: Topology,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    /// Learning-rate steps as `ITERATION:FACTOR,...`, cumulative; `none` disables.
    #[arg(long, value_parser = parse_decay, default_value = "10000:0.5")]
    lr_decay: Decay,
    #[arg(long, default_value_t = 0.7)]
    gce_q: f64,
    /// Moving-average momentum for the group prior.
    #[arg(long, default_value_t = 0.5)]
    momentum: f64,
    #[arg(long, default_value_t = 2)]
    rampup_epochs: usize,
    /// Evaluate every N epochs; the last epoch is always evaluated.
    #[arg(long, default_value_t = 1)]
    eval_every: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

impl Args {
    fn config(&self) -> TrainConfig {
        let mut cfg = TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            gce_q: self.gce_q,
            momentum: self.momentum,
            rampup_epochs: self.rampup_epochs,
            strategy: match self.prior {
                Prior::Moving => PriorStrategy::MovingAvg,
                Prior::Batch => PriorStrategy::BatchAvg,
                Prior::Dataset => PriorStrategy::DatasetAvg,
                Prior::MovingSample => PriorStrategy::PerSampleMovingAvg,
            },
            topology: match self.topology {
                Topology::Dataset => TopologyChoice::Dataset,
                Topology::OneToOne => TopologyChoice::OneToOne,
            },
            mixup: self.mixup == Switch::On,
            loss: match self.loss {
                Loss::Lc => LossMode::LogitCorrected,
                Loss::Ce => LossMode::CrossEntropy,
                Loss::Rwce => LossMode::Reweighted,
            },
            eval_every: self.eval_every,
            seed: self.seed,
            ..TrainConfig::default()
        };
        cfg.adam.learning_rate = self.lr;
        cfg.adam.decay_schedule = self.lr_decay.0.clone();
        cfg
    }
}

/// Files whose bytes must be identical across repeated runs.
const HASHED_OUTPUTS: [&str; 8] = [
    "config.txt",
    "epochs.csv",
    "erm.ckpt",
    "margins_test.csv",
    "margins_train.csv",
    "prior.csv",
    "robust.ckpt",
    "summary.txt",
];

pub fn run(args: Args) -> Result<(), CliError> {
    let config = args.config();
    config.validate()?;
    let started = SystemTime::now();
    let dataset = load_dataset(&args.data)?;
    let outcome = train::<f32>(&dataset, config)?;
    write_run(&args.out, &outcome, &dataset)?;

    let mut hashed = Vec::new();
    for name in HASHED_OUTPUTS {
        let path = args.out.join(name);
        let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        hashed.extend_from_slice(name.as_bytes());
        hashed.extend_from_slice(&fnv1a(&bytes).to_le_bytes());
    }
    let epoch_secs = |t: SystemTime| t.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let mut manifest = String::new();
    let _ = writeln!(manifest, "data={}", args.data.display());
    let _ = writeln!(manifest, "dataset_checksum={:016x}", dataset.checksum()?);
    let _ = writeln!(manifest, "dataset_source={}", dataset.source().name());
    let _ = writeln!(manifest, "output_hash={:016x}", fnv1a(&hashed));
    let _ = writeln!(manifest, "started_unix={}", epoch_secs(started));
    let _ = writeln!(manifest, "finished_unix={}", epoch_secs(SystemTime::now()));
    for line in outcome.config.canonical_text().lines() {
        let _ = writeln!(manifest, "config.{line}");
    }
    let path = args.out.join("manifest.txt");
    std::fs::write(&path, manifest).map_err(|e| CliError::io(&path, e))?;
    print!("{}", summary_text(&outcome, dataset.ratio()));
    Ok(())
}
