use clap::ValueEnum;
use lc_core::oracle::{surrogate_consistency_check, DiscreteInstance, SurrogateMode};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Ce,
    Lc,
    Rwce,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Family {
    /// Dirichlet draws projected to one attribute per point.
    Random,
    /// The same draws with both off-diagonal groups shrunk fifty-fold.
    Skewed,
}

#[derive(clap::Args)]
pub struct Args {
    #[arg(long, default_value_t = 50)]
    instances: usize,
    #[arg(long, value_enum, default_value_t = Mode::Lc)]
    mode: Mode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Family::Random)]
    family: Family,
    /// Points per instance.
    #[arg(long, default_value_t = 5)]
    domain: usize,
}

const MINORITY_SHRINK: f64 = 0.02;

fn instance(family: Family, seed: u64, domain: usize) -> Result<DiscreteInstance, CliError> {
    let base = DiscreteInstance::random_one_hot(seed, domain, 2, 2, 1.0)?;
    Ok(match family {
        Family::Random => base,
        Family::Skewed => base
            .rescale_group(0, 1, MINORITY_SHRINK)
            .rescale_group(1, 0, MINORITY_SHRINK),
    })
}

pub fn run(args: Args) -> Result<(), CliError> {
    if args.instances == 0 {
        return Err(CliError::Usage("--instances must be positive".into()));
    }
    let mode = match args.mode {
        Mode::Ce => SurrogateMode::CrossEntropy,
        Mode::Lc => SurrogateMode::LogitCorrected,
        Mode::Rwce => SurrogateMode::ReweightedCrossEntropy,
    };
    let mut matched = 0;
    for i in 0..args.instances {
        let seed = args.seed.wrapping_add(i as u64);
        let inst = instance(args.family, seed, args.domain)?;
        let r = surrogate_consistency_check(&inst, mode)?;
        matched += usize::from(r.matched);
        println!(
            "instance {i} seed {seed} mode {} match={} gba {:.9} max {:.9} converged={}",
            mode.name(),
            r.matched,
            r.achieved_gba,
            r.max_gba,
            r.converged
        );
    }
    println!("match {matched}/{}", args.instances);
    Ok(())
}
