use std::path::PathBuf;

use clap::ValueEnum;
use lc_core::data::{load_dataset, TestSplit};
use lc_core::model::MlpScorer;
use lc_core::trainer::evaluate;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Test,
    /// Train split scored against its true attributes.
    Train,
}

#[derive(clap::Args)]
pub struct Args {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let dataset = load_dataset(&args.data)?;
    let file = std::fs::File::open(&args.checkpoint).map_err(|e| CliError::io(&args.checkpoint, e))?;
    let model = MlpScorer::<f32>::load(std::io::BufReader::new(file))?;
    let split = match args.split {
        SplitArg::Test => dataset.test_split(),
        SplitArg::Train => {
            let train = dataset.train_split();
            TestSplit {
                x: train.x,
                y: train.y,
                a: dataset.train_attrs_for_diagnostics(),
            }
        }
    };
    let eval = evaluate(&model, &split, dataset.attrs())?;
    println!("group_y,group_a,accuracy,n");
    for (&(y, a), acc) in &eval.accuracy {
        println!("{y},{a},{acc},{}", eval.sizes[&(y, a)]);
    }
    println!("gba={}", eval.gba);
    println!("worst_group={}", eval.worst_group);
    println!("overall={}", eval.overall_accuracy());
    Ok(())
}
