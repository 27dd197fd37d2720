use std::collections::BTreeMap;
use std::path::PathBuf;

use lc_core::trainer::parse_summary;

use crate::error::CliError;

#[derive(clap::Args)]
pub struct Args {
    /// Run directories written by `train`.
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

const KEY: [&str; 5] = ["loss", "mixup", "prior", "ratio", "seed"];
const VALUES: [&str; 5] = ["final_gba", "final_worst", "best_gba", "topology", "epochs"];

pub fn run(args: Args) -> Result<(), CliError> {
    let missing: Vec<String> = args
        .runs
        .iter()
        .filter(|d| !d.join("summary.txt").is_file())
        .map(|d| d.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Io(format!("missing run directories: {}", missing.join(", "))));
    }

    let mut rows = Vec::new();
    for dir in &args.runs {
        let path = dir.join("summary.txt");
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let summary: BTreeMap<String, String> = parse_summary(&text);
        let field = |k: &str| summary.get(k).cloned().unwrap_or_default();
        let key: Vec<String> = KEY.iter().map(|k| field(k)).collect();
        let values: Vec<String> = VALUES.iter().map(|k| field(k)).collect();
        let seed: u64 = field("seed").parse().unwrap_or(0);
        let ratio: f64 = field("ratio").parse().unwrap_or(f64::NAN);
        let sort = (key[0].clone(), key[1].clone(), key[2].clone(), ratio.to_bits(), seed);
        rows.push((sort, key, values, dir.display().to_string()));
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.3.cmp(&b.3)));

    let mut table = format!("{},{},run\n", KEY.join(","), VALUES.join(","));
    for (_, key, values, dir) in rows {
        table.push_str(&format!("{},{},{dir}\n", key.join(","), values.join(",")));
    }
    match args.out {
        Some(path) => std::fs::write(&path, table).map_err(|e| CliError::io(&path, e)),
        None => {
            print!("{table}");
            Ok(())
        }
    }
}
