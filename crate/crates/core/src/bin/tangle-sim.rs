use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use tangle_sim::config::{parse_config, ExperimentSpec, Mode};
use tangle_sim::driver::{execute, FailureClass};
use tangle_sim::Error;

/// Tangle simulator and greedy-vs-default attachment game harness.
#[derive(Parser, Debug)]
#[command(version)]
struct Args {
    /// Experiment configuration, one `key = value` per line.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured mode: single, sweep, cdf or little.
    #[arg(long)]
    mode: Option<String>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `out` from the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Writes the final tangle of a single run as Graphviz DOT.
    #[arg(long)]
    dump_dot: Option<PathBuf>,
}

fn load(args: &Args) -> Result<ExperimentSpec, Error> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut spec = parse_config(&text)?;
    if let Some(mode) = &args.mode {
        spec.mode = mode.parse::<Mode>()?;
    }
    if let Some(seed) = args.seed {
        spec.sim.seed = seed;
    }
    if let Some(out) = &args.out {
        spec.out = Some(out.clone());
    }
    spec.validate()?;
    Ok(spec)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = load(&args).and_then(|spec| {
        let out = spec.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        execute(&spec, &out, args.dump_dot.as_deref())
    });
    match result {
        Ok(report) => {
            for note in &report.notes {
                eprintln!("note: {note}");
            }
            for file in &report.files {
                println!("{}", file.display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            let class = FailureClass::of(&err);
            eprintln!("error[{}]: {}", class.name(), err.to_string().replace('\n', " "));
            ExitCode::from(class.exit_code() as u8)
        }
    }
}
