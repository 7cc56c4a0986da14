use std::path::PathBuf;
use std::process::ExitCode;

use beamhop::harness::{
    load_config, preset, presets, run_experiment, run_oracle, ExperimentSpec, HarnessError, RunOptions,
};
use clap::{Args, Parser, Subcommand};

/// Beam-hopping beamforming and illumination-pattern experiments.
#[derive(Parser, Debug)]
#[command(name = "beamhop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the experiment described by a JSON config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// List or run the built-in figure presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Solve every pattern of a tiny instance and report the best.
    Oracle {
        config: PathBuf,
        /// Which trial's channel to use.
        #[arg(long, default_value_t = 0)]
        trial: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Subcommand, Debug)]
enum PresetAction {
    List,
    Run {
        name: String,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args, Debug, Clone, Default)]
struct Overrides {
    /// Replace the config's seed_base.
    #[arg(long)]
    seed: Option<u64>,
    /// Replace the config's trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (BEAMHOP_THREADS takes precedence).
    #[arg(long)]
    parallel: Option<usize>,
}

impl Overrides {
    fn apply(&self, spec: &mut ExperimentSpec) -> Result<(), HarnessError> {
        if let Some(seed) = self.seed {
            spec.seed_base = seed;
            spec.base.rng_seed = seed;
        }
        if let Some(t) = self.trials {
            spec.trials = t;
        }
        if let Some(out) = &self.out {
            spec.output = out.clone();
        }
        let v = spec.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Validation(v))
        }
    }

    fn threads(&self) -> Result<Option<usize>, HarnessError> {
        match std::env::var("BEAMHOP_THREADS") {
            Ok(s) => s
                .trim()
                .parse::<usize>()
                .map(Some)
                .map_err(|_| HarnessError::Validation(vec![format!("BEAMHOP_THREADS must be a positive integer, got `{s}`")])),
            Err(_) => Ok(self.parallel),
        }
    }
}

fn execute(mut spec: ExperimentSpec, overrides: &Overrides) -> Result<ExitCode, HarnessError> {
    overrides.apply(&mut spec)?;
    let options = RunOptions { threads: overrides.threads()?, dry_run: false };
    let outcome = run_experiment(&spec, &options)?;
    for row in &outcome.rows {
        println!(
            "{}\tmean_total={}\tstd_total={}\tinfeasible_fraction={}",
            row.axis, row.mean_total, row.std_total, row.infeasible_fraction
        );
    }
    println!("results written to {}", spec.output.display());
    if outcome.errored > 0 {
        eprintln!("{} of {} trials failed; see trials.jsonl", outcome.errored, outcome.trials.len());
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn dispatch(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.command {
        Command::Run { config, overrides } => execute(load_config(&config)?, &overrides),
        Command::Presets { action: PresetAction::List } => {
            for p in presets() {
                println!("{:<6}{}", p.name, p.summary);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Presets { action: PresetAction::Run { name, overrides } } => execute(preset(&name)?, &overrides),
        Command::Oracle { config, trial, seed } => {
            let mut spec = load_config(&config)?;
            if let Some(s) = seed {
                spec.seed_base = s;
            }
            let report = run_oracle(&spec, trial).map_err(|e| HarnessError::Validation(vec![e.to_string()]))?;
            let text = serde_json::to_string_pretty(&report).map_err(|e| HarnessError::Io(e.to_string()))?;
            println!("{text}");
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            match &e {
                HarnessError::Validation(list) => {
                    eprintln!("error: invalid experiment");
                    for v in list {
                        eprintln!("  - {v}");
                    }
                }
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
