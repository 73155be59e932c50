use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lockin_feedback::harness::{run_study, StudyConfig};

#[derive(Parser, Debug)]
#[command(name = "lif", version, about = "Lock-in feedback simulation studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tuning-parameter sweeps on the noiseless parabola
    Study1(Overrides),
    /// LiF-II under increasing observation noise
    Study2(Overrides),
    /// LiF-II tracking a drifting maximum
    Study3(Overrides),
    /// LiF-II on binary purchase decisions
    Study4(Overrides),
    /// Regret of LiF-II against epsilon-first and bootstrap Thompson sampling
    Study5(Overrides),
    /// Run a study described by a config file
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args, Debug, Clone, Default)]
struct Overrides {
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Replications per cell
    #[arg(long)]
    reps: Option<usize>,
    /// Steps per run
    #[arg(long)]
    horizon: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep every n-th step in trajectory CSVs
    #[arg(long)]
    stride: Option<u64>,
    /// Worker threads (output does not depend on this)
    #[arg(long)]
    threads: Option<usize>,
}

impl Overrides {
    fn apply(&self, config: &mut StudyConfig) {
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(reps) = self.reps {
            config.reps = reps;
        }
        if let Some(horizon) = self.horizon {
            config.horizon = horizon;
        }
        if let Some(out) = &self.out {
            config.out_dir = out.clone();
        }
        if let Some(stride) = self.stride {
            config.stride = stride;
        }
        if let Some(threads) = self.threads {
            config.threads = threads;
        }
    }
}

fn load(command: &Command) -> Result<(StudyConfig, Overrides), String> {
    let (config, overrides) = match command {
        Command::Study1(o) => (StudyConfig::preset(1), o),
        Command::Study2(o) => (StudyConfig::preset(2), o),
        Command::Study3(o) => (StudyConfig::preset(3), o),
        Command::Study4(o) => (StudyConfig::preset(4), o),
        Command::Study5(o) => (StudyConfig::preset(5), o),
        Command::Run { config, overrides } => {
            let text = std::fs::read_to_string(config)
                .map_err(|e| format!("{}: {e}", config.display()))?;
            let parsed =
                StudyConfig::parse(&text).map_err(|e| format!("{}: {e}", config.display()))?;
            (Some(parsed), overrides)
        }
    };
    Ok((config.expect("presets 1..5 exist"), overrides.clone()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (mut config, overrides) = match load(&cli.command) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    overrides.apply(&mut config);
    match run_study(&config) {
        Ok(output) => {
            for cell in &output.cells {
                log::info!(
                    "cell {:>3} {:<6} sigma2={} final x0 mean={:.4} cumulative regret mean={:.2}{}",
                    cell.cell.index,
                    cell.cell.policy.name(),
                    cell.cell.sigma2,
                    cell.final_x0_mean,
                    cell.regret_cum_mean,
                    if cell.diverged_reps > 0 {
                        format!(" ({} diverged)", cell.diverged_reps)
                    } else {
                        String::new()
                    }
                );
            }
            for f in &output.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let mut msg = format!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                msg.push_str(&format!("\n  caused by: {s}"));
                source = s.source();
            }
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}
