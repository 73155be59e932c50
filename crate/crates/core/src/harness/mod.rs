//! Study orchestration: expands a [`StudyConfig`] into sweep cells, runs every
//! replication with its own seeded RNG, and writes ordered CSVs.
//!
//! Output for a study with file stem `S` (`study1`..`study5` or `custom`):
//! - `S_cellNNN.csv`: trajectory rows for every replication of cell `NNN`
//! - `S_cellNNN_aggregate.csv`: per-step mean and 95% band (cells with `reps >= 2`)
//! - `S_cells.csv`: one line per cell with its parameters and terminal summary
//!
//! Files are staged in a scratch directory and moved into place only after the
//! whole study succeeded.

pub mod config;
pub mod csv;
pub mod seed;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::baselines::{bts_run, epsilon_first_run, BaselineError};
use crate::env::{
    BernoulliPricingEnv, DriftingParabolaEnv, EnvError, Environment, NoisyParabolaEnv,
};
use crate::lockin::{self, LifError};
use crate::metrics::{aggregate, MetricsError};
use crate::record::{RunRecord, Step};

pub use self::config::{Cell, EnvKind, ParamGrid, PolicyKind, PolicySpec, StudyConfig, StudyId};
pub use self::csv::{emit_csv, format_number, CsvRow};
pub use self::seed::seed_for;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Config {
        line: Option<usize>,
        message: String,
    },
    #[error("cell {cell}, replication {replication}: {source}")]
    Policy {
        cell: usize,
        replication: usize,
        #[source]
        source: PolicyError,
    },
    #[error("aggregating cell {cell}: {source}")]
    Metrics {
        cell: usize,
        #[source]
        source: MetricsError,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("could not build worker pool: {0}")]
    ThreadPool(String),
}

impl HarnessError {
    pub fn config(line: Option<usize>, message: impl Into<String>) -> Self {
        HarnessError::Config {
            line,
            message: message.into(),
        }
    }

    fn io(path: &Path, source: io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Lif(#[from] LifError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Environment(#[from] EnvError),
}

pub fn build_env(kind: EnvKind, sigma2: f64) -> Result<Box<dyn Environment>, EnvError> {
    Ok(match kind {
        EnvKind::Parabola => Box::new(NoisyParabolaEnv::standard(sigma2)?),
        EnvKind::Drift => Box::new(DriftingParabolaEnv::standard(sigma2)?),
        EnvKind::Pricing => Box::new(BernoulliPricingEnv::standard()),
    })
}

/// Outcome of one replication. A diverged LiF run keeps its finite prefix.
#[derive(Debug, Clone)]
pub struct ReplicationResult {
    pub record: RunRecord,
    pub diverged_at: Option<u64>,
}

/// Run one replication of `cell` with its derived seed.
pub fn run_replication(
    cell: &Cell,
    env: &dyn Environment,
    horizon: u64,
    seed: u64,
) -> Result<ReplicationResult, PolicyError> {
    match &cell.policy {
        PolicySpec::Lif(c) => match lockin::run(c, env, horizon, seed) {
            Ok(record) => Ok(ReplicationResult {
                record,
                diverged_at: None,
            }),
            Err(e) => match e.source {
                LifError::NonFiniteObservation { .. }
                | LifError::Environment(EnvError::NonFiniteInput(_)) => Ok(ReplicationResult {
                    record: e.partial,
                    diverged_at: Some(e.t),
                }),
                other => Err(other.into()),
            },
        },
        PolicySpec::EpsilonFirst(c) => Ok(ReplicationResult {
            record: epsilon_first_run(env, horizon, c, seed)?,
            diverged_at: None,
        }),
        PolicySpec::Bts(c) => Ok(ReplicationResult {
            record: bts_run(env, horizon, c, seed)?,
            diverged_at: None,
        }),
    }
}

/// Trajectory of one replication reduced to the rows that get written.
#[derive(Debug, Clone)]
struct KeptRows {
    steps: Vec<(Step, f64)>,
    diverged_at: Option<u64>,
    final_x0: f64,
    regret_cum: f64,
}

fn keep_rows(result: ReplicationResult, stride: u64, horizon: u64) -> KeptRows {
    let mut cum = 0.0;
    let mut steps = Vec::new();
    for s in &result.record.steps {
        cum += s.regret;
        if s.t % stride == 0 || s.t == horizon {
            steps.push((*s, cum));
        }
    }
    KeptRows {
        steps,
        diverged_at: result.diverged_at,
        final_x0: result.record.final_x0().unwrap_or(f64::NAN),
        regret_cum: cum,
    }
}

/// Per-cell summary written to the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub cell: Cell,
    pub diverged_reps: usize,
    pub final_x0_mean: f64,
    pub regret_cum_mean: f64,
    pub trajectory: PathBuf,
    pub aggregate: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOutput {
    pub files: Vec<PathBuf>,
    pub cells: Vec<CellSummary>,
}

/// Run every cell and replication of `config` and write its CSVs into `config.out_dir`.
pub fn run_study(config: &StudyConfig) -> Result<StudyOutput, HarnessError> {
    config.validate()?;
    let cells = config.cells()?;
    fs::create_dir_all(&config.out_dir).map_err(|e| HarnessError::io(&config.out_dir, e))?;
    let staging = config.out_dir.join(format!(
        ".staging-{}-{}",
        config.study.file_stem(),
        std::process::id()
    ));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| HarnessError::io(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| HarnessError::io(&staging, e))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| HarnessError::ThreadPool(e.to_string()))?;

    let result = pool.install(|| write_study(config, &cells, &staging));
    let staged = match result {
        Ok(staged) => staged,
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            return Err(e);
        }
    };

    let mut files = Vec::with_capacity(staged.files.len());
    for name in &staged.files {
        let to = config.out_dir.join(name);
        if let Err(e) = fs::rename(staging.join(name), &to) {
            let _ = fs::remove_dir_all(&staging);
            return Err(HarnessError::io(&to, e));
        }
        files.push(to);
    }
    fs::remove_dir_all(&staging).map_err(|e| HarnessError::io(&staging, e))?;
    let cells = staged
        .cells
        .into_iter()
        .map(|mut c| {
            c.trajectory = config.out_dir.join(&c.trajectory);
            c.aggregate = c.aggregate.map(|a| config.out_dir.join(a));
            c
        })
        .collect();
    Ok(StudyOutput { files, cells })
}

struct Staged {
    files: Vec<PathBuf>,
    cells: Vec<CellSummary>,
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| HarnessError::io(path, e))
}

fn write_study(
    config: &StudyConfig,
    cells: &[Cell],
    staging: &Path,
) -> Result<Staged, HarnessError> {
    let stem = config.study.file_stem();
    let study_label = config.study.label();
    let mut files = Vec::new();
    let mut summaries = Vec::new();

    for cell in cells {
        let env = build_env(config.env, cell.sigma2).map_err(|e| HarnessError::Policy {
            cell: cell.index,
            replication: 0,
            source: e.into(),
        })?;
        let cell_id =
            u32::try_from(cell.index).map_err(|_| HarnessError::config(None, "too many cells"))?;
        let reps: Vec<KeptRows> = (0..config.reps)
            .into_par_iter()
            .map(|rep| {
                let seed = seed_for(config.seed, rep as u32, cell_id);
                run_replication(cell, env.as_ref(), config.horizon, seed)
                    .map(|r| keep_rows(r, config.stride, config.horizon))
                    .map_err(|source| HarnessError::Policy {
                        cell: cell.index,
                        replication: rep,
                        source,
                    })
            })
            .collect::<Result<_, _>>()?;

        let trajectory = PathBuf::from(format!("{stem}_cell{:03}.csv", cell.index));
        let path = staging.join(&trajectory);
        let mut w = create(&path)?;
        let io_err = |e| HarnessError::io(&path, e);
        csv::write_header(&mut w).map_err(io_err)?;
        for (rep, kept) in reps.iter().enumerate() {
            for (s, cum) in &kept.steps {
                let row = CsvRow {
                    study: study_label.clone(),
                    cell: cell.index,
                    replication: rep,
                    t: s.t,
                    x0: s.x0,
                    x_probe: s.x_probe,
                    reward: s.reward,
                    updated: s.updated,
                    regret_inst: s.regret,
                    regret_cum: *cum,
                };
                csv::write_row(&mut w, &row).map_err(io_err)?;
            }
        }
        w.flush().map_err(io_err)?;
        files.push(trajectory.clone());

        let diverged_reps = reps.iter().filter(|r| r.diverged_at.is_some()).count();
        let aggregate_file = if config.reps >= 2 && diverged_reps == 0 {
            let name = PathBuf::from(format!("{stem}_cell{:03}_aggregate.csv", cell.index));
            write_aggregate(&staging.join(&name), &study_label, cell.index, &reps)?;
            files.push(name.clone());
            Some(name)
        } else {
            if diverged_reps > 0 {
                log::warn!(
                    "cell {}: {diverged_reps} of {} replications diverged; no aggregate written",
                    cell.index,
                    config.reps
                );
            }
            None
        };

        let n = reps.len() as f64;
        summaries.push(CellSummary {
            cell: cell.clone(),
            diverged_reps,
            final_x0_mean: reps.iter().map(|r| r.final_x0).sum::<f64>() / n,
            regret_cum_mean: reps.iter().map(|r| r.regret_cum).sum::<f64>() / n,
            trajectory,
            aggregate: aggregate_file,
        });
    }

    let manifest = PathBuf::from(format!("{stem}_cells.csv"));
    write_manifest(&staging.join(&manifest), config, &summaries)?;
    files.push(manifest);
    Ok(Staged {
        files,
        cells: summaries,
    })
}

fn write_aggregate(
    path: &Path,
    study: &str,
    cell: usize,
    reps: &[KeptRows],
) -> Result<(), HarnessError> {
    let x0: Vec<Vec<f64>> = reps
        .iter()
        .map(|r| r.steps.iter().map(|(s, _)| s.x0).collect())
        .collect();
    let regret: Vec<Vec<f64>> = reps
        .iter()
        .map(|r| r.steps.iter().map(|(_, c)| *c).collect())
        .collect();
    let metrics_err = |source| HarnessError::Metrics { cell, source };
    let x0 = aggregate(&x0).map_err(metrics_err)?;
    let regret = aggregate(&regret).map_err(metrics_err)?;

    let mut w = create(path)?;
    let io_err = |e| HarnessError::io(path, e);
    writeln!(w, "{}", csv::AGGREGATE_HEADER).map_err(io_err)?;
    for (i, (s, _)) in reps[0].steps.iter().enumerate() {
        writeln!(
            w,
            "{study},{cell},{},{},{},{},{},{},{},{}",
            s.t,
            x0.reps,
            format_number(x0.mean[i]),
            format_number(x0.lower[i]),
            format_number(x0.upper[i]),
            format_number(regret.mean[i]),
            format_number(regret.lower[i]),
            format_number(regret.upper[i]),
        )
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub const MANIFEST_HEADER: &str = "study,cell,policy,env,sigma2,x0,A,T,gamma,n,J,sgd_rate,update_prob,init_spread,horizon,reps,diverged_reps,final_x0_mean,regret_cum_mean,file";

fn write_manifest(
    path: &Path,
    config: &StudyConfig,
    summaries: &[CellSummary],
) -> Result<(), HarnessError> {
    let mut w = create(path)?;
    let io_err = |e| HarnessError::io(path, e);
    writeln!(w, "{MANIFEST_HEADER}").map_err(io_err)?;
    let f = |v: f64| format_number(v);
    for s in summaries {
        let mut params = [const { String::new() }; 9];
        match &s.cell.policy {
            PolicySpec::Lif(c) => {
                params[0] = f(c.x0_init);
                params[1] = f(c.amplitude);
                params[2] = c.window.to_string();
                params[3] = f(c.learn_rate);
            }
            PolicySpec::EpsilonFirst(c) => params[4] = c.explore_steps.to_string(),
            PolicySpec::Bts(c) => {
                params[5] = c.replicas.to_string();
                params[6] = f(c.sgd_rate);
                params[7] = f(c.update_prob);
                params[8] = f(c.init_spread);
            }
        }
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            config.study.label(),
            s.cell.index,
            s.cell.policy.name(),
            config.env.name(),
            f(s.cell.sigma2),
            params.join(","),
            config.horizon,
            config.reps,
            s.diverged_reps,
            f(s.final_x0_mean),
            f(s.regret_cum_mean),
            s.trajectory.display(),
        )
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}
