//! Study configuration: presets and the flat `key = value` file format.
//!
//! ```text
//! # comments start with '#'
//! study = custom          # 1..5 loads that study's defaults, or custom
//! env = parabola          # parabola | drift | pricing
//! policy = lif1, lif2     # lif1 | lif2 | efirst | bts
//! x0 = -5
//! A = 1
//! T = 10, 100, 1000       # comma-separated values form a sweep axis
//! gamma = 0.1
//! sigma2 = 0
//! horizon = 10000
//! reps = 1
//! seed = 0
//! out_dir = out
//! n = 1000                # epsilon-first exploration steps
//! J = 100                 # BTS replicas
//! sgd_rate = 0.01
//! update_prob = 0.5
//! init_spread = 1
//! stride = 1              # keep every stride-th step in trajectory CSVs
//! ```
//!
//! With `study = 1..5` any sweep key replaces that axis in every grid of the
//! preset; scalar keys replace the preset's value.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use crate::baselines::{BtsConfig, EpsilonFirstConfig};
use crate::lockin::{LifConfig, Variant};

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyId {
    Preset(u8),
    Custom,
}

impl StudyId {
    pub fn label(&self) -> String {
        match self {
            StudyId::Preset(n) => n.to_string(),
            StudyId::Custom => "custom".to_string(),
        }
    }

    pub fn file_stem(&self) -> String {
        match self {
            StudyId::Preset(n) => format!("study{n}"),
            StudyId::Custom => "custom".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Parabola,
    Drift,
    Pricing,
}

impl EnvKind {
    pub fn name(&self) -> &'static str {
        match self {
            EnvKind::Parabola => "parabola",
            EnvKind::Drift => "drift",
            EnvKind::Pricing => "pricing",
        }
    }
}

impl FromStr for EnvKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "parabola" => Ok(EnvKind::Parabola),
            "drift" | "drifting" => Ok(EnvKind::Drift),
            "pricing" | "bernoulli" => Ok(EnvKind::Pricing),
            other => Err(format!("unknown environment '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Lif1,
    Lif2,
    EpsilonFirst,
    Bts,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Lif1 => "lif1",
            PolicyKind::Lif2 => "lif2",
            PolicyKind::EpsilonFirst => "efirst",
            PolicyKind::Bts => "bts",
        }
    }
}

impl FromStr for PolicyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "lif1" | "lif-i" | "batch" => Ok(PolicyKind::Lif1),
            "lif2" | "lif-ii" | "continuous" => Ok(PolicyKind::Lif2),
            "efirst" | "epsilon-first" | "epsilon_first" => Ok(PolicyKind::EpsilonFirst),
            "bts" => Ok(PolicyKind::Bts),
            other => Err(format!("unknown policy '{other}'")),
        }
    }
}

/// Sweep axes; the cells of a grid are the cartesian product of the axes that
/// apply to each policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    pub policies: Vec<PolicyKind>,
    pub sigma2: Vec<f64>,
    pub x0: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub window: Vec<usize>,
    pub gamma: Vec<f64>,
    pub explore_steps: Vec<u64>,
    pub replicas: Vec<usize>,
    pub sgd_rate: Vec<f64>,
    pub update_prob: Vec<f64>,
    pub init_spread: Vec<f64>,
}

impl Default for ParamGrid {
    fn default() -> Self {
        let bts = BtsConfig::default();
        Self {
            policies: vec![PolicyKind::Lif2],
            sigma2: vec![0.0],
            x0: vec![-5.0],
            amplitude: vec![1.0],
            window: vec![100],
            gamma: vec![0.1],
            explore_steps: vec![EpsilonFirstConfig::default().explore_steps],
            replicas: vec![bts.replicas],
            sgd_rate: vec![bts.sgd_rate],
            update_prob: vec![bts.update_prob],
            init_spread: vec![bts.init_spread],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    Lif(LifConfig),
    EpsilonFirst(EpsilonFirstConfig),
    Bts(BtsConfig),
}

impl PolicySpec {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::Lif(c) => match c.variant {
                Variant::Batch => "lif1",
                Variant::Continuous => "lif2",
            },
            PolicySpec::EpsilonFirst(_) => "efirst",
            PolicySpec::Bts(_) => "bts",
        }
    }
}

/// One fully specified sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub sigma2: f64,
    pub policy: PolicySpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub study: StudyId,
    pub env: EnvKind,
    pub grids: Vec<ParamGrid>,
    pub horizon: u64,
    pub reps: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Trajectory CSVs keep steps with `t % stride == 0` plus the final step.
    pub stride: u64,
    /// Worker threads; 0 lets the pool decide. Never affects output.
    pub threads: usize,
}

impl StudyConfig {
    pub fn preset(id: u8) -> Option<StudyConfig> {
        let base = |env, grids, horizon, reps, stride| StudyConfig {
            study: StudyId::Preset(id),
            env,
            grids,
            horizon,
            reps,
            seed: 2017,
            out_dir: PathBuf::from("out"),
            stride,
            threads: 0,
        };
        let lif_both = vec![PolicyKind::Lif1, PolicyKind::Lif2];
        match id {
            // Noiseless tuning sweeps: gamma x T at A = 1, then A x T at gamma = 0.1.
            1 => Some(base(
                EnvKind::Parabola,
                vec![
                    ParamGrid {
                        policies: lif_both.clone(),
                        window: vec![10, 100, 1000],
                        gamma: vec![0.01, 0.1, 0.5, 0.9],
                        ..ParamGrid::default()
                    },
                    ParamGrid {
                        policies: lif_both,
                        window: vec![10, 100, 1000],
                        amplitude: vec![0.1, 1.0, 2.0, 10.0],
                        ..ParamGrid::default()
                    },
                ],
                10_000,
                1,
                1,
            )),
            2 => Some(base(
                EnvKind::Parabola,
                vec![ParamGrid {
                    sigma2: vec![10.0, 100.0, 1000.0, 10000.0],
                    ..ParamGrid::default()
                }],
                10_000,
                100,
                1,
            )),
            3 => Some(base(
                EnvKind::Drift,
                vec![ParamGrid {
                    sigma2: vec![10.0],
                    x0: vec![-20.0],
                    ..ParamGrid::default()
                }],
                10_000,
                100,
                1,
            )),
            4 => Some(base(
                EnvKind::Pricing,
                vec![ParamGrid {
                    x0: vec![4.0, 15.0],
                    ..ParamGrid::default()
                }],
                10_000,
                100,
                1,
            )),
            5 => Some(base(
                EnvKind::Pricing,
                vec![ParamGrid {
                    policies: vec![PolicyKind::Lif2, PolicyKind::EpsilonFirst, PolicyKind::Bts],
                    x0: vec![4.0],
                    ..ParamGrid::default()
                }],
                100_000,
                100,
                100,
            )),
            _ => None,
        }
    }

    /// Expand every grid into cells, validating each one.
    pub fn cells(&self) -> Result<Vec<Cell>, HarnessError> {
        let mut specs = Vec::new();
        for grid in &self.grids {
            let sigma2: &[f64] = if self.env == EnvKind::Pricing {
                &[0.0]
            } else {
                &grid.sigma2
            };
            for &s2 in sigma2 {
                for &policy in &grid.policies {
                    match policy {
                        PolicyKind::Lif1 | PolicyKind::Lif2 => {
                            let variant = if policy == PolicyKind::Lif1 {
                                Variant::Batch
                            } else {
                                Variant::Continuous
                            };
                            for &x0 in &grid.x0 {
                                for &gamma in &grid.gamma {
                                    for &amplitude in &grid.amplitude {
                                        for &window in &grid.window {
                                            let c = LifConfig {
                                                x0_init: x0,
                                                amplitude,
                                                window,
                                                learn_rate: gamma,
                                                variant,
                                            };
                                            c.validate().map_err(|e| {
                                                HarnessError::config(None, e.to_string())
                                            })?;
                                            specs.push((s2, PolicySpec::Lif(c)));
                                        }
                                    }
                                }
                            }
                        }
                        PolicyKind::EpsilonFirst => {
                            for &n in &grid.explore_steps {
                                let c = EpsilonFirstConfig {
                                    explore_steps: n,
                                    ..EpsilonFirstConfig::default()
                                };
                                c.validate()
                                    .map_err(|e| HarnessError::config(None, e.to_string()))?;
                                if self.horizon <= n {
                                    return Err(HarnessError::config(
                                        None,
                                        format!("horizon {} must exceed n = {n}", self.horizon),
                                    ));
                                }
                                specs.push((s2, PolicySpec::EpsilonFirst(c)));
                            }
                        }
                        PolicyKind::Bts => {
                            for &replicas in &grid.replicas {
                                for &sgd_rate in &grid.sgd_rate {
                                    for &update_prob in &grid.update_prob {
                                        for &init_spread in &grid.init_spread {
                                            let c = BtsConfig {
                                                replicas,
                                                sgd_rate,
                                                update_prob,
                                                init_spread,
                                                ..BtsConfig::default()
                                            };
                                            c.validate().map_err(|e| {
                                                HarnessError::config(None, e.to_string())
                                            })?;
                                            specs.push((s2, PolicySpec::Bts(c)));
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        if specs.is_empty() {
            return Err(HarnessError::config(None, "configuration defines no cells"));
        }
        Ok(specs
            .into_iter()
            .enumerate()
            .map(|(index, (sigma2, policy))| Cell {
                index,
                sigma2,
                policy,
            })
            .collect())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.horizon == 0 {
            return Err(HarnessError::config(None, "horizon must be >= 1"));
        }
        if self.reps == 0 {
            return Err(HarnessError::config(None, "reps must be >= 1"));
        }
        if self.stride == 0 {
            return Err(HarnessError::config(None, "stride must be >= 1"));
        }
        if self.reps > u32::MAX as usize {
            return Err(HarnessError::config(None, "too many replications"));
        }
        for grid in &self.grids {
            if grid.sigma2.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                return Err(HarnessError::config(
                    None,
                    "sigma2 values must be finite and >= 0",
                ));
            }
        }
        self.cells().map(|_| ())
    }

    /// Parse the flat `key = value` format.
    pub fn parse(text: &str) -> Result<StudyConfig, HarnessError> {
        let mut entries: BTreeMap<String, (usize, Vec<String>)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::config(
                    Some(line_no),
                    format!("expected 'key = value', got '{line}'"),
                )
            })?;
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(HarnessError::config(
                    Some(line_no),
                    format!("unknown key '{key}'"),
                ));
            }
            let values: Vec<String> = value
                .split(',')
                .map(|v| v.trim().to_string())
                .filter(|v| !v.is_empty())
                .collect();
            if values.is_empty() {
                return Err(HarnessError::config(
                    Some(line_no),
                    format!("key '{key}' has no value"),
                ));
            }
            if entries.insert(key.clone(), (line_no, values)).is_some() {
                return Err(HarnessError::config(
                    Some(line_no),
                    format!("duplicate key '{key}'"),
                ));
            }
        }

        let study = match entries.remove("study") {
            None => StudyId::Custom,
            Some((line, v)) => {
                let s = single(line, "study", &v)?;
                if s.eq_ignore_ascii_case("custom") {
                    StudyId::Custom
                } else {
                    let n: u8 = parse_value(line, "study", s)?;
                    if !(1..=5).contains(&n) {
                        return Err(HarnessError::config(
                            Some(line),
                            format!("study must be 1..5 or custom, got {n}"),
                        ));
                    }
                    StudyId::Preset(n)
                }
            }
        };

        let mut config = match study {
            StudyId::Preset(n) => StudyConfig::preset(n).expect("preset exists"),
            StudyId::Custom => {
                let (line, v) = entries.get("env").cloned().ok_or_else(|| {
                    HarnessError::config(None, "custom studies need an 'env' key")
                })?;
                let env = parse_value(line, "env", single(line, "env", &v)?)?;
                StudyConfig {
                    study,
                    env,
                    grids: vec![ParamGrid::default()],
                    horizon: 10_000,
                    reps: 1,
                    seed: 0,
                    out_dir: PathBuf::from("out"),
                    stride: 1,
                    threads: 0,
                }
            }
        };

        for (key, (line, values)) in &entries {
            let line = *line;
            match key.as_str() {
                "env" => config.env = parse_value(line, key, single(line, key, values)?)?,
                "horizon" => config.horizon = parse_value(line, key, single(line, key, values)?)?,
                "reps" => config.reps = parse_value(line, key, single(line, key, values)?)?,
                "seed" => config.seed = parse_value(line, key, single(line, key, values)?)?,
                "stride" => config.stride = parse_value(line, key, single(line, key, values)?)?,
                "out_dir" => config.out_dir = PathBuf::from(single(line, key, values)?),
                axis => {
                    for grid in &mut config.grids {
                        set_axis(grid, axis, line, values)?;
                    }
                }
            }
        }
        config.validate()?;
        Ok(config)
    }
}

pub const KNOWN_KEYS: &[&str] = &[
    "study",
    "env",
    "policy",
    "x0",
    "A",
    "T",
    "gamma",
    "sigma2",
    "horizon",
    "reps",
    "seed",
    "out_dir",
    "n",
    "J",
    "sgd_rate",
    "update_prob",
    "init_spread",
    "stride",
];

fn single<'a>(line: usize, key: &str, values: &'a [String]) -> Result<&'a str, HarnessError> {
    match values {
        [v] => Ok(v),
        _ => Err(HarnessError::config(
            Some(line),
            format!("key '{key}' takes a single value"),
        )),
    }
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, HarnessError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| {
        HarnessError::config(Some(line), format!("bad value '{value}' for '{key}': {e}"))
    })
}

fn parse_all<T: FromStr>(line: usize, key: &str, values: &[String]) -> Result<Vec<T>, HarnessError>
where
    T::Err: std::fmt::Display,
{
    values.iter().map(|v| parse_value(line, key, v)).collect()
}

fn set_axis(
    grid: &mut ParamGrid,
    key: &str,
    line: usize,
    values: &[String],
) -> Result<(), HarnessError> {
    match key {
        "policy" => grid.policies = parse_all(line, key, values)?,
        "x0" => grid.x0 = parse_all(line, key, values)?,
        "A" => grid.amplitude = parse_all(line, key, values)?,
        "T" => grid.window = parse_all(line, key, values)?,
        "gamma" => grid.gamma = parse_all(line, key, values)?,
        "sigma2" => grid.sigma2 = parse_all(line, key, values)?,
        "n" => grid.explore_steps = parse_all(line, key, values)?,
        "J" => grid.replicas = parse_all(line, key, values)?,
        "sgd_rate" => grid.sgd_rate = parse_all(line, key, values)?,
        "update_prob" => grid.update_prob = parse_all(line, key, values)?,
        "init_spread" => grid.init_spread = parse_all(line, key, values)?,
        other => unreachable!("key '{other}' passed the known-key check"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn study_one_sweep_sizes() {
        let c = StudyConfig::preset(1).unwrap();
        let cells = c.cells().unwrap();
        assert_eq!(cells.len(), 4 * 3 * 2 + 4 * 3 * 2);
        let fig1 = &cells[..24];
        assert!(fig1.iter().all(|cell| matches!(
            &cell.policy,
            PolicySpec::Lif(l) if l.amplitude == 1.0
        )));
        let fig2 = &cells[24..];
        assert!(fig2.iter().all(|cell| matches!(
            &cell.policy,
            PolicySpec::Lif(l) if l.learn_rate == 0.1
        )));
    }

    #[test]
    fn presets_validate() {
        for id in 1..=5 {
            StudyConfig::preset(id).unwrap().validate().unwrap();
        }
        assert!(StudyConfig::preset(6).is_none());
        assert_eq!(StudyConfig::preset(5).unwrap().cells().unwrap().len(), 3);
    }

    #[test]
    fn parses_custom_sweep() {
        let text = "\
# custom sweep
env = parabola
policy = lif1, lif2
gamma = 0.1, 0.5   # two rates
T = 10
sigma2 = 10
horizon = 500
reps = 3
seed = 9
out_dir = /tmp/x
";
        let c = StudyConfig::parse(text).unwrap();
        assert_eq!(c.study, StudyId::Custom);
        assert_eq!(c.reps, 3);
        assert_eq!(c.out_dir, PathBuf::from("/tmp/x"));
        let cells = c.cells().unwrap();
        assert_eq!(cells.len(), 4);
        assert!(cells.iter().all(|c| c.sigma2 == 10.0));
    }

    #[test]
    fn preset_overrides() {
        let c = StudyConfig::parse("study = 2\nsigma2 = 10\nreps = 4\n").unwrap();
        assert_eq!(c.study, StudyId::Preset(2));
        assert_eq!(c.reps, 4);
        assert_eq!(c.cells().unwrap().len(), 1);
        assert_eq!(c.horizon, 10_000);
    }

    #[test]
    fn rejects_bad_configs() {
        for (text, needle) in [
            ("env = parabola\nbogus = 1\n", "unknown key"),
            ("env = parabola\nx0 = 1\nx0 = 2\n", "duplicate"),
            ("policy = lif2\n", "env"),
            ("env = parabola\ngamma = 1.5\n", "learn rate"),
            ("env = parabola\nhorizon = 1, 2\n", "single value"),
            ("env = parabola\nreps = 0\n", "reps"),
            ("env = pricing\npolicy = efirst\nhorizon = 1000\n", "exceed"),
            ("study = 9\n", "study"),
            ("env = parabola\njust some words\n", "key = value"),
            ("env = parabola\nT = ten\n", "bad value"),
        ] {
            let err = StudyConfig::parse(text).unwrap_err().to_string();
            assert!(err.contains(needle), "{text:?} -> {err}");
        }
    }
}
