//! Comparator policies for the pricing problem: epsilon-first with a single
//! post-exploration logistic fit, and bootstrap Thompson sampling over
//! SGD-updated logistic models.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::env::{logistic, EnvError, Environment};
use crate::metrics::instantaneous_regret;
use crate::record::{RunRecord, Step};
use crate::rng_from_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("logistic fit needs both outcome classes")]
    SingleClass,
    #[error("outcomes are separable in x; the likelihood has no finite maximum")]
    Separable,
    #[error("logistic fit did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NoConvergence {
        iterations: usize,
        gradient_norm: f64,
    },
    #[error("outcome must be 0 or 1, got {0}")]
    NonBinaryOutcome(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Environment(#[from] EnvError),
}

/// `Pr(y = 1 | x) = logistic(beta0 + beta1 * x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticModel {
    pub beta0: f64,
    pub beta1: f64,
}

impl LogisticModel {
    /// The pricing environment's purchase model, `logistic(10 - x)`.
    pub const PRICING_TRUTH: LogisticModel = LogisticModel {
        beta0: 10.0,
        beta1: -1.0,
    };

    pub fn probability(&self, x: f64) -> f64 {
        logistic(self.beta0 + self.beta1 * x)
    }

    pub fn expected_revenue(&self, x: f64) -> f64 {
        x * self.probability(x)
    }
}

/// Evenly spaced candidate prices `low, low + step, ..., high`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceGrid {
    pub low: f64,
    pub high: f64,
    pub step: f64,
}

impl Default for PriceGrid {
    fn default() -> Self {
        Self {
            low: 0.0,
            high: 20.0,
            step: 0.01,
        }
    }
}

impl PriceGrid {
    pub fn new(low: f64, high: f64, step: f64) -> Self {
        Self { low, high, step }
    }

    pub fn points(&self) -> usize {
        ((self.high - self.low) / self.step).round() as usize + 1
    }

    pub fn at(&self, i: usize) -> f64 {
        if i + 1 == self.points() {
            self.high
        } else {
            self.low + i as f64 * self.step
        }
    }
}

/// Grid argmax of `x * Pr(y=1|x)`; ties go to the smaller price.
pub fn argmax_expected_revenue(model: &LogisticModel, grid: &PriceGrid) -> f64 {
    grid.at(argmax_index_exhaustive(model, grid))
}

fn argmax_index_exhaustive(model: &LogisticModel, grid: &PriceGrid) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for i in 0..grid.points() {
        let v = model.expected_revenue(grid.at(i));
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

/// Same result as [`argmax_expected_revenue`] without scanning the whole grid when
/// the revenue curve is log-concave.
///
/// For `beta1 < 0` and prices `> 0`, `ln x + ln logistic(beta0 + beta1 x)` is
/// strictly concave, so the grid maximum sits next to the continuous maximizer.
/// Anything else (non-positive prices, increasing demand, underflowed revenue)
/// falls back to the exhaustive scan.
pub fn argmax_expected_revenue_fast(model: &LogisticModel, grid: &PriceGrid) -> f64 {
    let n = grid.points();
    if grid.low < 0.0 || !(model.beta1 < 0.0) || n < 8 {
        return argmax_expected_revenue(model, grid);
    }
    // d/dx of the log revenue; strictly decreasing in x.
    let slope = |x: f64| 1.0 / x + model.beta1 * (1.0 - model.probability(x));
    let mut lo = grid.low.max(f64::MIN_POSITIVE);
    let mut hi = grid.high;
    let center = if slope(hi) >= 0.0 {
        hi
    } else if slope(lo) <= 0.0 {
        lo
    } else {
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if slope(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let k = (((center - grid.low) / grid.step).floor().max(0.0) as usize).min(n - 1);
    let first = k.saturating_sub(3);
    let last = (k + 4).min(n - 1);
    let mut best = first;
    let mut best_value = f64::NEG_INFINITY;
    for i in first..=last {
        let v = model.expected_revenue(grid.at(i));
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    // A maximum on the edge of the scanned band, or total underflow, needs the full scan.
    if !(best_value > 0.0) || (best == first && first > 0) || (best == last && last < n - 1) {
        return argmax_expected_revenue(model, grid);
    }
    grid.at(best)
}

/// Maximum-likelihood logistic regression of `y` on `x` by Newton's method.
pub fn fit_logistic(samples: &[(f64, f64)]) -> Result<LogisticModel, BaselineError> {
    const TOLERANCE: f64 = 1e-8;
    const MAX_ITERATIONS: usize = 200;

    let mut min_x = [f64::INFINITY; 2];
    let mut max_x = [f64::NEG_INFINITY; 2];
    for &(x, y) in samples {
        let class = binary(y)? as usize;
        min_x[class] = min_x[class].min(x);
        max_x[class] = max_x[class].max(x);
    }
    if min_x[0].is_infinite() || min_x[1].is_infinite() {
        return Err(BaselineError::SingleClass);
    }
    // One covariate: a finite MLE exists iff the class ranges overlap.
    if max_x[0] <= min_x[1] || max_x[1] <= min_x[0] {
        return Err(BaselineError::Separable);
    }

    let log_likelihood = |b0: f64, b1: f64| -> f64 {
        samples
            .iter()
            .map(|&(x, y)| {
                let z = b0 + b1 * x;
                // y z - ln(1 + e^z), stable for large |z|
                y * z - (z.max(0.0) + (-z.abs()).exp().ln_1p())
            })
            .sum()
    };

    let (mut b0, mut b1) = (0.0_f64, 0.0_f64);
    let mut ll = log_likelihood(b0, b1);
    let mut gradient_norm = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(x, y) in samples {
            let p = logistic(b0 + b1 * x);
            let r = y - p;
            let w = p * (1.0 - p);
            g0 += r;
            g1 += r * x;
            h00 += w;
            h01 += w * x;
            h11 += w * x * x;
        }
        gradient_norm = g0.hypot(g1);
        if gradient_norm < TOLERANCE {
            return Ok(LogisticModel {
                beta0: b0,
                beta1: b1,
            });
        }
        let det = h00 * h11 - h01 * h01;
        if !(det > 0.0) {
            break;
        }
        let d0 = (h11 * g0 - h01 * g1) / det;
        let d1 = (h00 * g1 - h01 * g0) / det;
        let mut scale = 1.0;
        loop {
            let (n0, n1) = (b0 + scale * d0, b1 + scale * d1);
            let candidate = log_likelihood(n0, n1);
            // Near the optimum the likelihood gain drops below rounding noise.
            if candidate >= ll - 1e-12 * (1.0 + ll.abs()) || scale < 1e-10 {
                b0 = n0;
                b1 = n1;
                ll = candidate;
                break;
            }
            scale *= 0.5;
        }
    }
    Err(BaselineError::NoConvergence {
        iterations: MAX_ITERATIONS,
        gradient_norm,
    })
}

fn binary(y: f64) -> Result<bool, BaselineError> {
    if y == 0.0 {
        Ok(false)
    } else if y == 1.0 {
        Ok(true)
    } else {
        Err(BaselineError::NonBinaryOutcome(y))
    }
}

/// One gradient-ascent step on the Bernoulli log-likelihood of `(x, y)`.
pub fn sgd_update(model: &LogisticModel, x: f64, y: f64, rate: f64) -> LogisticModel {
    let residual = y - model.probability(x);
    LogisticModel {
        beta0: model.beta0 + rate * residual,
        beta1: model.beta1 + rate * residual * x,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonFirstConfig {
    /// Length `n` of the uniform exploration phase.
    pub explore_steps: u64,
    pub x_low: f64,
    pub x_high: f64,
    pub grid_step: f64,
}

impl Default for EpsilonFirstConfig {
    fn default() -> Self {
        Self {
            explore_steps: 1000,
            x_low: 0.0,
            x_high: 20.0,
            grid_step: 0.01,
        }
    }
}

impl EpsilonFirstConfig {
    pub fn validate(&self) -> Result<(), BaselineError> {
        if self.explore_steps == 0 {
            return Err(BaselineError::InvalidConfig(
                "explore_steps must be positive".into(),
            ));
        }
        if !(self.x_low < self.x_high) || !self.x_low.is_finite() || !self.x_high.is_finite() {
            return Err(BaselineError::InvalidConfig(format!(
                "need finite x_low < x_high, got [{}, {}]",
                self.x_low, self.x_high
            )));
        }
        if !(self.grid_step > 0.0) {
            return Err(BaselineError::InvalidConfig(format!(
                "grid step must be positive, got {}",
                self.grid_step
            )));
        }
        Ok(())
    }

    fn grid(&self) -> PriceGrid {
        PriceGrid::new(self.x_low, self.x_high, self.grid_step)
    }
}

/// Explore uniformly for `n` steps, fit once, then play the fitted argmax forever.
pub fn epsilon_first_run(
    env: &dyn Environment,
    horizon: u64,
    config: &EpsilonFirstConfig,
    seed: u64,
) -> Result<RunRecord, BaselineError> {
    config.validate()?;
    if horizon <= config.explore_steps {
        return Err(BaselineError::InvalidConfig(format!(
            "horizon {horizon} must exceed explore_steps {}",
            config.explore_steps
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut record = RunRecord::with_capacity(horizon as usize);
    let mut samples = Vec::with_capacity(config.explore_steps as usize);
    let mut committed = None;
    for t in 1..=horizon {
        let x = match committed {
            Some(x) => x,
            None => rng.random_range(config.x_low..config.x_high),
        };
        let obs = env.query(x, t, &mut rng)?;
        let mut updated = false;
        if committed.is_none() {
            samples.push((x, obs.y));
            if t == config.explore_steps {
                let model = fit_logistic(&samples)?;
                committed = Some(argmax_expected_revenue(&model, &config.grid()));
                updated = true;
            }
        }
        record.steps.push(Step {
            t,
            x0: x,
            x_probe: x,
            y: obs.y,
            reward: obs.reward,
            updated,
            regret: instantaneous_regret(env, x, t),
        });
    }
    Ok(record)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BtsConfig {
    /// Number of bootstrap replicas `J`.
    pub replicas: usize,
    /// Probability that a replica absorbs each observation (0.5 is double-or-nothing).
    pub update_prob: f64,
    pub sgd_rate: f64,
    /// Standard deviation of the replicas' initial parameters around `prior`.
    pub init_spread: f64,
    pub prior: LogisticModel,
    pub grid: PriceGrid,
}

impl Default for BtsConfig {
    fn default() -> Self {
        Self {
            replicas: 100,
            update_prob: 0.5,
            sgd_rate: 0.01,
            init_spread: 1.0,
            prior: LogisticModel::PRICING_TRUTH,
            grid: PriceGrid::default(),
        }
    }
}

impl BtsConfig {
    pub fn validate(&self) -> Result<(), BaselineError> {
        if self.replicas == 0 {
            return Err(BaselineError::InvalidConfig("replicas must be >= 1".into()));
        }
        if !(self.update_prob > 0.0 && self.update_prob <= 1.0) {
            return Err(BaselineError::InvalidConfig(format!(
                "update_prob must be in (0, 1], got {}",
                self.update_prob
            )));
        }
        if !(self.sgd_rate > 0.0 && self.sgd_rate.is_finite()) {
            return Err(BaselineError::InvalidConfig(format!(
                "sgd_rate must be finite and > 0, got {}",
                self.sgd_rate
            )));
        }
        if !(self.init_spread >= 0.0 && self.init_spread.is_finite()) {
            return Err(BaselineError::InvalidConfig(format!(
                "init_spread must be finite and >= 0, got {}",
                self.init_spread
            )));
        }
        if !(self.grid.step > 0.0 && self.grid.low < self.grid.high) {
            return Err(BaselineError::InvalidConfig("invalid price grid".into()));
        }
        Ok(())
    }
}

/// Bootstrap Thompson sampling state: `J` logistic models, each updated on a
/// random half of the stream.
#[derive(Debug, Clone)]
pub struct Bts {
    config: BtsConfig,
    models: Vec<LogisticModel>,
    update_counts: Vec<u64>,
    selection_counts: Vec<u64>,
}

/// What happened on one BTS step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BtsStep {
    pub replica: usize,
    pub x: f64,
    pub updates: usize,
}

impl Bts {
    pub fn new(config: BtsConfig, rng: &mut dyn RngCore) -> Result<Self, BaselineError> {
        config.validate()?;
        let draw = |mean: f64, rng: &mut dyn RngCore| {
            if config.init_spread == 0.0 {
                mean
            } else {
                Normal::new(mean, config.init_spread)
                    .expect("validated spread")
                    .sample(rng)
            }
        };
        let models = (0..config.replicas)
            .map(|_| {
                let beta0 = draw(config.prior.beta0, rng);
                let beta1 = draw(config.prior.beta1, rng);
                LogisticModel { beta0, beta1 }
            })
            .collect();
        Ok(Self {
            models,
            update_counts: vec![0; config.replicas],
            selection_counts: vec![0; config.replicas],
            config,
        })
    }

    pub fn models(&self) -> &[LogisticModel] {
        &self.models
    }

    pub fn update_counts(&self) -> &[u64] {
        &self.update_counts
    }

    pub fn selection_counts(&self) -> &[u64] {
        &self.selection_counts
    }

    /// Pick a replica uniformly and return it with its revenue-maximizing price.
    pub fn select(&mut self, rng: &mut dyn RngCore) -> (usize, f64) {
        let j = rng.random_range(0..self.models.len());
        self.selection_counts[j] += 1;
        (
            j,
            argmax_expected_revenue_fast(&self.models[j], &self.config.grid),
        )
    }

    /// Offer `(x, y)` to every replica; each absorbs it with probability `update_prob`.
    pub fn update(&mut self, x: f64, y: f64, rng: &mut dyn RngCore) -> usize {
        let mut updates = 0;
        for (model, count) in self.models.iter_mut().zip(&mut self.update_counts) {
            if rng.random::<f64>() < self.config.update_prob {
                *model = sgd_update(model, x, y, self.config.sgd_rate);
                *count += 1;
                updates += 1;
            }
        }
        updates
    }

    pub fn step(
        &mut self,
        env: &dyn Environment,
        t: u64,
        rng: &mut dyn RngCore,
    ) -> Result<(BtsStep, crate::env::Observation), BaselineError> {
        let (replica, x) = self.select(rng);
        let obs = env.query(x, t, rng)?;
        let updates = self.update(x, obs.y, rng);
        Ok((
            BtsStep {
                replica,
                x,
                updates,
            },
            obs,
        ))
    }
}

pub fn bts_run(
    env: &dyn Environment,
    horizon: u64,
    config: &BtsConfig,
    seed: u64,
) -> Result<RunRecord, BaselineError> {
    if horizon == 0 {
        return Err(BaselineError::InvalidConfig("horizon must be >= 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut bts = Bts::new(config.clone(), &mut rng)?;
    let mut record = RunRecord::with_capacity(horizon as usize);
    for t in 1..=horizon {
        let (step, obs) = bts.step(env, t, &mut rng)?;
        record.steps.push(Step {
            t,
            x0: step.x,
            x_probe: step.x,
            y: obs.y,
            reward: obs.reward,
            updated: step.updates > 0,
            regret: instantaneous_regret(env, step.x, t),
        });
    }
    Ok(record)
}
