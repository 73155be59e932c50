//! Simulated data-generating processes.
//!
//! Every environment answers noisy queries and exposes the noiseless oracles
//! (expected reward and true maximizer) needed to score a policy by regret.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("query at non-finite x = {0}")]
    NonFiniteInput(f64),
    #[error("invalid environment parameter: {0}")]
    InvalidParameter(String),
}

/// Outcome of one query: the raw response and the reward fed to the optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub y: f64,
    pub reward: f64,
}

pub trait Environment: Send + Sync + std::fmt::Debug {
    fn query(&self, x: f64, t: u64, rng: &mut dyn RngCore) -> Result<Observation, EnvError>;

    /// Noiseless mean reward at `x` and step `t`.
    fn expected_reward(&self, x: f64, t: u64) -> f64;

    fn true_maximizer(&self, t: u64) -> f64;

    /// Interval used for oracle checks and dense grid comparisons.
    fn domain(&self, t: u64) -> (f64, f64);
}

fn gaussian_noise(sd: f64, rng: &mut dyn RngCore) -> f64 {
    if sd == 0.0 {
        return 0.0;
    }
    // sd was validated finite and positive at construction.
    Normal::new(0.0, sd)
        .expect("validated standard deviation")
        .sample(rng)
}

fn checked_sd(sigma2: f64) -> Result<f64, EnvError> {
    if !sigma2.is_finite() || sigma2 < 0.0 {
        return Err(EnvError::InvalidParameter(format!(
            "noise variance must be finite and >= 0, got {sigma2}"
        )));
    }
    Ok(sigma2.sqrt())
}

const PARABOLA_HALF_WIDTH: f64 = 25.0;

/// `f(x) = coefficient * (x - center)^2 + N(0, sigma^2)` with a negative coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyParabolaEnv {
    pub center: f64,
    pub coefficient: f64,
    pub noise_sd: f64,
}

impl NoisyParabolaEnv {
    /// Parabola with the given noise *variance*.
    pub fn new(center: f64, coefficient: f64, sigma2: f64) -> Result<Self, EnvError> {
        if !(coefficient < 0.0) || !center.is_finite() {
            return Err(EnvError::InvalidParameter(format!(
                "need a finite center and a negative coefficient, got center={center}, coefficient={coefficient}"
            )));
        }
        Ok(Self {
            center,
            coefficient,
            noise_sd: checked_sd(sigma2)?,
        })
    }

    /// `-2 (x - 5)^2` with noise variance `sigma2`.
    pub fn standard(sigma2: f64) -> Result<Self, EnvError> {
        Self::new(5.0, -2.0, sigma2)
    }
}

impl Environment for NoisyParabolaEnv {
    fn query(&self, x: f64, t: u64, rng: &mut dyn RngCore) -> Result<Observation, EnvError> {
        if !x.is_finite() {
            return Err(EnvError::NonFiniteInput(x));
        }
        let y = self.expected_reward(x, t) + gaussian_noise(self.noise_sd, rng);
        Ok(Observation { y, reward: y })
    }

    fn expected_reward(&self, x: f64, _t: u64) -> f64 {
        let d = x - self.center;
        self.coefficient * d * d
    }

    fn true_maximizer(&self, _t: u64) -> f64 {
        self.center
    }

    fn domain(&self, _t: u64) -> (f64, f64) {
        (
            self.center - PARABOLA_HALF_WIDTH,
            self.center + PARABOLA_HALF_WIDTH,
        )
    }
}

/// Parabola whose vertex moves linearly: `x_max(t) = base_center + drift_slope * t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftingParabolaEnv {
    pub drift_slope: f64,
    pub base_center: f64,
    pub coefficient: f64,
    pub noise_sd: f64,
}

impl DriftingParabolaEnv {
    pub fn new(
        base_center: f64,
        drift_slope: f64,
        coefficient: f64,
        sigma2: f64,
    ) -> Result<Self, EnvError> {
        if !(coefficient < 0.0) || !base_center.is_finite() || !drift_slope.is_finite() {
            return Err(EnvError::InvalidParameter(format!(
                "need finite center/slope and a negative coefficient, got center={base_center}, slope={drift_slope}, coefficient={coefficient}"
            )));
        }
        Ok(Self {
            drift_slope,
            base_center,
            coefficient,
            noise_sd: checked_sd(sigma2)?,
        })
    }

    /// Vertex moving from 5 at t=0 to 30 at t=10^4.
    pub fn standard(sigma2: f64) -> Result<Self, EnvError> {
        Self::new(5.0, 0.0025, -2.0, sigma2)
    }
}

impl Environment for DriftingParabolaEnv {
    fn query(&self, x: f64, t: u64, rng: &mut dyn RngCore) -> Result<Observation, EnvError> {
        if !x.is_finite() {
            return Err(EnvError::NonFiniteInput(x));
        }
        let y = self.expected_reward(x, t) + gaussian_noise(self.noise_sd, rng);
        Ok(Observation { y, reward: y })
    }

    fn expected_reward(&self, x: f64, t: u64) -> f64 {
        let d = x - self.true_maximizer(t);
        self.coefficient * d * d
    }

    fn true_maximizer(&self, t: u64) -> f64 {
        self.base_center + self.drift_slope * t as f64
    }

    fn domain(&self, t: u64) -> (f64, f64) {
        let c = self.true_maximizer(t);
        (c - PARABOLA_HALF_WIDTH, c + PARABOLA_HALF_WIDTH)
    }
}

/// Logistic purchase probability `1 / (1 + e^(x - offset))`, numerically stable for any finite `x`.
pub fn purchase_probability(offset: f64, x: f64) -> f64 {
    logistic(offset - x)
}

pub(crate) fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary purchase decisions at price `x`; the reward is the realized revenue `y * x`.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliPricingEnv {
    pub offset: f64,
    maximizer: f64,
}

pub const PRICING_DOMAIN: (f64, f64) = (0.01, 20.0);

impl BernoulliPricingEnv {
    pub fn new(offset: f64) -> Result<Self, EnvError> {
        if !offset.is_finite() || offset <= 1.0 {
            return Err(EnvError::InvalidParameter(format!(
                "pricing offset must be finite and > 1, got {offset}"
            )));
        }
        Ok(Self {
            offset,
            maximizer: revenue_maximizer(offset),
        })
    }

    pub fn standard() -> Self {
        Self::new(10.0).expect("offset 10 is valid")
    }

    pub fn probability(&self, x: f64) -> f64 {
        purchase_probability(self.offset, x)
    }
}

/// Root of `x - offset + ln(x - 1) = 0`, the stationary point of `x * p(x)`.
///
/// The left side is strictly increasing on `x > 1`, so bisection on a sign-changing
/// bracket converges to the unique root.
fn revenue_maximizer(offset: f64) -> f64 {
    let h = |x: f64| x - offset + (x - 1.0).ln();
    let mut lo = 1.01_f64;
    let mut hi = 20.0_f64.max(offset + 1.0);
    while h(lo) > 0.0 {
        lo = 1.0 + (lo - 1.0) / 2.0;
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl Environment for BernoulliPricingEnv {
    fn query(&self, x: f64, _t: u64, rng: &mut dyn RngCore) -> Result<Observation, EnvError> {
        if !x.is_finite() {
            return Err(EnvError::NonFiniteInput(x));
        }
        let p = self.probability(x);
        let y = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
        Ok(Observation { y, reward: y * x })
    }

    fn expected_reward(&self, x: f64, _t: u64) -> f64 {
        x * self.probability(x)
    }

    fn true_maximizer(&self, _t: u64) -> f64 {
        self.maximizer
    }

    fn domain(&self, _t: u64) -> (f64, f64) {
        PRICING_DOMAIN
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;

    fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
        (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
    }

    #[test]
    fn parabola_vertex_is_zero_without_noise() {
        let env = NoisyParabolaEnv::standard(0.0).unwrap();
        let mut rng = rng_from_seed(1);
        let obs = env.query(5.0, 1, &mut rng).unwrap();
        assert_eq!(
            obs,
            Observation {
                y: 0.0,
                reward: 0.0
            }
        );
        assert_eq!(env.expected_reward(3.0, 0), -8.0);
        assert_eq!(env.true_maximizer(0), 5.0);
    }

    #[test]
    fn drifting_vertex_reaches_thirty() {
        let env = DriftingParabolaEnv::standard(0.0).unwrap();
        let mut rng = rng_from_seed(1);
        assert_eq!(env.true_maximizer(0), 5.0);
        assert!((env.true_maximizer(10_000) - 30.0).abs() < 1e-12);
        let obs = env.query(30.0, 10_000, &mut rng).unwrap();
        assert!(obs.y.abs() < 1e-12);
    }

    #[test]
    fn pricing_closed_forms() {
        let env = BernoulliPricingEnv::standard();
        assert_eq!(env.probability(10.0), 0.5);
        assert_eq!(env.expected_reward(10.0, 0), 5.0);
        let at8 = 8.0 / (1.0 + (-2.0_f64).exp());
        assert!((env.expected_reward(8.0, 0) - at8).abs() < 1e-12);
        assert!((at8 - 7.046).abs() < 1e-3);
    }

    #[test]
    fn pricing_maximizer_solves_stationarity() {
        let env = BernoulliPricingEnv::standard();
        let x = env.true_maximizer(0);
        assert!((x + (x - 1.0).ln() - 10.0).abs() < 1e-9);
        assert!((x - 8.05).abs() < 0.01, "x_max = {x}");
    }

    #[test]
    fn pricing_mean_purchase_at_half() {
        let env = BernoulliPricingEnv::standard();
        let mut rng = rng_from_seed(7);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| env.query(10.0, 0, &mut rng).unwrap().y)
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean = {mean}");
    }

    #[test]
    fn oracle_dominates_dense_grid() {
        let envs: Vec<Box<dyn Environment>> = vec![
            Box::new(NoisyParabolaEnv::standard(10.0).unwrap()),
            Box::new(DriftingParabolaEnv::standard(10.0).unwrap()),
            Box::new(BernoulliPricingEnv::standard()),
        ];
        for env in &envs {
            for t in [0_u64, 1, 5_000, 10_000] {
                let best = env.expected_reward(env.true_maximizer(t), t);
                let (lo, hi) = env.domain(t);
                for x in grid(lo, hi, 2001) {
                    assert!(
                        best >= env.expected_reward(x, t) - 1e-9,
                        "{env:?} t={t} x={x}"
                    );
                }
            }
        }
    }

    #[test]
    fn parabola_noise_is_unbiased() {
        let sigma2 = 100.0;
        let env = NoisyParabolaEnv::standard(sigma2).unwrap();
        let mut rng = rng_from_seed(11);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| env.query(2.0, 0, &mut rng).unwrap().y - env.expected_reward(2.0, 0))
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 3.0 * sigma2.sqrt() / (n as f64).sqrt());
    }

    #[test]
    fn rejects_non_finite_queries() {
        let mut rng = rng_from_seed(0);
        let env = NoisyParabolaEnv::standard(0.0).unwrap();
        assert!(matches!(
            env.query(f64::NAN, 1, &mut rng),
            Err(EnvError::NonFiniteInput(_))
        ));
        let env = BernoulliPricingEnv::standard();
        assert!(env.query(f64::INFINITY, 1, &mut rng).is_err());
    }

    #[test]
    fn identical_seeds_give_identical_draws() {
        let env = NoisyParabolaEnv::standard(1000.0).unwrap();
        let draw = |seed| {
            let mut rng = rng_from_seed(seed);
            (0..100)
                .map(|t| env.query(1.0, t, &mut rng).unwrap().y)
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
        assert_ne!(draw(3), draw(4));
    }

    #[test]
    fn invalid_parameters() {
        assert!(NoisyParabolaEnv::standard(-1.0).is_err());
        assert!(NoisyParabolaEnv::new(5.0, 2.0, 0.0).is_err());
        assert!(BernoulliPricingEnv::new(f64::NAN).is_err());
    }
}
