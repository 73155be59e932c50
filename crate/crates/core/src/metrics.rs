//! Regret and cross-replication summaries.

use thiserror::Error;

use crate::env::Environment;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("need at least 2 runs to aggregate, got {0}")]
    TooFewRuns(usize),
    #[error("run {index} has length {len}, expected {expected}")]
    RaggedRuns {
        index: usize,
        len: usize,
        expected: usize,
    },
}

/// Expected loss of playing `x` at step `t` instead of the oracle maximizer.
///
/// Uses noiseless oracles, never realized rewards.
pub fn instantaneous_regret(env: &dyn Environment, x: f64, t: u64) -> f64 {
    env.expected_reward(env.true_maximizer(t), t) - env.expected_reward(x, t)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegretSeries {
    pub instantaneous: Vec<f64>,
    pub cumulative: Vec<f64>,
}

pub fn accumulate(instantaneous: &[f64]) -> RegretSeries {
    let cumulative = instantaneous
        .iter()
        .scan(0.0, |acc, &r| {
            *acc += r;
            Some(*acc)
        })
        .collect();
    RegretSeries {
        instantaneous: instantaneous.to_vec(),
        cumulative,
    }
}

/// Per-step mean and 95% band across replications.
///
/// The band is percentile based, so a heavy upper or lower tail can pull the mean
/// outside it once there are more than about 40 runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSummary {
    pub mean: Vec<f64>,
    /// 2.5th percentile.
    pub lower: Vec<f64>,
    /// 97.5th percentile.
    pub upper: Vec<f64>,
    pub reps: usize,
}

impl ReplicationSummary {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Percentile of sorted data, linearly interpolated between order statistics at
/// rank `q * (n - 1)`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let rank = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub fn aggregate<R: AsRef<[f64]>>(runs: &[R]) -> Result<ReplicationSummary, MetricsError> {
    if runs.len() < 2 {
        return Err(MetricsError::TooFewRuns(runs.len()));
    }
    let expected = runs[0].as_ref().len();
    for (index, run) in runs.iter().enumerate() {
        let len = run.as_ref().len();
        if len != expected {
            return Err(MetricsError::RaggedRuns {
                index,
                len,
                expected,
            });
        }
    }
    let m = runs.len();
    let mut mean = Vec::with_capacity(expected);
    let mut lower = Vec::with_capacity(expected);
    let mut upper = Vec::with_capacity(expected);
    let mut column = vec![0.0; m];
    for step in 0..expected {
        for (slot, run) in column.iter_mut().zip(runs) {
            *slot = run.as_ref()[step];
        }
        column.sort_by(f64::total_cmp);
        // Summing sorted values keeps the mean independent of run order.
        let mu = column.iter().sum::<f64>() / m as f64;
        let lo = percentile(&column, 0.025);
        let hi = percentile(&column, 0.975);
        mean.push(mu);
        lower.push(lo);
        upper.push(hi);
    }
    Ok(ReplicationSummary {
        mean,
        lower,
        upper,
        reps: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{BernoulliPricingEnv, NoisyParabolaEnv};
    use proptest::prelude::*;

    #[test]
    fn regret_examples() {
        let env = NoisyParabolaEnv::standard(0.0).unwrap();
        assert_eq!(instantaneous_regret(&env, 5.0, 1), 0.0);
        assert_eq!(instantaneous_regret(&env, 3.0, 1), 8.0);

        let env = BernoulliPricingEnv::standard();
        let x_max = env.true_maximizer(0);
        let best = x_max / (1.0 + (x_max - 10.0).exp());
        let r = instantaneous_regret(&env, 10.0, 1);
        assert!((r - (best - 5.0)).abs() < 1e-12);
        assert!((r - 2.046).abs() < 2e-3, "r = {r}");
    }

    #[test]
    fn accumulate_examples() {
        assert_eq!(accumulate(&[1.0, 1.0, 1.0]).cumulative, vec![1.0, 2.0, 3.0]);
        assert_eq!(accumulate(&[]), RegretSeries::default());
    }

    #[test]
    fn aggregate_examples() {
        let runs = vec![vec![0.0; 4], vec![10.0; 4]];
        let s = aggregate(&runs).unwrap();
        assert_eq!(s.mean, vec![5.0; 4]);
        assert!((s.lower[0] - 0.25).abs() < 1e-12);
        assert!((s.upper[0] - 9.75).abs() < 1e-12);
        assert_eq!(s.reps, 2);

        let same = vec![vec![1.5, 2.5]; 5];
        let s = aggregate(&same).unwrap();
        assert_eq!(s.lower, s.mean);
        assert_eq!(s.upper, s.mean);
    }

    #[test]
    fn aggregate_errors() {
        assert_eq!(
            aggregate(&[vec![1.0]]).unwrap_err(),
            MetricsError::TooFewRuns(1)
        );
        assert!(matches!(
            aggregate(&[vec![1.0, 2.0], vec![1.0]]),
            Err(MetricsError::RaggedRuns {
                index: 1,
                len: 1,
                expected: 2
            })
        ));
    }

    proptest! {
        #[test]
        fn prefix_sum_matches_fold(v in proptest::collection::vec(0.0..100.0f64, 0..200)) {
            let s = accumulate(&v);
            let mut acc = 0.0;
            for (i, r) in v.iter().enumerate() {
                acc += r;
                prop_assert_eq!(s.cumulative[i], acc);
            }
            prop_assert!(s.cumulative.windows(2).all(|w| w[1] >= w[0]));
        }

        #[test]
        fn aggregate_is_order_free_and_banded(
            runs in proptest::collection::vec(proptest::collection::vec(-1e3..1e3f64, 6), 2..12),
            rot in 0usize..12,
        ) {
            let s = aggregate(&runs).unwrap();
            let mut shuffled = runs.clone();
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            prop_assert_eq!(&s, &aggregate(&shuffled).unwrap());
            for i in 0..s.len() {
                prop_assert!(s.lower[i] <= s.mean[i] && s.mean[i] <= s.upper[i]);
            }
        }

        #[test]
        fn regret_is_nonnegative(x in -50.0..60.0f64, t in 0u64..20_000) {
            let envs: [Box<dyn Environment>; 2] = [
                Box::new(NoisyParabolaEnv::standard(1.0).unwrap()),
                Box::new(BernoulliPricingEnv::standard()),
            ];
            for env in &envs {
                prop_assert!(instantaneous_regret(env.as_ref(), x, t) >= -1e-9);
            }
        }
    }
}
