//! The lock-in feedback optimizer.
//!
//! Each step probes `x_t = x0 + A cos(wt)` with `w = 2*pi/T`, observes `y_t`, and
//! demodulates it as `y_t cos(wt)`. Over one full period the constant and
//! `cos^3` parts of the second-order expansion of `f` sum to zero and
//! `sum cos^2 = T/2`, so the window average `y_w* = sum(y_t cos(wt)) / T`
//! equals `(A/2) f'(x0)` plus averaged noise. The center then moves along that
//! estimate:
//!
//! - [`Variant::Batch`]: accumulate a full window, update `x0 += gamma * y_w*`
//!   every `T` steps and reset the accumulator.
//! - [`Variant::Continuous`]: keep the last `T` demodulated values and, once the
//!   buffer has filled, update `x0 += (gamma / T) * y_w*` on every step.
//!
//! Demodulating against `cos(2wt)` isolates `(A^2/8) T f''(x0)` instead, which
//! gives the curvature of a parabola and, with the gradient, its exact vertex.

use std::collections::VecDeque;
use std::f64::consts::PI;

use thiserror::Error;

use crate::env::{EnvError, Environment};
use crate::metrics::instantaneous_regret;
use crate::record::{RunRecord, Step};
use crate::rng_from_seed;

/// Curvature estimates at or below this are treated as flat or convex.
pub const CURVATURE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LifError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite observation {value} at t={t}")]
    NonFiniteObservation { t: u64, value: f64 },
    #[error("window holds {got} observations, expected {expected}")]
    WindowLength { got: usize, expected: usize },
    #[error("window steps are not consecutive at t={0}")]
    WindowGap(u64),
    #[error("curvature estimate {0} is not concave; no exact step exists")]
    NotConcave(f64),
    #[error("horizon must be at least 1")]
    EmptyHorizon,
    #[error(transparent)]
    Environment(#[from] EnvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// LiF-I: one update per integration window.
    Batch,
    /// LiF-II: sliding window, one update per observation once the buffer is full.
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifConfig {
    pub x0_init: f64,
    /// Oscillation amplitude `A`, in units of `x`.
    pub amplitude: f64,
    /// Integration window `T` in steps; exactly one oscillation per window.
    pub window: usize,
    /// Learn rate `gamma`, in `(0, 1)`.
    pub learn_rate: f64,
    pub variant: Variant,
}

impl LifConfig {
    pub fn new(
        x0_init: f64,
        amplitude: f64,
        window: usize,
        learn_rate: f64,
        variant: Variant,
    ) -> Result<Self, LifError> {
        let config = Self {
            x0_init,
            amplitude,
            window,
            learn_rate,
            variant,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), LifError> {
        if !self.x0_init.is_finite() {
            return Err(LifError::InvalidConfig(format!(
                "x0 must be finite, got {}",
                self.x0_init
            )));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(LifError::InvalidConfig(format!(
                "amplitude must be finite and > 0, got {}",
                self.amplitude
            )));
        }
        if self.window < 3 {
            return Err(LifError::InvalidConfig(format!(
                "window must be >= 3, got {}",
                self.window
            )));
        }
        if !(self.learn_rate > 0.0 && self.learn_rate < 1.0) {
            return Err(LifError::InvalidConfig(format!(
                "learn rate must be in (0, 1), got {}",
                self.learn_rate
            )));
        }
        Ok(())
    }

    pub fn omega(&self) -> f64 {
        2.0 * PI / self.window as f64
    }

    /// `cos(harmonic * w * t)`, with the phase reduced modulo one period so every
    /// window sees bit-identical reference values.
    pub fn reference(&self, harmonic: u64, t: u64) -> f64 {
        let n = self.window as u64;
        let k = ((harmonic % n) * (t % n)) % n;
        (2.0 * PI * k as f64 / self.window as f64).cos()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifState {
    pub x0: f64,
    /// Index of the next probe; starts at 1.
    pub t: u64,
    /// Running window sum (batch variant).
    pub accumulator: f64,
    /// Last `T` demodulated values (continuous variant).
    pub buffer: VecDeque<f64>,
}

impl LifState {
    pub fn new(config: &LifConfig) -> Self {
        Self {
            x0: config.x0_init,
            t: 1,
            accumulator: 0.0,
            buffer: VecDeque::with_capacity(config.window),
        }
    }

    pub fn next_probe(&self, config: &LifConfig) -> f64 {
        self.x0 + config.amplitude * config.reference(1, self.t)
    }

    /// Feed the outcome measured at the current probe. Returns the new center when
    /// this step triggered an update.
    pub fn observe(&mut self, config: &LifConfig, y: f64) -> Result<Option<f64>, LifError> {
        if !y.is_finite() {
            return Err(LifError::NonFiniteObservation {
                t: self.t,
                value: y,
            });
        }
        let t = self.t;
        let window = config.window as u64;
        let demodulated = y * config.reference(1, t);
        let update = match config.variant {
            Variant::Batch => {
                self.accumulator += demodulated;
                if t.is_multiple_of(window) {
                    let y_star = self.accumulator / config.window as f64;
                    self.x0 += config.learn_rate * y_star;
                    self.accumulator = 0.0;
                    Some(self.x0)
                } else {
                    None
                }
            }
            Variant::Continuous => {
                if self.buffer.len() == config.window {
                    self.buffer.pop_front();
                }
                self.buffer.push_back(demodulated);
                if t > window {
                    let y_star = self.buffer.iter().sum::<f64>() / config.window as f64;
                    self.x0 += config.learn_rate / config.window as f64 * y_star;
                    Some(self.x0)
                } else {
                    None
                }
            }
        };
        self.t += 1;
        Ok(update)
    }
}

/// A configured optimizer together with its evolving state.
#[derive(Debug, Clone, PartialEq)]
pub struct Lif {
    config: LifConfig,
    state: LifState,
}

impl Lif {
    pub fn new(config: LifConfig) -> Result<Self, LifError> {
        config.validate()?;
        let state = LifState::new(&config);
        Ok(Self { config, state })
    }

    pub fn config(&self) -> &LifConfig {
        &self.config
    }

    pub fn state(&self) -> &LifState {
        &self.state
    }

    pub fn center(&self) -> f64 {
        self.state.x0
    }

    pub fn next_probe(&self) -> f64 {
        self.state.next_probe(&self.config)
    }

    pub fn observe(&mut self, y: f64) -> Result<Option<f64>, LifError> {
        self.state.observe(&self.config, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeEstimate {
    /// Demodulated window average `y_w*`, in units of `y`.
    pub y_omega_star: f64,
    /// `2 y_w* / A`, the estimate of `f'(x0)`.
    pub implied_gradient: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureEstimate {
    /// Raw second-harmonic sum `sum y_t cos(2wt)` over the window.
    pub s_2omega: f64,
    /// Estimated `alpha` for `y = -alpha (x - x_c)^2 + c`.
    pub alpha_hat: f64,
}

fn demodulate(
    window_values: &[(u64, f64)],
    config: &LifConfig,
    harmonic: u64,
) -> Result<f64, LifError> {
    if window_values.len() != config.window {
        return Err(LifError::WindowLength {
            got: window_values.len(),
            expected: config.window,
        });
    }
    for pair in window_values.windows(2) {
        if pair[1].0 != pair[0].0 + 1 {
            return Err(LifError::WindowGap(pair[1].0));
        }
    }
    Ok(window_values
        .iter()
        .map(|&(t, y)| y * config.reference(harmonic, t))
        .sum())
}

/// First-harmonic estimate over exactly one window of `(t, y_t)` pairs.
pub fn estimate_derivative(
    window_values: &[(u64, f64)],
    config: &LifConfig,
) -> Result<DerivativeEstimate, LifError> {
    let y_omega_star = demodulate(window_values, config, 1)? / config.window as f64;
    Ok(DerivativeEstimate {
        y_omega_star,
        implied_gradient: 2.0 * y_omega_star / config.amplitude,
    })
}

/// Second-harmonic estimate over exactly one window of `(t, y_t)` pairs.
///
/// `sum y_t cos(2wt) = (T A^2 / 8) f''` and `f'' = -2 alpha`, hence
/// `alpha = -4 s / (T A^2)`.
pub fn estimate_curvature(
    window_values: &[(u64, f64)],
    config: &LifConfig,
) -> Result<CurvatureEstimate, LifError> {
    let s_2omega = demodulate(window_values, config, 2)?;
    let a = config.amplitude;
    Ok(CurvatureEstimate {
        s_2omega,
        alpha_hat: -4.0 * s_2omega / (config.window as f64 * a * a),
    })
}

/// Vertex of the parabola implied by the two estimates: `x0 + f'(x0) / (2 alpha)`.
pub fn exact_parabola_step(
    x0: f64,
    derivative: &DerivativeEstimate,
    curvature: &CurvatureEstimate,
) -> Result<f64, LifError> {
    if !(curvature.alpha_hat > CURVATURE_TOLERANCE) {
        return Err(LifError::NotConcave(curvature.alpha_hat));
    }
    Ok(x0 + derivative.implied_gradient / (2.0 * curvature.alpha_hat))
}

/// A run that stopped early, carrying every step completed before the failure.
#[derive(Debug, Error)]
#[error("run aborted at t={t}: {source}")]
pub struct RunError {
    pub t: u64,
    pub partial: RunRecord,
    #[source]
    pub source: LifError,
}

/// Drive the probe/observe loop for `horizon` steps against `env`.
///
/// A diverging center eventually produces a non-finite probe or observation;
/// the run then stops with [`RunError`] holding the finite prefix.
pub fn run(
    config: &LifConfig,
    env: &dyn Environment,
    horizon: u64,
    seed: u64,
) -> Result<RunRecord, RunError> {
    let fail = |t, partial, source| RunError { t, partial, source };
    if horizon == 0 {
        return Err(fail(0, RunRecord::default(), LifError::EmptyHorizon));
    }
    let mut lif = Lif::new(config.clone()).map_err(|e| fail(0, RunRecord::default(), e))?;
    let mut rng = rng_from_seed(seed);
    let mut record = RunRecord::with_capacity(horizon as usize);
    for t in 1..=horizon {
        let x_probe = lif.next_probe();
        let obs = match env.query(x_probe, t, &mut rng) {
            Ok(obs) => obs,
            Err(e) => return Err(fail(t, record, e.into())),
        };
        let updated = match lif.observe(obs.reward) {
            Ok(u) => u.is_some(),
            Err(e) => return Err(fail(t, record, e)),
        };
        record.steps.push(Step {
            t,
            x0: lif.center(),
            x_probe,
            y: obs.y,
            reward: obs.reward,
            updated,
            regret: instantaneous_regret(env, x_probe, t),
        });
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::NoisyParabolaEnv;
    use proptest::prelude::*;

    fn cfg(x0: f64, a: f64, window: usize, gamma: f64, variant: Variant) -> LifConfig {
        LifConfig::new(x0, a, window, gamma, variant).unwrap()
    }

    fn parabola(x: f64) -> f64 {
        -2.0 * (x - 5.0) * (x - 5.0)
    }

    /// Window of noiseless observations around a fixed center, t = start..start+T.
    fn window_at(
        config: &LifConfig,
        x0: f64,
        start: u64,
        f: impl Fn(f64) -> f64,
    ) -> Vec<(u64, f64)> {
        let w = config.omega();
        (start..start + config.window as u64)
            .map(|t| (t, f(x0 + config.amplitude * (w * t as f64).cos())))
            .collect()
    }

    #[test]
    fn probes_follow_the_cosine() {
        let c = cfg(5.0, 1.0, 100, 0.1, Variant::Batch);
        let mut s = LifState::new(&c);
        s.t = 100;
        assert!((s.next_probe(&c) - 6.0).abs() < 1e-12);
        s.t = 25;
        assert!((s.next_probe(&c) - 5.0).abs() < 1e-12);
        let c = cfg(-5.0, 2.0, 10, 0.1, Variant::Batch);
        let mut s = LifState::new(&c);
        s.t = 5;
        assert!((s.next_probe(&c) + 7.0).abs() < 1e-12);
        assert_eq!(s.t, 5);
    }

    #[test]
    fn batch_update_after_one_window() {
        let c = cfg(-5.0, 1.0, 100, 0.1, Variant::Batch);
        let mut s = LifState::new(&c);
        for t in 1..=99 {
            let x = s.next_probe(&c);
            assert_eq!(s.observe(&c, parabola(x)).unwrap(), None, "t={t}");
        }
        let x = s.next_probe(&c);
        let new_x0 = s.observe(&c, parabola(x)).unwrap().unwrap();
        assert!((new_x0 + 3.0).abs() < 1e-9, "x0 = {new_x0}");
        assert_eq!(s.accumulator, 0.0);
        assert_eq!(s.t, 101);
    }

    #[test]
    fn no_movement_at_the_maximum() {
        for variant in [Variant::Batch, Variant::Continuous] {
            let c = cfg(5.0, 1.0, 100, 0.1, variant);
            let mut s = LifState::new(&c);
            for _ in 0..500 {
                let x = s.next_probe(&c);
                s.observe(&c, parabola(x)).unwrap();
            }
            assert!((s.x0 - 5.0).abs() < 1e-9, "{variant:?}: {}", s.x0);
        }
    }

    #[test]
    fn continuous_fills_buffer_first() {
        let c = cfg(-5.0, 1.0, 100, 0.1, Variant::Continuous);
        let mut s = LifState::new(&c);
        for _ in 1..=100 {
            let x = s.next_probe(&c);
            assert_eq!(s.observe(&c, parabola(x)).unwrap(), None);
            assert!(s.buffer.len() <= 100);
        }
        let x = s.next_probe(&c);
        assert!(s.observe(&c, parabola(x)).unwrap().is_some());
        assert_eq!(s.buffer.len(), 100);
    }

    #[test]
    fn rejects_non_finite_observation() {
        let c = cfg(0.0, 1.0, 10, 0.1, Variant::Continuous);
        let mut s = LifState::new(&c);
        assert!(matches!(
            s.observe(&c, f64::NAN),
            Err(LifError::NonFiniteObservation { t: 1, .. })
        ));
        assert_eq!(s.t, 1);
    }

    #[test]
    fn config_validation() {
        assert!(LifConfig::new(0.0, 0.0, 10, 0.1, Variant::Batch).is_err());
        assert!(LifConfig::new(0.0, 1.0, 2, 0.1, Variant::Batch).is_err());
        assert!(LifConfig::new(0.0, 1.0, 10, 1.0, Variant::Batch).is_err());
        assert!(LifConfig::new(0.0, 1.0, 10, 0.0, Variant::Batch).is_err());
        assert!(LifConfig::new(f64::NAN, 1.0, 10, 0.5, Variant::Batch).is_err());
    }

    #[test]
    fn derivative_examples() {
        let c = cfg(-5.0, 1.0, 100, 0.1, Variant::Batch);
        let d = estimate_derivative(&window_at(&c, -5.0, 1, parabola), &c).unwrap();
        assert!((d.y_omega_star - 20.0).abs() < 1e-9);
        assert!((d.implied_gradient - 40.0).abs() < 1e-9);

        let d = estimate_derivative(&window_at(&c, 10.0, 1, parabola), &c).unwrap();
        assert!((d.y_omega_star + 10.0).abs() < 1e-9);
        assert!((d.implied_gradient + 20.0).abs() < 1e-9);

        let d = estimate_derivative(&window_at(&c, 3.0, 1, |_| 4.2), &c).unwrap();
        assert!(d.y_omega_star.abs() < 1e-12);
    }

    #[test]
    fn curvature_examples() {
        let c = cfg(0.0, 1.0, 100, 0.1, Variant::Batch);
        let k = estimate_curvature(&window_at(&c, 1.7, 1, parabola), &c).unwrap();
        assert!((k.s_2omega + 50.0).abs() < 1e-9, "{}", k.s_2omega);
        assert!((k.alpha_hat - 2.0).abs() < 1e-9);

        let k = estimate_curvature(&window_at(&c, 1.7, 1, |_| -3.0), &c).unwrap();
        assert!(k.s_2omega.abs() < 1e-12 && k.alpha_hat.abs() < 1e-12);

        let c = cfg(0.0, 2.0, 50, 0.1, Variant::Batch);
        let f = |x: f64| -0.5 * (x - 3.0) * (x - 3.0) + 7.0;
        let k = estimate_curvature(&window_at(&c, -1.0, 1, f), &c).unwrap();
        assert!((k.alpha_hat - 0.5).abs() < 1e-9);
    }

    #[test]
    fn window_errors() {
        let c = cfg(0.0, 1.0, 10, 0.1, Variant::Batch);
        let short: Vec<(u64, f64)> = (1..10).map(|t| (t, 0.0)).collect();
        assert!(matches!(
            estimate_derivative(&short, &c),
            Err(LifError::WindowLength {
                got: 9,
                expected: 10
            })
        ));
        assert!(estimate_curvature(&short, &c).is_err());
        let gappy: Vec<(u64, f64)> = (1..=10)
            .map(|t| (if t == 10 { 12 } else { t }, 0.0))
            .collect();
        assert!(matches!(
            estimate_derivative(&gappy, &c),
            Err(LifError::WindowGap(12))
        ));
    }

    #[test]
    fn exact_step_examples() {
        let c = cfg(-5.0, 1.0, 100, 0.1, Variant::Batch);
        let win = window_at(&c, -5.0, 1, parabola);
        let d = estimate_derivative(&win, &c).unwrap();
        let k = estimate_curvature(&win, &c).unwrap();
        assert!((exact_parabola_step(-5.0, &d, &k).unwrap() - 5.0).abs() < 1e-9);

        let win = window_at(&c, 5.0, 1, parabola);
        let d = estimate_derivative(&win, &c).unwrap();
        let k = estimate_curvature(&win, &c).unwrap();
        assert!((exact_parabola_step(5.0, &d, &k).unwrap() - 5.0).abs() < 1e-12);

        let c = cfg(0.0, 1.0, 50, 0.1, Variant::Batch);
        let f = |x: f64| -0.5 * (x - 3.0) * (x - 3.0);
        let win = window_at(&c, 0.0, 1, f);
        let d = estimate_derivative(&win, &c).unwrap();
        let k = estimate_curvature(&win, &c).unwrap();
        assert!((exact_parabola_step(0.0, &d, &k).unwrap() - 3.0).abs() < 1e-6);
    }

    #[test]
    fn exact_step_rejects_flat_and_convex() {
        let d = DerivativeEstimate {
            y_omega_star: 1.0,
            implied_gradient: 2.0,
        };
        for alpha_hat in [0.0, 1e-12, -1.0] {
            let k = CurvatureEstimate {
                s_2omega: 0.0,
                alpha_hat,
            };
            assert!(matches!(
                exact_parabola_step(0.0, &d, &k),
                Err(LifError::NotConcave(_))
            ));
        }
    }

    #[test]
    fn run_converges_and_is_deterministic() {
        let c = cfg(-5.0, 1.0, 100, 0.1, Variant::Batch);
        let env = NoisyParabolaEnv::standard(0.0).unwrap();
        let rec = run(&c, &env, 10_000, 42).unwrap();
        assert_eq!(rec.len(), 10_000);
        assert!((rec.final_x0().unwrap() - 5.0).abs() < 0.05);
        assert!(rec
            .steps
            .iter()
            .enumerate()
            .all(|(i, s)| s.t == i as u64 + 1));

        let noisy = NoisyParabolaEnv::standard(100.0).unwrap();
        let c = cfg(-5.0, 1.0, 100, 0.1, Variant::Continuous);
        assert_eq!(
            run(&c, &noisy, 2_000, 9).unwrap(),
            run(&c, &noisy, 2_000, 9).unwrap()
        );
        assert!(matches!(
            run(&c, &noisy, 0, 9),
            Err(RunError {
                source: LifError::EmptyHorizon,
                ..
            })
        ));
    }

    #[test]
    fn divergent_run_keeps_finite_prefix() {
        let c = cfg(-5.0, 1.0, 10, 0.9, Variant::Continuous);
        let env = NoisyParabolaEnv::standard(0.0).unwrap();
        let err = run(&c, &env, 10_000, 1).unwrap_err();
        assert!(err.t > 10);
        assert_eq!(err.partial.len() as u64, err.t - 1);
        assert!(err.partial.steps.iter().all(|s| s.x0.is_finite()));
    }

    proptest! {
        #[test]
        fn quadratic_windows_are_exact(
            a2 in -5.0..-0.01f64,
            a1 in -10.0..10.0f64,
            a0 in -10.0..10.0f64,
            x0 in -20.0..20.0f64,
            amplitude in 0.05..3.0f64,
            window in 5usize..400,
            start in 1u64..5_000,
        ) {
            let c = cfg(x0, amplitude, window, 0.1, Variant::Batch);
            let f = |x: f64| a2 * x * x + a1 * x + a0;
            let win = window_at(&c, x0, start, f);
            let d = estimate_derivative(&win, &c).unwrap();
            let k = estimate_curvature(&win, &c).unwrap();
            let grad = 2.0 * a2 * x0 + a1;
            // Relative to the magnitude of the summed terms; the sums cancel large values.
            let scale = 1.0 + f(x0).abs() + grad.abs() + a2.abs() * amplitude * amplitude;
            prop_assert!((d.implied_gradient - grad).abs() <= 1e-9 * scale / amplitude);
            prop_assert!((k.alpha_hat + a2).abs() <= 1e-9 * scale / (amplitude * amplitude));
        }

        #[test]
        fn demodulated_sign_points_to_the_maximum(
            x0 in -30.0..40.0f64,
            amplitude in 0.1..2.0f64,
            window in 5usize..300,
        ) {
            prop_assume!((x0 - 5.0).abs() > 1e-6);
            let c = cfg(x0, amplitude, window, 0.1, Variant::Batch);
            let d = estimate_derivative(&window_at(&c, x0, 1, parabola), &c).unwrap();
            prop_assert_eq!(d.y_omega_star > 0.0, x0 < 5.0);
            prop_assert_eq!(d.y_omega_star.signum(), d.implied_gradient.signum());
        }
    }
}
