//! Per-step trajectories shared by LiF and the baseline policies.

use crate::metrics::{accumulate, RegretSeries};

/// One step of a simulated run.
///
/// `x0` is the policy's center after the step: the LiF center after any update,
/// or the played price for the baselines, which have no separate center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub t: u64,
    pub x0: f64,
    pub x_probe: f64,
    pub y: f64,
    pub reward: f64,
    pub updated: bool,
    /// Instantaneous regret of `x_probe` against the environment's oracle.
    pub regret: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunRecord {
    pub steps: Vec<Step>,
}

impl RunRecord {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            steps: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_x0(&self) -> Option<f64> {
        self.steps.last().map(|s| s.x0)
    }

    pub fn centers(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.x0).collect()
    }

    pub fn regret(&self) -> RegretSeries {
        let inst: Vec<f64> = self.steps.iter().map(|s| s.regret).collect();
        accumulate(&inst)
    }

    pub fn cumulative_regret(&self) -> f64 {
        self.steps.iter().map(|s| s.regret).sum()
    }

    pub fn update_count(&self) -> usize {
        self.steps.iter().filter(|s| s.updated).count()
    }
}
