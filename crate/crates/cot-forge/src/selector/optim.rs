//! Projected optimizers over per-slot categorical distributions: each step
//! applies a raw update row by row, then projects every row back onto the
//! probability simplex.

use serde::{Deserialize, Serialize};

use crate::error::SelectorError;
use crate::selector::simplex::project_simplex;
use crate::selector::SelectionDistribution;

/// Which update rule drives training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    #[serde(rename = "adamw")]
    AdamW,
    #[serde(rename = "projected_sgd")]
    ProjectedSgd,
}

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::AdamW,
            learning_rate: 1e-3,
            betas: (0.9, 0.999),
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Projected optimizer with per-row first/second moment state (used only by
/// the AdamW rule; plain projected SGD is stateless).
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, slots: usize, pool_size: usize) -> Self {
        Optimizer {
            config,
            step_count: 0,
            first_moment: vec![vec![0.0; pool_size]; slots],
            second_moment: vec![vec![0.0; pool_size]; slots],
        }
    }

    /// Applies one update for a loss gradient `grad` (same shape as the
    /// distribution) and projects every row back onto the simplex.
    pub fn step(
        &mut self,
        distribution: &mut SelectionDistribution,
        grad: &[Vec<f64>],
    ) -> Result<(), SelectorError> {
        assert_eq!(grad.len(), distribution.slots(), "gradient row count");
        self.step_count += 1;

        for (slot, grad_row) in grad.iter().enumerate() {
            let row = distribution.row(slot).to_vec();
            assert_eq!(grad_row.len(), row.len(), "gradient row width");

            let updated: Vec<f64> = match self.config.kind {
                OptimizerKind::ProjectedSgd => row
                    .iter()
                    .zip(grad_row)
                    .map(|(p, g)| p - self.config.learning_rate * g)
                    .collect(),
                OptimizerKind::AdamW => {
                    let (beta1, beta2) = self.config.betas;
                    let bias1 = 1.0 - beta1.powi(self.step_count as i32);
                    let bias2 = 1.0 - beta2.powi(self.step_count as i32);
                    let m = &mut self.first_moment[slot];
                    let v = &mut self.second_moment[slot];
                    row.iter()
                        .zip(grad_row)
                        .enumerate()
                        .map(|(j, (p, g))| {
                            m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                            v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                            let m_hat = m[j] / bias1;
                            let v_hat = v[j] / bias2;
                            p - self.config.learning_rate
                                * (m_hat / (v_hat.sqrt() + self.config.eps)
                                    + self.config.weight_decay * p)
                        })
                        .collect()
                }
            };
            distribution.set_row(slot, project_simplex(&updated)?);
        }
        Ok(())
    }
}
