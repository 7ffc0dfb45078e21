//! Full-graph training loop.
//!
//! Each epoch runs the model with the previous epoch's assignments fed to
//! the community-latent encoder, takes the loss gradient and applies one
//! AdamW step.

use alloc::vec::Vec;

use crate::graph::MultilayerGraph;
use crate::model::{forward, FeatureTensor, ModelConfig, ModelParameters, SoftAssignments};
use crate::objective::{backward, LossBreakdown, LossConfig, LossMode};
use crate::optim::{adamw_step, AdamWConfig, AdamWState};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub kappa: usize,
    pub alpha: f64,
    pub gamma: Vec<f64>,
    pub mode: LossMode,
    pub ffn_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamWConfig::default();
        TrainConfig {
            epochs: 300,
            learning_rate: adam.learning_rate,
            weight_decay: adam.weight_decay,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            seed: 0,
            kappa: 8,
            alpha: 1.0,
            gamma: alloc::vec![1.0],
            mode: LossMode::PerLayer,
            ffn_dim: 1024,
        }
    }
}

impl TrainConfig {
    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            alpha: self.alpha,
            gamma: self.gamma.clone(),
            mode: self.mode,
            kappa: self.kappa,
        }
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            weight_decay: self.weight_decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::InvalidConfig("betas must lie in [0, 1)".into()));
        }
        if self.kappa < 2 {
            return Err(Error::BalanceUndefined);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParameters,
    /// Assignments of a final forward pass with the trained parameters.
    pub assignments: SoftAssignments,
    /// Loss of every completed epoch, measured before its update.
    pub history: Vec<LossBreakdown>,
    /// Epoch (1-based) at which a non-finite loss stopped training; `params`
    /// then hold the last finite state.
    pub diverged_at: Option<usize>,
}

pub fn train(graph: &MultilayerGraph, features: &FeatureTensor, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let loss_config = config.loss_config();
    loss_config.validate(graph.num_layers())?;
    let model_config = ModelConfig {
        num_layers: graph.num_layers(),
        dim: features.dim(),
        ffn_dim: config.ffn_dim,
        kappa: config.kappa,
    };
    let mut params = ModelParameters::init(model_config, config.seed)?;
    let optimizer = config.optimizer();
    let mut state = AdamWState::new(&params);
    let mut history = Vec::with_capacity(config.epochs);
    let mut prev: Option<SoftAssignments> = None;
    let mut diverged_at = None;

    for epoch in 1..=config.epochs {
        let step = backward(graph, features, &params, prev.as_ref(), &loss_config);
        let (breakdown, grads, assignments) = match step {
            Ok(v) => v,
            Err(Error::NonFinite(_)) => {
                diverged_at = Some(epoch);
                break;
            }
            Err(e) => return Err(e),
        };
        let last_good = params.clone();
        adamw_step(&mut params, &grads, &mut state, &optimizer);
        history.push(breakdown);
        if !params.is_finite() {
            params = last_good;
            diverged_at = Some(epoch);
            break;
        }
        prev = Some(assignments);
    }

    let assignments = forward(graph, features, &params, prev.as_ref())?;
    Ok(TrainOutcome {
        params,
        assignments,
        history,
        diverged_at,
    })
}
