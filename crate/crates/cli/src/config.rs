//! Run configuration: hyperparameters, optimizer schedule, and structural
//! embedding settings, loadable from a flat JSON file with every field
//! optional.
//!
//! Defaults follow the reference experiment setup; a config file only needs
//! to spell out what it overrides. Unknown keys are rejected so typos fail
//! loudly instead of silently training with defaults.

use std::fs;
use std::path::Path;

use ecl_gsr_core::ecl::EclHyper;
use ecl_gsr_core::embed::SkipGramConfig;
use serde::{Deserialize, Serialize};

/// Settings for the random-walk structural embedding `X_s`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DeepWalkConfig {
    /// Embedding dimension `D_s`.
    pub dim: usize,
    /// Nodes per walk.
    pub walk_length: usize,
    pub walks_per_node: usize,
    /// Max skip-gram context offset.
    pub window: usize,
    /// Negative samples per (center, context) pair.
    pub negatives: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for DeepWalkConfig {
    fn default() -> Self {
        DeepWalkConfig {
            dim: 128,
            walk_length: 40,
            walks_per_node: 10,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr: 0.025,
        }
    }
}

impl DeepWalkConfig {
    pub fn skipgram(&self) -> SkipGramConfig {
        SkipGramConfig {
            dim: self.dim,
            window: self.window,
            negatives: self.negatives,
            epochs: self.epochs,
            lr: self.lr,
        }
    }
}

/// Full training configuration.
///
/// `total = discriminative + alpha * generative + beta * regularization`
/// forms the refinement loss; the classifier loss joins it with weight `mu`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the generative (sampled-energy) term.
    pub alpha: f64,
    /// Weight of the cross-view energy regularizer.
    pub beta: f64,
    /// Weight of the classification loss in the joint objective.
    pub mu: f64,
    /// Energy temperature.
    pub tau: f64,
    /// Langevin step size (and noise variance).
    pub lambda: f64,
    /// Langevin steps per batch.
    pub k_steps: usize,
    /// Subgraph pairs per batch (`N`).
    pub batch_pairs: usize,
    /// Edges sampled per subgraph (`m`).
    pub edges_per_subgraph: usize,
    /// Training epochs (`P`).
    pub epochs: usize,
    /// Adam learning rate; halved every `lr_half_period` epochs.
    pub lr: f64,
    pub lr_half_period: usize,
    /// Std of the Gaussian view augmentation.
    pub sigma: f64,
    /// Relaxed-Bernoulli temperature for the refined adjacency.
    pub bernoulli_temp: f64,
    /// Hidden width of the downstream classifier.
    pub classifier_width: usize,
    pub deepwalk: DeepWalkConfig,
    /// Master seed; every stochastic stream is derived from it.
    pub seed: u64,
    /// Evaluate the checkpoint with the best validation accuracy instead of
    /// the final epoch.
    pub select_best_val: bool,
    /// Include the wall-time column in metrics.csv. Off by default so that
    /// two runs with the same seed produce byte-identical logs.
    pub log_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.1,
            beta: 0.01,
            mu: 0.01,
            tau: 0.1,
            lambda: 0.01,
            k_steps: 3,
            batch_pairs: 64,
            edges_per_subgraph: 16,
            epochs: 40,
            lr: 0.001,
            lr_half_period: 20,
            sigma: 0.1,
            bernoulli_temp: 0.5,
            classifier_width: 64,
            deepwalk: DeepWalkConfig::default(),
            seed: 0,
            select_best_val: true,
            log_wall_time: false,
        }
    }
}

impl TrainConfig {
    /// Read a config from a JSON file; missing fields take defaults.
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        let cfg: TrainConfig = serde_json::from_str(&text)
            .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The loss-side hyperparameters in core's terms.
    pub fn hyper(&self) -> EclHyper {
        EclHyper {
            tau: self.tau,
            alpha: self.alpha,
            beta: self.beta,
            lambda: self.lambda,
            k_steps: self.k_steps,
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !(self.tau > 0.0) {
            anyhow::bail!("tau must be positive, got {}", self.tau);
        }
        if !(self.lambda > 0.0) {
            anyhow::bail!("lambda must be positive, got {}", self.lambda);
        }
        if !(self.bernoulli_temp > 0.0) {
            anyhow::bail!("bernoulli_temp must be positive, got {}", self.bernoulli_temp);
        }
        if !(self.lr > 0.0) {
            anyhow::bail!("lr must be positive, got {}", self.lr);
        }
        if self.batch_pairs < 2 {
            anyhow::bail!("batch_pairs must be at least 2, got {}", self.batch_pairs);
        }
        if self.edges_per_subgraph == 0 {
            anyhow::bail!("edges_per_subgraph must be positive");
        }
        if self.lr_half_period == 0 {
            anyhow::bail!("lr_half_period must be positive");
        }
        if !(self.sigma >= 0.0) {
            anyhow::bail!("sigma must be non-negative, got {}", self.sigma);
        }
        if !(self.mu >= 0.0) {
            anyhow::bail!("mu must be non-negative, got {}", self.mu);
        }
        if self.deepwalk.dim == 0
            || self.deepwalk.walk_length < 2
            || self.deepwalk.walks_per_node == 0
            || self.deepwalk.window == 0
        {
            anyhow::bail!("deepwalk settings must be positive (walk_length at least 2)");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_setup() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.alpha, 0.1);
        assert_eq!(cfg.beta, 0.01);
        assert_eq!(cfg.mu, 0.01);
        assert_eq!(cfg.tau, 0.1);
        assert_eq!(cfg.lambda, 0.01);
        assert_eq!(cfg.k_steps, 3);
        assert_eq!(cfg.batch_pairs, 64);
        assert_eq!(cfg.edges_per_subgraph, 16);
        assert_eq!(cfg.epochs, 40);
        assert_eq!(cfg.lr, 0.001);
        assert_eq!(cfg.lr_half_period, 20);
        assert_eq!(cfg.sigma, 0.1);
        assert_eq!(cfg.bernoulli_temp, 0.5);
        assert_eq!(cfg.classifier_width, 64);
        assert_eq!(cfg.deepwalk.dim, 128);
        assert_eq!(cfg.deepwalk.walk_length, 40);
        assert_eq!(cfg.deepwalk.walks_per_node, 10);
        assert!(cfg.select_best_val);
        assert!(!cfg.log_wall_time);
        cfg.validate().unwrap();
    }

    #[test]
    fn partial_json_overrides_only_named_fields() {
        let cfg: TrainConfig = serde_json::from_str(r#"{"alpha": 0.5, "epochs": 3}"#).unwrap();
        assert_eq!(cfg.alpha, 0.5);
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.beta, 0.01);
        assert_eq!(cfg.deepwalk, DeepWalkConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<TrainConfig>(r#"{"alhpa": 0.5}"#).unwrap_err();
        assert!(err.to_string().contains("alhpa"));
    }

    #[test]
    fn nested_deepwalk_overrides() {
        let cfg: TrainConfig =
            serde_json::from_str(r#"{"deepwalk": {"dim": 16}}"#).unwrap();
        assert_eq!(cfg.deepwalk.dim, 16);
        assert_eq!(cfg.deepwalk.window, 5);
    }

    #[test]
    fn validation_rejects_bad_values() {
        for bad in [
            r#"{"tau": 0.0}"#,
            r#"{"lambda": -1.0}"#,
            r#"{"bernoulli_temp": 0.0}"#,
            r#"{"batch_pairs": 1}"#,
            r#"{"mu": -0.1}"#,
        ] {
            let cfg: TrainConfig = serde_json::from_str(bad).unwrap();
            assert!(cfg.validate().is_err(), "expected rejection for {bad}");
        }
    }

    #[test]
    fn round_trips_through_json() {
        let mut cfg = TrainConfig::default();
        cfg.seed = 7;
        cfg.alpha = 0.25;
        let text = serde_json::to_string(&cfg).unwrap();
        let back: TrainConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
