//! Proximal policy optimization with separate actor and critic networks.

mod adam;
mod checkpoint;
mod gae;
mod loss;
mod nn;
mod rollout;

pub use adam::Adam;
pub use checkpoint::{CHECKPOINT_FORMAT, Checkpoint};
pub use gae::{gae, normalize_advantages, td_error};
pub use loss::{ActorLoss, Sample, actor_loss, argmax, clip_g, critic_loss, entropy, log_softmax, sample_categorical, softmax};
pub use nn::{Cache, Dense, Mlp};
pub use rollout::{EnvRollout, EnvSlot, Environment, Trainer, UpdateStats, build_samples, collect_rollouts, ppo_update};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip_eps: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub minibatch: usize,
    pub epochs: usize,
    pub n_envs: usize,
    /// Steps collected per environment per update.
    pub rollout_steps: usize,
    pub entropy_coef: f64,
    pub hidden: Vec<usize>,
    pub normalize_advantages: bool,
    pub hidden_gain: f64,
    pub actor_output_gain: f64,
    pub critic_output_gain: f64,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            lr: 0.003,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            minibatch: 64,
            epochs: 10,
            n_envs: 8,
            rollout_steps: 180,
            entropy_coef: 0.0,
            hidden: vec![64, 64],
            normalize_advantages: true,
            hidden_gain: std::f64::consts::SQRT_2,
            actor_output_gain: 0.01,
            critic_output_gain: 1.0,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Scenario(format!("ppo: {m}")));
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip_eps must be in (0, 1)");
        }
        if !((0.0..=1.0).contains(&self.gamma) && (0.0..=1.0).contains(&self.lambda)) {
            return bad("gamma and lambda must be in [0, 1]");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be > 0");
        }
        if self.minibatch == 0 || self.epochs == 0 || self.n_envs == 0 || self.rollout_steps == 0 {
            return bad("minibatch, epochs, n_envs and rollout_steps must be >= 1");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be >= 1");
        }
        Ok(())
    }
}

/// Policy network over discrete actions plus a state-value network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub actor: Mlp,
    pub critic: Mlp,
}

impl ActorCritic {
    pub fn new(obs_dim: usize, actions: usize, cfg: &PpoConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut sizes = vec![obs_dim];
        sizes.extend(&cfg.hidden);
        let mut actor_sizes = sizes.clone();
        actor_sizes.push(actions);
        sizes.push(1);
        let actor = Mlp::new(&actor_sizes, cfg.hidden_gain, cfg.actor_output_gain, &mut rng);
        let critic = Mlp::new(&sizes, cfg.hidden_gain, cfg.critic_output_gain, &mut rng);
        Self { actor, critic }
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn actions(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn probs(&self, obs: &[f64]) -> Vec<f64> {
        softmax(&self.actor.forward(obs))
    }

    pub fn value(&self, obs: &[f64]) -> f64 {
        self.critic.forward(obs)[0]
    }

    /// Sampled action with its log-probability and the state value.
    pub fn act(&self, obs: &[f64], rng: &mut ChaCha8Rng) -> (usize, f64, f64) {
        let logp = log_softmax(&self.actor.forward(obs));
        let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
        let a = sample_categorical(&p, rng);
        (a, logp[a], self.value(obs))
    }

    /// Most probable action; ties go to the lowest index.
    pub fn greedy(&self, obs: &[f64]) -> usize {
        argmax(&self.actor.forward(obs))
    }
}
