use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ActorCritic, PpoConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "sodfeeder-ppo";

/// Self-describing policy file: shapes and observation layout in a header,
/// then flat parameter vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub layout_version: u32,
    pub obs_dim: usize,
    pub actions: usize,
    pub actor_sizes: Vec<usize>,
    pub critic_sizes: Vec<usize>,
    pub config: PpoConfig,
    pub updates: usize,
    pub actor: Vec<f64>,
    pub critic: Vec<f64>,
}

impl Checkpoint {
    pub fn new(ac: &ActorCritic, cfg: &PpoConfig, layout_version: u32, updates: usize) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            layout_version,
            obs_dim: ac.obs_dim(),
            actions: ac.actions(),
            actor_sizes: ac.actor.sizes(),
            critic_sizes: ac.critic.sizes(),
            config: cfg.clone(),
            updates,
            actor: ac.actor.params(),
            critic: ac.critic.params(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(s).map_err(|e| Error::Checkpoint(format!("unreadable checkpoint: {e}")))?;
        if c.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unexpected format '{}'", c.format)));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Rebuild the networks, refusing checkpoints made for another observation layout.
    pub fn restore(&self, layout_version: u32, obs_dim: usize, actions: usize) -> Result<ActorCritic> {
        if self.layout_version != layout_version {
            return Err(Error::Checkpoint(format!(
                "observation layout version {} does not match {}",
                self.layout_version, layout_version
            )));
        }
        if self.obs_dim != obs_dim || self.actions != actions {
            return Err(Error::Checkpoint(format!(
                "checkpoint shape {}x{} does not match {}x{}",
                self.obs_dim, self.actions, obs_dim, actions
            )));
        }
        let valid = |s: &[usize], out: usize| s.len() >= 2 && s[0] == obs_dim && *s.last().unwrap() == out && !s.contains(&0);
        if !valid(&self.actor_sizes, actions) || !valid(&self.critic_sizes, 1) {
            return Err(Error::Checkpoint("inconsistent layer sizes".into()));
        }
        if self.actor.iter().chain(&self.critic).any(|v| !v.is_finite()) {
            return Err(Error::Checkpoint("non-finite parameters".into()));
        }
        let zero = |sizes: &[usize]| super::Mlp {
            layers: sizes.windows(2).map(|w| super::Dense::zeros(w[0], w[1])).collect(),
        };
        let mut ac = ActorCritic { actor: zero(&self.actor_sizes), critic: zero(&self.critic_sizes) };
        ac.actor.set_params(&self.actor)?;
        ac.critic.set_params(&self.critic)?;
        Ok(ac)
    }
}
