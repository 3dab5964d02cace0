//! Parallel experience collection and the PPO update.

use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ActorCritic, Adam, PpoConfig, Sample, actor_loss, critic_loss, gae, normalize_advantages};
use crate::env::{SodEnv, Transition};
use crate::error::{Error, Result};

/// Anything the trainer can interact with.
pub trait Environment: Send {
    /// Start an episode on the instance identified by `seed`; returns the first observation.
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    /// Returns `(observation, reward, done)`.
    fn step(&mut self, action: usize) -> Result<(Vec<f64>, f64, bool)>;
}

impl Environment for SodEnv {
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        SodEnv::reset(self, seed)
    }

    fn step(&mut self, action: usize) -> Result<(Vec<f64>, f64, bool)> {
        let o = SodEnv::step(self, action)?;
        Ok((o.observation, o.reward, o.done))
    }
}

/// One parallel environment with its own sampling stream.
#[derive(Debug, Clone)]
pub struct EnvSlot<E> {
    pub index: usize,
    pub env: E,
    rng: ChaCha8Rng,
    obs: Vec<f64>,
    /// Episodes started so far.
    pub episode: usize,
    episode_return: f64,
}

impl<E: Environment> EnvSlot<E> {
    /// The slot's sampling stream depends only on `base_seed` and `index`, never
    /// on how many other slots exist.
    pub fn new(index: usize, mut env: E, base_seed: u64, seed_of: &(dyn Fn(usize, usize) -> u64 + Sync)) -> Self {
        let obs = env.reset(seed_of(index, 0));
        let rng = ChaCha8Rng::seed_from_u64(base_seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17));
        Self { index, env, rng, obs, episode: 1, episode_return: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvRollout {
    pub index: usize,
    pub transitions: Vec<Transition>,
    /// Returns of episodes that ended during this rollout.
    pub episode_returns: Vec<f64>,
}

pub fn collect_rollouts<E: Environment>(
    slots: &mut [EnvSlot<E>],
    ac: &ActorCritic,
    steps: usize,
    seed_of: &(dyn Fn(usize, usize) -> u64 + Sync),
) -> Result<Vec<EnvRollout>> {
    slots
        .par_iter_mut()
        .map(|slot| {
            let mut transitions = Vec::with_capacity(steps);
            let mut episode_returns = Vec::new();
            for _ in 0..steps {
                let (a, logp, v) = ac.act(&slot.obs, &mut slot.rng);
                let (next, r, done) = slot.env.step(a)?;
                slot.episode_return += r;
                transitions.push(Transition {
                    state: std::mem::take(&mut slot.obs),
                    action: a,
                    reward: r,
                    next_state: next.clone(),
                    done,
                    log_prob: logp,
                    value: v,
                });
                if done {
                    episode_returns.push(slot.episode_return);
                    slot.episode_return = 0.0;
                    slot.obs = slot.env.reset(seed_of(slot.index, slot.episode));
                    slot.episode += 1;
                } else {
                    slot.obs = next;
                }
            }
            Ok(EnvRollout { index: slot.index, transitions, episode_returns })
        })
        .collect()
}

/// Turn trajectories into training samples with GAE advantages.
pub fn build_samples(rollouts: &[EnvRollout], ac: &ActorCritic, cfg: &PpoConfig) -> Vec<Sample> {
    let mut samples = Vec::new();
    for ro in rollouts {
        let tr = &ro.transitions;
        let rewards: Vec<f64> = tr.iter().map(|t| t.reward).collect();
        let values: Vec<f64> = tr.iter().map(|t| t.value).collect();
        let next_values: Vec<f64> = tr.iter().map(|t| if t.done { 0.0 } else { ac.value(&t.next_state) }).collect();
        let dones: Vec<bool> = tr.iter().map(|t| t.done).collect();
        let (adv, ret) = gae(&rewards, &values, &next_values, &dones, cfg.gamma, cfg.lambda);
        for (i, t) in tr.iter().enumerate() {
            samples.push(Sample {
                obs: t.state.clone(),
                action: t.action,
                old_log_prob: t.log_prob,
                advantage: adv[i],
                value_target: ret[i],
            });
        }
    }
    if cfg.normalize_advantages {
        let mut adv: Vec<f64> = samples.iter().map(|s| s.advantage).collect();
        normalize_advantages(&mut adv);
        samples.iter_mut().zip(adv).for_each(|(s, a)| s.advantage = a);
    }
    samples
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub update: usize,
    pub episodes: usize,
    /// Mean return of the episodes completed in this update; NaN if none.
    #[serde(deserialize_with = "crate::econ::nan_from_null")]
    pub mean_episode_return: f64,
    pub mean_step_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub elapsed_s: f64,
}

/// Optimize both networks on one batch; errors on any non-finite loss or parameter.
pub fn ppo_update(
    ac: &mut ActorCritic,
    actor_opt: &mut Adam,
    critic_opt: &mut Adam,
    samples: &[Sample],
    cfg: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats> {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    let mut stats = UpdateStats::default();
    let mut batches = 0usize;
    for _ in 0..cfg.epochs {
        idx.shuffle(rng);
        for chunk in idx.chunks(cfg.minibatch) {
            let mb: Vec<Sample> = chunk.iter().map(|&i| samples[i].clone()).collect();
            let al = actor_loss(&ac.actor, &mb, cfg.clip_eps, cfg.entropy_coef);
            let (vl, vgrad) = critic_loss(&ac.critic, &mb);
            if !(al.loss.is_finite() && vl.is_finite()) {
                return Err(Error::NonFinite(format!("policy loss {} value loss {}", al.loss, vl)));
            }
            let mut p = ac.actor.params();
            actor_opt.step(&mut p, &al.grad.params());
            ac.actor.set_params(&p)?;
            let mut p = ac.critic.params();
            critic_opt.step(&mut p, &vgrad.params());
            ac.critic.set_params(&p)?;
            if !(ac.actor.is_finite() && ac.critic.is_finite()) {
                return Err(Error::NonFinite("network parameters".into()));
            }
            stats.policy_loss += al.loss;
            stats.value_loss += vl;
            stats.entropy += al.entropy;
            stats.approx_kl += al.approx_kl;
            stats.clip_fraction += al.clip_fraction;
            batches += 1;
        }
    }
    let k = batches.max(1) as f64;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.approx_kl /= k;
    stats.clip_fraction /= k;
    Ok(stats)
}

/// Training loop state: networks, optimizers and environment slots.
pub struct Trainer<E> {
    pub cfg: PpoConfig,
    pub ac: ActorCritic,
    actor_opt: Adam,
    critic_opt: Adam,
    slots: Vec<EnvSlot<E>>,
    rng: ChaCha8Rng,
    seed_of: Box<dyn Fn(usize, usize) -> u64 + Sync + Send>,
    pub updates: usize,
}

impl<E: Environment> Trainer<E> {
    pub fn new(
        cfg: PpoConfig,
        envs: Vec<E>,
        obs_dim: usize,
        actions: usize,
        seed_of: Box<dyn Fn(usize, usize) -> u64 + Sync + Send>,
    ) -> Result<Self> {
        cfg.validate()?;
        let ac = ActorCritic::new(obs_dim, actions, &cfg);
        Self::with_networks(cfg, ac, envs, seed_of)
    }

    pub fn with_networks(
        cfg: PpoConfig,
        ac: ActorCritic,
        envs: Vec<E>,
        seed_of: Box<dyn Fn(usize, usize) -> u64 + Sync + Send>,
    ) -> Result<Self> {
        cfg.validate()?;
        if envs.is_empty() {
            return Err(Error::Scenario("need at least one environment".into()));
        }
        let slots = envs.into_iter().enumerate().map(|(i, e)| EnvSlot::new(i, e, cfg.seed, &*seed_of)).collect();
        let new_adam = |n| Adam::new(n, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
        Ok(Self {
            actor_opt: new_adam(ac.actor.num_params()),
            critic_opt: new_adam(ac.critic.num_params()),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5EED)),
            ac,
            cfg,
            slots,
            seed_of,
            updates: 0,
        })
    }

    pub fn slots(&self) -> &[EnvSlot<E>] {
        &self.slots
    }

    /// Collect one batch of experience without updating.
    pub fn collect(&mut self) -> Result<Vec<EnvRollout>> {
        collect_rollouts(&mut self.slots, &self.ac, self.cfg.rollout_steps, &*self.seed_of)
    }

    pub fn update_once(&mut self) -> Result<UpdateStats> {
        let start = std::time::Instant::now();
        let rollouts = self.collect()?;
        let samples = build_samples(&rollouts, &self.ac, &self.cfg);
        let mut stats = ppo_update(&mut self.ac, &mut self.actor_opt, &mut self.critic_opt, &samples, &self.cfg, &mut self.rng)?;
        let returns: Vec<f64> = rollouts.iter().flat_map(|r| r.episode_returns.iter().copied()).collect();
        let rewards: Vec<f64> = rollouts.iter().flat_map(|r| r.transitions.iter().map(|t| t.reward)).collect();
        stats.update = self.updates;
        stats.episodes = returns.len();
        stats.mean_episode_return =
            if returns.is_empty() { f64::NAN } else { returns.iter().sum::<f64>() / returns.len() as f64 };
        stats.mean_step_reward = rewards.iter().sum::<f64>() / rewards.len().max(1) as f64;
        stats.elapsed_s = start.elapsed().as_secs_f64();
        self.updates += 1;
        Ok(stats)
    }
}
