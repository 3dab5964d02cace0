//! Clipped surrogate objective, critic loss and policy entropy, each with its
//! analytic gradient.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::nn::Mlp;

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// Clipped advantage bound: `(1+eps)A` for non-negative `A`, `(1-eps)A` otherwise.
pub fn clip_g(eps: f64, adv: f64) -> f64 {
    if adv >= 0.0 { (1.0 + eps) * adv } else { (1.0 - eps) * adv }
}

/// Inverse-CDF draw from a categorical distribution.
pub fn sample_categorical(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// One training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub obs: Vec<f64>,
    pub action: usize,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub value_target: f64,
}

#[derive(Debug, Clone)]
pub struct ActorLoss {
    /// `-(mean clipped surrogate) - entropy_coef * mean entropy`.
    pub loss: f64,
    pub surrogate: f64,
    pub entropy: f64,
    /// Mean of `old_log_prob - new_log_prob`.
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad: Mlp,
}

pub fn actor_loss(actor: &Mlp, batch: &[Sample], eps: f64, entropy_coef: f64) -> ActorLoss {
    let n = batch.len() as f64;
    let mut grad = actor.zeros_like();
    let (mut surr, mut ent, mut kl, mut clipped) = (0.0, 0.0, 0.0, 0usize);
    for s in batch {
        let cache = actor.forward_cached(&s.obs);
        let logp = log_softmax(&cache.output);
        let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
        let ratio = (logp[s.action] - s.old_log_prob).exp();
        let unclipped = ratio * s.advantage;
        let bound = clip_g(eps, s.advantage);
        let h = entropy(&p);
        let mut d = vec![0.0; p.len()];
        if unclipped < bound {
            surr += unclipped;
            // d ratio / d logits = ratio * (onehot - p)
            for (j, dj) in d.iter_mut().enumerate() {
                let onehot = if j == s.action { 1.0 } else { 0.0 };
                *dj -= s.advantage * ratio * (onehot - p[j]) / n;
            }
        } else {
            surr += bound;
            clipped += 1;
        }
        if entropy_coef != 0.0 {
            for (j, dj) in d.iter_mut().enumerate() {
                // dH/dz_j = -p_j (log p_j + H)
                *dj += entropy_coef * p[j] * (logp[j] + h) / n;
            }
        }
        ent += h;
        kl += s.old_log_prob - logp[s.action];
        actor.backward(&cache, &d, &mut grad);
    }
    let surrogate = surr / n;
    let entropy = ent / n;
    ActorLoss {
        loss: -surrogate - entropy_coef * entropy,
        surrogate,
        entropy,
        approx_kl: kl / n,
        clip_fraction: clipped as f64 / n,
        grad,
    }
}

/// Mean squared error of the critic against the value targets, with gradient.
pub fn critic_loss(critic: &Mlp, batch: &[Sample]) -> (f64, Mlp) {
    let n = batch.len() as f64;
    let mut grad = critic.zeros_like();
    let mut loss = 0.0;
    for s in batch {
        let cache = critic.forward_cached(&s.obs);
        let err = cache.output[0] - s.value_target;
        loss += err * err / n;
        critic.backward(&cache, &[2.0 * err / n], &mut grad);
    }
    (loss, grad)
}
