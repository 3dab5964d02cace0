/// One-step temporal-difference error; the bootstrap term drops at episode end.
pub fn td_error(reward: f64, value: f64, next_value: f64, done: bool, gamma: f64) -> f64 {
    let boot = if done { 0.0 } else { gamma * next_value };
    reward + boot - value
}

/// Generalized advantage estimates and value targets for one trajectory.
/// `next_values[t]` is the critic's value of the state after step `t`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && next_values.len() == n && dones.len() == n);
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let delta = td_error(rewards[t], values[t], next_values[t], dones[t], gamma);
        running = if dones[t] { delta } else { delta + gamma * lambda * running };
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Shift to zero mean and unit standard deviation.
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len();
    if n < 2 {
        return;
    }
    let mean = adv.iter().sum::<f64>() / n as f64;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
    let sd = var.sqrt().max(1e-8);
    adv.iter_mut().for_each(|a| *a = (*a - mean) / sd);
}
