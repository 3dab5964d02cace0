//! Whole runs: single episodes, multi-seed comparisons and training.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demand::generate_with_weights;
use crate::dispatch::{ACTION_COUNT, Dispatcher, PolicyKind};
use crate::econ::{AggregateRow, RunMetrics, aggregate, generalized_cost};
use crate::env::{LAYOUT_VERSION, OBS_DIM, SodEnv};
use crate::error::{Error, Result};
use crate::matching::match_step;
use crate::ppo::{ActorCritic, Checkpoint, Trainer, UpdateStats};
use crate::scenario::Prepared;
use crate::sim::{DispatchRecord, World, ZoneAssignment};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub policy: PolicyKind,
    pub seed: u64,
    pub metrics: RunMetrics,
    pub dispatch_log: Vec<DispatchRecord>,
    /// Learned action per decision step (RL-zonal only).
    pub actions: Vec<usize>,
    pub skipped_departures: usize,
    pub infeasibilities: Vec<String>,
    /// Completed cycle durations by zone assignment, seconds.
    pub cycle_times: Vec<(ZoneAssignment, f64)>,
}

fn finish(policy: PolicyKind, seed: u64, world: &World, dispatcher: &Dispatcher, actions: Vec<usize>, infeasibilities: Vec<String>) -> EpisodeResult {
    let cfg = &world.config;
    let metrics = generalized_cost(&world.requests, &world.vehicles, &cfg.coeffs, cfg.warmup, world.net.terminus());
    EpisodeResult {
        policy,
        seed,
        metrics,
        dispatch_log: world.dispatch_log.clone(),
        actions,
        skipped_departures: dispatcher.skipped,
        infeasibilities,
        cycle_times: world.vehicles.iter().flat_map(|v| v.cycle_times.iter().copied()).collect(),
    }
}

/// Build the world for `policy` on the instance drawn from `seed`.
pub fn build_world(prepared: &Prepared, policy: PolicyKind, seed: u64) -> World {
    let sc = &prepared.scenario;
    let requests = generate_with_weights(&prepared.net, &sc.demand, &prepared.weights, sc.horizon, seed);
    World::new(prepared.net.clone(), prepared.table.clone(), sc.world_config(policy), requests)
}

/// Run one control type on one instance. The RL-zonal type needs a policy and
/// acts greedily.
pub fn run_episode(prepared: &Arc<Prepared>, policy: PolicyKind, seed: u64, ac: Option<&ActorCritic>) -> Result<EpisodeResult> {
    if policy == PolicyKind::RlZonal {
        let ac = ac.ok_or(Error::MissingCheckpoint)?;
        let mut env = SodEnv::new(prepared.clone());
        let mut obs = env.reset(seed);
        let mut actions = Vec::with_capacity(env.episode_steps());
        loop {
            let a = ac.greedy(&obs);
            actions.push(a);
            let out = env.step(a)?;
            obs = out.observation;
            if out.done {
                break;
            }
        }
        let world = env.world().expect("episode ran");
        return Ok(finish(policy, seed, world, env.dispatcher(), actions, Vec::new()));
    }
    let mut world = build_world(prepared, policy, seed);
    let mut dispatcher = Dispatcher::new(policy, prepared.scenario.headways);
    let mut infeasible = Vec::new();
    while !world.is_done() {
        dispatcher.baseline_dispatch(&mut world);
        match_step(&mut world);
        infeasible.extend(world.advance_step()?.infeasibilities);
    }
    Ok(finish(policy, seed, &world, &dispatcher, Vec::new(), infeasible))
}

/// Load a checkpoint and check it fits the current observation layout.
pub fn load_policy(path: &std::path::Path) -> Result<ActorCritic> {
    Checkpoint::load(path)?.restore(LAYOUT_VERSION, OBS_DIM, ACTION_COUNT)
}

/// Runs of one control type over many seeds, in seed order.
pub fn run_many(prepared: &Arc<Prepared>, policy: PolicyKind, seeds: &[u64], ac: Option<&ActorCritic>) -> Result<Vec<EpisodeResult>> {
    seeds.par_iter().map(|&s| run_episode(prepared, policy, s, ac)).collect()
}

/// A (policy, seed) cell that could not be run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub policy: PolicyKind,
    pub seed: u64,
    pub category: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub seeds: Vec<u64>,
    pub rows: Vec<AggregateRow>,
    /// Metrics of the successful runs, in seed order.
    pub runs: Vec<(PolicyKind, Vec<RunMetrics>)>,
    /// Full results of the successful runs, grouped by policy.
    pub results: Vec<EpisodeResult>,
    /// Per decision step, how often each action was chosen across seeds.
    pub action_density: Vec<[usize; ACTION_COUNT]>,
    pub failures: Vec<CellFailure>,
}

impl Comparison {
    pub fn metrics(&self, policy: PolicyKind) -> Option<&[RunMetrics]> {
        self.runs.iter().find(|(p, _)| *p == policy).map(|(_, m)| m.as_slice())
    }
}

/// Evaluate several control types on the same instances. A failing cell is
/// recorded and the remaining cells still run.
pub fn compare(prepared: &Arc<Prepared>, policies: &[PolicyKind], seeds: &[u64], ac: Option<&ActorCritic>) -> Comparison {
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    let mut all = Vec::new();
    let mut action_density = Vec::new();
    let mut failures = Vec::new();
    for &p in policies {
        let outcomes: Vec<Result<EpisodeResult>> = seeds.par_iter().map(|&s| run_episode(prepared, p, s, ac)).collect();
        let mut results = Vec::with_capacity(seeds.len());
        for (o, &seed) in outcomes.into_iter().zip(seeds) {
            match o {
                Ok(r) => results.push(r),
                Err(e) => failures.push(CellFailure { policy: p, seed, category: e.category().to_string(), message: e.to_string() }),
            }
        }
        if p == PolicyKind::RlZonal && !results.is_empty() {
            let steps = results.iter().map(|r| r.actions.len()).max().unwrap_or(0);
            action_density = vec![[0; ACTION_COUNT]; steps];
            for r in &results {
                for (t, &a) in r.actions.iter().enumerate() {
                    action_density[t][a] += 1;
                }
            }
        }
        let metrics: Vec<RunMetrics> = results.iter().map(|r| r.metrics.clone()).collect();
        rows.push(aggregate(p.name(), &metrics));
        runs.push((p, metrics));
        all.extend(results);
    }
    Comparison { seeds: seeds.to_vec(), rows, runs, results: all, action_density, failures }
}

/// Per-step action counts and shares; shares in each row sum to 1.
pub fn action_density_csv(density: &[[usize; ACTION_COUNT]]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "n", "all", "zone1", "zone2", "hold", "share_all", "share_zone1", "share_zone2", "share_hold"])?;
    for (t, row) in density.iter().enumerate() {
        let n: usize = row.iter().sum();
        let mut rec = vec![t.to_string(), n.to_string()];
        rec.extend(row.iter().map(|c| c.to_string()));
        rec.extend(row.iter().map(|&c| if n > 0 { (c as f64 / n as f64).to_string() } else { "0".into() }));
        w.write_record(&rec)?;
    }
    into_string(w)
}

pub fn runs_csv(results: &[EpisodeResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if let Some(first) = results.first() {
        let mut header = vec!["policy".to_string(), "seed".to_string()];
        header.extend(first.metrics.fields().iter().map(|f| f.0.to_string()));
        header.push("skipped_departures".into());
        w.write_record(&header)?;
    }
    for r in results {
        let mut rec = vec![r.policy.name().to_string(), r.seed.to_string()];
        rec.extend(r.metrics.fields().iter().map(|f| f.1.to_string()));
        rec.push(r.skipped_departures.to_string());
        w.write_record(&rec)?;
    }
    into_string(w)
}

pub fn dispatch_log_csv(results: &[EpisodeResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["policy", "seed", "step", "time", "vehicle", "source", "zone"])?;
    for r in results {
        for d in &r.dispatch_log {
            w.write_record([
                r.policy.name().to_string(),
                r.seed.to_string(),
                d.step.to_string(),
                d.time.to_string(),
                d.vehicle.to_string(),
                d.source.name().to_string(),
                format!("{:?}", d.zone),
            ])?;
        }
    }
    into_string(w)
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let buf = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub ac: ActorCritic,
    pub stats: Vec<UpdateStats>,
    pub checkpoint: Checkpoint,
    pub stopped_early: bool,
    /// Set when an update produced non-finite values; `ac` and `checkpoint`
    /// then hold the networks from before that update.
    pub aborted: Option<String>,
}

/// Train the RL-zonal policy. `on_update` sees each update's statistics as
/// they are produced.
pub fn train(
    prepared: &Arc<Prepared>,
    updates: usize,
    wall_clock_secs: Option<f64>,
    mut on_update: impl FnMut(&UpdateStats),
) -> Result<TrainOutcome> {
    let sc = &prepared.scenario;
    let cfg = sc.ppo.clone();
    let envs: Vec<SodEnv> = (0..cfg.n_envs).map(|_| SodEnv::new(prepared.clone())).collect();
    let seeds = sc.seeds.clone();
    let per_env = (seeds.train_instances / cfg.n_envs).max(1);
    let seed_of = Box::new(move |env: usize, episode: usize| seeds.train_seed(env, episode % per_env));
    let mut trainer = Trainer::new(cfg.clone(), envs, OBS_DIM, ACTION_COUNT, seed_of)?;
    let start = Instant::now();
    let mut stats = Vec::with_capacity(updates);
    let mut stopped_early = false;
    let mut aborted = None;
    for _ in 0..updates {
        if wall_clock_secs.is_some_and(|limit| start.elapsed().as_secs_f64() >= limit) {
            stopped_early = true;
            break;
        }
        let good = trainer.ac.clone();
        match trainer.update_once() {
            Ok(s) => {
                on_update(&s);
                stats.push(s);
            }
            Err(e @ Error::NonFinite(_)) => {
                trainer.ac = good;
                aborted = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let checkpoint = Checkpoint::new(&trainer.ac, &cfg, LAYOUT_VERSION, stats.len());
    Ok(TrainOutcome { ac: trainer.ac, stats, checkpoint, stopped_early, aborted })
}

pub fn train_stats_csv(stats: &[UpdateStats]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in stats {
        w.serialize(s)?;
    }
    into_string(w)
}

/// Mean of `a - b` over paired runs with a percentile bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedDifference {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

pub fn paired_bootstrap(a: &[f64], b: &[f64], resamples: usize, level: f64, seed: u64) -> PairedDifference {
    assert_eq!(a.len(), b.len(), "paired samples");
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| v.is_finite()).collect();
    let n = d.len();
    if n == 0 {
        return PairedDifference { mean: f64::NAN, lo: f64::NAN, hi: f64::NAN, n };
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| d[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    PairedDifference {
        mean,
        lo: crate::econ::quantile(&means, tail),
        hi: crate::econ::quantile(&means, 1.0 - tail),
        n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;

    #[test]
    fn bootstrap_brackets_mean() {
        let a: Vec<f64> = (0..50).map(|i| i as f64 + 3.0).collect();
        let b: Vec<f64> = (0..50).map(|i| i as f64 + if i % 2 == 0 { 0.0 } else { 2.0 }).collect();
        let d = paired_bootstrap(&a, &b, 2000, 0.95, 1);
        assert!((d.mean - 2.0).abs() < 1e-12);
        assert!(d.lo <= 2.0 && d.hi >= 2.0 && d.lo > 1.0);
    }

    #[test]
    fn rl_needs_a_policy() {
        let p = Arc::new(Prepared::new(Scenario::default()).unwrap());
        assert!(matches!(run_episode(&p, PolicyKind::RlZonal, 0, None), Err(Error::MissingCheckpoint)));
    }
}
