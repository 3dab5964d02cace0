//! Episodic environment around the zonal dispatcher: one decision per period,
//! reward is minus the requests rejected during that period.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::demand::{ForecastScope, forecast_demand, generate_with_weights};
use crate::dispatch::{ACTION_COUNT, Dispatcher, PolicyKind, apply_action};
use crate::error::{Error, Result};
use crate::matching::match_step;
use crate::network::Segment;
use crate::scenario::Prepared;
use crate::sim::{FleetClass, VehicleStatus, World, ZoneAssignment};

/// Bumped whenever the meaning or order of observation elements changes.
pub const LAYOUT_VERSION: u32 = 1;
pub const OBS_DIM: usize = 18;

/// Names of the observation elements, in order.
pub const OBS_NAMES: [&str; OBS_DIM] = [
    "running_vehicles",
    "available_controllable",
    "forecast_total",
    "pending_regular",
    "flex_time_regular",
    "processes_regular",
    "pending_zone1",
    "flex_time_zone1",
    "processes_zone1",
    "pending_zone2",
    "flex_time_zone2",
    "processes_zone2",
    "since_departure_all",
    "since_departure_zone1",
    "since_departure_zone2",
    "forecast_regular",
    "forecast_zone1",
    "forecast_zone2",
];

/// Upper ends of the normalization ranges that do not follow from the fleet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormConfig {
    pub requests: f64,
    pub processes: f64,
    pub time_since_departure: f64,
    pub forecast: f64,
}

impl Default for NormConfig {
    fn default() -> Self {
        Self { requests: 20.0, processes: 20.0, time_since_departure: 1800.0, forecast: 15.0 }
    }
}

/// Per-element `[min, max]` ranges mapped onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormRanges {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormRanges {
    pub fn new(cfg: &NormConfig, fleet: usize, flex_window: f64) -> Self {
        let fleet = fleet as f64;
        let mut max = vec![0.0; OBS_DIM];
        max[0] = fleet;
        max[1] = fleet;
        max[2] = cfg.forecast;
        for c in 0..3 {
            max[3 * c + 3] = cfg.requests;
            max[3 * c + 4] = fleet * flex_window;
            max[3 * c + 5] = cfg.processes;
            max[12 + c] = cfg.time_since_departure;
            max[15 + c] = cfg.forecast;
        }
        Self { min: vec![0.0; OBS_DIM], max }
    }

    /// Map to `[0, 1]`, clipping values outside the range.
    pub fn normalize(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&x, (&lo, &hi))| if hi > lo { ((x - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 })
            .collect()
    }

    pub fn denormalize(&self, norm: &[f64]) -> Vec<f64> {
        norm.iter().zip(self.min.iter().zip(&self.max)).map(|(&x, (&lo, &hi))| lo + x * (hi - lo)).collect()
    }
}

/// Category of a request (by service area) or vehicle (by zone assignment).
fn area_index(s: Segment) -> usize {
    s.index()
}

/// Raw (unnormalized) observation of a world.
pub fn raw_observation(world: &World, prepared: &Prepared) -> Vec<f64> {
    let sc = &prepared.scenario;
    let now = world.now();
    let mut x = vec![0.0; OBS_DIM];
    x[0] = world.vehicles.iter().filter(|v| v.status != VehicleStatus::AtTerminus).count() as f64;
    x[1] = world.available(Some(FleetClass::Controllable)).len() as f64;
    let window = sc.rl.forecast_window;
    x[2] = forecast_demand(&sc.demand, &prepared.weights, sc.horizon, now, window, ForecastScope::All);
    for s in Segment::ALL {
        x[15 + s.index()] = forecast_demand(&sc.demand, &prepared.weights, sc.horizon, now, window, ForecastScope::Segment(s));
    }
    for &rid in &world.pending {
        x[3 * area_index(world.request_area(rid)) + 3] += 1.0;
    }
    let flex = world.config.limits.flex_window;
    for v in &world.vehicles {
        if v.status == VehicleStatus::AtTerminus {
            continue;
        }
        let c = v.zone.index();
        // Flexible-window time this vehicle has not yet used.
        let remaining = match (v.schedule.flexible, v.window_start) {
            (false, _) => 0.0,
            (true, None) => flex,
            (true, Some(ws)) => {
                let past = crate::schedule::VehicleSchedule::flex_bounds(&v.schedule.stops)
                    .is_some_and(|(_, b)| v.next_stop > b);
                if past { 0.0 } else { (flex - (now - ws)).max(0.0) }
            }
        };
        x[3 * c + 4] += remaining;
        let from = if v.status == VehicleStatus::Boarding { 1 } else { v.next_stop };
        for stop in v.schedule.stops.iter().skip(from) {
            for &rid in stop.board.iter().chain(&stop.alight) {
                x[3 * area_index(world.request_area(rid)) + 5] += 1.0;
            }
        }
    }
    for z in ZoneAssignment::ALL {
        x[12 + z.index()] = match world.last_departure[z.index()] {
            Some(t) => now - t,
            None => sc.rl.norm.time_since_departure,
        };
    }
    x
}

/// One stored step of experience.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
    pub log_prob: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    /// Requests rejected during this step.
    pub rejected: usize,
    /// Whether the action actually dispatched a vehicle.
    pub dispatched: bool,
}

/// Discrete-action environment over the RL-zonal control type.
#[derive(Debug, Clone)]
pub struct SodEnv {
    prepared: Arc<Prepared>,
    norm: NormRanges,
    world: Option<World>,
    dispatcher: Dispatcher,
    t: usize,
    seed: Option<u64>,
    done: bool,
}

impl SodEnv {
    pub fn new(prepared: Arc<Prepared>) -> Self {
        let sc = &prepared.scenario;
        let norm = NormRanges::new(&sc.rl.norm, sc.fleet.size, sc.limits.flex_window);
        let dispatcher = Dispatcher::new(PolicyKind::RlZonal, sc.headways);
        Self { prepared, norm, world: None, dispatcher, t: 0, seed: None, done: true }
    }

    pub fn prepared(&self) -> &Arc<Prepared> {
        &self.prepared
    }

    pub fn norm(&self) -> &NormRanges {
        &self.norm
    }

    pub fn episode_steps(&self) -> usize {
        self.prepared.scenario.episode_steps()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn world(&self) -> Option<&World> {
        self.world.as_ref()
    }

    pub fn dispatcher(&self) -> &Dispatcher {
        &self.dispatcher
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Start a fresh episode on the demand instance drawn from `seed`.
    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        let p = &self.prepared;
        let sc = &p.scenario;
        let requests = generate_with_weights(&p.net, &sc.demand, &p.weights, sc.horizon, seed);
        let world = World::new(p.net.clone(), p.table.clone(), sc.world_config(PolicyKind::RlZonal), requests);
        self.reset_with_world(world, seed)
    }

    /// Start an episode on a prepared world (for replaying a given demand file).
    pub fn reset_with_world(&mut self, world: World, seed: u64) -> Vec<f64> {
        self.world = Some(world);
        self.dispatcher = Dispatcher::new(PolicyKind::RlZonal, self.prepared.scenario.headways);
        self.t = 0;
        self.seed = Some(seed);
        self.done = false;
        self.observation().expect("world just set")
    }

    pub fn raw_observation(&self) -> Result<Vec<f64>> {
        let w = self.world.as_ref().ok_or(Error::EpisodeDone)?;
        Ok(raw_observation(w, &self.prepared))
    }

    pub fn observation(&self) -> Result<Vec<f64>> {
        Ok(self.norm.normalize(&self.raw_observation()?))
    }

    /// Apply `action` for one decision period.
    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if action >= ACTION_COUNT {
            return Err(Error::Scenario(format!("action {action} out of range 0..{ACTION_COUNT}")));
        }
        if self.done {
            return Err(Error::EpisodeDone);
        }
        let period = self.prepared.scenario.rl.period_steps;
        let episode_steps = self.episode_steps();
        let world = self.world.as_mut().ok_or(Error::EpisodeDone)?;
        let before = world.rejections;
        let mut dispatched = false;
        for k in 0..period {
            if world.is_done() {
                break;
            }
            self.dispatcher.baseline_dispatch(world);
            if k == 0 {
                dispatched = apply_action(world, action).is_some();
            }
            match_step(world);
            world.advance_step()?;
        }
        let rejected = world.rejections - before;
        self.t += 1;
        self.done = self.t >= episode_steps || world.is_done();
        Ok(StepOutcome { observation: self.observation()?, reward: -(rejected as f64), done: self.done, rejected, dispatched })
    }
}
