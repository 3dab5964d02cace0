//! Scenario file: one TOML document, every field optional, defaults echo the
//! reference Munich feeder set-up.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::demand::{DemandProfile, EndpointWeights};
use crate::dispatch::{Headways, PolicyKind};
use crate::env::NormConfig;
use crate::error::{Error, Result};
use crate::matching::{CostCoefficients, FeasibilityLimits};
use crate::network::{CorridorSpec, Network, TravelTable, build_corridor};
use crate::ppo::PpoConfig;
use crate::schedule::DwellParams;
use crate::sim::{ServiceMode, WorldConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FleetSpec {
    pub size: usize,
    /// Vehicles held back for the minimum-service override in zonal operation.
    pub reserved: usize,
}

impl Default for FleetSpec {
    fn default() -> Self {
        Self { size: 8, reserved: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RlConfig {
    /// Simulation steps per decision.
    pub period_steps: usize,
    /// Look-ahead of the demand forecast in the observation, seconds.
    pub forecast_window: f64,
    pub norm: NormConfig,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self { period_steps: 1, forecast_window: 900.0, norm: NormConfig::default() }
    }
}

/// Training and evaluation instance seeds. The two ranges never overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeedSets {
    pub train_base: u64,
    pub train_instances: usize,
    pub eval_base: u64,
    pub eval_instances: usize,
}

impl Default for SeedSets {
    fn default() -> Self {
        Self { train_base: 0, train_instances: 2000, eval_base: 1 << 40, eval_instances: 100 }
    }
}

impl SeedSets {
    pub fn eval_seeds(&self) -> Vec<u64> {
        (0..self.eval_instances as u64).map(|i| self.eval_base + i).collect()
    }

    /// Instance seed for the `episode`-th episode of parallel environment `env`.
    /// Streams of different environments never collide.
    pub fn train_seed(&self, env: usize, episode: usize) -> u64 {
        self.train_base + env as u64 * TRAIN_STREAM_STRIDE + episode as u64
    }

    pub fn validate(&self) -> Result<()> {
        let train_end = self.train_base as u128 + 64 * TRAIN_STREAM_STRIDE as u128;
        let eval_end = self.eval_base as u128 + self.eval_instances as u128;
        let disjoint = train_end <= self.eval_base as u128 || eval_end <= self.train_base as u128;
        if !disjoint {
            return Err(Error::Scenario("training and evaluation seed ranges overlap".into()));
        }
        Ok(())
    }
}

pub const TRAIN_STREAM_STRIDE: u64 = 1 << 24;

/// Budget for the `train` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingBudget {
    pub updates: usize,
    /// Stop early after this many seconds of wall-clock time.
    pub wall_clock_secs: Option<f64>,
}

impl Default for TrainingBudget {
    fn default() -> Self {
        Self { updates: 40, wall_clock_secs: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub corridor: CorridorSpec,
    pub demand: DemandProfile,
    pub fleet: FleetSpec,
    pub limits: FeasibilityLimits,
    pub costs: CostCoefficients,
    pub dwell: DwellParams,
    pub headways: Headways,
    pub horizon: f64,
    pub warmup: f64,
    pub step: f64,
    pub boarding_time: f64,
    pub fixed_stop_spacing: f64,
    /// Fixed-route stop spacing beyond the fixed portion; unset means the
    /// fixed route stops only at the fixed-portion stops.
    pub fixed_route_flex_spacing: Option<f64>,
    pub rl: RlConfig,
    pub ppo: PpoConfig,
    pub seeds: SeedSets,
    pub training: TrainingBudget,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            corridor: CorridorSpec::default(),
            demand: DemandProfile::default(),
            fleet: FleetSpec::default(),
            limits: FeasibilityLimits::default(),
            costs: CostCoefficients::default(),
            dwell: DwellParams::default(),
            headways: Headways::default(),
            horizon: 10800.0,
            warmup: 3600.0,
            step: 60.0,
            boarding_time: 300.0,
            fixed_stop_spacing: 400.0,
            fixed_route_flex_spacing: None,
            rl: RlConfig::default(),
            ppo: PpoConfig::default(),
            seeds: SeedSets::default(),
            training: TrainingBudget::default(),
        }
    }
}

impl Scenario {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(s)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.corridor.validate()?;
        self.demand.validate()?;
        self.seeds.validate()?;
        self.ppo.validate()?;
        let bad = |m: &str| Err(Error::Scenario(m.to_string()));
        if !(self.step > 0.0 && self.horizon > 0.0) {
            return bad("step and horizon must be > 0");
        }
        if (self.horizon / self.step).fract().abs() > 1e-9 {
            return bad("horizon must be a whole number of steps");
        }
        if !(0.0..=self.horizon).contains(&self.warmup) {
            return bad("warmup must lie within the horizon");
        }
        if self.fleet.size == 0 || self.fleet.reserved > self.fleet.size {
            return bad("fleet size must be > 0 and at least the reserved count");
        }
        if self.rl.period_steps == 0 {
            return bad("rl.period_steps must be >= 1");
        }
        let h = &self.headways;
        if !(h.full_fleet > 0.0 && h.reserved > 0.0 && h.nominal_period > 0.0) {
            return bad("headways must be > 0");
        }
        let l = &self.limits;
        if !(l.max_wait > 0.0 && l.detour_factor > 0.0 && l.detour_constant > 0.0 && l.capacity > 0 && l.flex_window > 0.0) {
            return bad("feasibility limits must be > 0");
        }
        if !(self.fixed_stop_spacing > 0.0 && self.fixed_route_flex_spacing.is_none_or(|s| s > 0.0)) {
            return bad("stop spacings must be > 0");
        }
        Ok(())
    }

    /// Number of decision steps in one episode.
    pub fn episode_steps(&self) -> usize {
        ((self.horizon / self.step).round() as usize).div_ceil(self.rl.period_steps)
    }

    pub fn world_config(&self, policy: PolicyKind) -> WorldConfig {
        WorldConfig {
            step: self.step,
            horizon: self.horizon,
            warmup: self.warmup,
            boarding_time: self.boarding_time,
            limits: self.limits,
            coeffs: self.costs,
            dwell: self.dwell,
            fixed_stop_spacing: self.fixed_stop_spacing,
            fixed_route_flex_spacing: self.fixed_route_flex_spacing,
            walk_speed: self.demand.walk_speed,
            walk_cap: self.demand.walk_cap,
            service: if policy == PolicyKind::FixedRoute { ServiceMode::FixedRoute } else { ServiceMode::SemiOnDemand },
            fleet_size: self.fleet.size,
            reserved: if policy.is_zonal() { self.fleet.reserved } else { self.fleet.size },
            log_events: false,
        }
    }
}

/// A validated scenario with its network, travel table and demand weights,
/// shared read-only by every world built from it.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub net: Arc<Network>,
    pub table: Arc<TravelTable>,
    pub weights: Arc<EndpointWeights>,
}

impl Prepared {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let net = build_corridor(&scenario.corridor)?;
        let table = TravelTable::new(&net);
        let weights = EndpointWeights::new(&net, &scenario.demand);
        Ok(Self { scenario, net: Arc::new(net), table: Arc::new(table), weights: Arc::new(weights) })
    }
}
